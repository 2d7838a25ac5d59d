#include <doctest.h>

#include <fstream>

#include "aida/eval.hpp"
#include "aida/episode.hpp"
#include "support.hpp"

using namespace aida;

namespace fs = std::filesystem;

namespace {

EpisodeConfig explorer_config(const fs::path& out) {
  EpisodeConfig c;
  c.warehouse_path = testing::small_warehouse_file();
  c.out_dir = out;
  c.sandbox.workspace = out;
  return c;
}

// Explorer episode on the small warehouse, run once and shared by the cases below.
const fs::path& explorer_run() {
  static const fs::path dir = [] {
    const auto d = testing::scratch("cli_explorer");
    run_episode(explorer_config(d / "log"));
    return d / "log";
  }();
  return dir;
}

std::map<std::string, std::string> directory_bytes(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = testing::read_text(e.path());
  }
  return out;
}

ErrorKind config_error(const EpisodeConfig& c, std::string* subject) {
  try {
    c.validate();
  } catch (const Error& e) {
    *subject = e.subject();
    return e.kind();
  }
  FAIL("episode config validated although it is invalid");
  return ErrorKind::io;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("episode config validation") {
    const auto dir = testing::scratch("cli_config");
    std::string subject;
    auto c = explorer_config(dir / "log");
    c.max_steps = 0;
    CHECK(config_error(c, &subject) == ErrorKind::config);
    CHECK(subject == "max_steps");
    CHECK_THROWS_AS(run_episode(c), Error);
    CHECK_FALSE(fs::exists(dir / "log" / "trajectory.jsonl"));

    c = explorer_config(dir / "log");
    c.policy = EpisodeConfig::PolicyKind::replay;
    c.replay_file = dir / "missing.jsonl";
    CHECK(config_error(c, &subject) == ErrorKind::config);
    CHECK(subject == "replay_file");

    c = explorer_config(dir / "log");
    c.judge = EpisodeConfig::JudgeKind::remote;
    CHECK(config_error(c, &subject) == ErrorKind::config);

    c = explorer_config(dir / "log");
    c.warehouse_path = dir / "none.db";
    CHECK(config_error(c, &subject) == ErrorKind::config);
    CHECK_NOTHROW(explorer_config(dir / "log").validate());
  }

  TEST_CASE("explorer finds the planted top cause within ten steps") {
    const auto traj = load_trajectory(explorer_run());
    CHECK(traj.steps.size() <= 10);
    for (const char* file : {"trajectory.jsonl", "final_state.json", "report.txt", "episode.json", "state_000.json"}) {
      CHECK_MESSAGE(fs::exists(explorer_run() / file), file);
    }
    const auto& top = testing::small_warehouse().truths[0].planted_causes[0];
    bool found = false;
    for (const auto& s : traj.steps) {
      for (const auto& j : s.reward.judgements) {
        if (j.valid && j.title.find(top.segment) != std::string::npos) found = true;
        CHECK(j.valid);
        CHECK(j.h == 0);
      }
    }
    CHECK(found);
    CHECK(traj.final_state.insights.size() >= 1);
    CHECK(testing::read_text(explorer_run() / "report.txt").find(top.segment) != std::string::npos);
  }

  TEST_CASE("replay reproduces a logged episode byte for byte") {
    const auto dir = testing::scratch("cli_replay");
    auto c = explorer_config(dir / "a");
    c.policy = EpisodeConfig::PolicyKind::replay;
    c.replay_file = explorer_run() / "trajectory.jsonl";
    const auto a = run_episode(c);
    c.out_dir = dir / "b";
    run_episode(c);
    const auto bytes_a = directory_bytes(dir / "a");
    CHECK(bytes_a == directory_bytes(dir / "b"));
    CHECK(bytes_a.at("trajectory.jsonl").size() > 0);

    const auto original = load_trajectory(explorer_run());
    REQUIRE(a.steps.size() == original.steps.size());
    for (std::size_t i = 0; i < a.steps.size(); ++i) {
      CHECK(a.steps[i].raw_output == original.steps[i].raw_output);
      CHECK(to_json(a.steps[i].reward) == to_json(original.steps[i].reward));
    }
  }

  TEST_CASE("rescoring a log reproduces its rewards") {
    const auto logged = load_trajectory(explorer_run());
    const auto judge = judge_for(logged.header, testing::catalog());
    const auto again = rescore(logged, *judge);
    REQUIRE(again.steps.size() == logged.steps.size());
    for (std::size_t i = 0; i < logged.steps.size(); ++i) {
      CHECK(to_json(again.steps[i].reward) == to_json(logged.steps[i].reward));
    }
  }

  TEST_CASE("query subcommand prints the feedback package") {
    const auto dir = testing::scratch("cli_query");
    std::ofstream(dir / "q.json") << R"({"metric":["Net_GMV"],"dimension":["Gender"],
      "filter":{"relation":"and","conditions":[{"columnEName":"brand_id","queryRule":"in","params":["B01"]}]},
      "ds":["20251010","20251110"],"orderBy":[{"columnEName":"Net_GMV","orderType":"desc"}],"limit":10})";
    const std::string wh = " --warehouse '" + testing::small_warehouse_file().string() + "'";
    REQUIRE(testing::run_cli("query --file '" + (dir / "q.json").string() + "'" + wh, dir / "out.txt") == 0);
    const auto pkg = nlohmann::json::parse(testing::read_text(dir / "out.txt"));
    CHECK(pkg["status"] == "Success");
    CHECK(pkg["calibration_report"]["corrected_dsl"]["metric"][0] == "netGMV");
    CHECK(pkg["execution_results"]["preview"].size() <= 10);

    CHECK(testing::run_cli(R"(query --json '{"metric":["noSuchMetric"],"ds":["20251001","20251002"]}')" + wh,
                           dir / "bad.txt") == 1);
    CHECK(nlohmann::json::parse(testing::read_text(dir / "bad.txt"))["status"] == "Error");
    CHECK(testing::run_cli("query --file '" + (dir / "none.json").string() + "'" + wh, dir / "missing.txt") != 0);
  }

  TEST_CASE("catalog-lint, run and score subcommands") {
    const auto dir = testing::scratch("cli_misc");
    CHECK(testing::run_cli("catalog-lint", dir / "lint.txt") == 0);
    std::ofstream(dir / "broken.json") << "{\n";
    CHECK(testing::run_cli("catalog-lint '" + (dir / "broken.json").string() + "'", dir / "lint2.txt") == 1);
    CHECK(testing::read_text(dir / "lint2.txt.err").find("error [parse]") != std::string::npos);

    const std::string wh = " --warehouse '" + testing::small_warehouse_file().string() + "'";
    CHECK(testing::run_cli("run --max-steps 0 --out '" + (dir / "log").string() + "'" + wh, dir / "run0.txt") == 1);
    CHECK(testing::read_text(dir / "run0.txt.err").find("max_steps") != std::string::npos);
    CHECK(testing::run_cli("no-such-command", dir / "unknown.txt") != 0);

    REQUIRE(testing::run_cli("score --alpha 0.5 --out '" + (dir / "scores").string() + "' '" + explorer_run().string() +
                                 "'",
                             dir / "score.txt") == 0);
    const auto report = score_trajectory(judged_steps(load_trajectory(explorer_run())), 0.5);
    write_score_csv(dir / "expected.csv", report);
    CHECK(testing::read_text(dir / "scores" / "score.csv") == testing::read_text(dir / "expected.csv"));
    CHECK(fs::exists(dir / "scores" / "exploration.csv"));
    CHECK(fs::exists(dir / "scores" / "violations.csv"));

    CHECK(testing::run_cli("reward '" + explorer_run().string() + "' --gamma 0.9", dir / "reward.txt") == 0);
    CHECK(testing::run_cli("report '" + explorer_run().string() + "'", dir / "report.txt") == 0);
  }
}
