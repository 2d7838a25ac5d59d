#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "aida/eval.hpp"
#include "aida/executor.hpp"
#include "aida/rl_math.hpp"
#include "aida/warehouse.hpp"

using namespace aida;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, path.string(), "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Catalog catalog_at(const std::string& path) {
  return load_catalog(path.empty() ? default_catalog_path() : fs::path(path));
}

int catalog_lint(const std::string& path) {
  const Catalog c = catalog_at(path);
  std::size_t fillers = 0;
  std::map<Theme, int> themes;
  for (const auto& m : c.metrics()) {
    fillers += m.filler;
    ++themes[m.theme];
  }
  std::cout << "catalog ok: " << c.metrics().size() << " metrics, " << c.dimensions().size() << " dimensions, "
            << c.aliases().size() << " aliases, " << c.compatibility().incompatible_pairs.size()
            << " incompatible pairs\n";
  for (const auto& [t, n] : themes) std::cout << "  " << to_string(t) << ": " << n << "\n";
  if (fillers) std::cout << "  filler metrics: " << fillers << "\n";
  return 0;
}

struct GenArgs {
  std::uint64_t seed = 42;
  std::string config;
  std::string out = "warehouse.db";
  std::string export_dir;
  bool no_scenario = false;
};

int gen_data(const GenArgs& a) {
  WarehouseConfig cfg = a.config.empty() ? default_warehouse_config()
                                         : warehouse_config_from_json(nlohmann::json::parse(read_file(a.config)));
  if (a.config.empty()) cfg.seed = a.seed;
  if (a.no_scenario) cfg.scenarios.clear();
  auto g = generate(cfg);
  if (!a.out.empty()) {
    if (fs::exists(a.out)) fs::remove(a.out);
    g.store.save(a.out);
    std::cout << "wrote " << a.out << "\n";
  }
  if (!a.export_dir.empty()) {
    g.store.export_csv(a.export_dir);
    std::cout << "exported tables to " << a.export_dir << "\n";
  }
  for (const auto& t : g.truths) std::cout << to_json(t).dump() << "\n";
  return 0;
}

struct QueryArgs {
  std::string catalog;
  std::string warehouse = "warehouse.db";
  std::string file;
  std::string json;
  long budget_ms = 60000;
  std::string route = "auto";
  std::string workspace = ".";
};

int query(const QueryArgs& a) {
  if (a.file.empty() == a.json.empty()) {
    std::cerr << "query: give exactly one of --file or --json\n";
    return 2;
  }
  const Catalog c = catalog_at(a.catalog);
  const Warehouse w = Warehouse::open(a.warehouse);
  EngineOptions o;
  o.budget = std::chrono::milliseconds(a.budget_ms);
  o.workspace = a.workspace;
  o.route = a.route == "ads" ? RoutePreference::force_ads
            : a.route == "dws" ? RoutePreference::force_dws
                               : RoutePreference::automatic;
  QueryEngine engine(c, w, o);
  const auto pkg = engine.run(a.file.empty() ? a.json : read_file(a.file));
  std::cout << to_json(pkg).dump(2) << "\n";
  if (pkg.route) std::cerr << "route: " << to_string(*pkg.route) << "\n";
  return pkg.status == ExecStatus::Success ? 0 : 1;
}

struct RunArgs {
  EpisodeConfig cfg;
  std::string catalog;
  std::string warehouse = "warehouse.db";
  std::string policy = "explorer";
  std::string replay;
  std::string judge = "mock";
  std::string endpoint;
  std::vector<std::string> id;
  long budget_ms = 60000;
  std::string out = "episode";
};

int run(RunArgs a) {
  EpisodeConfig& c = a.cfg;
  c.catalog_path = a.catalog;
  c.warehouse_path = a.warehouse;
  c.policy = a.policy == "replay" ? EpisodeConfig::PolicyKind::replay : EpisodeConfig::PolicyKind::explorer;
  c.replay_file = a.replay;
  c.judge = a.judge == "remote" ? EpisodeConfig::JudgeKind::remote : EpisodeConfig::JudgeKind::mock;
  c.judge_endpoint = a.endpoint;
  if (c.judge_endpoint.empty()) {
    if (const char* env = std::getenv("AIDA_JUDGE_ENDPOINT")) c.judge_endpoint = env;
  }
  for (const auto& kv : a.id) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      std::cerr << "run: --id expects key=value, got '" << kv << "'\n";
      return 2;
    }
    c.id[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  c.budget = std::chrono::milliseconds(a.budget_ms);
  c.out_dir = a.out;
  c.sandbox = SandboxOptions::from_env();
  const Trajectory t = run_episode(c);
  int valid = 0;
  for (const auto& s : t.steps) {
    for (const auto& j : s.reward.judgements) valid += j.valid;
  }
  std::cout << "steps: " << t.steps.size() << ", valid insights: " << valid << ", log: " << a.out << "\n";
  return 0;
}

std::vector<std::vector<double>> load_logprobs(const fs::path& file) {
  const auto j = nlohmann::json::parse(read_file(file));
  return j.get<std::vector<std::vector<double>>>();
}

struct RewardArgs {
  std::vector<std::string> dirs;
  std::string catalog;
  double gamma = 1.0;
  std::string logprobs;
  std::string out;
};

int reward(const RewardArgs& a) {
  const Catalog c = catalog_at(a.catalog);
  std::vector<TrajectoryReturns> returns;
  std::vector<std::vector<StepFlags>> flags;
  ordered_json trajectories = ordered_json::array();
  for (const auto& dir : a.dirs) {
    const Trajectory logged = load_trajectory(dir);
    auto judge = judge_for(logged.header, c);
    const Trajectory t = rescore(logged, *judge);
    std::vector<RewardBreakdown> rb;
    std::vector<StepFlags> f;
    ordered_json steps = ordered_json::array();
    std::size_t mismatches = 0;
    for (std::size_t i = 0; i < t.steps.size(); ++i) {
      const auto& r = t.steps[i].reward;
      rb.push_back(r);
      f.push_back({r.syntax_failed, r.has_invalid_insight});
      steps.push_back(to_json(r));
      if (to_json(r) != to_json(logged.steps[i].reward)) ++mismatches;
    }
    if (rb.empty()) throw Error(ErrorKind::shape, dir, "trajectory has no steps: " + dir);
    const auto g = compute_returns(rb, a.gamma);
    returns.push_back(g);
    flags.push_back(std::move(f));
    trajectories.push_back({{"dir", dir}, {"steps", steps}, {"returns", g.g}, {"logged_mismatches", mismatches}});
  }
  const auto batch = apply_masks(rebn_advantages(returns), flags);
  ordered_json out = {{"gamma", a.gamma}, {"trajectories", trajectories}, {"advantages", to_json(batch)}};
  if (!a.logprobs.empty()) out["objective"] = objective(batch, load_logprobs(a.logprobs));
  if (a.out.empty()) {
    std::cout << out.dump(2) << "\n";
  } else {
    std::ofstream(a.out, std::ios::binary) << out.dump(2) << "\n";
    std::cout << "wrote " << a.out << "\n";
  }
  return 0;
}

struct ScoreArgs {
  std::string dir;
  std::string catalog;
  double alpha = 0.5;
  std::string out;
};

int score(const ScoreArgs& a) {
  const Catalog c = catalog_at(a.catalog);
  const Trajectory t = load_trajectory(a.dir);
  const fs::path out = a.out.empty() ? fs::path(a.dir) : fs::path(a.out);
  const auto report = score_trajectory(judged_steps(t), a.alpha);
  const auto profile = exploration_profile(t, c);
  write_score_csv(out / "score.csv", report);
  write_exploration_csv(out / "exploration.csv", profile);
  write_violations_csv(out / "violations.csv", profile);
  std::cout << "final insight set, statuses resolved (alpha " << format_double(a.alpha) << "):\n";
  for (const auto& [title, s] : report.insight_scores) std::cout << "  " << format_double(s) << "  " << title << "\n";
  std::cout << "Score(T) = " << format_double(report.score.empty() ? 0.0 : report.score.back()) << "\n";
  std::cout << "wrote score.csv, exploration.csv, violations.csv to " << out.string() << "\n";
  return 0;
}

int report(const std::vector<std::string>& dirs, double alpha) {
  std::vector<Trajectory> dataset;
  for (const auto& d : dirs) dataset.push_back(load_trajectory(d));
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    const fs::path txt = fs::path(dirs[i]) / "report.txt";
    std::cout << "== " << dirs[i] << "\n";
    if (fs::exists(txt)) std::cout << read_file(txt);
    const auto s = score_trajectory(judged_steps(dataset[i]), alpha);
    std::cout << "Score(T) = " << format_double(s.score.empty() ? 0.0 : s.score.back()) << "\n\n";
  }
  const auto f = filter_trajectories(dataset);
  std::cout << "kept " << f.kept.size() << " of " << f.total << " (dropped: " << f.dropped_hallucination
            << " hallucination, " << f.dropped_invalid << " invalid)\n";
  for (const auto& [status, n] : f.status_histogram) {
    std::cout << "  " << to_string(status) << ": " << n << " (" << format_double(f.proportion(status)) << ")\n";
  }
  for (auto i : f.kept) std::cout << "  kept " << dirs[i] << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Data-analysis agent environment: catalog, warehouse, query engine, episodes, rewards"};
  app.require_subcommand(1);
  std::function<int()> action;

  std::string lint_path;
  auto* lint = app.add_subcommand("catalog-lint", "Validate a semantic catalog file");
  lint->add_option("catalog", lint_path, "Catalog JSON (default: bundled catalog)");
  lint->callback([&] { action = [&] { return catalog_lint(lint_path); }; });

  GenArgs gen;
  auto* g = app.add_subcommand("gen-data", "Generate the synthetic warehouse");
  g->add_option("--seed", gen.seed, "Generator seed (ignored with --config)");
  g->add_option("--config", gen.config, "WarehouseConfig JSON");
  g->add_option("--out", gen.out, "SQLite file to write ('' to skip)");
  g->add_option("--export", gen.export_dir, "Directory for one CSV per table");
  g->add_flag("--no-scenario", gen.no_scenario, "Drop all planted scenarios");
  g->callback([&] { action = [&] { return gen_data(gen); }; });

  QueryArgs q;
  auto* qc = app.add_subcommand("query", "Run one Dsl2data request and print the feedback package");
  qc->add_option("--catalog", q.catalog);
  qc->add_option("--warehouse", q.warehouse);
  qc->add_option("--file", q.file, "Request JSON file");
  qc->add_option("--json", q.json, "Request JSON text");
  qc->add_option("--budget-ms", q.budget_ms)->check(CLI::PositiveNumber);
  qc->add_option("--route", q.route)->check(CLI::IsMember({"auto", "ads", "dws"}));
  qc->add_option("--workspace", q.workspace, "Root for save_data_path exports");
  qc->callback([&] { action = [&] { return query(q); }; });

  RunArgs r;
  auto* rc = app.add_subcommand("run", "Run one closed-loop episode");
  rc->add_option("--catalog", r.catalog);
  rc->add_option("--warehouse", r.warehouse);
  rc->add_option("--scenario", r.cfg.scenario_id);
  rc->add_option("--question", r.cfg.question);
  rc->add_option("--id", r.id, "Id bundle entry key=value (repeatable)");
  rc->add_option("--policy", r.policy)->check(CLI::IsMember({"explorer", "replay"}));
  rc->add_option("--replay-file", r.replay);
  rc->add_option("--seed", r.cfg.explorer_seed, "Explorer seed");
  rc->add_flag("--probe", r.cfg.probe, "Explorer opens with two deliberately invalid queries");
  rc->add_option("--max-steps", r.cfg.max_steps);
  rc->add_option("--judge", r.judge)->check(CLI::IsMember({"mock", "remote"}));
  rc->add_option("--judge-endpoint", r.endpoint);
  rc->add_option("--budget-ms", r.budget_ms);
  rc->add_option("--out", r.out, "Log directory");
  rc->callback([&] { action = [&] { return run(r); }; });

  RewardArgs rw;
  auto* rwc = app.add_subcommand("reward", "Re-score logs; returns, advantages and masks over the batch");
  rwc->add_option("dirs", rw.dirs, "Log directories")->required();
  rwc->add_option("--catalog", rw.catalog);
  rwc->add_option("--gamma", rw.gamma);
  rwc->add_option("--logprobs", rw.logprobs, "JSON [trajectory][step] log-probabilities");
  rwc->add_option("--out", rw.out);
  rwc->callback([&] { action = [&] { return reward(rw); }; });

  ScoreArgs sc;
  auto* scc = app.add_subcommand("score", "Write score.csv, exploration.csv and violations.csv");
  scc->add_option("dir", sc.dir, "Log directory")->required();
  scc->add_option("--catalog", sc.catalog);
  scc->add_option("--alpha", sc.alpha);
  scc->add_option("--out", sc.out, "Output directory (default: the log directory)");
  scc->callback([&] { action = [&] { return score(sc); }; });

  std::vector<std::string> report_dirs;
  double report_alpha = 0.5;
  auto* rp = app.add_subcommand("report", "Print reports and filter a set of logs");
  rp->add_option("dirs", report_dirs)->required();
  rp->add_option("--alpha", report_alpha);
  rp->callback([&] { action = [&] { return report(report_dirs, report_alpha); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    return action();
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.kind()) << "] " << e.what() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
  }
  return 1;
}
