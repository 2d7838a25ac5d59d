#include <doctest.h>

#include <random>
#include <sqlite3.h>

#include "aida/environment.hpp"
#include "aida/step.hpp"
#include "support.hpp"

using namespace aida;

namespace {

constexpr const char* kFullTurn = R"(<state_think>
GMV dropped; look at the overview first.
</state_think>
<insight>
[{"title": "GMV fell", "status": "New", "proof": "net GMV down 30% week over week"}]
</insight>
<key_data>
[{"type": "CSV", "description": "weekly overview", "structure": {"metrics": ["netGMV"], "dimensions": [], "filters": []}, "payload_ref": "obs:0"}]
</key_data>
<graph>
graph TD
A[GMV] --> B[ageBand]
</graph>
<action_think>
Drill by age band.
</action_think>
<tool_call>
{"name": "dsl2data", "arguments": {"metric": ["netGMV"], "dimension": ["ageBand"], "ds": ["20251022", "20251028"]}}
</tool_call>
)";

bool has_diagnostic(const StepOutput& s, const std::string& needle) {
  return std::any_of(s.block_diagnostics.begin(), s.block_diagnostics.end(),
                     [&](const std::string& d) { return d.find(needle) != std::string::npos; });
}

std::string random_text(std::mt19937_64& rng) {
  static const std::string alphabet = "abcdefghij KLMNOP 0123456789.,;:()[]{}\"'-+*/=%\n";
  std::string out;
  const auto n = 1 + rng() % 40;
  for (std::size_t i = 0; i < n; ++i) out += alphabet[rng() % alphabet.size()];
  const auto first = out.find_first_not_of(" \n");
  if (first == std::string::npos) return "x";
  const auto last = out.find_last_not_of(" \n");
  return out.substr(first, last - first + 1);
}

struct Fixture {
  std::filesystem::path dir = testing::scratch("step_env");
  QueryEngine engine;
  Environment env;
  Fixture()
      : engine(testing::catalog(), testing::small_warehouse().store, [this] {
          EngineOptions o;
          o.workspace = dir;
          return o;
        }()),
        env(engine, [this] {
          SandboxOptions s;
          s.workspace = dir;
          return s;
        }()) {}
};

}  // namespace

TEST_SUITE("step_protocol") {
  TEST_CASE("conforming turn with all six blocks") {
    const auto s = parse_step(kFullTurn);
    CHECK(s.format_ok);
    CHECK(s.block_diagnostics.empty());
    CHECK(s.insight_schema_ok);
    CHECK(s.key_data_schema_ok);
    REQUIRE(s.insights.size() == 1);
    CHECK(s.insights[0].status == InsightStatus::New);
    REQUIRE(s.key_data.size() == 1);
    CHECK(s.key_data[0].payload_ref == "obs:0");
    REQUIRE(s.tool_call);
    CHECK(s.tool_call->schema_ok);
    CHECK(s.tool_call->tool == Tool::dsl2data);
    CHECK(s.state_think() == "GMV dropped; look at the overview first.");
    CHECK(validate_mermaid(*s.graph_block()).parse_ok);
  }

  TEST_CASE("required blocks, nesting and order") {
    std::string no_call = kFullTurn;
    no_call = no_call.substr(0, no_call.find("<tool_call>"));
    const auto missing = parse_step(no_call);
    CHECK_FALSE(missing.format_ok);
    CHECK(has_diagnostic(missing, "missing tool_call"));

    const auto interleaved = parse_step("<state_think>a<action_think>b</state_think></action_think><tool_call>{}</tool_call>");
    CHECK_FALSE(interleaved.format_ok);
    CHECK_FALSE(parse_step("<state_think>a</state_think><action_think>b</action_think><tool_call>{").format_ok);

    const auto reversed = parse_step(
        "<action_think>b</action_think><state_think>a</state_think>"
        R"J(<tool_call>{"name":"python","arguments":{"code":"print(1)"}}</tool_call>)J");
    CHECK_FALSE(reversed.format_ok);
    CHECK(has_diagnostic(reversed, "order"));

    const auto minimal = parse_step(
        "<state_think>a</state_think><action_think>b</action_think>"
        R"J(<tool_call>{"name":"python","arguments":{"code":"print(1)"}}</tool_call>)J");
    CHECK(minimal.format_ok);
    CHECK(minimal.tool_call->tool == Tool::python);

    CHECK_FALSE(parse_step("").format_ok);
    CHECK_FALSE(parse_step("stray text " + std::string(kFullTurn)).format_ok);
  }

  TEST_CASE("block schemas") {
    auto with = [](const std::string& tag, const std::string& body) {
      return parse_step("<state_think>a</state_think><" + tag + ">" + body + "</" + tag +
                        "><action_think>b</action_think>"
                        R"J(<tool_call>{"name":"python","arguments":{"code":"print(1)"}}</tool_call>)J");
    };
    CHECK_FALSE(with("insight", "not json").insight_schema_ok);
    CHECK_FALSE(with("insight", R"([{"title":"a","status":"Maybe","proof":"p"}])").insight_schema_ok);
    CHECK(with("insight", R"([{"title":"a","status":"Unchanged"}])").insight_schema_ok);
    CHECK_FALSE(with("key_data", R"([{"type":"XLS","description":"d","structure":{"metrics":[]},"payload_ref":"obs:0"}])")
                    .key_data_schema_ok);
    CHECK_FALSE(with("key_data", R"([{"type":"CSV","description":"d","structure":{"metrics":[]},"payload_ref":""}])")
                    .key_data_schema_ok);

    CHECK_FALSE(parse_tool_call("{").schema_ok);
    CHECK_FALSE(parse_tool_call(R"({"name":"sql","arguments":{}})").schema_ok);
    CHECK_FALSE(parse_tool_call(R"J({"name":"python","arguments":{"script":"x"}})J").schema_ok);
    CHECK_FALSE(parse_tool_call(R"({"name":"dsl2data","arguments":{"metric":["m"]}})").schema_ok);
    const auto ok = parse_tool_call(R"({"name":"dsl2data","arguments":{"metric":["m"],"ds":["20251001","20251002"]}})");
    CHECK(ok.schema_ok);
    CHECK(ok.to_json()["name"] == "dsl2data");
  }

  TEST_CASE("render/parse round trip over generated outputs") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 300; ++i) {
      StepOutput s;
      for (std::size_t b = 0; b < kBlockTags.size(); ++b) {
        const bool required = b == 0 || b == 4 || b == 5;
        if (required || rng() % 2) s.blocks[b] = random_text(rng);
      }
      const auto back = parse_step(render_step(s));
      CHECK(back.blocks == s.blocks);
      CHECK(render_step(back) == render_step(s));
    }
    const auto full = parse_step(kFullTurn);
    CHECK(parse_step(render_step(full)).blocks == full.blocks);

    StepDraft d;
    d.state_think = "think";
    d.insights = {{"t", InsightStatus::New, "proof"}};
    d.key_data = {{PayloadType::TXT, "d", {{"netGMV"}, {}, {}}, "obs:1"}};
    d.graph = "graph TD\nA --> B";
    d.action_think = "act";
    d.tool_call = {{"name", "python"}, {"arguments", {{"code", "print(2)"}}}};
    const auto drafted = parse_step(render_draft(d));
    CHECK(drafted.format_ok);
    CHECK(drafted.insights == d.insights);
    CHECK(drafted.key_data == d.key_data);
  }

  TEST_CASE("dsl2data on the protocol example and on an unknown metric") {
    Fixture f;
    auto* db = testing::small_warehouse().store.handle();
    const int changes = sqlite3_total_changes(db);
    const auto call = parse_tool_call(R"({"name":"dsl2data","arguments":{
      "metric":["Net_GMV"],"dimension":["Gender"],
      "filter":{"relation":"and","conditions":[{"columnEName":"brand_id","queryRule":"in","params":["B01"]}]},
      "ds":["20251010","20251110"],"orderBy":[{"columnEName":"Net_GMV","orderType":"desc"}],"limit":10}})");
    REQUIRE(call.schema_ok);
    const auto obs = f.env.execute_action(call);
    CHECK(obs.status == ExecStatus::Success);
    REQUIRE(obs.package);
    CHECK(obs.package->status == ExecStatus::Success);
    CHECK_FALSE(obs.boundary_violation());
    REQUIRE_FALSE(obs.package->execution_results.preview.empty());

    GroundingIndex index;
    index.insert_all(obs.numerals());
    for (const auto& row : obs.package->execution_results.preview) {
      for (const auto& [k, v] : row.items()) {
        if (v.is_number()) CHECK(index.grounds(Numeral{v.get<double>(), 12, false}));
      }
    }

    const auto bad = f.env.execute_action(parse_tool_call(
        R"({"name":"dsl2data","arguments":{"metric":["noSuchMetric"],"ds":["20251001","20251028"]}})"));
    CHECK(bad.status == ExecStatus::Error);
    CHECK(bad.boundary_violation());
    REQUIRE(bad.violations.size() == 1);
    CHECK(bad.violations[0].kind == Violation::Kind::unknown_metric);
    CHECK(sqlite3_total_changes(db) == changes);

    const auto invalid = f.env.execute_action(parse_tool_call(R"({"name":"dsl2data","arguments":{"metric":["m"]}})"));
    CHECK(invalid.status == ExecStatus::Error);
    CHECK(invalid.schema_error);

    const auto restored = observation_from_json(to_json(obs));
    CHECK(restored.body_text() == obs.body_text());
  }

  TEST_CASE("python sandbox") {
    Fixture f;
    const auto obs = f.env.execute_action(parse_tool_call(R"J({"name":"python","arguments":{"code":"print(1+1)"}})J"));
    REQUIRE(obs.script);
    CHECK(obs.status == ExecStatus::Success);
    CHECK(obs.script->exit_ok);
    CHECK(obs.script->stdout_text == "2\n");

    SandboxOptions tight;
    tight.wall_clock = std::chrono::milliseconds(300);
    tight.max_output = 1000;
    const auto spin = run_script("while True:\n    pass\n", tight);
    CHECK(spin.timed_out);
    CHECK_FALSE(spin.exit_ok);
    const auto loud = run_script("print('x' * 100000)", tight);
    CHECK(loud.truncated);
    CHECK(loud.stdout_text.size() <= 1000);
    CHECK(loud.stderr_text.find("output limit") != std::string::npos);
    const auto failing = run_script("raise SystemExit(3)", tight);
    CHECK_FALSE(failing.exit_ok);
    CHECK(failing.exit_code == 3);

    SandboxOptions missing;
    missing.interpreter = "/nonexistent/python";
    const auto launch = run_script("print(1)", missing);
    CHECK_FALSE(launch.exit_ok);
    CHECK(launch.launch_failed);

    Environment broken(f.engine, missing);
    const auto err = broken.execute_action(parse_tool_call(R"J({"name":"python","arguments":{"code":"print(1)"}})J"));
    CHECK(err.status == ExecStatus::Error);
  }
}
