// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <tuple>

#include "aida/dsl.hpp"
#include "aida/environment.hpp"
#include "aida/episode.hpp"
#include "aida/eval.hpp"
#include "aida/executor.hpp"
#include "aida/planner.hpp"
#include "aida/reward.hpp"
#include "aida/rl_math.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace aida;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Collects the reasons a criterion failed.
struct Verdict {
  std::vector<std::string> problems;
  void expect(bool ok, const std::string& what) {
    if (!ok) problems.push_back(what);
  }
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

bool same_12(double a, double b) {
  return a == b || std::fabs(a - b) <= 1e-12 * std::max(std::fabs(a), std::fabs(b));
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

std::map<std::string, std::string> directory_bytes(const fs::path& dir) {
  std::map<std::string, std::string> out;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = testing::read_text(e.path());
  }
  return out;
}

// Shared fixtures at the default seed, built once through the CLI.
struct Fixture {
  fs::path dir = testing::scratch("acceptance");
  fs::path db = dir / "wh.db";
  std::optional<Warehouse> store;
  WarehouseConfig config = default_warehouse_config();
  std::string setup_error;

  Fixture() {
    const int rc = testing::run_cli("gen-data --seed 42 --out '" + db.string() + "' --export '" +
                                        (dir / "export_a").string() + "'",
                                    dir / "gen_a.txt");
    if (rc != 0) {
      setup_error = "gen-data exited with " + std::to_string(rc);
      return;
    }
    store.emplace(Warehouse::open(db));
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

Verdict reward_formulas() {
  Verdict v;
  const auto start = Clock::now();
  v.expect(hallucination_value({.n = 0, .m = 10}) == 0.1, "m=10,n=0 should clamp to 0.1");
  v.expect(hallucination_value({.n = 20, .m = 0}) == -1.0, "m=0,n=20 should clamp to -1.0");
  v.expect(length_reward(500, 500, 1000, 0.1) == 0.0, "length reward at the lower endpoint");
  v.expect(length_reward(1000, 500, 1000, 0.1) == 0.1, "length reward at the upper endpoint");
  v.expect(length_reward(1000, 500, 1000, 1.0) == 1.0, "length reward with scale 1");
  const GainParams p;
  v.expect(p.eta == 0.4, "eta default");
  v.expect(insight_gain(InsightStatus::New, true, 0, p) == 1.0, "New base 1.0");
  v.expect(insight_gain(InsightStatus::Refuted, true, 0, p) == 0.7, "Refuted base 0.7");
  v.expect(insight_gain(InsightStatus::Reinforced, true, 0, p) == 0.5, "Reinforced base 0.5");
  v.expect(insight_gain(InsightStatus::New, true, 3, p) == 0.1, "floor max(1.0 - 1.2, 0.1)");
  v.expect(insight_gain(InsightStatus::Reinforced, true, 1, p) == 0.1, "floor max(0.5 - 0.4, 0.1)");
  v.expect(insight_gain(InsightStatus::New, false, 0, p) == -2.0, "invalid penalty");
  v.expect(insight_gain(InsightStatus::Refuted, false, 3, p) == -2.0, "invalid penalty ignores H");
  v.expect(seconds_since(start) < 1.0, "runtime over 1 s");
  return v;
}

Verdict gain_oracle() {
  Verdict v;
  const auto start = Clock::now();
  const auto sweep = testing::sweep_discovery_gain();
  v.expect(sweep.batches == 24 + 24 * 24 + 24 * 24 * 24, std::to_string(sweep.batches) + " batches enumerated");
  v.expect(sweep.discrepancies == 0, std::to_string(sweep.discrepancies) + " discrepancies");
  const double elapsed = seconds_since(start);
  v.expect(elapsed < 5.0, "runtime " + fmt(elapsed) + " s");
  return v;
}

Verdict rebn() {
  Verdict v;
  std::mt19937_64 rng(77);
  std::normal_distribution<double> value(0.3, 2.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<TrajectoryReturns> batch;
    for (std::size_t n = 0, N = 2 + rng() % 8; n < N; ++n) {
      TrajectoryReturns r;
      r.g.resize(1 + rng() % 10);
      for (auto& x : r.g) x = value(rng);
      batch.push_back(r);
    }
    double sum = 0, sq = 0;
    std::size_t count = 0;
    for (const auto& row : rebn_advantages(batch).advantages) {
      for (double a : row) {
        sum += a;
        sq += a * a;
        ++count;
      }
    }
    const double mean = sum / static_cast<double>(count);
    const double sd = std::sqrt(sq / static_cast<double>(count) - mean * mean);
    v.expect(std::fabs(mean) < 1e-9, "batch " + std::to_string(trial) + " mean " + fmt(mean));
    v.expect(std::fabs(sd - 1.0) < 1e-9, "batch " + std::to_string(trial) + " std " + fmt(sd));
  }
  TrajectoryReturns flat;
  flat.g = {3.0, 3.0, 3.0};
  for (const auto& row : rebn_advantages({flat, flat}).advantages) {
    for (double a : row) v.expect(a == 0.0, "degenerate batch advantage " + fmt(a));
  }
  return v;
}

Verdict return_recursion() {
  Verdict v;
  const auto fixture = compute_returns(std::vector<double>{0.1, 0.2}, std::vector<double>{1.0, 0.5}, 0.7).g;
  v.expect(fixture.size() == 2 && std::fabs(fixture[0] - 1.45) < 1e-12 && std::fabs(fixture[1] - 0.7) < 1e-12,
           "gamma=0.7 fixture");
  std::mt19937_64 rng(1234);
  std::uniform_real_distribution<double> reward(-2.5, 1.5);
  std::uniform_real_distribution<double> discount(0.0, 1.0);
  std::size_t bad = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t T = 1 + rng() % 20;
    std::vector<double> ri(T), ra(T);
    for (std::size_t t = 0; t < T; ++t) {
      ri[t] = reward(rng);
      ra[t] = reward(rng);
    }
    const double gamma = discount(rng);
    const auto g = compute_returns(ri, ra, gamma).g;
    for (std::size_t t = 0; t + 1 < T; ++t) {
      if (std::fabs(g[t] - (ri[t] + ra[t] + gamma * (g[t + 1] - ri[t + 1]))) >= 1e-12) ++bad;
    }
    if (std::fabs(g[T - 1] - (ri[T - 1] + ra[T - 1])) >= 1e-12) ++bad;
  }
  v.expect(bad == 0, std::to_string(bad) + " recursion violations");
  return v;
}

Verdict masking() {
  Verdict v;
  std::mt19937_64 rng(9);
  std::normal_distribution<double> value(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    AdvantageBatch b;
    std::vector<std::vector<StepFlags>> flags;
    std::vector<std::vector<double>> logp;
    for (int n = 0; n < 4; ++n) {
      std::vector<double> a(6), l(6);
      std::vector<StepFlags> f(6);
      for (int t = 0; t < 6; ++t) {
        a[t] = value(rng);
        l[t] = -std::fabs(value(rng)) - 0.01;
        f[t] = {rng() % 3 == 0, rng() % 3 == 0};
      }
      b.advantages.push_back(a);
      flags.push_back(f);
      logp.push_back(l);
    }
    const auto masked = apply_masks(b, flags);
    double expected = 0.0;
    for (std::size_t n = 0; n < 4; ++n) {
      for (std::size_t t = 0; t < 6; ++t) {
        const bool flagged = flags[n][t].syntax_failed || flags[n][t].has_invalid_insight;
        const double a = b.advantages[n][t];
        if (flagged && a > 0) v.expect(masked.effective(n, t) * logp[n][t] == 0.0, "flagged positive step contributes");
        if (a <= 0) v.expect(masked.effective(n, t) == a, "non-positive advantage altered");
        if (!(flagged && a > 0)) expected += a * logp[n][t];
      }
    }
    v.expect(std::fabs(objective(masked, logp) - expected / 4) < 1e-12, "objective differs from the masked sum");
  }
  return v;
}

Verdict calibration() {
  Verdict v;
  const auto q = parse_query(std::string_view(R"({"metric":["gmv","aov"],"dimension":["week"],
    "filter":{"relation":"and","conditions":[{"columnEName":"shop","queryRule":"eq","params":["XX"]}]},
    "ds":["20251001","20251028"]})"));
  const auto r = calibrate(q, testing::catalog());
  v.expect(r.violations.empty(), "unexpected violations");
  const auto& c = testing::catalog();
  for (const auto& [token, kind, canonical] :
       {std::tuple{"week", NameKind::dimension, "isWeek"}, std::tuple{"aov", NameKind::metric, "netAov"},
        std::tuple{"gmv", NameKind::metric, "netGMV"}, std::tuple{"shop", NameKind::dimension, "shopName"}}) {
    const auto res = c.resolve_name(token, kind);
    v.expect(res.status == Resolution::Status::corrected && res.canonical_name == canonical,
             std::string(token) + " resolves to '" + res.canonical_name + "' (" + to_string(res.status) + ")");
  }
  v.expect(r.corrected_dsl.metric == std::vector<std::string>{"netGMV", "netAov"}, "gmv/aov mapping");
  v.expect(r.corrected_dsl.dimension == std::vector<std::string>{"isWeek"}, "week mapping");
  v.expect(r.corrected_dsl.filter && r.corrected_dsl.filter->children.size() == 1 &&
               r.corrected_dsl.filter->children[0].condition->column == "shopName",
           "shop mapping");
  for (const char* token : {"'gmv'", "'aov'", "'week'", "'shop'"}) {
    const auto n = std::count_if(r.notices.begin(), r.notices.end(),
                                 [&](const std::string& s) { return s.find(token) != std::string::npos; });
    v.expect(n == 1, std::string("notices mentioning ") + token + ": " + std::to_string(n));
  }
  return v;
}

Verdict protocol() {
  Verdict v;
  const auto q = parse_query(std::string_view(R"({"metric":["Net_GMV"],"dimension":["Gender"],
    "filter":{"relation":"and","conditions":[{"columnEName":"brand_id","queryRule":"in","params":["B01"]}]},
    "ds":["20251010","20251110"],"orderBy":[{"columnEName":"Net_GMV","orderType":"desc"}],"limit":10})"));
  v.expect(q.limit == 10, "example limit");
  v.expect(parse_query(std::string_view(R"({"metric":["netGMV"],"ds":["20251001","20251002"]})")).limit == 100,
           "default limit");
  auto rejected = [](const char* payload, const char* field) {
    try {
      parse_query(std::string_view(payload));
    } catch (const Error& e) {
      return e.kind() == ErrorKind::schema && e.subject() == field;
    }
    return false;
  };
  v.expect(rejected(R"({"ds":["20251001","20251002"]})", "metric"), "missing metric accepted");
  v.expect(rejected(R"({"metric":["netGMV"]})", "ds"), "missing ds accepted");
  return v;
}

Verdict golden_sql() {
  Verdict v;
  auto& f = fixture();
  if (!f.store) return {{f.setup_error}};
  const auto& c = testing::catalog();
  const auto& w = *f.store;
  const auto name = std::get<std::string>(testing::query(w, "SELECT shop_name FROM dim_shop WHERE shop_id = 'S001'")[0][0]);
  const auto from = f.config.start_ds;
  const auto to = f.config.scenarios[0].window_to;
  QueryEngine engine(c, w);
  const auto calibrated = calibrate(parse_query(ordered_json{
      {"metric", {"gmv", "aov"}}, {"dimension", {"week"}}, {"ds", {from, to}},
      {"filter", {{"relation", "and"}, {"conditions", {{{"columnEName", "shop"}, {"queryRule", "eq"}, {"params", {name}}}}}}}}), c);
  const auto table = engine.fetch(plan(calibrated.corrected_dsl, c), std::chrono::milliseconds(60000));
  const auto oracle = testing::query(w,
      "SELECT b.is_week, SUM(a.net_gmv), SUM(a.net_gmv) / COUNT(DISTINCT a.user_id) "
      "FROM dws_trd a JOIN dim_date b ON a.ds = b.ds JOIN dim_shop s ON a.shop_id = s.shop_id "
      "WHERE s.shop_name = '" + name + "' AND a.ds BETWEEN '" + from + "' AND '" + to + "' GROUP BY b.is_week");
  v.expect(table.has_value(), "engine returned no table");
  if (table) {
    v.expect(table->rows.size() == oracle.size() && oracle.size() == 2, "row count");
    for (const auto& expected : oracle) {
      const auto it = std::find_if(table->rows.begin(), table->rows.end(), [&](const auto& r) { return r[0] == expected[0]; });
      if (it == table->rows.end()) {
        v.expect(false, "missing group " + format_cell(expected[0]));
        continue;
      }
      for (std::size_t j = 1; j < 3; ++j) {
        v.expect(same_12(*as_number((*it)[j]), *as_number(expected[j])),
                 "aggregate " + std::to_string(j) + " of " + format_cell(expected[0]));
      }
    }
  }

  std::size_t compared = 0;
  for (const char* payload : {
           R"({"metric":["netGMV","orderCount","refundRate"],"dimension":["shopId"],"ds":["20251001","20251028"]})",
           R"({"metric":["avgOrderValue","discountAmount"],"dimension":["brandId","ds"],"ds":["20251008","20251021"]})",
           R"({"metric":["cartRate","exposureCount","ctr"],"dimension":["district"],"ds":["20250901","20251030"]})",
           R"({"metric":["lateOrderRate","netGMV"],"dimension":["ds"],"ds":["20251020","20251030"],"compare":["wow"],
               "filter":{"relation":"and","conditions":[{"columnEName":"shopId","queryRule":"eq","params":["S002"]}]}})"}) {
    const auto q = calibrate(parse_query(std::string_view(payload)), c).corrected_dsl;
    if (!ads_eligible(q, c)) {
      v.expect(false, std::string("not ADS-eligible: ") + payload);
      continue;
    }
    const auto a = engine.fetch(plan(q, c, RoutePreference::force_ads), std::chrono::milliseconds(60000));
    const auto d = engine.fetch(plan(q, c, RoutePreference::force_dws), std::chrono::milliseconds(60000));
    if (!a || !d || a->columns != d->columns || a->rows.size() != d->rows.size() || a->rows.empty()) {
      v.expect(false, std::string("route shapes differ: ") + payload);
      continue;
    }
    for (std::size_t i = 0; i < a->rows.size(); ++i) {
      for (std::size_t j = 0; j < a->columns.size(); ++j) {
        const auto x = as_number(a->rows[i][j]);
        const auto y = as_number(d->rows[i][j]);
        const bool same = x && y ? same_12(*x, *y) : format_cell(a->rows[i][j]) == format_cell(d->rows[i][j]);
        v.expect(same, "ADS/DWS differ in " + a->columns[j]);
        ++compared;
      }
    }
  }
  v.expect(compared > 0, "no ADS/DWS cells compared");
  return v;
}

Verdict timeout() {
  Verdict v;
  auto& f = fixture();
  if (!f.store) return {{f.setup_error}};
  const auto& c = testing::catalog();
  QueryEngine engine(c, *f.store);
  const auto q = calibrate(parse_query(std::string_view(
      R"({"metric":["buyerCount","netAov","orderCount"],"dimension":["ageBand","gender","ds"],"ds":["20250901","20251030"]})")), c);
  const auto pkg = engine.execute(plan(q.corrected_dsl, c), std::chrono::milliseconds(1));
  v.expect(pkg.status == ExecStatus::Timeout, std::string("status ") + to_string(pkg.status));
  const auto after = engine.run(std::string(R"({"metric":["netGMV"],"ds":["20251001","20251002"]})"));
  v.expect(after.status == ExecStatus::Success, "engine unusable after a timeout");
  return v;
}

Verdict determinism() {
  Verdict v;
  auto& f = fixture();
  if (!f.store) return {{f.setup_error}};
  const int rc = testing::run_cli("gen-data --seed 42 --out '' --export '" + (f.dir / "export_b").string() + "'",
                                  f.dir / "gen_b.txt");
  v.expect(rc == 0, "second gen-data exited with " + std::to_string(rc));
  const auto a = directory_bytes(f.dir / "export_a");
  v.expect(a.size() >= 7, "export has " + std::to_string(a.size()) + " files");
  v.expect(a == directory_bytes(f.dir / "export_b"), "table exports differ");

  const std::string wh = " --warehouse '" + f.db.string() + "'";
  v.expect(testing::run_cli("run --out '" + (f.dir / "explore").string() + "'" + wh, f.dir / "explore.txt") == 0,
           "explorer run failed");
  for (const char* out : {"replay_a", "replay_b"}) {
    const int r = testing::run_cli("run --policy replay --replay-file '" + (f.dir / "explore" / "trajectory.jsonl").string() +
                                       "' --out '" + (f.dir / out).string() + "'" + wh,
                                   f.dir / (std::string(out) + ".txt"));
    v.expect(r == 0, std::string(out) + " exited with " + std::to_string(r));
  }
  const auto ra = directory_bytes(f.dir / "replay_a");
  v.expect(ra.count("trajectory.jsonl") && !ra.at("trajectory.jsonl").empty(), "replay wrote no trajectory");
  v.expect(ra == directory_bytes(f.dir / "replay_b"), "replay logs differ");
  return v;
}

double window_net_gmv(const Warehouse& w, const Scenario& s) {
  return testing::number(testing::query(w, "SELECT SUM(net_gmv) FROM dws_trd WHERE shop_id = '" + s.target.value +
                                               "' AND ds BETWEEN '" + s.window_from + "' AND '" + s.window_to + "'")[0][0]);
}

Verdict warehouse_consistency() {
  Verdict v;
  auto& f = fixture();
  if (!f.store) return {{f.setup_error}};
  const auto start = Clock::now();
  const auto shop = testing::ads_mismatches(*f.store, "ads_shop", "shop_id", "f.shop_id");
  const auto brand = testing::ads_mismatches(*f.store, "ads_brand", "brand_id", "s.brand_id");
  v.expect(shop == 0, std::to_string(shop) + " ads_shop mismatches");
  v.expect(brand == 0, std::to_string(brand) + " ads_brand mismatches");
  const double elapsed = seconds_since(start);
  v.expect(elapsed < 30.0, "ADS check took " + fmt(elapsed) + " s");

  auto plain = f.config;
  plain.scenarios.clear();
  const auto base = generate(plain);
  const auto& s = f.config.scenarios[0];
  const double ratio = window_net_gmv(*f.store, s) / window_net_gmv(base.store, s);
  v.expect(std::fabs(ratio - 0.7) <= 1e-6 * 0.7, "window net GMV ratio " + fmt(ratio));
  return v;
}

Verdict eval_scoring() {
  Verdict v;
  v.expect(insight_score(true, 1, 0.5) == 0.5, "valid, H=1, alpha=0.5");
  v.expect(insight_score(false, 0, 0.5) == -1.0, "invalid");
  const auto fuzz = testing::fuzz_score(200, 21);
  v.expect(fuzz.checks > 0 && fuzz.discrepancies == 0, std::to_string(fuzz.discrepancies) + " discrepancies");
  return v;
}

Verdict boundary_accounting() {
  Verdict v;
  auto& f = fixture();
  if (!f.store) return {{f.setup_error}};
  const auto dir = f.dir / "boundary";
  fs::create_directories(dir);
  EngineOptions eo;
  eo.workspace = dir;
  QueryEngine engine(testing::catalog(), *f.store, eo);
  SandboxOptions so;
  so.workspace = dir;
  Environment env(engine, so);
  Trajectory t;
  for (const char* call : {
           R"({"name":"dsl2data","arguments":{"metric":["netGMV"],"dimension":["ageBand"],"ds":["20251001","20251028"]}})",
           R"({"name":"dsl2data","arguments":{"metric":["noSuchMetric"],"ds":["20251001","20251028"]}})",
           R"({"name":"dsl2data","arguments":{"metric":["netGMV"],"dimension":["channel"],"ds":["20251001","20251028"]}})"}) {
    StepRecord r;
    r.observation = env.execute_action(parse_tool_call(call));
    t.steps.push_back(std::move(r));
  }
  const auto p = exploration_profile(t, testing::catalog());
  v.expect(p.violation_cumulative == std::vector<int>{0, 1, 2}, "cumulative violations");
  v.expect(p.by_kind.at(Violation::Kind::unknown_metric) == std::vector<int>{0, 1, 1}, "unknown_metric counter");
  v.expect(p.by_kind.at(Violation::Kind::incompatible_pair) == std::vector<int>{0, 0, 1}, "incompatible_pair counter");
  return v;
}

Verdict end_to_end() {
  Verdict v;
  auto& f = fixture();
  if (!f.store) return {{f.setup_error}};
  EpisodeConfig c;
  c.warehouse_path = f.db;
  c.out_dir = f.dir / "episode";
  c.sandbox.workspace = c.out_dir;
  const auto t = run_episode(c);
  const auto top = f.store->ground_truths().at(0).planted_causes.at(0);
  std::optional<int> found;
  for (const auto& s : t.steps) {
    for (const auto& j : s.reward.judgements) {
      if (!found && j.valid && j.title.find(top.metric) != std::string::npos &&
          j.title.find(top.dimension + " " + top.segment) != std::string::npos) {
        found = s.step_index;
      }
    }
  }
  v.expect(found.has_value(), "planted cause " + top.dimension + " " + top.segment + " not judged Valid");
  v.expect(found && *found < 10, "discovered after step 10");

  const auto start = Clock::now();
  const int rc = std::system(("'" + std::string(AIDA_TESTS_PATH) + "' > '" + (f.dir / "unit.txt").string() + "' 2>&1").c_str());
  const double unit = seconds_since(start);
  v.expect(rc == 0, "unit suite failed");
  v.expect(unit < 120.0, "unit suite took " + fmt(unit) + " s");
  return v;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"reward formula edge values", reward_formulas},
      {"discovery gain matches a brute-force per-insight sum", gain_oracle},
      {"return batch normalization moments", rebn},
      {"return recursion and fixture", return_recursion},
      {"schema and logic masking", masking},
      {"calibration mapping rows", calibration},
      {"protocol parsing defaults and rejections", protocol},
      {"golden SQL and ADS/DWS agreement", golden_sql},
      {"1 ms query budget times out", timeout},
      {"determinism of generation and replay", determinism},
      {"warehouse consistency and planted drop", warehouse_consistency},
      {"trajectory scoring", eval_scoring},
      {"boundary violation accounting", boundary_accounting},
      {"explorer end to end and suite runtime", end_to_end},
  };
  const auto start = Clock::now();
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    const auto t0 = Clock::now();
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v.problems.push_back(std::string("exception: ") + e.what());
    }
    const bool ok = v.problems.empty();
    failed += ok ? 0 : 1;
    char elapsed[32];
    std::snprintf(elapsed, sizeof elapsed, "%.2fs", seconds_since(t0));
    std::cout << (ok ? "[PASS] " : "[FAIL] ") << i + 1 << ". " << criteria[i].first << " (" << elapsed << ")\n";
    for (std::size_t k = 0; k < v.problems.size() && k < 5; ++k) std::cout << "       " << v.problems[k] << "\n";
  }
  std::printf("%d of %zu criteria passed in %.1fs\n", static_cast<int>(criteria.size()) - failed, criteria.size(),
              seconds_since(start));
  return failed == 0 ? 0 : 1;
}
