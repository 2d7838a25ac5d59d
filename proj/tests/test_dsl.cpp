#include <doctest.h>

#include <cmath>
#include <random>

#include "aida/dsl.hpp"
#include "aida/executor.hpp"
#include "aida/planner.hpp"
#include "support.hpp"

using namespace aida;

namespace {

constexpr const char* kExampleRequest = R"({
  "metric": ["Net_GMV"],
  "dimension": ["Gender"],
  "filter": {"relation": "and", "conditions": [
      {"columnEName": "brand_id", "queryRule": "in", "params": ["B01"]}]},
  "ds": ["20251010", "20251110"],
  "orderBy": [{"columnEName": "Net_GMV", "orderType": "desc"}],
  "limit": 10
})";

ErrorKind parse_error(const std::string& payload, std::string* subject = nullptr) {
  try {
    parse_query(std::string_view(payload));
  } catch (const Error& e) {
    if (subject) *subject = e.subject();
    return e.kind();
  }
  FAIL("payload parsed although it is invalid: " << payload);
  return ErrorKind::io;
}

bool same_12(double a, double b) {
  if (a == b) return true;
  return std::fabs(a - b) <= 1e-12 * std::max(std::fabs(a), std::fabs(b));
}

std::string shop_name(const Warehouse& w, const std::string& id) {
  const auto rows = testing::query(w, "SELECT shop_name FROM dim_shop WHERE shop_id = '" + id + "'");
  REQUIRE(rows.size() == 1);
  return std::get<std::string>(rows[0][0]);
}

DslQuery random_query(std::mt19937_64& rng) {
  static const std::vector<std::string> metrics = {"netGMV", "orderCount", "ctr", "buyerCount", "aov"};
  static const std::vector<std::string> dims = {"isWeek", "gender", "ageBand", "shopId", "week"};
  auto pick = [&](const std::vector<std::string>& from) { return from[rng() % from.size()]; };
  DslQuery q;
  const int nm = 1 + static_cast<int>(rng() % 3);
  for (int i = 0; i < nm; ++i) q.metric.push_back(pick(metrics));
  q.ds = {"20251001", "20251028"};
  for (int i = 0, nd = static_cast<int>(rng() % 3); i < nd; ++i) q.dimension.push_back(pick(dims));
  if (rng() % 2) {
    std::vector<FilterNode> kids;
    kids.push_back(FilterNode::leaf({"shopId", QueryRule::in, {Scalar(std::string("S001")), Scalar(std::string("S002"))}}));
    if (rng() % 2) kids.push_back(FilterNode::leaf({"orderCount", QueryRule::gt, {Scalar(std::int64_t(3))}}));
    if (rng() % 2) {
      kids.push_back(FilterNode::group(
          Relation::or_, {FilterNode::leaf({"gender", QueryRule::eq, {Scalar(std::string("F"))}}),
                          FilterNode::leaf({"netGMV", QueryRule::between, {Scalar(1.5), Scalar(2500.25)}})}));
    }
    q.filter = FilterNode::group(rng() % 2 ? Relation::and_ : Relation::or_, kids);
  }
  if (rng() % 2) q.order_by.push_back({q.metric[0], rng() % 2 ? OrderType::asc : OrderType::desc});
  q.limit = 1 + static_cast<std::int64_t>(rng() % 500);
  if (rng() % 2) q.compare.push_back(Compare::wow);
  if (rng() % 3 == 0) q.compare.push_back(Compare::yoy);
  if (rng() % 2) q.save_data_path = "out/q" + std::to_string(rng() % 100) + ".csv";
  return q;
}

}  // namespace

TEST_SUITE("dsl_engine") {
  TEST_CASE("parse: the protocol example request") {
    const auto q = parse_query(std::string_view(kExampleRequest));
    CHECK(q.metric == std::vector<std::string>{"Net_GMV"});
    CHECK(q.dimension == std::vector<std::string>{"Gender"});
    CHECK(q.limit == 10);
    REQUIRE(q.order_by.size() == 1);
    CHECK(q.order_by[0].column == "Net_GMV");
    CHECK(q.order_by[0].type == OrderType::desc);
    CHECK(q.ds.from == "20251010");
    CHECK(q.ds.to == "20251110");
    REQUIRE(q.filter);
    REQUIRE(q.filter->children.size() == 1);
    CHECK(q.filter->children[0].condition->rule == QueryRule::in);
  }

  TEST_CASE("parse: defaults and schema errors") {
    CHECK(parse_query(std::string_view(R"({"metric":["netGMV"],"ds":["20251001","20251002"]})")).limit == 100);
    std::string subject;
    CHECK(parse_error(R"({"ds":["20251001","20251002"]})", &subject) == ErrorKind::schema);
    CHECK(subject == "metric");
    CHECK(parse_error(R"({"metric":["netGMV"]})", &subject) == ErrorKind::schema);
    CHECK(subject == "ds");
    CHECK(parse_error(R"({"metric":[],"ds":["20251001","20251002"]})") == ErrorKind::schema);
    CHECK(parse_error(R"({"metric":["m"],"ds":["20251003","20251002"]})") == ErrorKind::schema);
    CHECK(parse_error(R"({"metric":["m"],"ds":["2025-10-01","20251002"]})") == ErrorKind::schema);
    CHECK(parse_error(R"({"metric":["m"],"ds":["20251001","20251002"],"limit":0})") == ErrorKind::schema);
    CHECK(parse_error(R"({"metric":["m"],"ds":["20251001","20251002"],"extra":1})", &subject) == ErrorKind::schema);
    CHECK(subject == "extra");
    CHECK(parse_error(R"({"metric":["m"],"ds":["20251001","20251002"],"save_data_path":"../x.csv"})") ==
          ErrorKind::schema);
    CHECK(parse_error(R"({"metric":["m"],"ds":["20251001","20251002"],"save_data_path":"/abs.csv"})") ==
          ErrorKind::schema);
    CHECK(parse_error(R"({"metric":["m"],"ds":["20251001","20251002"],"compare":["mom"]})") == ErrorKind::schema);
    CHECK(parse_error(R"({"metric":["m"],"ds":["20251001","20251002"],
        "filter":{"relation":"and","conditions":[{"columnEName":"x","queryRule":"between","params":[1]}]}})") ==
          ErrorKind::schema);
    CHECK(parse_error(R"({"metric":["m"],"ds":["20251001","20251002"],
        "filter":{"relation":"and","conditions":[]}})") == ErrorKind::schema);
    CHECK(parse_error("{not json") == ErrorKind::schema);
  }

  TEST_CASE("parse/serialize round trip over generated queries") {
    std::mt19937_64 rng(2024);
    for (int i = 0; i < 300; ++i) {
      const auto q = random_query(rng);
      CHECK(parse_query(std::string_view(serialize_query(q))) == q);
    }
  }

  TEST_CASE("calibrate: the four mapping rows") {
    const auto q = parse_query(std::string_view(R"({"metric":["gmv","aov"],"dimension":["week"],
      "filter":{"relation":"and","conditions":[{"columnEName":"shop","queryRule":"eq","params":["XX"]}]},
      "ds":["20251001","20251028"]})"));
    const auto r = calibrate(q, testing::catalog());
    CHECK(r.violations.empty());
    CHECK(r.corrected_dsl.metric == std::vector<std::string>{"netGMV", "netAov"});
    CHECK(r.corrected_dsl.dimension == std::vector<std::string>{"isWeek"});
    CHECK(r.corrected_dsl.filter->children[0].condition->column == "shopName");
    CHECK(r.notices.size() == 4);
    for (const char* token : {"'gmv'", "'aov'", "'week'", "'shop'"}) {
      CHECK(std::count_if(r.notices.begin(), r.notices.end(),
                          [&](const std::string& n) { return n.find(token) != std::string::npos; }) == 1);
    }
  }

  TEST_CASE("calibrate: identity, idempotence, violations") {
    const auto& c = testing::catalog();
    const auto canonical = parse_query(std::string_view(
        R"({"metric":["netGMV"],"dimension":["isWeek"],"ds":["20251001","20251028"]})"));
    const auto r = calibrate(canonical, c);
    CHECK(r.notices.empty());
    CHECK(r.corrected_dsl == canonical);

    std::mt19937_64 rng(99);
    for (int i = 0; i < 100; ++i) {
      const auto first = calibrate(random_query(rng), c);
      if (!first.violations.empty()) continue;
      CHECK(calibrate(first.corrected_dsl, c).notices.empty());
    }

    const auto bad = calibrate(parse_query(std::string_view(
        R"({"metric":["noSuchMetric","netGMV"],"dimension":["channel"],"ds":["20251001","20251028"]})")), c);
    REQUIRE(bad.violations.size() == 2);
    CHECK(bad.violations[0].kind == Violation::Kind::unknown_metric);
    CHECK(bad.violations[1].kind == Violation::Kind::incompatible_pair);
    CHECK_FALSE(bad.executable());
  }

  TEST_CASE("plan: routes, SQL structure, cache key") {
    const auto& c = testing::catalog();
    auto calibrated = [&](const char* payload) { return calibrate(parse_query(std::string_view(payload)), c).corrected_dsl; };

    const auto listing = calibrated(R"({"metric":["gmv","aov"],"dimension":["week"],
      "filter":{"relation":"and","conditions":[{"columnEName":"shop","queryRule":"eq","params":["XX"]}]},
      "ds":["20251001","20251028"]})");
    const auto p = plan(listing, c);
    CHECK(p.route == Route::DWS);
    CHECK(std::find(p.tables.begin(), p.tables.end(), "dws_trd") != p.tables.end());
    CHECK(std::find(p.tables.begin(), p.tables.end(), "dim_date") != p.tables.end());
    auto count = [](const std::string& s, const std::string& needle) {
      std::size_t n = 0;
      for (auto at = s.find(needle); at != std::string::npos; at = s.find(needle, at + 1)) ++n;
      return n;
    };
    CHECK(count(p.sql_text, "GROUP BY") == 1);
    CHECK(p.sql_text.find("is_week") != std::string::npos);
    CHECK(p.sql_text.find("COUNT(DISTINCT") != std::string::npos);
    CHECK(p.sql_text.find("NULLIF") != std::string::npos);
    CHECK(p.cache_key.size() == 16);
    CHECK(plan(listing, c).cache_key == p.cache_key);

    const auto kpi = calibrated(R"({"metric":["netGMV","orderCount"],"dimension":["shopId"],"ds":["20251001","20251028"]})");
    const auto ads = plan(kpi, c);
    CHECK(ads.route == Route::ADS);
    CHECK(ads.tables == std::vector<std::string>{"ads_shop"});
    CHECK(plan(kpi, c, RoutePreference::force_dws).route == Route::DWS);
    CHECK(plan(kpi, c, RoutePreference::force_dws).cache_key != ads.cache_key);
    CHECK_THROWS_AS(plan(listing, c, RoutePreference::force_ads), Error);

    const auto mixed = calibrated(R"({"metric":["netGMV","clickCount"],"ds":["20251001","20251028"]})");
    CHECK_THROWS_AS(plan(mixed, c), Error);
  }

  TEST_CASE("execute: golden comparison against hand-written SQL") {
    const auto& w = testing::small_warehouse().store;
    const std::string name = shop_name(w, "S001");
    QueryEngine engine(testing::catalog(), w);
    const auto calibrated = calibrate(parse_query(ordered_json{
        {"metric", {"gmv", "aov"}}, {"dimension", {"week"}}, {"ds", {"20251001", "20251028"}},
        {"filter", {{"relation", "and"}, {"conditions", {{{"columnEName", "shop"}, {"queryRule", "eq"}, {"params", {name}}}}}}}}),
        testing::catalog());
    const auto p = plan(calibrated.corrected_dsl, testing::catalog());
    const auto table = engine.fetch(p, std::chrono::milliseconds(60000));
    REQUIRE(table);
    REQUIRE(table->columns == std::vector<std::string>{"isWeek", "netGMV", "netAov"});

    const auto oracle = testing::query(w,
        "SELECT b.is_week, SUM(a.net_gmv), SUM(a.net_gmv) / COUNT(DISTINCT a.user_id) "
        "FROM dws_trd a JOIN dim_date b ON a.ds = b.ds JOIN dim_shop s ON a.shop_id = s.shop_id "
        "WHERE s.shop_name = '" + name + "' AND a.ds BETWEEN '20251001' AND '20251028' "
        "GROUP BY b.is_week ORDER BY b.is_week");
    REQUIRE(oracle.size() == 2);
    REQUIRE(table->rows.size() == 2);
    for (const auto& expected : oracle) {
      const auto it = std::find_if(table->rows.begin(), table->rows.end(),
                                   [&](const auto& r) { return r[0] == expected[0]; });
      REQUIRE(it != table->rows.end());
      CHECK(same_12(*as_number((*it)[1]), *as_number(expected[1])));
      CHECK(same_12(*as_number((*it)[2]), *as_number(expected[2])));
    }
  }

  TEST_CASE("execute: ADS and DWS routes agree on eligible queries") {
    const auto& c = testing::catalog();
    QueryEngine engine(c, testing::small_warehouse().store);
    for (const char* payload : {
             R"({"metric":["netGMV","orderCount","refundRate"],"dimension":["shopId"],"ds":["20251001","20251028"]})",
             R"({"metric":["avgOrderValue","discountAmount"],"dimension":["brandId","ds"],"ds":["20251008","20251021"]})",
             R"({"metric":["cartRate","exposureCount"],"dimension":["district"],"ds":["20251001","20251028"],
                 "filter":{"relation":"and","conditions":[{"columnEName":"city","queryRule":"neq","params":["nowhere"]}]}})",
             R"({"metric":["lateOrderRate"],"dimension":["ds"],"ds":["20251020","20251028"],"compare":["wow"],
                 "filter":{"relation":"and","conditions":[{"columnEName":"shopId","queryRule":"eq","params":["S002"]}]}})"}) {
      const auto q = calibrate(parse_query(std::string_view(payload)), c).corrected_dsl;
      INFO(std::string(payload));
      REQUIRE(ads_eligible(q, c));
      const auto a = engine.fetch(plan(q, c, RoutePreference::force_ads), std::chrono::milliseconds(60000));
      const auto d = engine.fetch(plan(q, c, RoutePreference::force_dws), std::chrono::milliseconds(60000));
      REQUIRE(a);
      REQUIRE(d);
      REQUIRE(a->columns == d->columns);
      REQUIRE(a->rows.size() == d->rows.size());
      CHECK(a->rows.size() > 0);
      for (std::size_t i = 0; i < a->rows.size(); ++i) {
        for (std::size_t j = 0; j < a->columns.size(); ++j) {
          const auto x = as_number(a->rows[i][j]);
          const auto y = as_number(d->rows[i][j]);
          if (x && y) CHECK(same_12(*x, *y));
          else CHECK(format_cell(a->rows[i][j]) == format_cell(d->rows[i][j]));
        }
      }
    }
  }

  TEST_CASE("execute: package invariants, cache, export, compare, timeout") {
    const auto& c = testing::catalog();
    const auto dir = testing::scratch("dsl_exec");
    EngineOptions o;
    o.workspace = dir;
    QueryEngine engine(c, testing::small_warehouse().store, o);

    const auto pkg = engine.run(std::string(kExampleRequest));
    CHECK(pkg.status == ExecStatus::Success);
    CHECK(pkg.execution_results.preview.size() <= 10);
    CHECK_FALSE(pkg.execution_results.data_path);
    CHECK(pkg.calibration_report.corrected_dsl.metric == std::vector<std::string>{"netGMV"});
    const auto wire = to_json(pkg);
    CHECK(wire.contains("calibration_report"));
    CHECK(wire["calibration_report"].contains("corrected_dsl"));
    CHECK(wire["calibration_report"].contains("notices"));
    CHECK(wire["execution_results"].contains("preview"));
    CHECK(wire["status"] == "Success");

    const auto again = engine.run(std::string(kExampleRequest));
    CHECK(again.from_cache);
    CHECK(to_json(again) == to_json(pkg));

    const auto saved = engine.run(std::string(
        R"({"metric":["netGMV"],"dimension":["ds"],"ds":["20251001","20251028"],"limit":3,"save_data_path":"sub/out.csv"})"));
    REQUIRE(saved.status == ExecStatus::Success);
    CHECK(saved.execution_results.preview.size() == 3);
    REQUIRE(saved.execution_results.data_path);
    const auto csv = testing::read_text(dir / "sub/out.csv");
    CHECK(csv.rfind("ds,netGMV\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);

    const auto cmp = engine.run(std::string(
        R"({"metric":["orderCount"],"dimension":["shopId"],"ds":["20251022","20251028"],"compare":["wow"]})"));
    REQUIRE(cmp.status == ExecStatus::Success);
    const auto& row = cmp.execution_results.preview.front();
    REQUIRE(row.contains("orderCount_wow"));
    REQUIRE(row.contains("orderCount_wow_pct"));
    const auto prior = engine.run(ordered_json{{"metric", {"orderCount"}}, {"ds", {"20251015", "20251021"}},
        {"filter", {{"relation", "and"}, {"conditions", {{{"columnEName", "shopId"}, {"queryRule", "eq"}, {"params", {row["shopId"]}}}}}}}}.dump());
    const double before = prior.execution_results.preview.front()["orderCount"].get<double>();
    const double now = row["orderCount"].get<double>();
    CHECK(row["orderCount_wow"].get<double>() == doctest::Approx(now - before));
    CHECK(row["orderCount_wow_pct"].get<double>() == doctest::Approx((now - before) / before * 100));

    const auto rejected = engine.run(std::string(R"({"metric":["noSuchMetric"],"ds":["20251001","20251028"]})"));
    CHECK(rejected.status == ExecStatus::Error);
    CHECK(rejected.calibration_report.violations.size() == 1);
    const auto broken = engine.run(std::string(R"({"ds":["20251001","20251028"]})"));
    CHECK(broken.status == ExecStatus::Error);
    CHECK(broken.schema_error);

    const auto q = calibrate(parse_query(std::string_view(
        R"({"metric":["buyerCount","netAov"],"dimension":["ageBand","gender","ds"],"ds":["20251001","20251028"]})")), c);
    const auto slow = engine.execute(plan(q.corrected_dsl, c), std::chrono::milliseconds(1));
    CHECK(slow.status == ExecStatus::Timeout);
  }
}
