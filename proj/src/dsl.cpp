#include "aida/dsl.hpp"

#include <algorithm>
#include <set>

#include "aida/dates.hpp"

namespace aida {

const char* to_string(Relation r) { return r == Relation::and_ ? "and" : "or"; }

const char* to_string(QueryRule r) {
  switch (r) {
    case QueryRule::in: return "in";
    case QueryRule::eq: return "eq";
    case QueryRule::neq: return "neq";
    case QueryRule::gt: return "gt";
    case QueryRule::lt: return "lt";
    case QueryRule::between: return "between";
  }
  return "?";
}

const char* to_string(OrderType t) { return t == OrderType::asc ? "asc" : "desc"; }
const char* to_string(Compare c) { return c == Compare::wow ? "wow" : "yoy"; }

namespace {

[[noreturn]] void schema_error(const std::string& property, const std::string& message) {
  throw Error(ErrorKind::schema, property, "schema error at '" + property + "': " + message);
}

std::vector<std::string> string_list(const ordered_json& v, const std::string& property) {
  if (!v.is_array()) schema_error(property, "expected an array of strings");
  std::vector<std::string> out;
  for (const auto& item : v) {
    if (!item.is_string()) schema_error(property, "expected an array of strings");
    out.push_back(item.get<std::string>());
  }
  return out;
}

Scalar scalar_from_json(const ordered_json& v, const std::string& property) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_number_float()) return v.get<double>();
  schema_error(property, "params must be strings or numbers");
}

std::optional<QueryRule> rule_from_string(std::string_view s) {
  for (QueryRule r : {QueryRule::in, QueryRule::eq, QueryRule::neq, QueryRule::gt, QueryRule::lt,
                      QueryRule::between}) {
    if (s == to_string(r)) return r;
  }
  return std::nullopt;
}

FilterNode filter_from_json(const ordered_json& v, const std::string& property);

FilterNode condition_from_json(const ordered_json& v, const std::string& property) {
  for (const auto& [key, _] : v.items()) {
    if (key != "columnEName" && key != "queryRule" && key != "params") {
      schema_error(property + "." + key, "unknown property");
    }
  }
  FilterCondition c;
  if (!v.contains("columnEName") || !v["columnEName"].is_string()) {
    schema_error(property + ".columnEName", "required string");
  }
  c.column = v["columnEName"].get<std::string>();
  if (!v.contains("queryRule") || !v["queryRule"].is_string()) {
    schema_error(property + ".queryRule", "required string");
  }
  auto rule = rule_from_string(v["queryRule"].get<std::string>());
  if (!rule) schema_error(property + ".queryRule", "must be one of in/eq/neq/gt/lt/between");
  c.rule = *rule;
  if (!v.contains("params") || !v["params"].is_array()) {
    schema_error(property + ".params", "required array");
  }
  for (const auto& p : v["params"]) c.params.push_back(scalar_from_json(p, property + ".params"));
  const std::size_t n = c.params.size();
  const bool arity_ok = c.rule == QueryRule::in        ? n >= 1
                        : c.rule == QueryRule::between ? n == 2
                                                       : n == 1;
  if (!arity_ok) schema_error(property + ".params", "wrong number of params for queryRule");
  return FilterNode::leaf(std::move(c));
}

FilterNode filter_from_json(const ordered_json& v, const std::string& property) {
  if (!v.is_object()) schema_error(property, "expected an object");
  if (!v.contains("relation")) return condition_from_json(v, property);
  for (const auto& [key, _] : v.items()) {
    if (key != "relation" && key != "conditions") {
      schema_error(property + "." + key, "unknown property");
    }
  }
  const auto& rel = v["relation"];
  if (!rel.is_string() || (rel != "and" && rel != "or")) {
    schema_error(property + ".relation", "must be \"and\" or \"or\"");
  }
  if (!v.contains("conditions") || !v["conditions"].is_array() || v["conditions"].empty()) {
    schema_error(property + ".conditions", "required non-empty array");
  }
  std::vector<FilterNode> children;
  for (const auto& c : v["conditions"]) {
    children.push_back(filter_from_json(c, property + ".conditions"));
  }
  return FilterNode::group(rel == "and" ? Relation::and_ : Relation::or_, std::move(children));
}


void collect_columns(const FilterNode& node, std::vector<std::string>& out) {
  if (node.is_leaf()) {
    if (std::find(out.begin(), out.end(), node.condition->column) == out.end()) {
      out.push_back(node.condition->column);
    }
    return;
  }
  for (const auto& child : node.children) collect_columns(child, out);
}

}  // namespace

bool safe_relative_path(std::string_view p) {
  if (p.empty() || p.front() == '/' || p.front() == '\\') return false;
  if (p.size() >= 2 && p[1] == ':') return false;
  std::size_t start = 0;
  while (start <= p.size()) {
    std::size_t end = p.find_first_of("/\\", start);
    if (end == std::string_view::npos) end = p.size();
    if (p.substr(start, end - start) == "..") return false;
    start = end + 1;
  }
  return true;
}

DslQuery parse_query(const ordered_json& v) {
  if (!v.is_object()) schema_error("$", "request must be an object");
  static const std::set<std::string> kKnown = {"metric",  "ds",    "dimension", "filter",
                                               "orderBy", "limit", "compare",   "save_data_path"};
  for (const auto& [key, _] : v.items()) {
    if (kKnown.count(key) == 0) schema_error(key, "unknown property");
  }
  DslQuery q;
  if (!v.contains("metric")) schema_error("metric", "required property missing");
  q.metric = string_list(v["metric"], "metric");
  if (q.metric.empty()) schema_error("metric", "must list at least one metric");

  if (!v.contains("ds")) schema_error("ds", "required property missing");
  auto ds = string_list(v["ds"], "ds");
  if (ds.size() != 2) schema_error("ds", "expected [\"YYYYMMDD\", \"YYYYMMDD\"]");
  auto from = parse_stamp(ds[0]);
  auto to = parse_stamp(ds[1]);
  if (!from || !to) schema_error("ds", "dates must be valid YYYYMMDD stamps");
  if (*from > *to) schema_error("ds", "start date after end date");
  q.ds = {ds[0], ds[1]};

  if (v.contains("dimension")) q.dimension = string_list(v["dimension"], "dimension");
  if (v.contains("filter")) {
    const auto& f = v["filter"];
    if (!f.is_object() || !f.contains("relation")) {
      schema_error("filter", "expected {relation, conditions}");
    }
    q.filter = filter_from_json(f, "filter");
  }
  if (v.contains("orderBy")) {
    const auto& ob = v["orderBy"];
    if (!ob.is_array()) schema_error("orderBy", "expected an array");
    for (const auto& item : ob) {
      if (!item.is_object() || !item.contains("columnEName") || !item["columnEName"].is_string()) {
        schema_error("orderBy.columnEName", "required string");
      }
      for (const auto& [key, _] : item.items()) {
        if (key != "columnEName" && key != "orderType") {
          schema_error("orderBy." + key, "unknown property");
        }
      }
      OrderSpec spec{item["columnEName"].get<std::string>(), OrderType::desc};
      if (item.contains("orderType")) {
        const auto& t = item["orderType"];
        if (!t.is_string() || (t != "asc" && t != "desc")) {
          schema_error("orderBy.orderType", "must be \"asc\" or \"desc\"");
        }
        spec.type = t == "asc" ? OrderType::asc : OrderType::desc;
      }
      q.order_by.push_back(std::move(spec));
    }
  }
  if (v.contains("limit")) {
    const auto& l = v["limit"];
    if (!l.is_number_integer() || l.get<std::int64_t>() < 1) {
      schema_error("limit", "must be a positive integer");
    }
    q.limit = l.get<std::int64_t>();
  }
  if (v.contains("compare")) {
    for (const auto& c : string_list(v["compare"], "compare")) {
      if (c == "wow") {
        q.compare.push_back(Compare::wow);
      } else if (c == "yoy") {
        q.compare.push_back(Compare::yoy);
      } else {
        schema_error("compare", "unsupported comparison '" + c + "'");
      }
    }
  }
  if (v.contains("save_data_path")) {
    const auto& p = v["save_data_path"];
    if (!p.is_string() || !safe_relative_path(p.get<std::string>())) {
      schema_error("save_data_path", "must be a relative path without '..'");
    }
    q.save_data_path = p.get<std::string>();
  }
  return q;
}

DslQuery parse_query(std::string_view payload) {
  ordered_json v;
  try {
    v = ordered_json::parse(payload.begin(), payload.end());
  } catch (const ordered_json::parse_error& e) {
    schema_error("$", std::string("malformed payload: ") + e.what());
  }
  return parse_query(v);
}

ordered_json to_json(const Scalar& scalar) {
  return std::visit([](const auto& v) { return ordered_json(v); }, scalar);
}

ordered_json to_json(const FilterNode& node) {
  if (node.is_leaf()) {
    ordered_json params = ordered_json::array();
    for (const auto& p : node.condition->params) params.push_back(to_json(p));
    return {{"columnEName", node.condition->column},
            {"queryRule", to_string(node.condition->rule)},
            {"params", std::move(params)}};
  }
  ordered_json conditions = ordered_json::array();
  for (const auto& child : node.children) conditions.push_back(to_json(child));
  return {{"relation", to_string(node.relation)}, {"conditions", std::move(conditions)}};
}

ordered_json to_json(const DslQuery& q) {
  ordered_json j;
  j["metric"] = q.metric;
  j["ds"] = {q.ds.from, q.ds.to};
  j["dimension"] = q.dimension;
  if (q.filter) j["filter"] = to_json(*q.filter);
  if (!q.order_by.empty()) {
    ordered_json ob = ordered_json::array();
    for (const auto& o : q.order_by) {
      ob.push_back({{"columnEName", o.column}, {"orderType", to_string(o.type)}});
    }
    j["orderBy"] = std::move(ob);
  }
  j["limit"] = q.limit;
  if (!q.compare.empty()) {
    ordered_json c = ordered_json::array();
    for (auto k : q.compare) c.push_back(to_string(k));
    j["compare"] = std::move(c);
  }
  if (q.save_data_path) j["save_data_path"] = *q.save_data_path;
  return j;
}

std::string serialize_query(const DslQuery& query) { return to_json(query).dump(); }

std::vector<std::string> filter_columns(const FilterNode& node) {
  std::vector<std::string> out;
  collect_columns(node, out);
  return out;
}

namespace {

class Calibrator {
 public:
  Calibrator(const Catalog& catalog, CalibrationReport& report)
      : catalog_(catalog), report_(report) {}

  // Returns the canonical name, or the raw token when unknown.
  std::string resolve(const std::string& token, NameKind kind, bool& known) {
    Resolution r = catalog_.resolve_name(token, kind);
    known = r.status != Resolution::Status::unknown;
    if (r.status == Resolution::Status::corrected) note(token, kind, r.note);
    return known ? r.canonical_name : token;
  }

  void note(const std::string& token, NameKind kind, const std::string& text) {
    if (noted_.emplace(token, kind).second) report_.notices.push_back(text);
  }

  void calibrate_filter(FilterNode& node, std::vector<std::string>& known_columns) {
    if (!node.is_leaf()) {
      for (auto& child : node.children) calibrate_filter(child, known_columns);
      return;
    }
    bool known = false;
    auto& column = node.condition->column;
    const std::string raw = column;
    column = resolve(raw, NameKind::filter_column, known);
    if (!known) {
      report_.violations.push_back(
          {Violation::Kind::unknown_dimension, "unknown filter column '" + raw + "'"});
    } else if (std::find(known_columns.begin(), known_columns.end(), column) ==
               known_columns.end()) {
      known_columns.push_back(column);
    }
  }

 private:
  const Catalog& catalog_;
  CalibrationReport& report_;
  std::set<std::pair<std::string, NameKind>> noted_;
};

template <typename T>
void dedupe(std::vector<T>& items, std::vector<std::string>& notices, const char* what) {
  std::vector<T> unique;
  for (auto& item : items) {
    if (std::find(unique.begin(), unique.end(), item) == unique.end()) {
      unique.push_back(item);
    } else {
      notices.push_back(std::string("Duplicate ") + what + " '" + item + "' removed.");
    }
  }
  items = std::move(unique);
}

}  // namespace

CalibrationReport calibrate(const DslQuery& query, const Catalog& catalog) {
  CalibrationReport report;
  report.corrected_dsl = query;
  DslQuery& q = report.corrected_dsl;
  Calibrator cal(catalog, report);

  std::vector<std::string> known_metrics;
  for (auto& m : q.metric) {
    bool known = false;
    const std::string raw = m;
    m = cal.resolve(raw, NameKind::metric, known);
    if (!known) {
      report.violations.push_back(
          {Violation::Kind::unknown_metric, "unknown metric '" + raw + "'"});
    }
  }
  dedupe(q.metric, report.notices, "metric");
  for (const auto& m : q.metric) {
    if (catalog.find_metric(m) != nullptr) known_metrics.push_back(m);
  }

  std::vector<std::string> known_dims;
  for (auto& d : q.dimension) {
    bool known = false;
    const std::string raw = d;
    d = cal.resolve(raw, NameKind::dimension, known);
    if (!known) {
      report.violations.push_back(
          {Violation::Kind::unknown_dimension, "unknown dimension '" + raw + "'"});
    }
  }
  dedupe(q.dimension, report.notices, "dimension");
  for (const auto& d : q.dimension) {
    if (catalog.find_dimension(d) != nullptr) known_dims.push_back(d);
  }

  std::vector<std::string> breakdown = known_dims;
  if (q.filter) cal.calibrate_filter(*q.filter, breakdown);

  for (auto& v : catalog.check_compatibility(known_metrics, breakdown)) {
    report.violations.push_back(std::move(v));
  }

  std::vector<OrderSpec> orders;
  for (auto spec : q.order_by) {
    const std::string raw = spec.column;
    bool known = false;
    const auto r_metric = catalog.resolve_name(raw, NameKind::metric);
    const auto r_dim = catalog.resolve_name(raw, NameKind::dimension);
    const Resolution* chosen = nullptr;
    NameKind kind = NameKind::metric;
    if (r_metric.status != Resolution::Status::unknown) {
      chosen = &r_metric;
    } else if (r_dim.status != Resolution::Status::unknown) {
      chosen = &r_dim;
      kind = NameKind::dimension;
    }
    known = chosen != nullptr;
    if (!known) {
      report.violations.push_back(
          {Violation::Kind::unknown_metric, "unknown order column '" + raw + "'"});
      orders.push_back(spec);
      continue;
    }
    const auto& selected = kind == NameKind::metric ? q.metric : q.dimension;
    if (std::find(selected.begin(), selected.end(), chosen->canonical_name) == selected.end()) {
      report.notices.push_back("Order column '" + raw + "' is not selected; ignored.");
      continue;
    }
    if (chosen->status == Resolution::Status::corrected) cal.note(raw, kind, chosen->note);
    spec.column = chosen->canonical_name;
    orders.push_back(spec);
  }
  q.order_by = std::move(orders);
  return report;
}

ordered_json to_json(const CalibrationReport& report) {
  ordered_json violations = ordered_json::array();
  for (const auto& v : report.violations) {
    violations.push_back({{"kind", to_string(v.kind)}, {"detail", v.detail}});
  }
  return {{"corrected_dsl", to_json(report.corrected_dsl)},
          {"notices", report.notices},
          {"violations", std::move(violations)}};
}

}  // namespace aida
