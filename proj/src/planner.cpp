#include "aida/planner.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <map>

#include "aida/dates.hpp"

namespace aida {

const char* to_string(Route route) { return route == Route::ADS ? "ADS" : "DWS"; }

const std::vector<std::string>& ads_key_columns(std::string_view ads_table) {
  static const std::vector<std::string> kShop = {"ds",         "shop_id",  "shop_name", "brand_id",
                                                 "brand_name", "category", "district",  "city"};
  static const std::vector<std::string> kBrand = {"ds", "brand_id", "brand_name"};
  static const std::vector<std::string> kNone;
  if (ads_table == "ads_shop") return kShop;
  if (ads_table == "ads_brand") return kBrand;
  return kNone;
}

std::string format_double(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, value);
  std::string out(buf, res.ptr);
  if (out.find_first_of(".eEn") == std::string::npos) out += ".0";
  return out;
}

std::string sql_literal(const Scalar& value) {
  if (const auto* s = std::get_if<std::string>(&value)) {
    std::string out = "'";
    for (char c : *s) {
      if (c == '\'') out += '\'';
      out += c;
    }
    return out + "'";
  }
  if (const auto* i = std::get_if<std::int64_t>(&value)) return std::to_string(*i);
  return format_double(std::get<double>(value));
}

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

[[noreturn]] void plan_error(const std::string& subject, const std::string& message) {
  throw Error(ErrorKind::plan, subject, "plan error: " + message);
}

struct AdsCandidate {
  const char* table;
  Grain grain;
};
constexpr AdsCandidate kAdsTables[] = {{"ads_brand", Grain::brand}, {"ads_shop", Grain::shop}};

// Sum/count parts a metric expands to.
std::vector<const MetricDef*> base_parts(const MetricDef& m, const Catalog& catalog) {
  if (m.aggregation.kind != Aggregation::Kind::ratio) return {&m};
  return {catalog.find_metric(m.aggregation.numerator),
          catalog.find_metric(m.aggregation.denominator)};
}

std::vector<const DimensionDef*> breakdown_columns(const DslQuery& q, const Catalog& catalog) {
  std::vector<std::string> names = q.dimension;
  if (q.filter) {
    for (auto& c : filter_columns(*q.filter)) {
      if (std::find(names.begin(), names.end(), c) == names.end()) names.push_back(c);
    }
  }
  std::vector<const DimensionDef*> out;
  for (const auto& n : names) {
    const DimensionDef* d = catalog.find_dimension(n);
    if (d == nullptr) plan_error(n, "unknown dimension '" + n + "' reached the planner");
    if (d->filler) plan_error(n, "dimension '" + n + "' has no physical mounting");
    out.push_back(d);
  }
  return out;
}

const char* ads_table_for(const DslQuery& q, const Catalog& catalog) {
  for (const auto& name : q.metric) {
    const MetricDef* m = catalog.find_metric(name);
    if (m == nullptr || m->filler || !m->ads_available) return nullptr;
    for (const auto* part : base_parts(*m, catalog)) {
      if (!part->ads_available) return nullptr;
    }
  }
  std::vector<const DimensionDef*> dims;
  try {
    dims = breakdown_columns(q, catalog);
  } catch (const Error&) {
    return nullptr;
  }
  for (const auto& cand : kAdsTables) {
    const auto& keys = ads_key_columns(cand.table);
    const bool covers = std::all_of(dims.begin(), dims.end(), [&](const DimensionDef* d) {
      return std::find(keys.begin(), keys.end(), d->source_column) != keys.end();
    });
    const bool grain_ok = std::all_of(q.metric.begin(), q.metric.end(), [&](const auto& name) {
      const MetricDef* m = catalog.find_metric(name);
      auto parts = base_parts(*m, catalog);
      return m->grains.count(cand.grain) != 0 &&
             std::all_of(parts.begin(), parts.end(),
                         [&](const MetricDef* p) { return p->grains.count(cand.grain) != 0; });
    });
    if (covers && grain_ok) return cand.table;
  }
  return nullptr;
}

class SqlBuilder {
 public:
  SqlBuilder(const DslQuery& q, const Catalog& catalog, Route route, std::string fact)
      : q_(q), catalog_(catalog), route_(route), fact_(std::move(fact)) {}

  std::string column(const DimensionDef& d) {
    if (route_ == Route::ADS) return "a." + d.source_column;
    if (d.source_table == fact_) return "a." + d.source_column;
    if (d.source_table == "dim_date") return join("dim_date", "b", "ds") + "." + d.source_column;
    if (d.source_table == "dim_shop") {
      return join("dim_shop", "c", "shop_id") + "." + d.source_column;
    }
    if (d.source_table == "dim_usr") return join("dim_usr", "d", "user_id") + "." + d.source_column;
    plan_error(d.canonical_name, "dimension '" + d.canonical_name + "' lives on " + d.source_table +
                                     ", which cannot be joined to " + fact_);
  }

  std::string metric_expr(const MetricDef& m) {
    switch (m.aggregation.kind) {
      case Aggregation::Kind::sum: return "SUM(a." + m.source_column + ")";
      case Aggregation::Kind::count_distinct:
        return "COUNT(DISTINCT a." + m.source_column + ")";
      case Aggregation::Kind::ratio: {
        const MetricDef* num = catalog_.find_metric(m.aggregation.numerator);
        const MetricDef* den = catalog_.find_metric(m.aggregation.denominator);
        return metric_expr(*num) + " * 1.0 / NULLIF(" + metric_expr(*den) + ", 0)";
      }
    }
    return {};
  }

  std::string filter_sql(const FilterNode& node) {
    if (node.is_leaf()) {
      const auto& c = *node.condition;
      const std::string col = column(*catalog_.find_dimension(c.column));
      auto lit = [&](std::size_t i) { return sql_literal(c.params.at(i)); };
      switch (c.rule) {
        case QueryRule::in: {
          std::string out = col + " IN (";
          for (std::size_t i = 0; i < c.params.size(); ++i) out += (i ? ", " : "") + lit(i);
          return out + ")";
        }
        case QueryRule::eq: return col + " = " + lit(0);
        case QueryRule::neq: return col + " <> " + lit(0);
        case QueryRule::gt: return col + " > " + lit(0);
        case QueryRule::lt: return col + " < " + lit(0);
        case QueryRule::between: return col + " BETWEEN " + lit(0) + " AND " + lit(1);
      }
    }
    std::string out = "(";
    const char* glue = node.relation == Relation::and_ ? " AND " : " OR ";
    for (std::size_t i = 0; i < node.children.size(); ++i) {
      if (i) out += glue;
      out += filter_sql(node.children[i]);
    }
    return out + ")";
  }

  // Builds SELECT ... GROUP BY for `window`; ordering and limit only when `final`.
  std::string build(const DateRange& window, bool final) {
    joins_.clear();
    std::vector<std::string> select;
    std::vector<std::string> group;
    for (const auto& name : q_.dimension) {
      const std::string expr = column(*catalog_.find_dimension(name));
      select.push_back(expr + " AS " + name);
      group.push_back(expr);
    }
    for (const auto& name : q_.metric) {
      select.push_back(metric_expr(*catalog_.find_metric(name)) + " AS " + name);
    }
    std::string where = "a.ds BETWEEN '" + window.from + "' AND '" + window.to + "'";
    if (q_.filter) where += " AND " + filter_sql(*q_.filter);

    std::string sql = "SELECT\n    ";
    for (std::size_t i = 0; i < select.size(); ++i) sql += (i ? ",\n    " : "") + select[i];
    sql += "\nFROM " + from_table() + " a";
    for (const auto& j : joins_) sql += "\n" + j.second;
    sql += "\nWHERE " + where;
    if (!group.empty()) {
      sql += "\nGROUP BY ";
      for (std::size_t i = 0; i < group.size(); ++i) sql += (i ? ", " : "") + group[i];
    }
    if (final) {
      sql += "\nORDER BY " + order_clause();
      sql += "\nLIMIT " + std::to_string(q_.limit);
    }
    return sql + ";";
  }

  std::vector<std::string> tables() const {
    std::vector<std::string> out = {from_table()};
    for (const auto& j : joins_) out.push_back(j.first);
    return out;
  }

  void set_ads_table(std::string t) { ads_table_ = std::move(t); }

 private:
  std::string from_table() const { return route_ == Route::ADS ? ads_table_ : fact_; }

  std::string join(const std::string& table, const std::string& alias, const std::string& key) {
    for (const auto& j : joins_) {
      if (j.first == table) return alias;
    }
    joins_.emplace_back(table,
                        "JOIN " + table + " " + alias + " ON a." + key + " = " + alias + "." + key);
    return alias;
  }

  std::string order_clause() const {
    std::vector<std::string> terms;
    std::vector<std::string> used;
    auto add = [&](const std::string& col, OrderType t) {
      if (std::find(used.begin(), used.end(), col) != used.end()) return;
      used.push_back(col);
      terms.push_back(col + (t == OrderType::asc ? " ASC" : " DESC"));
    };
    if (q_.order_by.empty()) {
      if (!q_.dimension.empty()) add(q_.dimension.front(), OrderType::asc);
      add(q_.metric.front(), OrderType::desc);
    } else {
      for (const auto& o : q_.order_by) add(o.column, o.type);
    }
    // Remaining dimensions make the order total, so every route returns rows alike.
    for (const auto& d : q_.dimension) add(d, OrderType::asc);
    std::string out;
    for (std::size_t i = 0; i < terms.size(); ++i) out += (i ? ", " : "") + terms[i];
    return out;
  }

  const DslQuery& q_;
  const Catalog& catalog_;
  Route route_;
  std::string fact_;
  std::string ads_table_;
  std::vector<std::pair<std::string, std::string>> joins_;
};

}  // namespace

bool ads_eligible(const DslQuery& calibrated, const Catalog& catalog) {
  return ads_table_for(calibrated, catalog) != nullptr;
}

QueryPlan plan(const DslQuery& q, const Catalog& catalog, RoutePreference preference) {
  if (q.metric.empty()) plan_error("metric", "no metrics");
  std::string fact;
  for (const auto& name : q.metric) {
    const MetricDef* m = catalog.find_metric(name);
    if (m == nullptr) plan_error(name, "unknown metric '" + name + "' reached the planner");
    if (m->filler) plan_error(name, "metric '" + name + "' has no physical mounting");
    for (const auto* part : base_parts(*m, catalog)) {
      if (part->filler || part->source_table.empty()) {
        plan_error(name, "metric '" + name + "' has no physical mounting");
      }
      if (fact.empty()) fact = part->source_table;
      if (part->source_table != fact) {
        plan_error(name, "metrics span " + fact + " and " + part->source_table +
                             "; cross-fact queries are not supported");
      }
    }
  }
  for (const auto* d : breakdown_columns(q, catalog)) {
    if ((d->source_table == kTradeFact || d->source_table == kLogFact) && d->source_table != fact) {
      plan_error(d->canonical_name, "dimension '" + d->canonical_name + "' is not available on " +
                                        fact);
    }
  }

  const char* ads = ads_table_for(q, catalog);
  Route route = Route::DWS;
  if (preference == RoutePreference::force_ads) {
    if (ads == nullptr) plan_error("route", "query is not eligible for an ADS table");
    route = Route::ADS;
  } else if (preference == RoutePreference::automatic && ads != nullptr) {
    route = Route::ADS;
  }

  SqlBuilder builder(q, catalog, route, fact);
  if (route == Route::ADS) builder.set_ads_table(ads);

  QueryPlan p;
  p.route = route;
  p.query = q;
  p.dimension_columns = q.dimension;
  p.metric_columns = q.metric;
  for (Compare kind : q.compare) {
    const int shift = kind == Compare::wow ? -7 : -365;
    DateRange window{format_stamp(shift_days(*parse_stamp(q.ds.from), shift)),
                     format_stamp(shift_days(*parse_stamp(q.ds.to), shift))};
    p.comparisons.push_back({kind, window, builder.build(window, false)});
  }
  p.sql_text = builder.build(q.ds, true);
  p.tables = builder.tables();

  DslQuery keyed = q;
  keyed.save_data_path.reset();
  p.cache_key = fnv1a_hex(serialize_query(keyed) + "|" + to_string(route) + "|" + p.tables.front());
  return p;
}

}  // namespace aida
