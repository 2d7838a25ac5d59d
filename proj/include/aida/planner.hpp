#pragma once

#include <string>
#include <vector>

#include "aida/catalog.hpp"
#include "aida/dsl.hpp"

namespace aida {

enum class Route { ADS, DWS };
enum class RoutePreference { automatic, force_ads, force_dws };

const char* to_string(Route route);

inline constexpr const char* kTradeFact = "dws_trd";
inline constexpr const char* kLogFact = "dws_log";

/// Columns carried by an ADS table besides the pre-aggregated metric columns.
const std::vector<std::string>& ads_key_columns(std::string_view ads_table);

struct QueryPlan {
  struct Comparison {
    Compare kind;
    DateRange window;
    std::string sql_text;  // grouped like the main query, no ORDER BY / LIMIT
  };

  Route route = Route::DWS;
  std::vector<std::string> tables;
  std::string sql_text;
  std::string cache_key;  // 16 hex digits

  DslQuery query;  // calibrated request the plan was built from
  std::vector<std::string> dimension_columns;
  std::vector<std::string> metric_columns;
  std::vector<Comparison> comparisons;
};

/// Routes and compiles a calibrated query. Throws Error(plan) when the query cannot be
/// mounted on physical tables (filler metrics, metrics spanning fact tables, forced
/// ADS on an ineligible query).
QueryPlan plan(const DslQuery& calibrated, const Catalog& catalog,
               RoutePreference preference = RoutePreference::automatic);

/// True when every metric and breakdown column can be served from an ADS table.
bool ads_eligible(const DslQuery& calibrated, const Catalog& catalog);

std::string sql_literal(const Scalar& value);
std::string format_double(double value);
std::string fnv1a_hex(std::string_view text);

}  // namespace aida
