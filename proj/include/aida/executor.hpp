#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "aida/catalog.hpp"
#include "aida/dsl.hpp"
#include "aida/planner.hpp"
#include "aida/table.hpp"
#include "aida/warehouse.hpp"

namespace aida {

enum class ExecStatus { Success, Error, Timeout };
const char* to_string(ExecStatus status);

inline constexpr std::chrono::milliseconds kDefaultQueryBudget{60000};
inline constexpr std::size_t kPreviewRows = 10;

struct ExecutionResults {
  std::optional<std::string> data_path;
  std::vector<ordered_json> preview;
  std::int64_t row_count = 0;
};

struct FeedbackPackage {
  CalibrationReport calibration_report;
  ExecutionResults execution_results;
  ExecStatus status = ExecStatus::Success;
  std::string message;  // set on Error / Timeout

  // Diagnostics, not part of the wire form.
  std::optional<Route> route;
  bool from_cache = false;
  bool schema_error = false;  // request did not parse
};

ordered_json to_json(const FeedbackPackage& package);

struct EngineOptions {
  std::chrono::milliseconds budget = kDefaultQueryBudget;
  /// Root that relative save_data_path values are written under.
  std::filesystem::path workspace = ".";
  /// When set, queries without save_data_path are exported here as <cache_key>.csv.
  std::optional<std::filesystem::path> default_export_dir;
  RoutePreference route = RoutePreference::automatic;
};

/// Runs Dsl2data requests against a warehouse snapshot. Safe for concurrent callers;
/// results are cached per (warehouse fingerprint, cache_key).
class QueryEngine {
 public:
  QueryEngine(const Catalog& catalog, const Warehouse& warehouse, EngineOptions options = {});

  /// Full pipeline: parse, calibrate, plan, execute. Never throws on bad requests.
  FeedbackPackage run(std::string_view payload);
  FeedbackPackage run(const DslQuery& query);

  /// Executes a compiled plan; result rows carry compare columns when requested.
  FeedbackPackage execute(const QueryPlan& plan, std::chrono::milliseconds budget);

  /// Runs the plan's SQL (plus comparisons) and returns the full result table.
  /// Throws Error(io) on store failure; returns nullopt on timeout.
  std::optional<ResultTable> fetch(const QueryPlan& plan, std::chrono::milliseconds budget);

  const EngineOptions& options() const { return options_; }
  const Catalog& catalog() const { return catalog_; }
  const Warehouse& warehouse() const { return warehouse_; }

  std::size_t cache_hits() const;
  void clear_cache();

 private:
  const Catalog& catalog_;
  const Warehouse& warehouse_;
  EngineOptions options_;
  mutable std::mutex mutex_;  // guards the cache and the connection
  std::map<std::pair<std::string, std::string>, ResultTable> cache_;
  std::size_t hits_ = 0;
};

/// Appends `<metric>_<kind>` and `<metric>_<kind>_pct` columns for each comparison.
void append_comparison(ResultTable& current, const ResultTable& prior, Compare kind,
                       const std::vector<std::string>& dimensions,
                       const std::vector<std::string>& metrics);

}  // namespace aida
