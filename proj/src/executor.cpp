#include "aida/executor.hpp"

#include <fstream>

#include "sqlite_util.hpp"

namespace aida {

const char* to_string(ExecStatus status) {
  switch (status) {
    case ExecStatus::Success: return "Success";
    case ExecStatus::Error: return "Error";
    case ExecStatus::Timeout: return "Timeout";
  }
  return "?";
}

ordered_json to_json(const FeedbackPackage& p) {
  ordered_json results = ordered_json::object();
  if (p.execution_results.data_path) results["data_path"] = *p.execution_results.data_path;
  results["preview"] = p.execution_results.preview;
  results["row_count"] = p.execution_results.row_count;
  ordered_json out = {{"calibration_report", to_json(p.calibration_report)},
                      {"execution_results", std::move(results)},
                      {"status", to_string(p.status)}};
  if (!p.message.empty()) out["message"] = p.message;
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

struct Deadline {
  Clock::time_point at;
  bool hit = false;
};

int progress_check(void* arg) {
  auto* d = static_cast<Deadline*>(arg);
  if (Clock::now() >= d->at) {
    d->hit = true;
    return 1;
  }
  return 0;
}

std::string row_key(const std::vector<Cell>& row, const std::vector<std::size_t>& idx) {
  std::string key;
  for (std::size_t i : idx) {
    key += format_cell(row[i]);
    key += '\x1f';
  }
  return key;
}

}  // namespace

void append_comparison(ResultTable& current, const ResultTable& prior, Compare kind,
                       const std::vector<std::string>& dimensions,
                       const std::vector<std::string>& metrics) {
  std::vector<std::size_t> cur_dims;
  std::vector<std::size_t> prior_dims;
  for (const auto& d : dimensions) {
    cur_dims.push_back(current.column_index(d));
    prior_dims.push_back(prior.column_index(d));
  }
  std::map<std::string, const std::vector<Cell>*> lookup;
  for (const auto& row : prior.rows) lookup[row_key(row, prior_dims)] = &row;

  const std::string suffix = std::string("_") + to_string(kind);
  for (const auto& m : metrics) {
    const std::size_t ci = current.column_index(m);
    const std::size_t pi = prior.column_index(m);
    current.columns.push_back(m + suffix);
    current.columns.push_back(m + suffix + "_pct");
    for (auto& row : current.rows) {
      const auto it = lookup.find(row_key(row, cur_dims));
      const std::optional<double> now = as_number(row[ci]);
      std::optional<double> before;
      if (it != lookup.end()) before = as_number((*it->second)[pi]);
      Cell delta;
      Cell pct;
      if (now) {
        const double base = before.value_or(0.0);
        delta = *now - base;
        if (before && *before != 0.0) pct = (*now - *before) / *before * 100.0;
      }
      row.push_back(delta);
      row.push_back(pct);
    }
  }
}

QueryEngine::QueryEngine(const Catalog& catalog, const Warehouse& warehouse, EngineOptions options)
    : catalog_(catalog), warehouse_(warehouse), options_(std::move(options)) {}

std::size_t QueryEngine::cache_hits() const {
  std::lock_guard lock(mutex_);
  return hits_;
}

void QueryEngine::clear_cache() {
  std::lock_guard lock(mutex_);
  cache_.clear();
}

std::optional<ResultTable> QueryEngine::fetch(const QueryPlan& plan,
                                              std::chrono::milliseconds budget) {
  std::lock_guard lock(mutex_);
  const auto key = std::make_pair(warehouse_.fingerprint(), plan.cache_key);
  if (auto it = cache_.find(key); it != cache_.end()) {
    ++hits_;
    return it->second;
  }
  sqlite3* db = warehouse_.handle();
  const auto start = Clock::now();
  Deadline deadline{start + budget};
  sqlite3_progress_handler(db, 1000, progress_check, &deadline);
  struct Reset {
    sqlite3* db;
    ~Reset() { sqlite3_progress_handler(db, 0, nullptr, nullptr); }
  } reset{db};

  auto run = [&](const std::string& sql, ResultTable& out) -> bool {
    const int rc = sql::query_table(db, sql, out);
    if (deadline.hit || rc == SQLITE_INTERRUPT) return false;
    if (rc != SQLITE_DONE) {
      throw Error(ErrorKind::io, "sqlite", std::string("query failed: ") + sqlite3_errmsg(db));
    }
    return true;
  };

  ResultTable table;
  if (!run(plan.sql_text, table)) return std::nullopt;
  for (const auto& cmp : plan.comparisons) {
    ResultTable prior;
    if (!run(cmp.sql_text, prior)) return std::nullopt;
    append_comparison(table, prior, cmp.kind, plan.dimension_columns, plan.metric_columns);
  }
  if (Clock::now() - start > budget) return std::nullopt;
  cache_.emplace(key, table);
  return table;
}

FeedbackPackage QueryEngine::execute(const QueryPlan& plan, std::chrono::milliseconds budget) {
  FeedbackPackage pkg;
  pkg.route = plan.route;
  pkg.calibration_report.corrected_dsl = plan.query;
  const std::size_t hits_before = cache_hits();
  std::optional<ResultTable> table;
  try {
    table = fetch(plan, budget);
  } catch (const Error& e) {
    pkg.status = ExecStatus::Error;
    pkg.message = e.what();
    return pkg;
  }
  if (!table) {
    pkg.status = ExecStatus::Timeout;
    pkg.message = "query exceeded the " + std::to_string(budget.count()) + " ms budget";
    return pkg;
  }
  pkg.from_cache = cache_hits() != hits_before;

  auto& res = pkg.execution_results;
  res.row_count = static_cast<std::int64_t>(table->rows.size());
  const std::size_t preview =
      std::min<std::size_t>({table->rows.size(), kPreviewRows, static_cast<std::size_t>(plan.query.limit)});
  for (std::size_t r = 0; r < preview; ++r) {
    ordered_json row = ordered_json::object();
    for (std::size_t c = 0; c < table->columns.size(); ++c) {
      row[table->columns[c]] = to_json(table->rows[r][c]);
    }
    res.preview.push_back(std::move(row));
  }

  std::optional<std::filesystem::path> target;
  if (plan.query.save_data_path) {
    target = options_.workspace / *plan.query.save_data_path;
    res.data_path = *plan.query.save_data_path;
  } else if (options_.default_export_dir) {
    target = *options_.default_export_dir / (plan.cache_key + ".csv");
    res.data_path = target->string();
  }
  if (target) {
    std::error_code ec;
    if (target->has_parent_path()) std::filesystem::create_directories(target->parent_path(), ec);
    std::ofstream out(*target, std::ios::binary);
    out << to_csv(*table);
    if (!out) {
      pkg.status = ExecStatus::Error;
      pkg.message = "cannot write " + target->string();
    }
  }
  return pkg;
}

FeedbackPackage QueryEngine::run(std::string_view payload) {
  DslQuery query;
  try {
    query = parse_query(payload);
  } catch (const Error& e) {
    FeedbackPackage pkg;
    pkg.status = ExecStatus::Error;
    pkg.schema_error = true;
    pkg.message = e.what();
    return pkg;
  }
  return run(query);
}

FeedbackPackage QueryEngine::run(const DslQuery& query) {
  CalibrationReport report = calibrate(query, catalog_);
  if (!report.executable()) {
    FeedbackPackage pkg;
    pkg.calibration_report = std::move(report);
    pkg.status = ExecStatus::Error;
    pkg.message = "query rejected: " + std::to_string(pkg.calibration_report.violations.size()) +
                  " boundary violation(s)";
    return pkg;
  }
  QueryPlan p;
  try {
    p = plan(report.corrected_dsl, catalog_, options_.route);
  } catch (const Error& e) {
    FeedbackPackage pkg;
    pkg.calibration_report = std::move(report);
    pkg.status = ExecStatus::Error;
    pkg.message = e.what();
    return pkg;
  }
  FeedbackPackage pkg = execute(p, options_.budget);
  pkg.calibration_report = std::move(report);
  return pkg;
}

}  // namespace aida
