#pragma once

#include <sqlite3.h>

#include <string>
#include <string_view>

#include "aida/error.hpp"
#include "aida/table.hpp"

namespace aida::sql {

class Statement {
 public:
  Statement(sqlite3* db, std::string_view text) : db_(db) {
    if (sqlite3_prepare_v2(db, text.data(), static_cast<int>(text.size()), &stmt_, nullptr) !=
        SQLITE_OK) {
      throw Error(ErrorKind::io, "sqlite", std::string("prepare failed: ") + sqlite3_errmsg(db));
    }
  }
  Statement(const Statement&) = delete;
  Statement& operator=(const Statement&) = delete;
  ~Statement() { sqlite3_finalize(stmt_); }

  void bind(int i, std::string_view v) {
    sqlite3_bind_text(stmt_, i, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT);
  }
  void bind(int i, std::int64_t v) { sqlite3_bind_int64(stmt_, i, v); }
  void bind(int i, int v) { sqlite3_bind_int64(stmt_, i, v); }
  void bind(int i, double v) { sqlite3_bind_double(stmt_, i, v); }

  /// Returns SQLITE_ROW, SQLITE_DONE or the raw error code.
  int step() { return sqlite3_step(stmt_); }
  void reset() {
    sqlite3_reset(stmt_);
    sqlite3_clear_bindings(stmt_);
  }
  void run() {
    const int rc = step();
    if (rc != SQLITE_DONE && rc != SQLITE_ROW) {
      throw Error(ErrorKind::io, "sqlite", std::string("step failed: ") + sqlite3_errmsg(db_));
    }
    reset();
  }

  int columns() const { return sqlite3_column_count(stmt_); }
  std::string column_name(int i) const { return sqlite3_column_name(stmt_, i); }

  Cell cell(int i) const {
    switch (sqlite3_column_type(stmt_, i)) {
      case SQLITE_INTEGER: return static_cast<std::int64_t>(sqlite3_column_int64(stmt_, i));
      case SQLITE_FLOAT: return sqlite3_column_double(stmt_, i);
      case SQLITE_NULL: return std::monostate{};
      default: {
        const auto* text = reinterpret_cast<const char*>(sqlite3_column_text(stmt_, i));
        return std::string(text ? text : "");
      }
    }
  }

  std::string text(int i) const {
    const auto* t = reinterpret_cast<const char*>(sqlite3_column_text(stmt_, i));
    return t ? t : "";
  }

  sqlite3_stmt* raw() const { return stmt_; }

 private:
  sqlite3* db_;
  sqlite3_stmt* stmt_ = nullptr;
};

inline void exec(sqlite3* db, const std::string& text) {
  char* err = nullptr;
  if (sqlite3_exec(db, text.c_str(), nullptr, nullptr, &err) != SQLITE_OK) {
    std::string message = err ? err : "unknown error";
    sqlite3_free(err);
    throw Error(ErrorKind::io, "sqlite", "exec failed: " + message);
  }
}

/// Runs a query to completion. Returns the sqlite result code of the last step
/// (SQLITE_DONE on success) so callers can tell interrupts from failures.
inline int query_table(sqlite3* db, const std::string& text, ResultTable& out) {
  Statement stmt(db, text);
  out.columns.clear();
  out.rows.clear();
  for (int i = 0; i < stmt.columns(); ++i) out.columns.push_back(stmt.column_name(i));
  int rc = SQLITE_OK;
  while ((rc = stmt.step()) == SQLITE_ROW) {
    std::vector<Cell> row;
    row.reserve(out.columns.size());
    for (int i = 0; i < stmt.columns(); ++i) row.push_back(stmt.cell(i));
    out.rows.push_back(std::move(row));
  }
  return rc;
}

}  // namespace aida::sql
