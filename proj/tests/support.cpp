#include "support.hpp"

#include <fstream>
#include <sstream>
#include <cstdlib>
#include <sqlite3.h>
#include <sys/wait.h>
#include <stdexcept>
#include <unistd.h>

namespace testing {

const aida::Catalog& catalog() {
  static const aida::Catalog c = aida::load_catalog(aida::default_catalog_path());
  return c;
}

aida::WarehouseConfig small_config(bool with_scenario) {
  aida::WarehouseConfig c;
  c.seed = 7;
  c.n_shops = 8;
  c.n_users = 600;
  c.n_brands = 3;
  c.n_days = 28;
  c.start_ds = "20251001";
  if (with_scenario) {
    aida::Scenario s;
    s.scenario_id = "gmv_drop_small";
    s.effect = aida::Effect::gmv_drop;
    s.target = {aida::EntitySelector::Kind::shop, "S001"};
    s.window_from = kWindowFrom;
    s.window_to = kWindowTo;
    s.magnitude = 0.3;
    s.cause_label = "younger shoppers left";
    s.cause_dimension = "ageBand";
    c.scenarios.push_back(s);
  }
  return c;
}

const aida::GeneratedWarehouse& small_warehouse() {
  static const aida::GeneratedWarehouse w = aida::generate(small_config());
  return w;
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("aida_test_" + std::to_string(::getpid()) + "_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const std::filesystem::path& small_warehouse_file() {
  static const std::filesystem::path file = [] {
    const auto dir = scratch("small_warehouse_file");
    small_warehouse().store.save(dir / "small.db");
    return dir / "small.db";
  }();
  return file;
}

int run_cli(const std::string& args, const std::filesystem::path& output) {
  const std::string cmd = std::string("'") + AIDA_CLI_PATH + "' " + args + " > '" + output.string() + "' 2> '" +
                          output.string() + ".err'";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<std::vector<aida::Cell>> query(const aida::Warehouse& w, const std::string& sql) {
  sqlite3_stmt* st = nullptr;
  if (sqlite3_prepare_v2(w.handle(), sql.c_str(), -1, &st, nullptr) != SQLITE_OK) {
    throw std::runtime_error(std::string(sqlite3_errmsg(w.handle())) + " in " + sql);
  }
  std::vector<std::vector<aida::Cell>> rows;
  while (sqlite3_step(st) == SQLITE_ROW) {
    std::vector<aida::Cell> row;
    for (int i = 0; i < sqlite3_column_count(st); ++i) {
      switch (sqlite3_column_type(st, i)) {
        case SQLITE_INTEGER: row.emplace_back(static_cast<std::int64_t>(sqlite3_column_int64(st, i))); break;
        case SQLITE_FLOAT: row.emplace_back(sqlite3_column_double(st, i)); break;
        case SQLITE_NULL: row.emplace_back(std::monostate{}); break;
        default: row.emplace_back(std::string(reinterpret_cast<const char*>(sqlite3_column_text(st, i))));
      }
    }
    rows.push_back(std::move(row));
  }
  sqlite3_finalize(st);
  return rows;
}

double number(const aida::Cell& cell) {
  const auto v = aida::as_number(cell);
  if (!v) throw std::runtime_error("not a number: " + aida::format_cell(cell));
  return *v;
}

}  // namespace testing
