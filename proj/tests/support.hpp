#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "aida/catalog.hpp"
#include "aida/table.hpp"
#include "aida/warehouse.hpp"

namespace testing {

const aida::Catalog& catalog();

/// Eight shops over four weeks with a gmv_drop on S001 in the final week.
aida::WarehouseConfig small_config(bool with_scenario = true);
const aida::GeneratedWarehouse& small_warehouse();

inline constexpr const char* kWindowFrom = "20251022";
inline constexpr const char* kWindowTo = "20251028";

/// Fresh, empty directory under the system temp dir.
std::filesystem::path scratch(const std::string& name);

std::string read_text(const std::filesystem::path& path);

/// The small warehouse saved once to a scratch SQLite file.
const std::filesystem::path& small_warehouse_file();

/// Runs the CLI binary with `args`; stdout goes to `output` and stderr to `output` + ".err". Returns the exit status.
int run_cli(const std::string& args, const std::filesystem::path& output);

/// Runs SQL directly on a warehouse connection, bypassing the engine.
std::vector<std::vector<aida::Cell>> query(const aida::Warehouse& w, const std::string& sql);
double number(const aida::Cell& cell);

}  // namespace testing
