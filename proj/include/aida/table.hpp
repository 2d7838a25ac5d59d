#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace aida {

using Cell = std::variant<std::monostate, std::int64_t, double, std::string>;

struct ResultTable {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  std::size_t column_index(const std::string& name) const;  // npos if absent
  friend bool operator==(const ResultTable&, const ResultTable&) = default;
};

nlohmann::ordered_json to_json(const Cell& cell);
std::string format_cell(const Cell& cell);
std::optional<double> as_number(const Cell& cell);

std::string csv_escape(std::string_view field);
/// Header row of column names, then one line per row; reals use the shortest
/// round-trip representation.
std::string to_csv(const ResultTable& table);

}  // namespace aida
