#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "aida/catalog.hpp"

namespace aida {

using ordered_json = nlohmann::ordered_json;

/// Filter parameter: string, integer or real literal.
using Scalar = std::variant<std::string, std::int64_t, double>;

enum class Relation { and_, or_ };
enum class QueryRule { in, eq, neq, gt, lt, between };
enum class OrderType { asc, desc };
enum class Compare { wow, yoy };

const char* to_string(Relation r);
const char* to_string(QueryRule r);
const char* to_string(OrderType t);
const char* to_string(Compare c);

struct FilterCondition {
  std::string column;  // columnEName
  QueryRule rule = QueryRule::eq;
  std::vector<Scalar> params;

  friend bool operator==(const FilterCondition&, const FilterCondition&) = default;
};

/// Either a leaf condition or a relation over child nodes. The top-level filter of a
/// request is always a group.
struct FilterNode {
  Relation relation = Relation::and_;
  std::vector<FilterNode> children;
  std::optional<FilterCondition> condition;

  bool is_leaf() const { return condition.has_value(); }
  static FilterNode leaf(FilterCondition c) {
    FilterNode n;
    n.condition = std::move(c);
    return n;
  }
  static FilterNode group(Relation r, std::vector<FilterNode> children) {
    FilterNode n;
    n.relation = r;
    n.children = std::move(children);
    return n;
  }

  friend bool operator==(const FilterNode&, const FilterNode&) = default;
};

struct OrderSpec {
  std::string column;  // columnEName
  OrderType type = OrderType::desc;

  friend bool operator==(const OrderSpec&, const OrderSpec&) = default;
};

struct DateRange {
  std::string from;  // YYYYMMDD, inclusive
  std::string to;

  friend bool operator==(const DateRange&, const DateRange&) = default;
};

inline constexpr std::int64_t kDefaultLimit = 100;

/// One Dsl2data request.
struct DslQuery {
  std::vector<std::string> metric;
  DateRange ds;
  std::vector<std::string> dimension;
  std::optional<FilterNode> filter;
  std::vector<OrderSpec> order_by;
  std::int64_t limit = kDefaultLimit;
  std::vector<Compare> compare;
  std::optional<std::string> save_data_path;

  friend bool operator==(const DslQuery&, const DslQuery&) = default;
};

/// Parses the wire form. Throws Error(schema) whose subject names the offending
/// property; unknown top-level keys are rejected.
DslQuery parse_query(std::string_view payload);
DslQuery parse_query(const ordered_json& payload);

/// Relative, non-empty, no ".." segment.
bool safe_relative_path(std::string_view path);

ordered_json to_json(const DslQuery& query);
ordered_json to_json(const FilterNode& node);
std::string serialize_query(const DslQuery& query);

/// Column names referenced by a filter tree, in first-seen order.
std::vector<std::string> filter_columns(const FilterNode& node);

struct CalibrationReport {
  DslQuery corrected_dsl;
  std::vector<std::string> notices;
  std::vector<Violation> violations;

  bool executable() const { return violations.empty(); }
};

/// Resolves every metric, dimension, filter column and order column against the
/// semantic layer. Violations are data; the query is executable iff there are none.
CalibrationReport calibrate(const DslQuery& query, const Catalog& catalog);

ordered_json to_json(const CalibrationReport& report);
ordered_json to_json(const Scalar& scalar);

}  // namespace aida
