#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "aida/error.hpp"

namespace aida {

enum class Theme { Traffic, Transaction, Interaction, Marketing, Merchant };
enum class Grain { shop, brand, district, city };
enum class GrainClass { temporal, entity, attribute };
enum class NameKind { metric, dimension, filter_column };

inline constexpr Theme kAllThemes[] = {Theme::Traffic, Theme::Transaction, Theme::Interaction,
                                      Theme::Marketing, Theme::Merchant};

const char* to_string(Theme theme);
const char* to_string(Grain grain);
const char* to_string(GrainClass grain_class);
const char* to_string(NameKind kind);
std::optional<Theme> theme_from_string(std::string_view text);
std::optional<Grain> grain_from_string(std::string_view text);

struct Aggregation {
  enum class Kind { sum, count_distinct, ratio };
  Kind kind = Kind::sum;
  std::string numerator;    // ratio only
  std::string denominator;  // ratio only

  static Aggregation sum() { return {Kind::sum, {}, {}}; }
  static Aggregation count_distinct() { return {Kind::count_distinct, {}, {}}; }
  static Aggregation ratio(std::string num, std::string den) {
    return {Kind::ratio, std::move(num), std::move(den)};
  }
  friend bool operator==(const Aggregation&, const Aggregation&) = default;
};

struct MetricDef {
  std::string canonical_name;
  std::string display_name;
  Theme theme = Theme::Transaction;
  Aggregation aggregation;
  std::string source_table;   // fact table the column lives on; empty for ratios
  std::string source_column;  // empty for ratios
  std::set<Grain> grains;
  bool ads_available = false;
  bool filler = false;  // name-only stress entry, never routable
};

struct DimensionDef {
  std::string canonical_name;
  std::string display_name;
  std::optional<std::vector<std::string>> enum_values;
  std::string source_table;
  std::string source_column;
  GrainClass grain_class = GrainClass::attribute;
  bool filler = false;
};

struct AliasRule {
  std::string alias;
  std::string canonical_name;
  NameKind kind = NameKind::metric;
};

struct CompatibilityMatrix {
  std::set<std::pair<std::string, std::string>> incompatible_pairs;  // (metric, dimension)
};

struct Resolution {
  enum class Status { exact, corrected, unknown };
  std::string canonical_name;  // empty when unknown
  Status status = Status::unknown;
  std::string note;  // human-readable calibration notice for corrected names

  friend bool operator==(const Resolution&, const Resolution&) = default;
};

const char* to_string(Resolution::Status status);

struct Violation {
  enum class Kind { unknown_metric, unknown_dimension, incompatible_pair };
  Kind kind = Kind::unknown_metric;
  std::string detail;

  friend bool operator==(const Violation&, const Violation&) = default;
};

const char* to_string(Violation::Kind kind);
std::optional<Violation::Kind> violation_kind_from_string(std::string_view text);

/// Immutable semantic layer: metrics, dimensions, alias rules and the declared
/// metric/dimension incompatibilities. All lookups are const and thread-safe.
class Catalog {
 public:
  /// Validates every invariant; throws Error(duplicate_name | dangling_reference |
  /// invalid_value) on the first violation found.
  Catalog(std::vector<MetricDef> metrics, std::vector<DimensionDef> dimensions,
          std::vector<AliasRule> aliases, CompatibilityMatrix compatibility);

  const std::vector<MetricDef>& metrics() const { return metrics_; }
  const std::vector<DimensionDef>& dimensions() const { return dimensions_; }
  const std::vector<AliasRule>& aliases() const { return aliases_; }
  const CompatibilityMatrix& compatibility() const { return compatibility_; }

  const MetricDef* find_metric(std::string_view canonical_name) const;
  const DimensionDef* find_dimension(std::string_view canonical_name) const;

  Resolution resolve_name(std::string_view token, NameKind kind) const;

  /// Accepts canonical names or raw tokens; raw tokens are resolved first.
  std::vector<Violation> check_compatibility(const std::vector<std::string>& metrics,
                                             const std::vector<std::string>& dimensions) const;

  bool compatible(std::string_view metric, std::string_view dimension) const;

  /// Returns a copy padded with name-only entries up to the given totals, for
  /// boundary-violation stress tests. Filler metrics cannot be planned.
  Catalog with_filler(std::size_t metric_total, std::size_t dimension_total) const;

 private:
  std::vector<MetricDef> metrics_;
  std::vector<DimensionDef> dimensions_;
  std::vector<AliasRule> aliases_;
  CompatibilityMatrix compatibility_;
  std::map<std::string, std::size_t, std::less<>> metric_index_;
  std::map<std::string, std::size_t, std::less<>> dimension_index_;
  // lower-cased token -> canonical name, per lookup namespace
  std::map<std::string, std::string, std::less<>> metric_folded_;
  std::map<std::string, std::string, std::less<>> dimension_folded_;
  std::map<std::string, std::string, std::less<>> metric_alias_;
  std::map<std::string, std::string, std::less<>> dimension_alias_;
  std::map<std::string, std::string, std::less<>> filter_alias_;
};

Catalog parse_catalog(std::string_view text, const std::string& origin = "<memory>");
Catalog load_catalog(const std::filesystem::path& path);
std::string serialize_catalog(const Catalog& catalog);

/// Path of the catalog shipped with the project.
std::filesystem::path default_catalog_path();

std::string lower(std::string_view text);

}  // namespace aida
