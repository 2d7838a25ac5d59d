#include "aida/catalog.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace aida {

using nlohmann::json;

std::string lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

const char* to_string(Theme theme) {
  switch (theme) {
    case Theme::Traffic: return "Traffic";
    case Theme::Transaction: return "Transaction";
    case Theme::Interaction: return "Interaction";
    case Theme::Marketing: return "Marketing";
    case Theme::Merchant: return "Merchant";
  }
  return "?";
}

const char* to_string(Grain grain) {
  switch (grain) {
    case Grain::shop: return "shop";
    case Grain::brand: return "brand";
    case Grain::district: return "district";
    case Grain::city: return "city";
  }
  return "?";
}

const char* to_string(GrainClass grain_class) {
  switch (grain_class) {
    case GrainClass::temporal: return "temporal";
    case GrainClass::entity: return "entity";
    case GrainClass::attribute: return "attribute";
  }
  return "?";
}

const char* to_string(NameKind kind) {
  switch (kind) {
    case NameKind::metric: return "metric";
    case NameKind::dimension: return "dimension";
    case NameKind::filter_column: return "filter_column";
  }
  return "?";
}

const char* to_string(Resolution::Status status) {
  switch (status) {
    case Resolution::Status::exact: return "exact";
    case Resolution::Status::corrected: return "corrected";
    case Resolution::Status::unknown: return "unknown";
  }
  return "?";
}

const char* to_string(Violation::Kind kind) {
  switch (kind) {
    case Violation::Kind::unknown_metric: return "unknown_metric";
    case Violation::Kind::unknown_dimension: return "unknown_dimension";
    case Violation::Kind::incompatible_pair: return "incompatible_pair";
  }
  return "?";
}

std::optional<Violation::Kind> violation_kind_from_string(std::string_view text) {
  if (text == "unknown_metric") return Violation::Kind::unknown_metric;
  if (text == "unknown_dimension") return Violation::Kind::unknown_dimension;
  if (text == "incompatible_pair") return Violation::Kind::incompatible_pair;
  return std::nullopt;
}

std::optional<Theme> theme_from_string(std::string_view text) {
  for (Theme t : kAllThemes) {
    if (text == to_string(t)) return t;
  }
  return std::nullopt;
}

std::optional<Grain> grain_from_string(std::string_view text) {
  for (Grain g : {Grain::shop, Grain::brand, Grain::district, Grain::city}) {
    if (text == to_string(g)) return g;
  }
  return std::nullopt;
}

namespace {

std::optional<GrainClass> grain_class_from_string(std::string_view text) {
  for (GrainClass g : {GrainClass::temporal, GrainClass::entity, GrainClass::attribute}) {
    if (text == to_string(g)) return g;
  }
  return std::nullopt;
}

std::optional<NameKind> name_kind_from_string(std::string_view text) {
  for (NameKind k : {NameKind::metric, NameKind::dimension, NameKind::filter_column}) {
    if (text == to_string(k)) return k;
  }
  return std::nullopt;
}

[[noreturn]] void invalid(const std::string& subject, const std::string& message) {
  throw Error(ErrorKind::invalid_value, subject, message);
}

}  // namespace

Catalog::Catalog(std::vector<MetricDef> metrics, std::vector<DimensionDef> dimensions,
                 std::vector<AliasRule> aliases, CompatibilityMatrix compatibility)
    : metrics_(std::move(metrics)),
      dimensions_(std::move(dimensions)),
      aliases_(std::move(aliases)),
      compatibility_(std::move(compatibility)) {
  for (std::size_t i = 0; i < metrics_.size(); ++i) {
    const auto& m = metrics_[i];
    if (m.canonical_name.empty()) invalid("metric", "metric with empty canonical_name");
    if (!metric_index_.emplace(m.canonical_name, i).second) {
      throw Error(ErrorKind::duplicate_name, m.canonical_name,
                  "duplicate metric canonical_name '" + m.canonical_name + "'");
    }
    metric_folded_.emplace(lower(m.canonical_name), m.canonical_name);
  }
  for (std::size_t i = 0; i < dimensions_.size(); ++i) {
    const auto& d = dimensions_[i];
    if (d.canonical_name.empty()) invalid("dimension", "dimension with empty canonical_name");
    if (metric_index_.count(d.canonical_name) != 0 ||
        !dimension_index_.emplace(d.canonical_name, i).second) {
      throw Error(ErrorKind::duplicate_name, d.canonical_name,
                  "duplicate dimension canonical_name '" + d.canonical_name + "'");
    }
    dimension_folded_.emplace(lower(d.canonical_name), d.canonical_name);
    if (d.enum_values) {
      if (d.enum_values->empty()) invalid(d.canonical_name, "enum_values present but empty");
      std::set<std::string> seen(d.enum_values->begin(), d.enum_values->end());
      if (seen.size() != d.enum_values->size()) {
        invalid(d.canonical_name, "enum_values contain duplicates");
      }
    }
    if (!d.filler && (d.source_table.empty() || d.source_column.empty())) {
      invalid(d.canonical_name, "dimension needs source_table and source_column");
    }
  }
  for (const auto& m : metrics_) {
    if (m.grains.empty()) invalid(m.canonical_name, "metric grains must be non-empty");
    if (m.aggregation.kind == Aggregation::Kind::ratio) {
      for (const auto* part : {&m.aggregation.numerator, &m.aggregation.denominator}) {
        const MetricDef* ref = find_metric(*part);
        if (ref == nullptr) {
          throw Error(ErrorKind::dangling_reference, m.canonical_name,
                      "ratio metric '" + m.canonical_name + "' references unknown metric '" +
                          *part + "'");
        }
        if (ref->aggregation.kind == Aggregation::Kind::ratio) {
          invalid(m.canonical_name, "ratio metric must reference sum/count metrics");
        }
        if (ref->source_table != metrics_[metric_index_.at(m.aggregation.numerator)].source_table) {
          invalid(m.canonical_name, "ratio parts must live on the same fact table");
        }
      }
    } else if (!m.filler && (m.source_table.empty() || m.source_column.empty())) {
      invalid(m.canonical_name, "metric needs source_table and source_column");
    }
  }
  for (const auto& a : aliases_) {
    if (a.alias == a.canonical_name) invalid(a.alias, "alias equals its canonical name");
    const bool target_ok = a.kind == NameKind::metric ? find_metric(a.canonical_name) != nullptr
                                                      : find_dimension(a.canonical_name) != nullptr;
    if (!target_ok) {
      throw Error(ErrorKind::dangling_reference, a.alias,
                  "alias '" + a.alias + "' targets unknown " + to_string(a.kind) + " '" +
                      a.canonical_name + "'");
    }
    auto& table = a.kind == NameKind::metric      ? metric_alias_
                  : a.kind == NameKind::dimension ? dimension_alias_
                                                  : filter_alias_;
    if (!table.emplace(lower(a.alias), a.canonical_name).second) {
      throw Error(ErrorKind::duplicate_name, a.alias, "duplicate alias '" + a.alias + "'");
    }
  }
  for (const auto& [metric, dimension] : compatibility_.incompatible_pairs) {
    if (find_metric(metric) == nullptr || find_dimension(dimension) == nullptr) {
      throw Error(ErrorKind::dangling_reference, metric + "/" + dimension,
                  "incompatible pair (" + metric + ", " + dimension +
                      ") references an unknown entry");
    }
  }
}

const MetricDef* Catalog::find_metric(std::string_view canonical_name) const {
  auto it = metric_index_.find(canonical_name);
  return it == metric_index_.end() ? nullptr : &metrics_[it->second];
}

const DimensionDef* Catalog::find_dimension(std::string_view canonical_name) const {
  auto it = dimension_index_.find(canonical_name);
  return it == dimension_index_.end() ? nullptr : &dimensions_[it->second];
}

Resolution Catalog::resolve_name(std::string_view token, NameKind kind) const {
  const bool is_metric = kind == NameKind::metric;
  if (is_metric ? find_metric(token) != nullptr : find_dimension(token) != nullptr) {
    return {std::string(token), Resolution::Status::exact, {}};
  }
  const std::string folded = lower(token);
  auto corrected = [&](const std::string& canonical) {
    std::string role = "metric";
    if (!is_metric) {
      const auto* dim = find_dimension(canonical);
      role = kind == NameKind::filter_column
                 ? "filter column"
                 : std::string(to_string(dim->grain_class)) + " dimension";
    }
    return Resolution{canonical, Resolution::Status::corrected,
                      "Input '" + std::string(token) + "' aligned to '" + canonical + "' (" +
                          role + ")."};
  };
  const auto& folded_names = is_metric ? metric_folded_ : dimension_folded_;
  if (auto it = folded_names.find(folded); it != folded_names.end()) return corrected(it->second);

  const auto& primary = is_metric                         ? metric_alias_
                        : kind == NameKind::filter_column ? filter_alias_
                                                          : dimension_alias_;
  if (auto it = primary.find(folded); it != primary.end()) return corrected(it->second);
  if (kind == NameKind::filter_column) {
    if (auto it = dimension_alias_.find(folded); it != dimension_alias_.end()) {
      return corrected(it->second);
    }
  }
  return {{}, Resolution::Status::unknown, {}};
}

bool Catalog::compatible(std::string_view metric, std::string_view dimension) const {
  return compatibility_.incompatible_pairs.count({std::string(metric), std::string(dimension)}) ==
         0;
}

std::vector<Violation> Catalog::check_compatibility(
    const std::vector<std::string>& metrics, const std::vector<std::string>& dimensions) const {
  std::vector<Violation> out;
  std::vector<std::string> known_metrics;
  std::vector<std::string> known_dimensions;
  for (const auto& token : metrics) {
    auto r = resolve_name(token, NameKind::metric);
    if (r.status == Resolution::Status::unknown) {
      out.push_back({Violation::Kind::unknown_metric, "unknown metric '" + token + "'"});
    } else {
      known_metrics.push_back(r.canonical_name);
    }
  }
  for (const auto& token : dimensions) {
    auto r = resolve_name(token, NameKind::dimension);
    if (r.status == Resolution::Status::unknown) {
      out.push_back({Violation::Kind::unknown_dimension, "unknown dimension '" + token + "'"});
    } else {
      known_dimensions.push_back(r.canonical_name);
    }
  }
  for (const auto& m : known_metrics) {
    const MetricDef* def = find_metric(m);
    for (const auto& d : known_dimensions) {
      bool clash = !compatible(m, d);
      if (!clash && def->aggregation.kind == Aggregation::Kind::ratio) {
        clash = !compatible(def->aggregation.numerator, d) ||
                !compatible(def->aggregation.denominator, d);
      }
      if (clash) {
        out.push_back({Violation::Kind::incompatible_pair,
                       "metric '" + m + "' cannot be broken down by '" + d + "'"});
      }
    }
  }
  return out;
}

Catalog Catalog::with_filler(std::size_t metric_total, std::size_t dimension_total) const {
  auto metrics = metrics_;
  auto dimensions = dimensions_;
  std::size_t k = 0;
  while (metrics.size() < metric_total) {
    MetricDef m;
    m.canonical_name = "fillerMetric" + std::to_string(++k);
    m.display_name = "Filler metric " + std::to_string(k);
    m.theme = kAllThemes[k % std::size(kAllThemes)];
    m.grains = {Grain::shop};
    m.filler = true;
    metrics.push_back(std::move(m));
  }
  k = 0;
  while (dimensions.size() < dimension_total) {
    DimensionDef d;
    d.canonical_name = "fillerDimension" + std::to_string(++k);
    d.display_name = "Filler dimension " + std::to_string(k);
    d.filler = true;
    dimensions.push_back(std::move(d));
  }
  return Catalog(std::move(metrics), std::move(dimensions), aliases_, compatibility_);
}

namespace {

int line_of(std::string_view text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(byte), '\n'));
}

const json& require(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw Error(ErrorKind::parse, where, where + ": missing field '" + key + "'");
  }
  return *it;
}

std::string require_string(const json& obj, const char* key, const std::string& where) {
  const auto& v = require(obj, key, where);
  if (!v.is_string()) {
    throw Error(ErrorKind::parse, where, where + ": field '" + key + "' must be a string");
  }
  return v.get<std::string>();
}

MetricDef metric_from_json(const json& j) {
  MetricDef m;
  const std::string where = "metric " + (j.contains("canonical_name") && j["canonical_name"].is_string()
                                             ? j["canonical_name"].get<std::string>()
                                             : std::string("?"));
  m.canonical_name = require_string(j, "canonical_name", where);
  m.display_name = j.value("display_name", m.canonical_name);
  auto theme = theme_from_string(require_string(j, "theme", where));
  if (!theme) throw Error(ErrorKind::parse, where, where + ": unknown theme");
  m.theme = *theme;
  const auto& agg = require(j, "aggregation", where);
  if (agg.is_string() && agg == "sum") {
    m.aggregation = Aggregation::sum();
  } else if (agg.is_string() && agg == "count_distinct") {
    m.aggregation = Aggregation::count_distinct();
  } else if (agg.is_object() && agg.contains("ratio")) {
    const auto& r = agg["ratio"];
    m.aggregation = Aggregation::ratio(require_string(r, "numerator", where),
                                       require_string(r, "denominator", where));
  } else {
    throw Error(ErrorKind::parse, where, where + ": unsupported aggregation");
  }
  m.source_table = j.value("source_table", std::string());
  m.source_column = j.value("source_column", std::string());
  for (const auto& g : require(j, "grains", where)) {
    auto grain = g.is_string() ? grain_from_string(g.get<std::string>()) : std::nullopt;
    if (!grain) throw Error(ErrorKind::parse, where, where + ": unknown grain");
    m.grains.insert(*grain);
  }
  m.ads_available = j.value("ads_available", false);
  return m;
}

DimensionDef dimension_from_json(const json& j) {
  DimensionDef d;
  const std::string where = "dimension";
  d.canonical_name = require_string(j, "canonical_name", where);
  d.display_name = j.value("display_name", d.canonical_name);
  if (j.contains("enum_values") && !j["enum_values"].is_null()) {
    d.enum_values = j["enum_values"].get<std::vector<std::string>>();
  }
  d.source_table = require_string(j, "source_table", where + " " + d.canonical_name);
  d.source_column = require_string(j, "source_column", where + " " + d.canonical_name);
  auto gc = grain_class_from_string(require_string(j, "grain_class", where));
  if (!gc) throw Error(ErrorKind::parse, d.canonical_name, "unknown grain_class");
  d.grain_class = *gc;
  return d;
}

}  // namespace

Catalog parse_catalog(std::string_view text, const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    const int line = line_of(text, e.byte > 0 ? e.byte - 1 : 0);
    throw Error(ErrorKind::parse, origin,
                origin + ":" + std::to_string(line) + ": parse error: " + e.what(), line);
  }
  if (!doc.is_object()) {
    throw Error(ErrorKind::parse, origin, origin + ":1: catalog must be an object", 1);
  }
  try {
    std::vector<MetricDef> metrics;
    for (const auto& m : require(doc, "metrics", origin)) metrics.push_back(metric_from_json(m));
    std::vector<DimensionDef> dimensions;
    for (const auto& d : require(doc, "dimensions", origin)) {
      dimensions.push_back(dimension_from_json(d));
    }
    std::vector<AliasRule> aliases;
    if (doc.contains("aliases")) {
      for (const auto& a : doc["aliases"]) {
        auto kind = name_kind_from_string(require_string(a, "kind", "alias"));
        if (!kind) throw Error(ErrorKind::parse, "alias", "alias has unknown kind");
        aliases.push_back({require_string(a, "alias", "alias"),
                           require_string(a, "canonical_name", "alias"), *kind});
      }
    }
    CompatibilityMatrix matrix;
    if (doc.contains("incompatible_pairs")) {
      for (const auto& p : doc["incompatible_pairs"]) {
        if (!p.is_array() || p.size() != 2) {
          throw Error(ErrorKind::parse, "incompatible_pairs", "pairs must be [metric, dimension]");
        }
        matrix.incompatible_pairs.emplace(p[0].get<std::string>(), p[1].get<std::string>());
      }
    }
    return Catalog(std::move(metrics), std::move(dimensions), std::move(aliases),
                   std::move(matrix));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, origin, origin + ": malformed entry: " + e.what());
  }
}

Catalog load_catalog(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, path.string(), "cannot open catalog '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_catalog(buf.str(), path.string());
}

std::string serialize_catalog(const Catalog& catalog) {
  json doc;
  doc["metrics"] = json::array();
  for (const auto& m : catalog.metrics()) {
    if (m.filler) continue;
    json j;
    j["canonical_name"] = m.canonical_name;
    j["display_name"] = m.display_name;
    j["theme"] = to_string(m.theme);
    switch (m.aggregation.kind) {
      case Aggregation::Kind::sum: j["aggregation"] = "sum"; break;
      case Aggregation::Kind::count_distinct: j["aggregation"] = "count_distinct"; break;
      case Aggregation::Kind::ratio:
        j["aggregation"] = {{"ratio",
                             {{"numerator", m.aggregation.numerator},
                              {"denominator", m.aggregation.denominator}}}};
        break;
    }
    if (!m.source_table.empty()) j["source_table"] = m.source_table;
    if (!m.source_column.empty()) j["source_column"] = m.source_column;
    j["grains"] = json::array();
    for (Grain g : m.grains) j["grains"].push_back(to_string(g));
    j["ads_available"] = m.ads_available;
    doc["metrics"].push_back(std::move(j));
  }
  doc["dimensions"] = json::array();
  for (const auto& d : catalog.dimensions()) {
    if (d.filler) continue;
    json j{{"canonical_name", d.canonical_name},
           {"display_name", d.display_name},
           {"source_table", d.source_table},
           {"source_column", d.source_column},
           {"grain_class", to_string(d.grain_class)}};
    if (d.enum_values) j["enum_values"] = *d.enum_values;
    doc["dimensions"].push_back(std::move(j));
  }
  doc["aliases"] = json::array();
  for (const auto& a : catalog.aliases()) {
    doc["aliases"].push_back(
        {{"alias", a.alias}, {"canonical_name", a.canonical_name}, {"kind", to_string(a.kind)}});
  }
  doc["incompatible_pairs"] = json::array();
  for (const auto& [m, d] : catalog.compatibility().incompatible_pairs) {
    doc["incompatible_pairs"].push_back({m, d});
  }
  return doc.dump(2) + "\n";
}

std::filesystem::path default_catalog_path() {
  if (const char* env = std::getenv("AIDA_CATALOG"); env != nullptr && *env != '\0') return env;
#ifdef AIDA_DEFAULT_CATALOG
  return AIDA_DEFAULT_CATALOG;
#else
  return "data/default_catalog.json";
#endif
}

}  // namespace aida
