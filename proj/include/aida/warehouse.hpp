#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "aida/error.hpp"

struct sqlite3;

namespace aida {

enum class Effect { gmv_drop, traffic_drop, conversion_drop, price_shift, logistics_delay };

const char* to_string(Effect effect);

struct EntitySelector {
  enum class Kind { shop, brand, district };
  Kind kind = Kind::shop;
  std::string value;  // shop_id / brand_id / district code
};

struct Scenario {
  std::string scenario_id;
  Effect effect = Effect::gmv_drop;
  EntitySelector target;
  std::string window_from;  // YYYYMMDD inclusive
  std::string window_to;
  double magnitude = 0.3;  // fraction in (0, 1]
  std::string cause_label;
  std::string cause_dimension;  // empty: effect default
  double top_share = 0.8;       // targeted share of the effect carried by the top segment
};

/// Event-rate parameters of the generator.
struct BaseRates {
  double orders_per_shop_day = 42.0;
  double sessions_per_order = 3.0;
  double refund_rate = 0.04;
  double cancel_rate = 0.03;
  double review_rate = 0.3;
  double complaint_rate = 0.01;
  double new_user_rate = 0.15;
};

struct WarehouseConfig {
  std::uint64_t seed = 42;
  int n_shops = 40;
  int n_users = 5000;
  int n_brands = 8;
  int n_days = 60;
  std::string start_ds = "20250901";
  BaseRates base_rates;
  std::vector<Scenario> scenarios;

  /// Throws Error(config) naming the offending field.
  void validate() const;
};

struct PlantedCause {
  std::string metric;
  std::string dimension;
  std::string segment;
  std::string direction;  // "down" | "up"
  double share_of_effect = 0.0;
};

struct GroundTruth {
  std::string scenario_id;
  Effect effect = Effect::gmv_drop;
  std::string cause_label;
  std::vector<PlantedCause> planted_causes;  // sorted by share, descending
};

/// Defaults per effect: which metric moves and which attribute carries the planted cause.
struct EffectSpec {
  const char* metric;
  const char* fact_table;
  const char* default_dimension;
  const char* direction;
};
EffectSpec effect_spec(Effect effect);

/// Immutable relational snapshot of the seven physical tables (plus a meta table
/// holding the generator config and ground truth). Owns its SQLite connection.
class Warehouse {
 public:
  static Warehouse open(const std::filesystem::path& path);
  static Warehouse in_memory();

  Warehouse(Warehouse&&) noexcept;
  Warehouse& operator=(Warehouse&&) noexcept;
  ~Warehouse();

  sqlite3* handle() const { return db_.get(); }

  /// Identifies the snapshot; the query cache keys on it so reloads invalidate.
  const std::string& fingerprint() const { return fingerprint_; }

  void save(const std::filesystem::path& path) const;
  /// One CSV per physical table, rows in primary-key order.
  void export_csv(const std::filesystem::path& dir) const;

  std::vector<GroundTruth> ground_truths() const;
  WarehouseConfig config() const;

  void exec(const std::string& sql) const;

  void refresh_fingerprint();

 private:
  struct Closer {
    void operator()(sqlite3* db) const;
  };
  explicit Warehouse(sqlite3* db);
  std::unique_ptr<sqlite3, Closer> db_;
  std::string fingerprint_;
};

inline constexpr const char* kPhysicalTables[] = {"dws_trd",  "dws_log",  "dim_usr", "dim_shop",
                                                  "dim_date", "ads_shop", "ads_brand"};

struct GeneratedWarehouse {
  Warehouse store;
  std::vector<GroundTruth> truths;
};

GeneratedWarehouse generate(const WarehouseConfig& config);

const GroundTruth& ground_truth(const std::vector<GroundTruth>& truths,
                                const std::string& scenario_id);

nlohmann::json to_json(const WarehouseConfig& config);
WarehouseConfig warehouse_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const GroundTruth& truth);
GroundTruth ground_truth_from_json(const nlohmann::json& j);

/// Desk-scale default plus one planted gmv_drop (shop S001, last seven days, ageBand).
WarehouseConfig default_warehouse_config();

/// Counter-based generator: every draw is a pure function of (seed, stream, keys).
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}
  std::uint64_t bits(std::uint64_t stream, std::uint64_t a, std::uint64_t b = 0,
                     std::uint64_t c = 0) const;
  double uniform(std::uint64_t stream, std::uint64_t a, std::uint64_t b = 0,
                 std::uint64_t c = 0) const;

 private:
  std::uint64_t seed_;
};

}  // namespace aida
