#include "aida/warehouse.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include "aida/dates.hpp"
#include "aida/planner.hpp"
#include "sqlite_util.hpp"

namespace aida {

using nlohmann::json;

const char* to_string(Effect effect) {
  switch (effect) {
    case Effect::gmv_drop: return "gmv_drop";
    case Effect::traffic_drop: return "traffic_drop";
    case Effect::conversion_drop: return "conversion_drop";
    case Effect::price_shift: return "price_shift";
    case Effect::logistics_delay: return "logistics_delay";
  }
  return "?";
}

namespace {

std::optional<Effect> effect_from_string(std::string_view s) {
  for (Effect e : {Effect::gmv_drop, Effect::traffic_drop, Effect::conversion_drop,
                   Effect::price_shift, Effect::logistics_delay}) {
    if (s == to_string(e)) return e;
  }
  return std::nullopt;
}

const char* to_string(EntitySelector::Kind kind) {
  switch (kind) {
    case EntitySelector::Kind::shop: return "shop";
    case EntitySelector::Kind::brand: return "brand";
    case EntitySelector::Kind::district: return "district";
  }
  return "?";
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

[[noreturn]] void config_error(const std::string& field, const std::string& message) {
  throw Error(ErrorKind::config, field, "warehouse config: " + field + ": " + message);
}

}  // namespace

std::uint64_t CounterRng::bits(std::uint64_t stream, std::uint64_t a, std::uint64_t b,
                               std::uint64_t c) const {
  std::uint64_t h = splitmix(seed_);
  h = splitmix(h ^ (stream * 0x9e3779b97f4a7c15ULL));
  h = splitmix(h ^ (a + 0x632be59bd9b4e019ULL));
  h = splitmix(h ^ (b + 0x8cb92ba72f3d8dd7ULL));
  return splitmix(h ^ (c + 0xd6e8feb86659fd93ULL));
}

double CounterRng::uniform(std::uint64_t stream, std::uint64_t a, std::uint64_t b,
                           std::uint64_t c) const {
  return static_cast<double>(bits(stream, a, b, c) >> 11) * 0x1.0p-53;
}

EffectSpec effect_spec(Effect effect) {
  switch (effect) {
    case Effect::gmv_drop: return {"netGMV", kTradeFact, "ageBand", "down"};
    case Effect::traffic_drop: return {"exposureCount", kLogFact, "channel", "down"};
    case Effect::conversion_drop: return {"convertedSessionCount", kLogFact, "channel", "down"};
    case Effect::price_shift: return {"discountAmount", kTradeFact, "priceBand", "down"};
    case Effect::logistics_delay: return {"deliveryMinutes", kTradeFact, "hourBand", "up"};
  }
  return {"netGMV", kTradeFact, "ageBand", "down"};
}

namespace {

// Attribute dimensions a planted cause can live on, and where each one is readable.
const std::set<std::string> kUserAttributes = {"ageBand", "gender", "memberLevel", "userCity"};
const std::set<std::string> kTradeAttributes = {"userType", "payMethod", "deliveryType",
                                                "priceBand", "hourBand"};
const std::set<std::string> kLogAttributes = {"channel"};

}  // namespace

void WarehouseConfig::validate() const {
  if (n_shops < 1) config_error("n_shops", "must be >= 1");
  if (n_users < 1) config_error("n_users", "must be >= 1");
  if (n_brands < 1) config_error("n_brands", "must be >= 1");
  if (n_days < 14) config_error("n_days", "must be >= 14 so week-over-week has a prior week");
  const auto start = parse_stamp(start_ds);
  if (!start) config_error("start_ds", "not a YYYYMMDD date");
  const Date end = shift_days(*start, n_days - 1);
  if (base_rates.orders_per_shop_day <= 0) config_error("base_rates", "orders must be positive");
  std::set<std::string> ids;
  for (const auto& s : scenarios) {
    const std::string where = "scenarios." + s.scenario_id;
    if (s.scenario_id.empty() || !ids.insert(s.scenario_id).second) {
      config_error("scenarios", "scenario ids must be unique and non-empty");
    }
    if (!(s.magnitude > 0.0 && s.magnitude <= 1.0)) config_error(where, "magnitude must be in (0,1]");
    if (!(s.top_share >= 0.5 && s.top_share <= 1.0)) {
      config_error(where, "top_share must be in [0.5, 1]");
    }
    const auto from = parse_stamp(s.window_from);
    const auto to = parse_stamp(s.window_to);
    if (!from || !to || *from > *to || *from < *start || *to > end) {
      config_error(where, "window must lie within the generated date range");
    }
    const auto spec = effect_spec(s.effect);
    const std::string dim = s.cause_dimension.empty() ? spec.default_dimension : s.cause_dimension;
    const bool readable = kUserAttributes.count(dim) != 0 ||
                          (spec.fact_table == std::string(kTradeFact) ? kTradeAttributes.count(dim)
                                                                      : kLogAttributes.count(dim));
    if (!readable) config_error(where, "cause_dimension '" + dim + "' not available for effect");
    if (s.target.value.empty()) config_error(where, "target value required");
  }
}

namespace {

constexpr const char* kCategories[] = {"Fresh", "Snacks", "Drinks", "Pharmacy", "Flowers"};
constexpr const char* kCities[] = {"Hangzhou", "Shanghai", "Beijing", "Shenzhen"};
constexpr const char* kAgeBands[] = {"18-24", "25-34", "35-44", "45+"};
constexpr double kAgeWeights[] = {0.35, 0.30, 0.20, 0.15};
constexpr const char* kMemberLevels[] = {"none", "silver", "gold"};
constexpr double kMemberWeights[] = {0.5, 0.3, 0.2};
constexpr const char* kHourBands[] = {"morning", "noon", "evening", "night"};
constexpr double kHourWeights[] = {0.2, 0.3, 0.35, 0.15};
constexpr const char* kPayMethods[] = {"alipay", "wallet", "card"};
constexpr double kPayWeights[] = {0.6, 0.25, 0.15};
constexpr const char* kChannels[] = {"search", "feed", "push", "homepage"};
constexpr double kChannelWeights[] = {0.4, 0.3, 0.1, 0.2};
constexpr double kRatingWeights[] = {0.05, 0.07, 0.13, 0.3, 0.45};

// Stream ids keep independent draws independent.
enum Stream : std::uint64_t {
  kShopScale = 1,
  kUserAttr,
  kOrderCount,
  kOrderField,
  kSessionCount,
  kSessionField,
  kScenarioRounding,
};

template <std::size_t N>
std::size_t pick(const double (&weights)[N], double u) {
  double acc = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    acc += weights[i];
    if (u < acc) return i;
  }
  return N - 1;
}

int poisson(double lambda, double u) {
  if (lambda > 400.0) {
    // normal approximation via the inverse-CDF of a logistic, adequate at this scale
    const double z = std::log(u / (1.0 - u)) * 0.5513;
    return std::max(0, static_cast<int>(std::lround(lambda + z * std::sqrt(lambda))));
  }
  double p = std::exp(-lambda);
  double cdf = p;
  int k = 0;
  while (u > cdf && k < 10000) {
    ++k;
    p *= lambda / k;
    cdf += p;
  }
  return k;
}

std::string fmt(const char* pattern, long long v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

struct ShopRow {
  std::string id, name, brand_id, brand_name, category, district, city;
  double scale = 1.0;
};

struct UserRow {
  std::string id;
  std::size_t gender, age, member, city;
};

struct TradeRow {
  int day = 0, shop = 0, user = 0;
  int item_cnt = 1;
  double gmv = 0, discount = 0, subsidy = 0, net = 0, refund = 0;
  int is_refund = 0, is_promo = 0, is_new_user = 0;
  std::size_t pay = 0, hour = 0;
  bool pickup = false;
  int delivery_minutes = 0, is_late = 0, is_cancel = 0, has_review = 0, rating = 0;
  int is_bad_review = 0, is_complaint = 0;
};

struct LogRow {
  int day = 0, shop = 0, user = 0;
  std::size_t channel = 0;
  int exposure = 0, click = 0, cart = 0, converted = 0;
};

const char* price_band(double gmv) { return gmv < 30 ? "low" : gmv < 80 ? "mid" : "high"; }

struct Model {
  WarehouseConfig config;
  Date start;
  std::vector<Date> days;
  std::vector<ShopRow> shops;
  std::vector<UserRow> users;
  std::vector<TradeRow> trades;
  std::vector<LogRow> sessions;
};

bool is_holiday(Date d) {
  const std::chrono::year_month_day ymd{d};
  const unsigned m = static_cast<unsigned>(ymd.month());
  const unsigned day = static_cast<unsigned>(ymd.day());
  return (m == 10 && day <= 7) || (m == 1 && day == 1) || (m == 5 && day <= 5);
}

bool is_weekend(Date d) { return weekday_index(d) >= 5; }

void build_dimensions(Model& model, const CounterRng& rng) {
  const auto& c = model.config;
  for (int i = 0; i < c.n_days; ++i) model.days.push_back(shift_days(model.start, i));
  for (int i = 0; i < c.n_shops; ++i) {
    ShopRow s;
    s.id = fmt("S%03lld", i + 1);
    s.category = kCategories[i % 5];
    s.name = s.category + " Store " + fmt("%03lld", i + 1);
    const int brand = i % c.n_brands;
    s.brand_id = fmt("B%02lld", brand + 1);
    s.brand_name = "Brand " + fmt("%02lld", brand + 1);
    const int district = i / 4;
    s.district = fmt("D%02lld", district + 1);
    s.city = kCities[district % 4];
    s.scale = 0.6 + 0.8 * rng.uniform(kShopScale, static_cast<std::uint64_t>(i));
    model.shops.push_back(std::move(s));
  }
  for (int i = 0; i < c.n_users; ++i) {
    const auto key = static_cast<std::uint64_t>(i);
    UserRow u;
    u.id = fmt("U%05lld", i + 1);
    u.gender = rng.uniform(kUserAttr, key, 0) < 0.55 ? 0 : 1;
    u.age = pick(kAgeWeights, rng.uniform(kUserAttr, key, 1));
    u.member = pick(kMemberWeights, rng.uniform(kUserAttr, key, 2));
    u.city = rng.bits(kUserAttr, key, 3) % 4;
    model.users.push_back(std::move(u));
  }
}

void build_facts(Model& model, const CounterRng& rng) {
  const auto& c = model.config;
  const auto& r = c.base_rates;
  for (int d = 0; d < c.n_days; ++d) {
    const Date day = model.days[static_cast<std::size_t>(d)];
    const double day_factor = (is_weekend(day) ? 1.2 : 1.0) * (is_holiday(day) ? 1.3 : 1.0);
    for (int s = 0; s < c.n_shops; ++s) {
      const auto ks = static_cast<std::uint64_t>(s);
      const auto kd = static_cast<std::uint64_t>(d);
      const double lambda = r.orders_per_shop_day * model.shops[ks].scale * day_factor;
      const int n_orders = poisson(lambda, rng.uniform(kOrderCount, ks, kd));
      for (int j = 0; j < n_orders; ++j) {
        const auto key = (kd << 32) | (ks << 16) | static_cast<std::uint64_t>(j);
        auto u = [&](std::uint64_t field) { return rng.uniform(kOrderField, key, field); };
        auto b = [&](std::uint64_t field) { return rng.bits(kOrderField, key, field); };
        TradeRow t;
        t.day = d;
        t.shop = s;
        t.user = static_cast<int>(b(0) % static_cast<std::uint64_t>(c.n_users));
        t.item_cnt = 1 + static_cast<int>(b(1) % 5);
        t.gmv = 0.5 * static_cast<double>(20 + b(2) % 281);
        if (u(3) < 0.35) {
          const auto steps = static_cast<std::uint64_t>(t.gmv * 0.2 / 0.5) + 1;
          t.discount = 0.5 * static_cast<double>(b(4) % steps);
          t.subsidy = 0.5 * static_cast<double>(b(5) % 7);
        }
        t.is_promo = t.discount > 0 ? 1 : 0;
        t.net = t.gmv - t.discount;
        t.hour = pick(kHourWeights, u(6));
        t.pay = pick(kPayWeights, u(7));
        t.pickup = u(8) >= 0.85;
        t.delivery_minutes = t.pickup ? 0 : 18 + static_cast<int>(b(9) % 35);
        t.is_late = t.delivery_minutes > 45 ? 1 : 0;
        t.is_cancel = u(10) < r.cancel_rate ? 1 : 0;
        t.is_refund = u(11) < r.refund_rate ? 1 : 0;
        t.refund = t.is_refund ? t.net : 0.0;
        t.has_review = u(12) < r.review_rate ? 1 : 0;
        if (t.has_review) t.rating = 1 + static_cast<int>(pick(kRatingWeights, u(13)));
        t.is_bad_review = t.has_review && t.rating <= 2 ? 1 : 0;
        t.is_complaint = u(14) < r.complaint_rate ? 1 : 0;
        t.is_new_user = u(15) < r.new_user_rate ? 1 : 0;
        model.trades.push_back(t);
      }
      const int n_sessions =
          poisson(lambda * r.sessions_per_order, rng.uniform(kSessionCount, ks, kd));
      for (int j = 0; j < n_sessions; ++j) {
        const auto key = (kd << 32) | (ks << 16) | static_cast<std::uint64_t>(j);
        auto u = [&](std::uint64_t field) { return rng.uniform(kSessionField, key, field); };
        auto b = [&](std::uint64_t field) { return rng.bits(kSessionField, key, field); };
        LogRow l;
        l.day = d;
        l.shop = s;
        l.user = static_cast<int>(b(0) % static_cast<std::uint64_t>(c.n_users));
        l.channel = pick(kChannelWeights, u(1));
        l.exposure = 1 + static_cast<int>(b(2) % 10);
        l.click = std::min(l.exposure, static_cast<int>(b(3) % 4));
        l.cart = l.click > 0 ? static_cast<int>(b(4) % static_cast<std::uint64_t>(l.click + 1)) : 0;
        l.converted = l.cart > 0 && u(5) < 0.6 ? 1 : 0;
        model.sessions.push_back(l);
      }
    }
  }
}

std::string segment_of(const Model& m, const std::string& dim, int user, const TradeRow* t,
                       const LogRow* l) {
  const auto& u = m.users[static_cast<std::size_t>(user)];
  if (dim == "ageBand") return kAgeBands[u.age];
  if (dim == "gender") return u.gender == 0 ? "F" : "M";
  if (dim == "memberLevel") return kMemberLevels[u.member];
  if (dim == "userCity") return kCities[u.city];
  if (t != nullptr) {
    if (dim == "userType") return t->is_new_user ? "new" : "returning";
    if (dim == "payMethod") return kPayMethods[t->pay];
    if (dim == "deliveryType") return t->pickup ? "pickup" : "rider";
    if (dim == "priceBand") return price_band(t->gmv);
    if (dim == "hourBand") return kHourBands[t->hour];
  }
  if (l != nullptr && dim == "channel") return kChannels[l->channel];
  return {};
}

bool in_target(const Model& m, const Scenario& s, int shop) {
  const auto& row = m.shops[static_cast<std::size_t>(shop)];
  switch (s.target.kind) {
    case EntitySelector::Kind::shop: return row.id == s.target.value;
    case EntitySelector::Kind::brand: return row.brand_id == s.target.value;
    case EntitySelector::Kind::district: return row.district == s.target.value;
  }
  return false;
}

int stochastic_round(double x, double u) {
  const double f = std::floor(x);
  return static_cast<int>(f) + (u < x - f ? 1 : 0);
}

double effect_value(Effect e, const TradeRow* t, const LogRow* l) {
  switch (e) {
    case Effect::gmv_drop: return t->net;
    case Effect::price_shift: return t->discount;
    case Effect::logistics_delay: return t->delivery_minutes;
    case Effect::traffic_drop: return l->exposure;
    case Effect::conversion_drop: return l->converted;
  }
  return 0.0;
}

void scale_row(Effect e, double f, double u, TradeRow* t, LogRow* l) {
  switch (e) {
    case Effect::gmv_drop:
      t->gmv *= f;
      t->discount *= f;
      t->subsidy *= f;
      t->net *= f;
      t->refund *= f;
      break;
    case Effect::price_shift:
      t->discount *= f;
      t->net = t->gmv - t->discount;
      if (t->is_refund) t->refund = t->net;
      t->is_promo = t->discount > 0 ? 1 : 0;
      break;
    case Effect::logistics_delay:
      t->delivery_minutes = stochastic_round(t->delivery_minutes * f, u);
      t->is_late = t->delivery_minutes > 45 ? 1 : 0;
      break;
    case Effect::traffic_drop:
      l->exposure = stochastic_round(l->exposure * f, u);
      l->click = std::min(l->click, l->exposure);
      l->cart = std::min(l->cart, l->click);
      if (l->cart == 0) l->converted = 0;
      break;
    case Effect::conversion_drop:
      if (l->converted && u >= f) l->converted = 0;
      break;
  }
}

GroundTruth apply_scenario(Model& m, const Scenario& s, const CounterRng& rng,
                           std::uint64_t scenario_index) {
  const auto spec = effect_spec(s.effect);
  const std::string dim = s.cause_dimension.empty() ? spec.default_dimension : s.cause_dimension;
  const bool trade = spec.fact_table == std::string(kTradeFact);
  const Date from = *parse_stamp(s.window_from);
  const Date to = *parse_stamp(s.window_to);

  struct Target {
    std::size_t index;
    std::string segment;
  };
  std::vector<Target> rows;
  std::map<std::string, double> before;
  auto consider = [&](std::size_t i, int day, int shop, int user, const TradeRow* t,
                      const LogRow* l) {
    const Date d = m.days[static_cast<std::size_t>(day)];
    if (d < from || d > to || !in_target(m, s, shop)) return;
    std::string seg = segment_of(m, dim, user, t, l);
    before[seg] += effect_value(s.effect, t, l);
    rows.push_back({i, std::move(seg)});
  };
  if (trade) {
    for (std::size_t i = 0; i < m.trades.size(); ++i) {
      const auto& t = m.trades[i];
      consider(i, t.day, t.shop, t.user, &t, nullptr);
    }
  } else {
    for (std::size_t i = 0; i < m.sessions.size(); ++i) {
      const auto& l = m.sessions[i];
      consider(i, l.day, l.shop, l.user, nullptr, &l);
    }
  }
  const double total = std::accumulate(before.begin(), before.end(), 0.0,
                                       [](double acc, const auto& kv) { return acc + kv.second; });
  const std::string where = "scenarios." + s.scenario_id;
  if (total <= 0.0) config_error(where, "target segment has no activity inside the window");

  std::string top;
  for (const auto& [seg, v] : before) {
    if (top.empty() || v > before[top]) top = seg;
  }
  const double top_base = before[top];
  const double effect = s.magnitude * total;
  const bool down = std::string(spec.direction) == "down";
  double share = s.top_share;
  if (down && share * effect > top_base) share = top_base / effect;
  if (top_base >= total) share = 1.0;
  if (share < 0.5) {
    config_error(where, "largest " + dim + " segment is too small to carry a dominant cause");
  }
  const double rest_base = total - top_base;
  const double sign = down ? -1.0 : 1.0;
  const double f_top = 1.0 + sign * share * effect / top_base;
  const double f_rest = rest_base > 0 ? 1.0 + sign * (1.0 - share) * effect / rest_base : 1.0;

  std::map<std::string, double> after;
  for (const auto& row : rows) {
    const double f = row.segment == top ? f_top : f_rest;
    const double u = rng.uniform(kScenarioRounding, scenario_index, row.index);
    TradeRow* t = trade ? &m.trades[row.index] : nullptr;
    LogRow* l = trade ? nullptr : &m.sessions[row.index];
    scale_row(s.effect, f, u, t, l);
    after[row.segment] += effect_value(s.effect, t, l);
  }

  GroundTruth gt;
  gt.scenario_id = s.scenario_id;
  gt.effect = s.effect;
  gt.cause_label = s.cause_label;
  double total_delta = 0.0;
  std::map<std::string, double> delta;
  for (const auto& [seg, v] : before) {
    delta[seg] = down ? v - after[seg] : after[seg] - v;
    total_delta += delta[seg];
  }
  if (total_delta <= 0.0) config_error(where, "scenario produced no measurable effect");
  for (const auto& [seg, dv] : delta) {
    if (dv == 0.0) continue;
    gt.planted_causes.push_back({spec.metric, dim, seg, spec.direction, dv / total_delta});
  }
  std::stable_sort(gt.planted_causes.begin(), gt.planted_causes.end(),
                   [](const auto& a, const auto& b) { return a.share_of_effect > b.share_of_effect; });
  if (gt.planted_causes.empty() || gt.planted_causes.front().share_of_effect < 0.5) {
    config_error(where, "realized top cause share fell below 0.5");
  }
  return gt;
}

constexpr const char* kSchema = R"sql(
CREATE TABLE dim_date (ds TEXT PRIMARY KEY, is_week TEXT NOT NULL, is_holiday INTEGER NOT NULL,
  weekday TEXT NOT NULL);
CREATE TABLE dim_shop (shop_id TEXT PRIMARY KEY, shop_name TEXT NOT NULL, brand_id TEXT NOT NULL,
  brand_name TEXT NOT NULL, category TEXT NOT NULL, district TEXT NOT NULL, city TEXT NOT NULL);
CREATE TABLE dim_usr (user_id TEXT PRIMARY KEY, gender TEXT NOT NULL, age_band TEXT NOT NULL,
  member_level TEXT NOT NULL, user_city TEXT NOT NULL);
CREATE TABLE dws_trd (order_id TEXT PRIMARY KEY, ds TEXT NOT NULL, shop_id TEXT NOT NULL,
  user_id TEXT NOT NULL, order_cnt INTEGER, item_cnt INTEGER, gmv REAL, discount_amt REAL,
  subsidy_amt REAL, net_gmv REAL, refund_amt REAL, is_refund INTEGER, is_promo INTEGER,
  is_new_user INTEGER, user_type TEXT, pay_method TEXT, delivery_type TEXT, price_band TEXT,
  hour_band TEXT, delivery_minutes INTEGER, is_late INTEGER, is_cancel INTEGER,
  has_review INTEGER, rating INTEGER, is_bad_review INTEGER, is_complaint INTEGER);
CREATE TABLE dws_log (session_id TEXT PRIMARY KEY, ds TEXT NOT NULL, shop_id TEXT NOT NULL,
  user_id TEXT NOT NULL, channel TEXT, session_cnt INTEGER, exposure INTEGER, click INTEGER,
  cart INTEGER, converted INTEGER);
CREATE TABLE aida_meta (key TEXT PRIMARY KEY, value TEXT NOT NULL);
)sql";

constexpr const char* kTradeSums[] = {"order_cnt",    "item_cnt",    "gmv",
                                      "discount_amt", "subsidy_amt", "net_gmv",
                                      "refund_amt",   "is_refund",   "is_promo",
                                      "is_new_user",  "delivery_minutes", "is_late",
                                      "is_cancel",    "has_review",  "rating",
                                      "is_bad_review", "is_complaint"};
constexpr const char* kLogSums[] = {"session_cnt", "exposure", "click", "cart", "converted"};

bool real_column(std::string_view c) {
  return c == "gmv" || c == "discount_amt" || c == "subsidy_amt" || c == "net_gmv" ||
         c == "refund_amt";
}

std::string ads_sql(const std::string& table, const std::vector<std::string>& keys,
                    const std::string& key_select, const std::string& group_key) {
  std::string create = "CREATE TABLE " + table + " (";
  for (const auto& k : keys) create += k + (k == "is_week" ? " INTEGER, " : " TEXT, ");
  for (const char* c : kTradeSums) create += std::string(c) + (real_column(c) ? " REAL, " : " INTEGER, ");
  for (const char* c : kLogSums) create += std::string(c) + " INTEGER, ";
  create += "PRIMARY KEY (ds, " + keys[1] + "));\n";

  std::string trade_cols;
  std::string log_cols;
  std::string outer;
  for (const char* c : kTradeSums) {
    trade_cols += ", SUM(" + std::string(c) + ") AS " + c;
    outer += ", COALESCE(t." + std::string(c) + ", 0)";
  }
  for (const char* c : kLogSums) {
    log_cols += ", SUM(" + std::string(c) + ") AS " + c;
    outer += ", COALESCE(l." + std::string(c) + ", 0)";
  }
  const std::string join_shop = " f JOIN dim_shop s ON s.shop_id = f.shop_id";
  std::string insert = "INSERT INTO " + table + "\nSELECT " + key_select + outer +
                       "\nFROM (SELECT f.ds AS ds, " + group_key + " AS k FROM dws_trd" + join_shop +
                       " UNION SELECT f.ds, " + group_key + " FROM dws_log" + join_shop +
                       ") keys\n";
  insert += "JOIN (SELECT DISTINCT " + group_key + " AS k, " +
            (table == "ads_shop"
                 ? std::string("s.shop_name, s.brand_id, s.brand_name, s.category, s.district, s.city")
                 : std::string("s.brand_name")) +
            " FROM dim_shop s) e ON e.k = keys.k\n";
  insert += "LEFT JOIN (SELECT f.ds AS ds, " + group_key + " AS k" + trade_cols +
            " FROM dws_trd" + join_shop + " GROUP BY f.ds, " + group_key +
            ") t ON t.ds = keys.ds AND t.k = keys.k\n";
  insert += "LEFT JOIN (SELECT f.ds AS ds, " + group_key + " AS k" + log_cols + " FROM dws_log" +
            join_shop + " GROUP BY f.ds, " + group_key +
            ") l ON l.ds = keys.ds AND l.k = keys.k\n";
  insert += "ORDER BY keys.ds, keys.k;\n";
  return create + insert;
}

void persist(const Model& m, const std::vector<GroundTruth>& truths, sqlite3* db) {
  sql::exec(db, kSchema);
  sql::exec(db, "BEGIN");
  {
    sql::Statement st(db, "INSERT INTO dim_date VALUES (?, ?, ?, ?)");
    constexpr const char* kWeekdays[] = {"Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"};
    for (Date d : m.days) {
      st.bind(1, format_stamp(d));
      st.bind(2, std::string_view(is_weekend(d) ? "Weekend" : "Weekday"));
      st.bind(3, is_holiday(d) ? 1 : 0);
      st.bind(4, std::string_view(kWeekdays[weekday_index(d)]));
      st.run();
    }
  }
  {
    sql::Statement st(db, "INSERT INTO dim_shop VALUES (?, ?, ?, ?, ?, ?, ?)");
    for (const auto& s : m.shops) {
      st.bind(1, s.id);
      st.bind(2, s.name);
      st.bind(3, s.brand_id);
      st.bind(4, s.brand_name);
      st.bind(5, s.category);
      st.bind(6, s.district);
      st.bind(7, s.city);
      st.run();
    }
  }
  {
    sql::Statement st(db, "INSERT INTO dim_usr VALUES (?, ?, ?, ?, ?)");
    for (const auto& u : m.users) {
      st.bind(1, u.id);
      st.bind(2, std::string_view(u.gender == 0 ? "F" : "M"));
      st.bind(3, std::string_view(kAgeBands[u.age]));
      st.bind(4, std::string_view(kMemberLevels[u.member]));
      st.bind(5, std::string_view(kCities[u.city]));
      st.run();
    }
  }
  std::vector<std::string> stamps;
  for (Date d : m.days) stamps.push_back(format_stamp(d));
  {
    sql::Statement st(db,
                      "INSERT INTO dws_trd VALUES (?, ?, ?, ?, 1, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, "
                      "?, ?, ?, ?, ?, ?, ?, ?, ?, ?)");
    long long n = 0;
    for (const auto& t : m.trades) {
      int i = 1;
      st.bind(i++, fmt("O%08lld", ++n));
      st.bind(i++, stamps[static_cast<std::size_t>(t.day)]);
      st.bind(i++, m.shops[static_cast<std::size_t>(t.shop)].id);
      st.bind(i++, m.users[static_cast<std::size_t>(t.user)].id);
      st.bind(i++, t.item_cnt);
      st.bind(i++, t.gmv);
      st.bind(i++, t.discount);
      st.bind(i++, t.subsidy);
      st.bind(i++, t.net);
      st.bind(i++, t.refund);
      st.bind(i++, t.is_refund);
      st.bind(i++, t.is_promo);
      st.bind(i++, t.is_new_user);
      st.bind(i++, std::string_view(t.is_new_user ? "new" : "returning"));
      st.bind(i++, std::string_view(kPayMethods[t.pay]));
      st.bind(i++, std::string_view(t.pickup ? "pickup" : "rider"));
      st.bind(i++, std::string_view(price_band(t.gmv)));
      st.bind(i++, std::string_view(kHourBands[t.hour]));
      st.bind(i++, t.delivery_minutes);
      st.bind(i++, t.is_late);
      st.bind(i++, t.is_cancel);
      st.bind(i++, t.has_review);
      st.bind(i++, t.rating);
      st.bind(i++, t.is_bad_review);
      st.bind(i++, t.is_complaint);
      st.run();
    }
  }
  {
    sql::Statement st(db, "INSERT INTO dws_log VALUES (?, ?, ?, ?, ?, 1, ?, ?, ?, ?)");
    long long n = 0;
    for (const auto& l : m.sessions) {
      st.bind(1, fmt("L%08lld", ++n));
      st.bind(2, stamps[static_cast<std::size_t>(l.day)]);
      st.bind(3, m.shops[static_cast<std::size_t>(l.shop)].id);
      st.bind(4, m.users[static_cast<std::size_t>(l.user)].id);
      st.bind(5, std::string_view(kChannels[l.channel]));
      st.bind(6, l.exposure);
      st.bind(7, l.click);
      st.bind(8, l.cart);
      st.bind(9, l.converted);
      st.run();
    }
  }
  sql::exec(db, "CREATE INDEX idx_trd_ds_shop ON dws_trd(ds, shop_id);"
                "CREATE INDEX idx_log_ds_shop ON dws_log(ds, shop_id);");
  sql::exec(db, ads_sql("ads_shop", ads_key_columns("ads_shop"),
                        "keys.ds, keys.k, e.shop_name, e.brand_id, e.brand_name, e.category, "
                        "e.district, e.city",
                        "s.shop_id"));
  sql::exec(db, ads_sql("ads_brand", ads_key_columns("ads_brand"), "keys.ds, keys.k, e.brand_name",
                        "s.brand_id"));
  {
    sql::Statement st(db, "INSERT INTO aida_meta VALUES (?, ?)");
    st.bind(1, std::string_view("config"));
    st.bind(2, to_json(m.config).dump());
    st.run();
    json gts = json::array();
    for (const auto& gt : truths) gts.push_back(to_json(gt));
    st.bind(1, std::string_view("ground_truth"));
    st.bind(2, gts.dump());
    st.run();
  }
  sql::exec(db, "COMMIT");
}

std::atomic<std::uint64_t> g_load_counter{0};

std::string primary_key_order(std::string_view table) {
  if (table == "dws_trd") return "order_id";
  if (table == "dws_log") return "session_id";
  if (table == "dim_usr") return "user_id";
  if (table == "dim_shop") return "shop_id";
  if (table == "dim_date") return "ds";
  if (table == "ads_shop") return "ds, shop_id";
  return "ds, brand_id";
}

std::string meta_value(sqlite3* db, const char* key) {
  sql::Statement st(db, "SELECT value FROM aida_meta WHERE key = ?");
  st.bind(1, std::string_view(key));
  if (st.step() != SQLITE_ROW) throw Error(ErrorKind::not_found, key, "warehouse lacks meta " + std::string(key));
  return st.text(0);
}

}  // namespace

void Warehouse::Closer::operator()(sqlite3* db) const { sqlite3_close_v2(db); }

Warehouse::Warehouse(sqlite3* db) : db_(db) {}
Warehouse::Warehouse(Warehouse&&) noexcept = default;
Warehouse& Warehouse::operator=(Warehouse&&) noexcept = default;
Warehouse::~Warehouse() = default;

Warehouse Warehouse::in_memory() {
  sqlite3* db = nullptr;
  if (sqlite3_open_v2(":memory:", &db, SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX,
                      nullptr) != SQLITE_OK) {
    sqlite3_close(db);
    throw Error(ErrorKind::io, ":memory:", "cannot open in-memory warehouse");
  }
  Warehouse w(db);
  w.refresh_fingerprint();
  return w;
}

Warehouse Warehouse::open(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorKind::io, path.string(), "warehouse file not found: " + path.string());
  }
  sqlite3* db = nullptr;
  if (sqlite3_open_v2(path.c_str(), &db, SQLITE_OPEN_READONLY | SQLITE_OPEN_FULLMUTEX, nullptr) !=
      SQLITE_OK) {
    sqlite3_close(db);
    throw Error(ErrorKind::io, path.string(), "cannot open warehouse " + path.string());
  }
  Warehouse w(db);
  w.refresh_fingerprint();
  return w;
}

void Warehouse::refresh_fingerprint() {
  std::string config_text;
  try {
    config_text = meta_value(db_.get(), "config");
  } catch (const Error&) {
    config_text = "empty";
  }
  fingerprint_ = fnv1a_hex(config_text) + "#" + std::to_string(++g_load_counter);
}

void Warehouse::exec(const std::string& text) const { sql::exec(db_.get(), text); }

void Warehouse::save(const std::filesystem::path& path) const {
  std::filesystem::remove(path);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  sql::Statement st(db_.get(), "VACUUM INTO ?");
  st.bind(1, path.string());
  if (st.step() != SQLITE_DONE) {
    throw Error(ErrorKind::io, path.string(), "cannot save warehouse to " + path.string());
  }
}

void Warehouse::export_csv(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  for (const char* table : kPhysicalTables) {
    ResultTable t;
    sql::query_table(db_.get(),
                     "SELECT * FROM " + std::string(table) + " ORDER BY " + primary_key_order(table),
                     t);
    std::ofstream out(dir / (std::string(table) + ".csv"), std::ios::binary);
    out << to_csv(t);
  }
}

std::vector<GroundTruth> Warehouse::ground_truths() const {
  std::vector<GroundTruth> out;
  for (const auto& j : json::parse(meta_value(db_.get(), "ground_truth"))) {
    out.push_back(ground_truth_from_json(j));
  }
  return out;
}

WarehouseConfig Warehouse::config() const {
  return warehouse_config_from_json(json::parse(meta_value(db_.get(), "config")));
}

GeneratedWarehouse generate(const WarehouseConfig& config) {
  config.validate();
  Model model;
  model.config = config;
  model.start = *parse_stamp(config.start_ds);
  const CounterRng rng(config.seed);
  build_dimensions(model, rng);
  for (const auto& s : config.scenarios) {
    // targets must name generated entities
    const bool exists = std::any_of(model.shops.begin(), model.shops.end(), [&](const ShopRow& r) {
      switch (s.target.kind) {
        case EntitySelector::Kind::shop: return r.id == s.target.value;
        case EntitySelector::Kind::brand: return r.brand_id == s.target.value;
        case EntitySelector::Kind::district: return r.district == s.target.value;
      }
      return false;
    });
    if (!exists) config_error("scenarios." + s.scenario_id, "unknown target '" + s.target.value + "'");
  }
  build_facts(model, rng);
  std::vector<GroundTruth> truths;
  for (std::size_t i = 0; i < config.scenarios.size(); ++i) {
    truths.push_back(apply_scenario(model, config.scenarios[i], rng, i));
  }
  GeneratedWarehouse out{Warehouse::in_memory(), truths};
  persist(model, truths, out.store.handle());
  out.store.refresh_fingerprint();
  return out;
}

const GroundTruth& ground_truth(const std::vector<GroundTruth>& truths,
                                const std::string& scenario_id) {
  for (const auto& gt : truths) {
    if (gt.scenario_id == scenario_id) return gt;
  }
  throw Error(ErrorKind::not_found, scenario_id, "unknown scenario '" + scenario_id + "'");
}

json to_json(const WarehouseConfig& c) {
  json scenarios = json::array();
  for (const auto& s : c.scenarios) {
    scenarios.push_back({{"scenario_id", s.scenario_id},
                         {"effect", to_string(s.effect)},
                         {"target", {{"kind", to_string(s.target.kind)}, {"value", s.target.value}}},
                         {"window", {s.window_from, s.window_to}},
                         {"magnitude", s.magnitude},
                         {"cause_label", s.cause_label},
                         {"cause_dimension", s.cause_dimension},
                         {"top_share", s.top_share}});
  }
  const auto& r = c.base_rates;
  return {{"seed", c.seed},
          {"n_shops", c.n_shops},
          {"n_users", c.n_users},
          {"n_brands", c.n_brands},
          {"n_days", c.n_days},
          {"start_ds", c.start_ds},
          {"base_rates",
           {{"orders_per_shop_day", r.orders_per_shop_day},
            {"sessions_per_order", r.sessions_per_order},
            {"refund_rate", r.refund_rate},
            {"cancel_rate", r.cancel_rate},
            {"review_rate", r.review_rate},
            {"complaint_rate", r.complaint_rate},
            {"new_user_rate", r.new_user_rate}}},
          {"scenarios", scenarios}};
}

WarehouseConfig warehouse_config_from_json(const json& j) {
  WarehouseConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    c.n_shops = j.value("n_shops", c.n_shops);
    c.n_users = j.value("n_users", c.n_users);
    c.n_brands = j.value("n_brands", c.n_brands);
    c.n_days = j.value("n_days", c.n_days);
    c.start_ds = j.value("start_ds", c.start_ds);
    if (j.contains("base_rates")) {
      const auto& r = j["base_rates"];
      auto& b = c.base_rates;
      b.orders_per_shop_day = r.value("orders_per_shop_day", b.orders_per_shop_day);
      b.sessions_per_order = r.value("sessions_per_order", b.sessions_per_order);
      b.refund_rate = r.value("refund_rate", b.refund_rate);
      b.cancel_rate = r.value("cancel_rate", b.cancel_rate);
      b.review_rate = r.value("review_rate", b.review_rate);
      b.complaint_rate = r.value("complaint_rate", b.complaint_rate);
      b.new_user_rate = r.value("new_user_rate", b.new_user_rate);
    }
    if (j.contains("scenarios")) {
      for (const auto& s : j["scenarios"]) {
        Scenario sc;
        sc.scenario_id = s.at("scenario_id").get<std::string>();
        auto effect = effect_from_string(s.at("effect").get<std::string>());
        if (!effect) config_error("scenarios." + sc.scenario_id, "unknown effect");
        sc.effect = *effect;
        const auto& t = s.at("target");
        const auto kind = t.at("kind").get<std::string>();
        sc.target.kind = kind == "brand"      ? EntitySelector::Kind::brand
                         : kind == "district" ? EntitySelector::Kind::district
                                              : EntitySelector::Kind::shop;
        if (kind != "shop" && kind != "brand" && kind != "district") {
          config_error("scenarios." + sc.scenario_id, "target kind must be shop/brand/district");
        }
        sc.target.value = t.at("value").get<std::string>();
        sc.window_from = s.at("window").at(0).get<std::string>();
        sc.window_to = s.at("window").at(1).get<std::string>();
        sc.magnitude = s.at("magnitude").get<double>();
        sc.cause_label = s.value("cause_label", std::string());
        sc.cause_dimension = s.value("cause_dimension", std::string());
        sc.top_share = s.value("top_share", sc.top_share);
        c.scenarios.push_back(std::move(sc));
      }
    }
  } catch (const json::exception& e) {
    config_error("config", e.what());
  }
  return c;
}

json to_json(const GroundTruth& gt) {
  json causes = json::array();
  for (const auto& c : gt.planted_causes) {
    causes.push_back({{"metric", c.metric},
                      {"dimension", c.dimension},
                      {"segment", c.segment},
                      {"direction", c.direction},
                      {"share_of_effect", c.share_of_effect}});
  }
  return {{"scenario_id", gt.scenario_id},
          {"effect", to_string(gt.effect)},
          {"cause_label", gt.cause_label},
          {"planted_causes", causes}};
}

GroundTruth ground_truth_from_json(const json& j) {
  GroundTruth gt;
  gt.scenario_id = j.at("scenario_id").get<std::string>();
  gt.effect = effect_from_string(j.at("effect").get<std::string>()).value_or(Effect::gmv_drop);
  gt.cause_label = j.value("cause_label", std::string());
  for (const auto& c : j.at("planted_causes")) {
    gt.planted_causes.push_back({c.at("metric").get<std::string>(),
                                 c.at("dimension").get<std::string>(),
                                 c.at("segment").get<std::string>(),
                                 c.at("direction").get<std::string>(),
                                 c.at("share_of_effect").get<double>()});
  }
  return gt;
}

WarehouseConfig default_warehouse_config() {
  WarehouseConfig c;
  const Date start = *parse_stamp(c.start_ds);
  Scenario s;
  s.scenario_id = "gmv_drop_s001";
  s.effect = Effect::gmv_drop;
  s.target = {EntitySelector::Kind::shop, "S001"};
  s.window_from = format_stamp(shift_days(start, c.n_days - 7));
  s.window_to = format_stamp(shift_days(start, c.n_days - 1));
  s.magnitude = 0.3;
  s.cause_label = "young shoppers defected to a competitor promotion";
  s.cause_dimension = "ageBand";
  c.scenarios.push_back(s);
  return c;
}

}  // namespace aida
