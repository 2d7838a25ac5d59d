#include "aida/rl_math.hpp"

#include <cmath>

namespace aida {

TrajectoryReturns compute_returns(const std::vector<double>& intermediate,
                                  const std::vector<double>& accumulated, double gamma) {
  if (intermediate.empty()) throw Error(ErrorKind::shape, "trajectory", "empty trajectory");
  if (intermediate.size() != accumulated.size()) {
    throw Error(ErrorKind::shape, "trajectory", "reward sequences differ in length");
  }
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw Error(ErrorKind::invalid_value, "gamma", "gamma must lie in [0, 1]");
  }
  const std::size_t n = intermediate.size();
  TrajectoryReturns out;
  out.gamma = gamma;
  out.g.assign(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double discounted = 0.0;
    double weight = 1.0;
    for (std::size_t j = t; j < n; ++j) {
      discounted += weight * accumulated[j];
      weight *= gamma;
    }
    out.g[t] = intermediate[t] + discounted;
  }
  return out;
}

TrajectoryReturns compute_returns(const std::vector<RewardBreakdown>& breakdowns, double gamma) {
  std::vector<double> ri;
  std::vector<double> ra;
  for (const auto& b : breakdowns) {
    ri.push_back(b.intermediate_total);
    ra.push_back(b.accumulated_total);
  }
  return compute_returns(ri, ra, gamma);
}

double AdvantageBatch::effective(std::size_t n, std::size_t t) const {
  const bool masked = (n < schema_mask.size() && t < schema_mask[n].size() && schema_mask[n][t]) ||
                      (n < logic_mask.size() && t < logic_mask[n].size() && logic_mask[n][t]);
  if (masked) return 0.0;
  return advantages[n][t];
}

AdvantageBatch rebn_advantages(const std::vector<TrajectoryReturns>& returns) {
  if (returns.empty()) throw Error(ErrorKind::shape, "batch", "empty batch");
  AdvantageBatch b;
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& r : returns) {
    for (double g : r.g) {
      sum += g;
      ++count;
    }
  }
  b.batch_mean = count ? sum / static_cast<double>(count) : 0.0;
  double sq = 0.0;
  for (const auto& r : returns) {
    for (double g : r.g) sq += (g - b.batch_mean) * (g - b.batch_mean);
  }
  b.batch_std = count ? std::sqrt(sq / static_cast<double>(count)) : 0.0;
  const bool degenerate = b.batch_std < 1e-12;
  for (const auto& r : returns) {
    std::vector<double> a;
    for (double g : r.g) a.push_back(degenerate ? 0.0 : (g - b.batch_mean) / b.batch_std);
    b.advantages.push_back(std::move(a));
    b.schema_mask.emplace_back(r.g.size(), false);
    b.logic_mask.emplace_back(r.g.size(), false);
  }
  return b;
}

AdvantageBatch apply_masks(AdvantageBatch batch, const std::vector<std::vector<StepFlags>>& flags) {
  if (flags.size() != batch.advantages.size()) {
    throw Error(ErrorKind::shape, "flags", "flags and advantages differ in batch size");
  }
  batch.schema_mask.resize(flags.size());
  batch.logic_mask.resize(flags.size());
  for (std::size_t n = 0; n < flags.size(); ++n) {
    batch.schema_mask[n].assign(flags[n].size(), false);
    batch.logic_mask[n].assign(flags[n].size(), false);
    if (flags[n].size() != batch.advantages[n].size()) {
      throw Error(ErrorKind::shape, "flags", "flags and advantages differ in trajectory length");
    }
    for (std::size_t t = 0; t < flags[n].size(); ++t) {
      const bool positive = batch.advantages[n][t] > 0.0;
      batch.schema_mask[n][t] = positive && flags[n][t].syntax_failed;
      batch.logic_mask[n][t] = positive && flags[n][t].has_invalid_insight;
    }
  }
  return batch;
}

double objective(const AdvantageBatch& batch, const std::vector<std::vector<double>>& logprobs) {
  if (logprobs.size() != batch.advantages.size()) {
    throw Error(ErrorKind::shape, "logprobs", "log-probabilities and advantages differ in batch size");
  }
  double total = 0.0;
  for (std::size_t n = 0; n < logprobs.size(); ++n) {
    if (logprobs[n].size() != batch.advantages[n].size()) {
      throw Error(ErrorKind::shape, "logprobs", "log-probabilities and advantages differ in length");
    }
    for (std::size_t t = 0; t < logprobs[n].size(); ++t) total += batch.effective(n, t) * logprobs[n][t];
  }
  return total / static_cast<double>(logprobs.size());
}

nlohmann::ordered_json to_json(const AdvantageBatch& b) {
  nlohmann::ordered_json trajectories = nlohmann::ordered_json::array();
  for (std::size_t n = 0; n < b.advantages.size(); ++n) {
    nlohmann::ordered_json steps = nlohmann::ordered_json::array();
    for (std::size_t t = 0; t < b.advantages[n].size(); ++t) {
      steps.push_back({{"advantage", b.advantages[n][t]},
                       {"schema_mask", n < b.schema_mask.size() && t < b.schema_mask[n].size() && b.schema_mask[n][t]},
                       {"logic_mask", n < b.logic_mask.size() && t < b.logic_mask[n].size() && b.logic_mask[n][t]},
                       {"effective", b.effective(n, t)}});
    }
    trajectories.push_back(steps);
  }
  return {{"batch_mean", b.batch_mean}, {"batch_std", b.batch_std}, {"trajectories", trajectories}};
}

}  // namespace aida
