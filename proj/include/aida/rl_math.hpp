#pragma once

#include <vector>

#include <json.hpp>

#include "aida/reward.hpp"

namespace aida {

struct TrajectoryReturns {
  std::vector<double> g;
  double gamma = 1.0;
};

/// G_t = R^I_t + sum_{j=t}^{T-1} gamma^(j-t) R^A_j
TrajectoryReturns compute_returns(const std::vector<double>& intermediate,
                                  const std::vector<double>& accumulated, double gamma);
TrajectoryReturns compute_returns(const std::vector<RewardBreakdown>& breakdowns, double gamma);

struct StepFlags {
  bool syntax_failed = false;
  bool has_invalid_insight = false;
};

struct AdvantageBatch {
  std::vector<std::vector<double>> advantages;  // [trajectory][step], before masking
  std::vector<std::vector<bool>> schema_mask;   // true: contribution zeroed by schema masking
  std::vector<std::vector<bool>> logic_mask;    // true: zeroed by logical-consistency masking
  double batch_mean = 0.0;
  double batch_std = 0.0;

  /// Advantage after masks: 0 where either mask is set.
  double effective(std::size_t n, std::size_t t) const;
};

/// Standardizes every G over the whole batch with the population std. A batch whose
/// std is below 1e-12 yields all-zero advantages.
AdvantageBatch rebn_advantages(const std::vector<TrajectoryReturns>& returns);

/// Zeroes positive advantages of flagged steps; negative ones pass through.
AdvantageBatch apply_masks(AdvantageBatch batch, const std::vector<std::vector<StepFlags>>& flags);

/// (1/N) sum_n sum_t A_eff * logp
double objective(const AdvantageBatch& batch, const std::vector<std::vector<double>>& logprobs);

nlohmann::ordered_json to_json(const AdvantageBatch& batch);

}  // namespace aida
