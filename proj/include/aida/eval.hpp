#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "aida/catalog.hpp"
#include "aida/episode.hpp"

namespace aida {

struct JudgedInsight {
  std::string title;
  InsightStatus status = InsightStatus::New;
  std::optional<bool> valid;  // nullopt: no verdict, which score_trajectory rejects
  int h = 0;
};

/// Insights emitted at one step; Unchanged entries need no verdict.
using JudgedStep = std::vector<JudgedInsight>;

/// s = valid ? max(0, 1 - alpha*H) : -1
double insight_score(bool valid, int h, double alpha);

struct ScoreReport {
  double alpha = 0.5;
  // final s(c_i) per insight title, in first-seen order
  std::vector<std::pair<std::string, double>> insight_scores;
  std::vector<double> score;  // Score(t) over the insight set after step t
  std::vector<int> valid_count;
  std::vector<int> invalid_count;
  std::vector<int> hallucination_count;
};

/// The insight set after each step holds the latest verdict per title; a later
/// Reinforced or Refuted entry replaces the earlier verdict rather than adding to it.
ScoreReport score_trajectory(const std::vector<JudgedStep>& steps, double alpha = 0.5);
/// Steps whose state update failed contribute nothing.
std::vector<JudgedStep> judged_steps(const Trajectory& trajectory);

struct ExplorationProfile {
  std::map<Theme, std::set<std::pair<std::string, std::string>>> pairs;
  std::vector<int> violation_cumulative;  // one entry per step
  std::map<Violation::Kind, std::vector<int>> by_kind;  // cumulative, per step

  std::size_t pair_count(Theme theme) const;
};

/// Pairs come from calibrated queries that passed the boundary checks. A query with
/// violations adds exactly 1 to the cumulative count, and 1 to each kind it shows.
ExplorationProfile exploration_profile(const Trajectory& trajectory, const Catalog& catalog);

struct FilterReport {
  std::size_t total = 0;
  std::vector<std::size_t> kept;  // indices into the input
  std::size_t dropped_hallucination = 0;
  std::size_t dropped_invalid = 0;
  std::map<InsightStatus, std::size_t> status_histogram;  // over kept trajectories

  double proportion(InsightStatus status) const;
};

/// Drops trajectories whose insights carry any ungrounded numeral or any Invalid verdict.
FilterReport filter_trajectories(const std::vector<Trajectory>& dataset);

void write_score_csv(const std::filesystem::path& file, const ScoreReport& report);
void write_exploration_csv(const std::filesystem::path& file, const ExplorationProfile& profile);
void write_violations_csv(const std::filesystem::path& file, const ExplorationProfile& profile);

}  // namespace aida
