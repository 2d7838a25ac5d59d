#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "aida/environment.hpp"
#include "aida/reward.hpp"
#include "aida/state.hpp"
#include "aida/step.hpp"

namespace aida {

/// Stands in for the LLM policy: produces the raw text of the next turn, or nullopt
/// to end the episode early.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::optional<std::string> next_step(const AnalysisState& state,
                                               const std::vector<Observation>& history) = 0;
};

/// Replays the `raw_output` fields of a JSONL file in order.
class ReplayPolicy : public Policy {
 public:
  explicit ReplayPolicy(const std::filesystem::path& file);
  explicit ReplayPolicy(std::vector<std::string> turns) : turns_(std::move(turns)) {}
  std::optional<std::string> next_step(const AnalysisState&, const std::vector<Observation>&) override;

 private:
  std::vector<std::string> turns_;
  std::size_t next_ = 0;
};

/// Rule-based explorer: overview KPIs with week-over-week deltas, pick the KPI the question
/// names if it moved past the threshold (else the largest mover), drill it by attribute dimensions in seed-shuffled order (two small
/// dimensions share one query when their cross product fits the preview), then state the
/// insight for the dominant segment while a script computes its share.
class ExplorerPolicy : public Policy {
 public:
  struct Options {
    std::uint64_t seed = 42;
    int max_steps = 10;
    bool probe = false;  // spend the first two steps on deliberately invalid queries
    double move_threshold_pct = 10.0;
    double min_share = 0.5;
    double min_lift = 0.2;  // share of the change minus share of the prior base
  };
  ExplorerPolicy(const Catalog& catalog, Options options);
  std::optional<std::string> next_step(const AnalysisState& state,
                                       const std::vector<Observation>& history) override;

 private:
  struct Finding {
    std::string dimension;
    std::string segment;
    double delta = 0.0;
    double total_delta = 0.0;
    double prior = 0.0;
    double prior_total = 0.0;
    int observation = 0;
    double pct = 0.0;  // the segment's own week-over-week change, as reported
  };
  enum class Stage { probe_unknown, probe_pair, overview, log_overview, drill, focus, report, done };
  enum class Await { nothing, trade_overview, log_overview, drill, focus };

  ordered_json query(const AnalysisState& s, const std::vector<std::string>& metrics,
                     const std::vector<std::string>& dimensions) const;
  std::optional<std::string> choose_metric(const Observation& obs, const std::vector<std::string>& metrics,
                                           double& best_pct) const;
  std::optional<Finding> inspect_drill(const Observation& obs, const std::string& dimension,
                                       int index) const;
  void begin_drill();
  std::string digest(const Observation* last, int last_index);

  const Catalog& catalog_;
  Options options_;
  Stage stage_ = Stage::overview;
  Await awaiting_ = Await::nothing;
  int steps_ = 0;
  std::string metric_;
  std::string asked_metric_;  // KPI named in the question, if any
  double metric_pct_ = 0.0;
  std::vector<std::vector<std::string>> drills_;
  std::size_t next_drill_ = 0;
  std::vector<std::string> pending_;
  std::optional<Finding> finding_;
};

inline const std::vector<std::string> kTradeKpis = {"netGMV", "orderCount", "discountAmount",
                                                    "deliveryMinutes"};
inline const std::vector<std::string> kLogKpis = {"exposureCount", "convertedSessionCount",
                                                  "sessionCount", "clickCount"};

struct StepRecord {
  int step_index = 0;
  std::string raw_output;
  StepOutput parsed;
  std::optional<Observation> observation;
  std::string state_update_error;
  RewardBreakdown reward;
};

struct Trajectory {
  ordered_json header;  // episode.json contents
  AnalysisState initial_state;
  std::vector<StepRecord> steps;
  AnalysisState final_state;
  std::vector<AnalysisState> states;  // state after each step
};

ordered_json to_json(const StepRecord& record);

/// Applies one turn: parse, merge state, act (or reuse a recorded observation), score.
/// `observations` is the episode's environment history and is extended in place.
StepRecord play_step(int step_index, const std::string& raw, AnalysisState& state,
                     std::vector<Observation>& observations, GroundingIndex& grounding,
                     JudgeClient& judge, Environment* env,
                     const std::optional<Observation>& recorded = std::nullopt);

/// The closed loop for at most `max_steps` turns.
Trajectory run_loop(Policy& policy, Environment& env, JudgeClient& judge, AnalysisState initial,
                    int max_steps);

struct EpisodeConfig {
  std::filesystem::path catalog_path;
  std::filesystem::path warehouse_path;
  std::string scenario_id;  // empty: first scenario stored in the warehouse
  std::string question;     // empty: derived from the scenario
  std::map<std::string, std::string> id;
  enum class PolicyKind { replay, explorer } policy = PolicyKind::explorer;
  std::filesystem::path replay_file;
  std::uint64_t explorer_seed = 42;
  bool probe = false;
  int max_steps = 10;
  enum class JudgeKind { mock, remote } judge = JudgeKind::mock;
  std::string judge_endpoint;
  std::chrono::milliseconds budget = std::chrono::milliseconds(60000);
  std::filesystem::path out_dir;
  SandboxOptions sandbox;

  /// Throws Error(config) before anything runs.
  void validate() const;
};

/// Runs one episode and writes trajectory.jsonl, state_NNN.json, final_state.json,
/// report.txt and episode.json into config.out_dir.
Trajectory run_episode(const EpisodeConfig& config);

void write_trajectory(const std::filesystem::path& dir, const Trajectory& trajectory);
Trajectory load_trajectory(const std::filesystem::path& dir);

/// Recomputes every reward from the logged raw outputs and observations.
Trajectory rescore(const Trajectory& logged, JudgeClient& judge);

/// Mock judge backed by the ground truth stored in an episode header.
std::unique_ptr<JudgeClient> judge_for(const ordered_json& header, const Catalog& catalog);

}  // namespace aida
