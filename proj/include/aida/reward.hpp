#pragma once

#include <memory>
#include <string>
#include <vector>

#include "aida/catalog.hpp"
#include "aida/environment.hpp"
#include "aida/numerals.hpp"
#include "aida/state.hpp"
#include "aida/step.hpp"
#include "aida/warehouse.hpp"

namespace aida {

struct HallucinationCount {
  int n = 0;  // ungrounded numerals
  int m = 0;  // grounded numerals
};

/// clip(0.01 m - 0.1 n, -1.0, 0.1)
double hallucination_value(const HallucinationCount& count);
HallucinationCount count_hallucinations(std::string_view text, const GroundingIndex& grounding);
std::pair<double, HallucinationCount> hallucination_penalty(std::string_view text,
                                                            const GroundingIndex& grounding);

/// scale * clip((L - L_min) / (L_max - L_min), 0, 1)
double length_reward(double length, double l_min, double l_max, double scale = 0.1);
std::size_t whitespace_tokens(std::string_view text);

struct GainParams {
  double eta = 0.4;
  double invalid_penalty = -2.0;
  double base_new = 1.0;
  double base_refuted = 0.7;
  double base_reinforced = 0.5;
  double floor = 0.1;

  double base(InsightStatus status) const;
};

/// Gain of one judged insight: valid -> max(B - eta * H, floor), invalid -> penalty.
double insight_gain(InsightStatus status, bool valid, int h, const GainParams& params);

struct JudgeVerdict {
  bool valid = false;
  std::string rationale;
};

struct JudgeRequest {
  std::string question;
  std::vector<InsightDelta> previous;  // C_prev
  std::string action;
  std::string observation;
  InsightDelta candidate;
};

class JudgeClient {
 public:
  virtual ~JudgeClient() = default;
  /// Throws on failure; callers treat a throw as "no verdict".
  virtual JudgeVerdict judge(const JudgeRequest& request) = 0;

  /// Fills the prompt template: {question}, first {insight} = previous insights,
  /// {action}, {obs}, second {insight} = candidate.
  std::string render_prompt(const JudgeRequest& request) const;
  static const std::string& prompt_template();
};

/// Rule-based judge over planted ground truth: Valid iff the insight names a planted
/// cause (metric and segment) whose share of the effect is at least `valid_share`.
class MockJudge : public JudgeClient {
 public:
  MockJudge(std::vector<GroundTruth> truths, const Catalog& catalog, double valid_share = 0.5)
      : truths_(std::move(truths)), catalog_(catalog), valid_share_(valid_share) {}
  JudgeVerdict judge(const JudgeRequest& request) override;

 private:
  bool names_metric(std::string_view text, const std::string& metric) const;
  std::vector<GroundTruth> truths_;
  const Catalog& catalog_;
  double valid_share_;
};

/// Chat-completions client; off unless an endpoint is configured.
class RemoteJudge : public JudgeClient {
 public:
  /// endpoint like "http://host:port/v1/chat/completions"
  explicit RemoteJudge(std::string endpoint, std::string model = "judge", int timeout_s = 60);
  JudgeVerdict judge(const JudgeRequest& request) override;

  /// Reads "Final Answer: Valid|Invalid" from a completion; throws when absent.
  static JudgeVerdict parse_completion(const std::string& content);

 private:
  std::string endpoint_;
  std::string model_;
  int timeout_s_;
};

struct InsightJudgement {
  std::string title;
  InsightStatus status = InsightStatus::New;
  bool valid = false;
  int h = 0;  // ungrounded numerals in title + proof
  double value = 0.0;
  std::string rationale;
};

struct GainResult {
  double value = 0.0;
  std::vector<InsightJudgement> details;
  bool judge_failed = false;
  std::string judge_error;
};

/// Sums per-insight gains over the step's incremental insights (Unchanged entries are skipped).
GainResult discovery_gain(const std::vector<InsightDelta>& new_insights, JudgeClient& judge,
                          const AnalysisState& prev_state, const GroundingIndex& grounding,
                          const GainParams& params, const std::string& action = {},
                          const std::string& observation = {});

struct LengthBounds {
  double state_min = 500, state_max = 1000;
  double action_min = 500, action_max = 700;
  double scale = 0.1;
};

struct RewardBreakdown {
  double step_format = 0;
  double hallu_state = 0;
  double hallu_action = 0;
  double schema_insight = 0;
  double schema_key_data = 0;
  double mermaid_render = 0;
  double json_schema = 0;
  double script_exec = 0;
  double length_state = 0;
  double length_action = 0;
  double discovery_gain = 0;
  double intermediate_total = 0;  // R^I
  double accumulated_total = 0;   // R^A

  HallucinationCount count_state;
  HallucinationCount count_action;
  std::vector<InsightJudgement> judgements;
  bool judge_failed = false;
  bool syntax_failed = false;
  bool has_invalid_insight = false;

  void total();
};

ordered_json to_json(const RewardBreakdown& r);
RewardBreakdown reward_from_json(const ordered_json& j);

struct StepScoringInput {
  const StepOutput& step;
  const AnalysisState& prev_state;
  const GroundingIndex& grounding;  // numerals of environment observations before this step
  const Observation* observation = nullptr;  // result of this step's tool call
  bool state_update_ok = true;               // apply_update accepted the insight block
  bool key_data_refs_ok = true;              // every payload_ref resolved
  std::string question;
};

RewardBreakdown score_step(const StepScoringInput& input, JudgeClient& judge,
                           const GainParams& params = {}, const LengthBounds& bounds = {});

}  // namespace aida
