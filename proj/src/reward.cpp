#include "aida/reward.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace aida {

double hallucination_value(const HallucinationCount& c) {
  return std::clamp(0.01 * c.m - 0.1 * c.n, -1.0, 0.1);
}

HallucinationCount count_hallucinations(std::string_view text, const GroundingIndex& grounding) {
  HallucinationCount c;
  for (const auto& num : extract_numerals(text)) {
    if (grounding.grounds(num)) ++c.m;
    else ++c.n;
  }
  return c;
}

std::pair<double, HallucinationCount> hallucination_penalty(std::string_view text,
                                                            const GroundingIndex& grounding) {
  const auto c = count_hallucinations(text, grounding);
  return {hallucination_value(c), c};
}

double length_reward(double length, double l_min, double l_max, double scale) {
  if (!(l_min < l_max)) throw Error(ErrorKind::invalid_value, "length_bounds", "L_min must be < L_max");
  return scale * std::clamp((length - l_min) / (l_max - l_min), 0.0, 1.0);
}

std::size_t whitespace_tokens(std::string_view text) {
  std::size_t n = 0;
  bool in_token = false;
  for (char ch : text) {
    const bool space = std::isspace(static_cast<unsigned char>(ch)) != 0;
    if (!space && !in_token) ++n;
    in_token = !space;
  }
  return n;
}

double GainParams::base(InsightStatus status) const {
  switch (status) {
    case InsightStatus::New: return base_new;
    case InsightStatus::Refuted: return base_refuted;
    case InsightStatus::Reinforced: return base_reinforced;
    case InsightStatus::Unchanged: return 0.0;
  }
  return 0.0;
}

double insight_gain(InsightStatus status, bool valid, int h, const GainParams& p) {
  if (!valid) return p.invalid_penalty;
  return std::max(p.base(status) - p.eta * h, p.floor);
}

const std::string& JudgeClient::prompt_template() {
  static const std::string text = [] {
    std::filesystem::path path = std::filesystem::path(AIDA_DATA_DIR) / "judge_prompt.txt";
    if (const char* dir = std::getenv("AIDA_DATA_DIR")) path = std::filesystem::path(dir) / "judge_prompt.txt";
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, path.string(), "judge prompt template not found: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }();
  return text;
}

std::string JudgeClient::render_prompt(const JudgeRequest& r) const {
  std::string previous;
  for (const auto& p : r.previous) {
    previous += "\n  - [" + std::string(to_string(p.status)) + "] " + p.title + ": " + p.proof;
  }
  if (previous.empty()) previous = "none";
  const std::string candidate =
      "[" + std::string(to_string(r.candidate.status)) + "] " + r.candidate.title + ": " + r.candidate.proof;

  std::string out;
  const std::string& t = prompt_template();
  int insight_seen = 0;
  std::size_t pos = 0;
  while (pos < t.size()) {
    const auto open = t.find('{', pos);
    if (open == std::string::npos) {
      out.append(t, pos, std::string::npos);
      break;
    }
    out.append(t, pos, open - pos);
    const auto close = t.find('}', open);
    const std::string name = close == std::string::npos ? "" : t.substr(open + 1, close - open - 1);
    if (name == "question") out += r.question;
    else if (name == "action") out += r.action;
    else if (name == "obs") out += r.observation;
    else if (name == "insight") out += insight_seen++ == 0 ? previous : candidate;
    else {
      out += '{';
      pos = open + 1;
      continue;
    }
    pos = close + 1;
  }
  return out;
}

namespace {

bool contains_word(std::string_view haystack, std::string_view needle) {
  if (needle.empty()) return false;
  const std::string h = lower(haystack);
  const std::string n = lower(needle);
  auto word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
  for (std::size_t pos = h.find(n); pos != std::string::npos; pos = h.find(n, pos + 1)) {
    const bool left = pos == 0 || !word(h[pos - 1]) || !word(n.front());
    const std::size_t end = pos + n.size();
    const bool right = end >= h.size() || !word(h[end]) || !word(n.back());
    if (left && right) return true;
  }
  return false;
}

}  // namespace

bool MockJudge::names_metric(std::string_view text, const std::string& metric) const {
  if (contains_word(text, metric)) return true;
  if (const MetricDef* m = catalog_.find_metric(metric); m && contains_word(text, m->display_name)) {
    return true;
  }
  for (const auto& a : catalog_.aliases()) {
    if (a.kind == NameKind::metric && a.canonical_name == metric && contains_word(text, a.alias)) {
      return true;
    }
  }
  return false;
}

JudgeVerdict MockJudge::judge(const JudgeRequest& r) {
  const auto& c = r.candidate;
  if (c.proof.empty()) return {false, "Invalid: the insight carries no proof."};
  const auto same_title = [&](const InsightDelta& p) { return p.title == c.title; };
  if (c.status == InsightStatus::New &&
      std::any_of(r.previous.begin(), r.previous.end(), same_title)) {
    return {false, "Invalid: duplicates an earlier insight title."};
  }
  const std::string text = c.title + "\n" + c.proof;
  const PlantedCause* best = nullptr;
  for (const auto& gt : truths_) {
    for (const auto& cause : gt.planted_causes) {
      if (names_metric(text, cause.metric) && contains_word(text, cause.segment) &&
          (best == nullptr || cause.share_of_effect > best->share_of_effect)) {
        best = &cause;
      }
    }
  }
  if (best == nullptr) return {false, "Invalid: does not isolate a planted cause."};
  if (best->share_of_effect < valid_share_) {
    return {false, "Invalid: " + best->dimension + "=" + best->segment + " carries only a minor share of the effect."};
  }
  if (c.status == InsightStatus::New) {
    for (const auto& p : r.previous) {
      const std::string prev = p.title + "\n" + p.proof;
      if (names_metric(prev, best->metric) && contains_word(prev, best->segment)) {
        return {false, "Invalid: redundant with an earlier insight."};
      }
    }
  }
  return {true, "Valid: isolates the dominant cause " + best->dimension + "=" + best->segment + "."};
}

GainResult discovery_gain(const std::vector<InsightDelta>& new_insights, JudgeClient& judge,
                          const AnalysisState& prev_state, const GroundingIndex& grounding,
                          const GainParams& params, const std::string& action,
                          const std::string& observation) {
  GainResult out;
  std::vector<InsightDelta> running;
  for (const auto& i : prev_state.insights) running.push_back({i.title, i.status, i.proof});
  for (const auto& c : new_insights) {
    if (c.status == InsightStatus::Unchanged) continue;
    InsightJudgement j;
    j.title = c.title;
    j.status = c.status;
    j.h = count_hallucinations(c.title + "\n" + c.proof, grounding).n;
    JudgeVerdict verdict;
    try {
      verdict = judge.judge({prev_state.q, running, action, observation, c});
    } catch (const std::exception& e) {
      out.judge_failed = true;
      out.judge_error = e.what();
      out.value = 0.0;
      out.details.clear();
      return out;
    }
    j.valid = verdict.valid;
    j.rationale = verdict.rationale;
    j.value = insight_gain(c.status, j.valid, j.h, params);
    out.value += j.value;
    out.details.push_back(std::move(j));
    running.push_back(c);
  }
  return out;
}

void RewardBreakdown::total() {
  intermediate_total = step_format + hallu_state + hallu_action + schema_insight +
                       schema_key_data + mermaid_render + json_schema + script_exec;
  accumulated_total = length_state + length_action + discovery_gain;
}

RewardBreakdown score_step(const StepScoringInput& in, JudgeClient& judge, const GainParams& params,
                           const LengthBounds& bounds) {
  const StepOutput& s = in.step;
  RewardBreakdown r;
  r.step_format = s.format_ok ? 0.0 : -1.0;

  const std::string state_think = s.state_think();
  const std::string action_think = s.action_think();
  std::tie(r.hallu_state, r.count_state) = hallucination_penalty(state_think, in.grounding);
  std::tie(r.hallu_action, r.count_action) = hallucination_penalty(action_think, in.grounding);

  const bool insight_ok = s.insight_schema_ok && in.state_update_ok;
  if (s.block("insight") && !insight_ok) r.schema_insight = -1.0;
  if (s.block("key_data") && !(s.key_data_schema_ok && in.key_data_refs_ok)) r.schema_key_data = -1.0;
  if (const auto& g = s.graph_block(); g && !validate_mermaid(*g).parse_ok) r.mermaid_render = -1.0;
  if (s.tool_call && !s.tool_call->schema_ok) r.json_schema = -1.0;
  if (in.observation && in.observation->tool == Tool::python && !in.observation->schema_error &&
      !(in.observation->script && in.observation->script->exit_ok)) {
    r.script_exec = -1.0;
  }

  r.length_state = length_reward(static_cast<double>(whitespace_tokens(state_think)),
                                 bounds.state_min, bounds.state_max, bounds.scale);
  r.length_action = length_reward(static_cast<double>(whitespace_tokens(action_think)),
                                  bounds.action_min, bounds.action_max, bounds.scale);

  if (insight_ok && !s.insights.empty()) {
    const std::string action = s.tool_call ? s.tool_call->to_json().dump() : std::string();
    const std::string obs = in.observation ? in.observation->body_text() : std::string();
    GainResult g = discovery_gain(s.insights, judge, in.prev_state, in.grounding, params, action, obs);
    r.discovery_gain = g.value;
    r.judgements = std::move(g.details);
    r.judge_failed = g.judge_failed;
  }
  r.syntax_failed = r.step_format < 0 || r.schema_insight < 0 || r.schema_key_data < 0 ||
                    r.mermaid_render < 0 || r.json_schema < 0;
  r.has_invalid_insight = std::any_of(r.judgements.begin(), r.judgements.end(),
                                      [](const InsightJudgement& j) { return !j.valid; });
  r.total();
  return r;
}

ordered_json to_json(const RewardBreakdown& r) {
  ordered_json judgements = ordered_json::array();
  for (const auto& j : r.judgements) {
    judgements.push_back({{"title", j.title},
                          {"status", to_string(j.status)},
                          {"valid", j.valid},
                          {"h", j.h},
                          {"value", j.value},
                          {"rationale", j.rationale}});
  }
  return {{"step_format", r.step_format},
          {"hallu_state", r.hallu_state},
          {"hallu_action", r.hallu_action},
          {"schema_insight", r.schema_insight},
          {"schema_key_data", r.schema_key_data},
          {"mermaid_render", r.mermaid_render},
          {"json_schema", r.json_schema},
          {"script_exec", r.script_exec},
          {"length_state", r.length_state},
          {"length_action", r.length_action},
          {"discovery_gain", r.discovery_gain},
          {"intermediate_total", r.intermediate_total},
          {"accumulated_total", r.accumulated_total},
          {"hallucination_state", {{"n", r.count_state.n}, {"m", r.count_state.m}}},
          {"hallucination_action", {{"n", r.count_action.n}, {"m", r.count_action.m}}},
          {"judgements", judgements},
          {"judge_failed", r.judge_failed},
          {"syntax_failed", r.syntax_failed},
          {"has_invalid_insight", r.has_invalid_insight}};
}

RewardBreakdown reward_from_json(const ordered_json& j) {
  RewardBreakdown r;
  r.step_format = j.at("step_format").get<double>();
  r.hallu_state = j.at("hallu_state").get<double>();
  r.hallu_action = j.at("hallu_action").get<double>();
  r.schema_insight = j.at("schema_insight").get<double>();
  r.schema_key_data = j.at("schema_key_data").get<double>();
  r.mermaid_render = j.at("mermaid_render").get<double>();
  r.json_schema = j.at("json_schema").get<double>();
  r.script_exec = j.at("script_exec").get<double>();
  r.length_state = j.at("length_state").get<double>();
  r.length_action = j.at("length_action").get<double>();
  r.discovery_gain = j.at("discovery_gain").get<double>();
  r.count_state = {j.at("hallucination_state").at("n").get<int>(),
                   j.at("hallucination_state").at("m").get<int>()};
  r.count_action = {j.at("hallucination_action").at("n").get<int>(),
                    j.at("hallucination_action").at("m").get<int>()};
  for (const auto& x : j.at("judgements")) {
    InsightJudgement ij;
    ij.title = x.at("title").get<std::string>();
    ij.status = insight_status_from_string(x.at("status").get<std::string>()).value_or(InsightStatus::New);
    ij.valid = x.at("valid").get<bool>();
    ij.h = x.at("h").get<int>();
    ij.value = x.at("value").get<double>();
    ij.rationale = x.at("rationale").get<std::string>();
    r.judgements.push_back(std::move(ij));
  }
  r.judge_failed = j.at("judge_failed").get<bool>();
  r.syntax_failed = j.at("syntax_failed").get<bool>();
  r.has_invalid_insight = j.at("has_invalid_insight").get<bool>();
  r.total();
  return r;
}

}  // namespace aida
