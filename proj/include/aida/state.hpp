#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "aida/error.hpp"
#include "aida/numerals.hpp"

namespace aida {

using ordered_json = nlohmann::ordered_json;

enum class InsightStatus { New, Unchanged, Reinforced, Refuted };
const char* to_string(InsightStatus status);
std::optional<InsightStatus> insight_status_from_string(std::string_view text);

struct Insight {
  std::string title;
  InsightStatus status = InsightStatus::New;
  std::string proof;
  int first_seen_step = 0;
  int last_updated_step = 0;
  std::vector<InsightStatus> history;  // every status the title has carried, in order
  bool corrected = false;              // set once the insight has been refuted

  friend bool operator==(const Insight&, const Insight&) = default;
};

/// One entry of an insight block: the agent's delta for a single title.
struct InsightDelta {
  std::string title;
  InsightStatus status = InsightStatus::New;
  std::string proof;

  friend bool operator==(const InsightDelta&, const InsightDelta&) = default;
};

enum class PayloadType { CSV, TXT };
const char* to_string(PayloadType type);

struct ObservationStructure {
  std::vector<std::string> metrics;
  std::vector<std::string> dimensions;
  std::vector<std::string> filters;

  friend bool operator==(const ObservationStructure&, const ObservationStructure&) = default;
};

struct ObservationEntry {
  int index = 0;
  PayloadType type = PayloadType::CSV;
  std::string description;
  ObservationStructure structure;
  std::string payload_ref;
  std::vector<double> numerals;  // sorted, duplicate-free

  friend bool operator==(const ObservationEntry&, const ObservationEntry&) = default;
};

struct GraphNode {
  std::string id;
  std::string label;
  friend bool operator==(const GraphNode&, const GraphNode&) = default;
};

struct GraphEdge {
  std::string from;
  std::string to;
  std::string label;
  friend bool operator==(const GraphEdge&, const GraphEdge&) = default;
};

struct ReasoningGraph {
  std::string source_text;
  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;
  bool parse_ok = false;
  std::vector<std::string> diagnostics;

  friend bool operator==(const ReasoningGraph&, const ReasoningGraph&) = default;
};

/// Checks the supported flowchart subset: a `graph|flowchart TD|LR` header, then lines
/// of `ID`, `ID[label]` and `A --> B` / `A -->|label| B` chains; `%%` starts a comment.
ReasoningGraph validate_mermaid(std::string_view text);

struct StateUpdate {
  std::vector<InsightDelta> insight_updates;
  std::vector<ObservationEntry> observation_appends;  // index is assigned on apply
  std::optional<std::string> graph_text;
};

struct AnalysisState {
  std::map<std::string, std::string> id;
  std::string q;
  std::vector<Insight> insights;
  std::vector<ObservationEntry> observations;
  ReasoningGraph graph;
  int step_index = 0;

  const Insight* find_insight(std::string_view title) const;

  friend bool operator==(const AnalysisState&, const AnalysisState&) = default;
};

/// Merges an update into a copy of `state`. Throws Error(transition) for New on an
/// existing title or a non-New status on a missing one, and Error(schema) for an empty
/// title or a missing proof. The step index is left to the caller.
AnalysisState apply_update(const AnalysisState& state, const StateUpdate& update);

GroundingIndex grounding_index(const AnalysisState& state);

ordered_json to_json(const AnalysisState& state);
ordered_json to_json(const Insight& insight);
ordered_json to_json(const InsightDelta& delta);
ordered_json to_json(const ObservationEntry& entry);

/// Plain-text rendering of a state, used as the episode's final report.
std::string render_report(const AnalysisState& state);

}  // namespace aida
