#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "aida/state.hpp"

namespace aida {

enum class Tool { dsl2data, python };
const char* to_string(Tool tool);

/// Tag names in canonical order.
inline constexpr std::array<const char*, 6> kBlockTags = {
    "state_think", "insight", "key_data", "graph", "action_think", "tool_call"};

struct ToolCall {
  Tool tool = Tool::dsl2data;
  ordered_json arguments = ordered_json::object();
  bool schema_ok = false;
  std::string diagnostic;

  /// Wire form: {"name": "<tool>", "arguments": {...}}
  ordered_json to_json() const;
};

/// Validates a tool_call block body. Never throws.
ToolCall parse_tool_call(std::string_view body);

/// One key_data entry. `payload_ref` is "obs:<k>" (the k-th environment observation
/// of the episode) or a data_path produced by an earlier query.
struct KeyDataEntry {
  PayloadType type = PayloadType::CSV;
  std::string description;
  ObservationStructure structure;
  std::string payload_ref;

  friend bool operator==(const KeyDataEntry&, const KeyDataEntry&) = default;
};

ordered_json to_json(const KeyDataEntry& entry);

struct StepOutput {
  // Raw block bodies, trimmed of surrounding whitespace; absent blocks are nullopt.
  std::array<std::optional<std::string>, kBlockTags.size()> blocks;

  std::vector<InsightDelta> insights;
  bool insight_schema_ok = true;
  std::vector<KeyDataEntry> key_data;
  bool key_data_schema_ok = true;
  std::optional<ToolCall> tool_call;

  bool format_ok = false;
  std::vector<std::string> block_diagnostics;

  const std::optional<std::string>& block(std::string_view tag) const;
  std::string state_think() const { return block("state_think").value_or(""); }
  std::string action_think() const { return block("action_think").value_or(""); }
  const std::optional<std::string>& graph_block() const { return block("graph"); }
};

/// Splits a raw turn into tagged blocks. Never throws: malformed input yields
/// format_ok = false with diagnostics.
StepOutput parse_step(std::string_view raw);

/// Inverse of parse_step for well-formed outputs: present blocks in canonical order.
std::string render_step(const StepOutput& step);

/// Convenience for policies: builds blocks from parts and renders them.
struct StepDraft {
  std::string state_think;
  std::vector<InsightDelta> insights;
  std::vector<KeyDataEntry> key_data;
  std::optional<std::string> graph;
  std::string action_think;
  ordered_json tool_call;
};
std::string render_draft(const StepDraft& draft);

ordered_json to_json(const StepOutput& step);

}  // namespace aida
