#include "aida/step.hpp"

#include <algorithm>

#include "aida/dsl.hpp"

namespace aida {

const char* to_string(Tool tool) { return tool == Tool::dsl2data ? "dsl2data" : "python"; }

ordered_json ToolCall::to_json() const {
  return {{"name", aida::to_string(tool)}, {"arguments", arguments}};
}

ToolCall parse_tool_call(std::string_view body) {
  ToolCall call;
  ordered_json j;
  try {
    j = ordered_json::parse(body);
  } catch (const ordered_json::exception& e) {
    call.diagnostic = std::string("tool_call is not valid JSON: ") + e.what();
    return call;
  }
  if (!j.is_object() || !j.contains("name") || !j["name"].is_string()) {
    call.diagnostic = "tool_call needs a string 'name'";
    return call;
  }
  for (const auto& [k, v] : j.items()) {
    if (k != "name" && k != "arguments") {
      call.diagnostic = "tool_call has unknown key '" + k + "'";
      return call;
    }
  }
  const auto name = j["name"].get<std::string>();
  if (name == "dsl2data") {
    call.tool = Tool::dsl2data;
  } else if (name == "python") {
    call.tool = Tool::python;
  } else {
    call.diagnostic = "unknown tool '" + name + "'";
    return call;
  }
  if (!j.contains("arguments") || !j["arguments"].is_object()) {
    call.diagnostic = "tool_call needs an 'arguments' object";
    return call;
  }
  call.arguments = j["arguments"];
  if (call.tool == Tool::dsl2data) {
    try {
      parse_query(call.arguments);
    } catch (const Error& e) {
      call.diagnostic = e.what();
      return call;
    }
  } else {
    const auto& a = call.arguments;
    if (a.size() != 1 || !a.contains("code") || !a["code"].is_string()) {
      call.diagnostic = "python arguments must be {\"code\": <string>}";
      return call;
    }
  }
  call.schema_ok = true;
  return call;
}

ordered_json to_json(const KeyDataEntry& e) {
  return {{"type", to_string(e.type)},
          {"description", e.description},
          {"structure",
           {{"metrics", e.structure.metrics},
            {"dimensions", e.structure.dimensions},
            {"filters", e.structure.filters}}},
          {"payload_ref", e.payload_ref}};
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

int tag_index(std::string_view name) {
  for (std::size_t i = 0; i < kBlockTags.size(); ++i) {
    if (name == kBlockTags[i]) return static_cast<int>(i);
  }
  return -1;
}

bool string_list(const ordered_json& j, std::vector<std::string>& out) {
  if (!j.is_array()) return false;
  for (const auto& v : j) {
    if (!v.is_string()) return false;
    out.push_back(v.get<std::string>());
  }
  return true;
}

bool only_keys(const ordered_json& j, std::initializer_list<const char*> keys) {
  for (const auto& [k, v] : j.items()) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* x) { return k == x; })) return false;
  }
  return true;
}

void parse_insights(StepOutput& out, const std::string& body) {
  ordered_json j;
  try {
    j = ordered_json::parse(body);
  } catch (const ordered_json::exception&) {
    out.insight_schema_ok = false;
    out.block_diagnostics.push_back("insight block is not valid JSON");
    return;
  }
  if (j.is_object()) j = ordered_json::array({j});
  if (!j.is_array()) {
    out.insight_schema_ok = false;
    out.block_diagnostics.push_back("insight block must be a JSON array");
    return;
  }
  for (const auto& item : j) {
    if (!item.is_object() || !only_keys(item, {"title", "status", "proof"}) ||
        !item.contains("title") || !item["title"].is_string() || !item.contains("status") ||
        !item["status"].is_string() || (item.contains("proof") && !item["proof"].is_string())) {
      out.insight_schema_ok = false;
      out.block_diagnostics.push_back("insight entries need string title/status and optional proof");
      return;
    }
    const auto status = insight_status_from_string(item["status"].get<std::string>());
    if (!status) {
      out.insight_schema_ok = false;
      out.block_diagnostics.push_back("unknown insight status '" +
                                      item["status"].get<std::string>() + "'");
      return;
    }
    out.insights.push_back(
        {item["title"].get<std::string>(), *status, item.value("proof", std::string())});
  }
}

void parse_key_data(StepOutput& out, const std::string& body) {
  ordered_json j;
  try {
    j = ordered_json::parse(body);
  } catch (const ordered_json::exception&) {
    out.key_data_schema_ok = false;
    out.block_diagnostics.push_back("key_data block is not valid JSON");
    return;
  }
  if (j.is_object()) j = ordered_json::array({j});
  auto bad = [&](const std::string& why) {
    out.key_data_schema_ok = false;
    out.key_data.clear();
    out.block_diagnostics.push_back("key_data: " + why);
  };
  if (!j.is_array()) return bad("must be a JSON array");
  for (const auto& item : j) {
    if (!item.is_object() || !only_keys(item, {"type", "description", "structure", "payload_ref"})) {
      return bad("entries take type, description, structure, payload_ref");
    }
    KeyDataEntry e;
    const std::string type = item.value("type", std::string());
    if (type != "CSV" && type != "TXT") return bad("type must be CSV or TXT");
    e.type = type == "CSV" ? PayloadType::CSV : PayloadType::TXT;
    if (!item.contains("description") || !item["description"].is_string()) {
      return bad("description must be a string");
    }
    e.description = item["description"].get<std::string>();
    if (!item.contains("payload_ref") || !item["payload_ref"].is_string() ||
        item["payload_ref"].get<std::string>().empty()) {
      return bad("payload_ref must be a non-empty string");
    }
    e.payload_ref = item["payload_ref"].get<std::string>();
    if (!item.contains("structure") || !item["structure"].is_object()) {
      return bad("structure must be an object");
    }
    const auto& s = item["structure"];
    if (!only_keys(s, {"metrics", "dimensions", "filters"}) || !s.contains("metrics") ||
        !string_list(s["metrics"], e.structure.metrics) ||
        (s.contains("dimensions") && !string_list(s["dimensions"], e.structure.dimensions)) ||
        (s.contains("filters") && !string_list(s["filters"], e.structure.filters))) {
      return bad("structure takes string lists metrics, dimensions, filters");
    }
    out.key_data.push_back(std::move(e));
  }
}

}  // namespace

const std::optional<std::string>& StepOutput::block(std::string_view tag) const {
  static const std::optional<std::string> kNone;
  const int i = tag_index(tag);
  return i < 0 ? kNone : blocks[static_cast<std::size_t>(i)];
}

StepOutput parse_step(std::string_view raw) {
  StepOutput out;
  bool ok = true;
  auto diag = [&](std::string msg) {
    out.block_diagnostics.push_back(std::move(msg));
    ok = false;
  };

  int open = -1;
  std::size_t body_start = 0;
  std::size_t outside_from = 0;
  int last_closed = -1;
  std::size_t pos = 0;
  while ((pos = raw.find('<', pos)) != std::string_view::npos) {
    const bool closing = pos + 1 < raw.size() && raw[pos + 1] == '/';
    const std::size_t name_start = pos + (closing ? 2 : 1);
    const std::size_t gt = raw.find('>', name_start);
    if (gt == std::string_view::npos) break;
    const int tag = tag_index(raw.substr(name_start, gt - name_start));
    if (tag < 0) {
      ++pos;
      continue;
    }
    const std::string name = kBlockTags[static_cast<std::size_t>(tag)];
    if (!closing) {
      if (open >= 0) {
        diag("tag <" + name + "> opened inside <" + kBlockTags[static_cast<std::size_t>(open)] + ">");
      } else {
        if (!trim(raw.substr(outside_from, pos - outside_from)).empty()) {
          diag("text outside of tagged blocks");
        }
        open = tag;
        body_start = gt + 1;
      }
    } else if (open != tag) {
      diag("closing </" + name + "> without matching open tag");
    } else {
      auto& slot = out.blocks[static_cast<std::size_t>(tag)];
      if (slot) {
        diag("duplicate <" + name + "> block");
      } else {
        slot = trim(raw.substr(body_start, pos - body_start));
        if (tag < last_closed) diag("block <" + name + "> is out of canonical order");
        last_closed = std::max(last_closed, tag);
      }
      open = -1;
      outside_from = gt + 1;
    }
    pos = gt + 1;
  }
  if (open >= 0) diag("unclosed <" + std::string(kBlockTags[static_cast<std::size_t>(open)]) + ">");
  else if (!trim(raw.substr(std::min(outside_from, raw.size()))).empty()) {
    diag("text outside of tagged blocks");
  }
  for (const char* required : {"state_think", "action_think", "tool_call"}) {
    if (!out.block(required)) diag(std::string("missing ") + required);
  }

  if (const auto& b = out.block("insight")) parse_insights(out, *b);
  if (const auto& b = out.block("key_data")) parse_key_data(out, *b);
  if (const auto& b = out.block("tool_call")) out.tool_call = parse_tool_call(*b);
  out.format_ok = ok;
  return out;
}

std::string render_step(const StepOutput& step) {
  std::string out;
  for (std::size_t i = 0; i < kBlockTags.size(); ++i) {
    if (!step.blocks[i]) continue;
    out += std::string("<") + kBlockTags[i] + ">\n" + *step.blocks[i] + "\n</" + kBlockTags[i] +
           ">\n";
  }
  return out;
}

std::string render_draft(const StepDraft& d) {
  StepOutput s;
  s.blocks[0] = d.state_think;
  if (!d.insights.empty()) {
    ordered_json a = ordered_json::array();
    for (const auto& i : d.insights) a.push_back(to_json(i));
    s.blocks[1] = a.dump(2);
  }
  if (!d.key_data.empty()) {
    ordered_json a = ordered_json::array();
    for (const auto& k : d.key_data) a.push_back(to_json(k));
    s.blocks[2] = a.dump(2);
  }
  s.blocks[3] = d.graph;
  s.blocks[4] = d.action_think;
  s.blocks[5] = d.tool_call.dump();
  return render_step(s);
}

ordered_json to_json(const StepOutput& step) {
  ordered_json blocks = ordered_json::object();
  for (std::size_t i = 0; i < kBlockTags.size(); ++i) {
    if (step.blocks[i]) blocks[kBlockTags[i]] = *step.blocks[i];
  }
  return {{"format_ok", step.format_ok},
          {"diagnostics", step.block_diagnostics},
          {"insight_schema_ok", step.insight_schema_ok},
          {"key_data_schema_ok", step.key_data_schema_ok},
          {"blocks", blocks}};
}

}  // namespace aida
