#include "aida/state.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace aida {

const char* to_string(InsightStatus status) {
  switch (status) {
    case InsightStatus::New: return "New";
    case InsightStatus::Unchanged: return "Unchanged";
    case InsightStatus::Reinforced: return "Reinforced";
    case InsightStatus::Refuted: return "Refuted";
  }
  return "?";
}

std::optional<InsightStatus> insight_status_from_string(std::string_view text) {
  for (auto s : {InsightStatus::New, InsightStatus::Unchanged, InsightStatus::Reinforced,
                 InsightStatus::Refuted}) {
    if (text == to_string(s)) return s;
  }
  return std::nullopt;
}

const char* to_string(PayloadType type) { return type == PayloadType::CSV ? "CSV" : "TXT"; }

namespace {

bool id_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

class MermaidParser {
 public:
  explicit MermaidParser(ReasoningGraph& g) : g_(g) {}

  bool header(std::string_view line) {
    std::istringstream in{std::string(line)};
    std::string kw;
    std::string dir;
    std::string rest;
    in >> kw >> dir;
    if (!(in >> rest)) rest.clear();
    if (!dir.empty() && dir.back() == ';') dir.pop_back();
    return (kw == "graph" || kw == "flowchart") && (dir == "TD" || dir == "LR") && rest.empty();
  }

  bool statement(std::string_view line, int lineno) {
    line_ = line;
    pos_ = 0;
    lineno_ = lineno;
    std::string prev;
    if (!node(prev)) return false;
    for (;;) {
      skip_space();
      if (at_end()) return true;
      if (!consume("-->")) return fail("expected '-->'");
      skip_space();
      std::string label;
      if (peek() == '|') {
        ++pos_;
        const auto close = line_.find('|', pos_);
        if (close == std::string_view::npos) return fail("unterminated edge label");
        label = trim(line_.substr(pos_, close - pos_));
        pos_ = close + 1;
      }
      std::string next;
      if (!node(next)) return false;
      g_.edges.push_back({prev, next, label});
      prev = next;
    }
  }

  bool fail(const std::string& msg) {
    g_.diagnostics.push_back("line " + std::to_string(lineno_) + ": " + msg);
    return false;
  }

  static std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
  }

 private:
  bool node(std::string& id) {
    skip_space();
    const std::size_t start = pos_;
    while (!at_end() && id_char(line_[pos_])) ++pos_;
    if (pos_ == start) return fail(at_end() ? "dangling edge: missing node" : "expected node id");
    id = std::string(line_.substr(start, pos_ - start));
    std::string label;
    if (peek() == '[') {
      ++pos_;
      const auto close = line_.find(']', pos_);
      if (close == std::string_view::npos) return fail("unterminated node label");
      label = trim(line_.substr(pos_, close - pos_));
      if (label.empty()) return fail("empty node label");
      pos_ = close + 1;
    }
    declare(id, label);
    skip_space();
    if (peek() == ';') {
      ++pos_;
      skip_space();
      if (!at_end()) return fail("text after ';'");
    }
    return true;
  }

  void declare(const std::string& id, const std::string& label) {
    for (auto& n : g_.nodes) {
      if (n.id == id) {
        if (!label.empty()) n.label = label;
        return;
      }
    }
    g_.nodes.push_back({id, label.empty() ? id : label});
  }

  bool consume(std::string_view tok) {
    if (line_.substr(pos_, tok.size()) != tok) return false;
    pos_ += tok.size();
    return true;
  }
  void skip_space() {
    while (!at_end() && (line_[pos_] == ' ' || line_[pos_] == '\t' || line_[pos_] == '\r')) ++pos_;
  }
  bool at_end() const { return pos_ >= line_.size(); }
  char peek() const { return at_end() ? '\0' : line_[pos_]; }

  ReasoningGraph& g_;
  std::string_view line_;
  std::size_t pos_ = 0;
  int lineno_ = 0;
};

}  // namespace

ReasoningGraph validate_mermaid(std::string_view text) {
  ReasoningGraph g;
  g.source_text = std::string(text);
  MermaidParser parser(g);
  bool seen_header = false;
  bool ok = true;
  int lineno = 0;
  std::size_t start = 0;
  while (ok && start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++lineno;
    std::string line = MermaidParser::trim(text.substr(start, end - start));
    start = end + 1;
    if (const auto c = line.find("%%"); c != std::string::npos) {
      line = MermaidParser::trim(std::string_view(line).substr(0, c));
    }
    if (line.empty()) continue;
    if (!seen_header) {
      if (!parser.header(line)) {
        ok = parser.fail("expected 'graph TD|LR' or 'flowchart TD|LR' header");
      }
      seen_header = true;
      continue;
    }
    ok = parser.statement(line, lineno);
  }
  if (ok && !seen_header) ok = parser.fail("empty graph text");
  if (ok && g.nodes.empty()) ok = parser.fail("graph declares no nodes");
  g.parse_ok = ok;
  if (!ok) {
    g.nodes.clear();
    g.edges.clear();
  }
  return g;
}

const Insight* AnalysisState::find_insight(std::string_view title) const {
  for (const auto& i : insights) {
    if (i.title == title) return &i;
  }
  return nullptr;
}

AnalysisState apply_update(const AnalysisState& state, const StateUpdate& update) {
  AnalysisState next = state;
  const int step = state.step_index;
  for (const auto& d : update.insight_updates) {
    if (d.title.empty()) throw Error(ErrorKind::schema, "title", "insight title is empty");
    auto it = std::find_if(next.insights.begin(), next.insights.end(),
                           [&](const Insight& i) { return i.title == d.title; });
    if (d.status != InsightStatus::Unchanged && d.proof.empty()) {
      throw Error(ErrorKind::schema, d.title,
                  std::string("insight '") + d.title + "' with status " + to_string(d.status) +
                      " needs a proof");
    }
    if (d.status == InsightStatus::New) {
      if (it != next.insights.end()) {
        throw Error(ErrorKind::transition, d.title, "New insight '" + d.title + "' already exists");
      }
      Insight fresh;
      fresh.title = d.title;
      fresh.status = InsightStatus::New;
      fresh.proof = d.proof;
      fresh.first_seen_step = step;
      fresh.last_updated_step = step;
      fresh.history = {InsightStatus::New};
      next.insights.push_back(std::move(fresh));
      continue;
    }
    if (it == next.insights.end()) {
      throw Error(ErrorKind::transition, d.title,
                  std::string(to_string(d.status)) + " on unknown insight '" + d.title + "'");
    }
    it->history.push_back(d.status);
    if (d.status == InsightStatus::Unchanged) continue;
    it->status = d.status;
    it->proof = d.proof;
    it->last_updated_step = step;
    if (d.status == InsightStatus::Refuted) it->corrected = true;
  }
  for (auto entry : update.observation_appends) {
    entry.index = static_cast<int>(next.observations.size());
    std::sort(entry.numerals.begin(), entry.numerals.end());
    entry.numerals.erase(std::unique(entry.numerals.begin(), entry.numerals.end()),
                         entry.numerals.end());
    next.observations.push_back(std::move(entry));
  }
  if (update.graph_text) next.graph = validate_mermaid(*update.graph_text);
  return next;
}

GroundingIndex grounding_index(const AnalysisState& state) {
  GroundingIndex index;
  for (const auto& o : state.observations) {
    for (double v : o.numerals) index.insert(v);
  }
  return index;
}

ordered_json to_json(const InsightDelta& d) {
  return {{"title", d.title}, {"status", to_string(d.status)}, {"proof", d.proof}};
}

ordered_json to_json(const Insight& i) {
  ordered_json history = ordered_json::array();
  for (auto s : i.history) history.push_back(to_string(s));
  return {{"title", i.title},
          {"status", to_string(i.status)},
          {"proof", i.proof},
          {"first_seen_step", i.first_seen_step},
          {"last_updated_step", i.last_updated_step},
          {"corrected", i.corrected},
          {"history", history}};
}

ordered_json to_json(const ObservationEntry& e) {
  ordered_json numerals = ordered_json::array();
  for (double v : e.numerals) numerals.push_back(v);
  return {{"index", e.index},
          {"type", to_string(e.type)},
          {"description", e.description},
          {"structure",
           {{"metrics", e.structure.metrics},
            {"dimensions", e.structure.dimensions},
            {"filters", e.structure.filters}}},
          {"payload_ref", e.payload_ref},
          {"numerals", numerals}};
}

ordered_json to_json(const AnalysisState& s) {
  ordered_json id = ordered_json::object();
  for (const auto& [k, v] : s.id) id[k] = v;
  ordered_json insights = ordered_json::array();
  for (const auto& i : s.insights) insights.push_back(to_json(i));
  ordered_json observations = ordered_json::array();
  for (const auto& o : s.observations) observations.push_back(to_json(o));
  ordered_json nodes = ordered_json::array();
  for (const auto& n : s.graph.nodes) nodes.push_back({{"id", n.id}, {"label", n.label}});
  ordered_json edges = ordered_json::array();
  for (const auto& e : s.graph.edges) {
    edges.push_back({{"from", e.from}, {"to", e.to}, {"label", e.label}});
  }
  return {{"step_index", s.step_index},
          {"id", id},
          {"q", s.q},
          {"insights", insights},
          {"observations", observations},
          {"graph",
           {{"source_text", s.graph.source_text},
            {"parse_ok", s.graph.parse_ok},
            {"nodes", nodes},
            {"edges", edges}}}};
}

std::string render_report(const AnalysisState& s) {
  std::ostringstream out;
  out << "Question: " << s.q << "\n";
  for (const auto& [k, v] : s.id) out << "  " << k << ": " << v << "\n";
  out << "Steps taken: " << s.step_index << "\n\n";
  out << "Findings (" << s.insights.size() << ")\n";
  int n = 0;
  for (const auto& i : s.insights) {
    out << "  " << ++n << ". [" << to_string(i.status) << "] " << i.title << "\n";
    out << "     " << i.proof << "\n";
  }
  if (s.insights.empty()) out << "  none\n";
  out << "\nEvidence (" << s.observations.size() << ")\n";
  for (const auto& o : s.observations) {
    out << "  #" << o.index << " " << to_string(o.type) << " " << o.description << " ("
        << o.payload_ref << ")\n";
  }
  if (s.graph.parse_ok) {
    out << "\nReasoning path\n";
    for (const auto& e : s.graph.edges) {
      std::string from = e.from;
      std::string to = e.to;
      for (const auto& node : s.graph.nodes) {
        if (node.id == e.from) from = node.label;
        if (node.id == e.to) to = node.label;
      }
      out << "  " << from << " -> " << to;
      if (!e.label.empty()) out << " (" << e.label << ")";
      out << "\n";
    }
  }
  return out.str();
}

}  // namespace aida
