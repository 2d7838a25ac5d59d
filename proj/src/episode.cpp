#include "aida/episode.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "aida/planner.hpp"
#include "aida/warehouse.hpp"

namespace aida {

ReplayPolicy::ReplayPolicy(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorKind::config, file.string(), "replay file not found: " + file.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      turns_.push_back(ordered_json::parse(line).at("raw_output").get<std::string>());
    } catch (const ordered_json::exception& e) {
      throw Error(ErrorKind::parse, file.string(),
                  file.string() + ":" + std::to_string(lineno) + ": " + e.what(), lineno);
    }
  }
}

std::optional<std::string> ReplayPolicy::next_step(const AnalysisState&, const std::vector<Observation>&) {
  if (next_ >= turns_.size()) return std::nullopt;
  return turns_[next_++];
}

namespace {

std::string one_decimal(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

std::string cell_text(const ordered_json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_number()) return format_double(v.get<double>());
  return {};
}

std::optional<double> number(const ordered_json& row, const std::string& key) {
  if (!row.contains(key) || !row[key].is_number()) return std::nullopt;
  return row[key].get<double>();
}

std::string entity_of(const AnalysisState& s) {
  for (const auto& [k, v] : s.id) {
    if (k.rfind("ds_", 0) != 0) return k + " " + v;
  }
  return "the target";
}

}  // namespace

ExplorerPolicy::ExplorerPolicy(const Catalog& catalog, Options options)
    : catalog_(catalog), options_(options) {
  if (options_.probe) stage_ = Stage::probe_unknown;
}

ordered_json ExplorerPolicy::query(const AnalysisState& s, const std::vector<std::string>& metrics,
                                   const std::vector<std::string>& dimensions) const {
  auto id = [&](const char* key) { return s.id.count(key) ? s.id.at(key) : std::string(); };
  ordered_json q;
  q["metric"] = metrics;
  q["ds"] = {id("ds_from"), id("ds_to")};
  q["dimension"] = dimensions;
  ordered_json conditions = ordered_json::array();
  for (const auto& [k, v] : s.id) {
    if (k.rfind("ds_", 0) == 0) continue;
    conditions.push_back({{"columnEName", k}, {"queryRule", "eq"}, {"params", {v}}});
  }
  if (!conditions.empty()) q["filter"] = {{"relation", "and"}, {"conditions", conditions}};
  q["limit"] = 100;
  q["compare"] = {"wow"};
  return {{"name", "dsl2data"}, {"arguments", q}};
}

std::optional<std::string> ExplorerPolicy::choose_metric(const Observation& obs,
                                                         const std::vector<std::string>& metrics,
                                                         double& best_pct) const {
  if (!obs.package || obs.status != ExecStatus::Success ||
      obs.package->execution_results.preview.empty()) {
    return std::nullopt;
  }
  const auto& row = obs.package->execution_results.preview.front();
  // The KPI the question asks about wins whenever it moved past the threshold, even if a
  // correlated metric moved slightly more.
  if (std::find(metrics.begin(), metrics.end(), asked_metric_) != metrics.end()) {
    const auto pct = number(row, asked_metric_ + "_wow_pct");
    if (pct && std::fabs(*pct) >= options_.move_threshold_pct) {
      best_pct = *pct;
      return asked_metric_;
    }
  }
  std::optional<std::string> best;
  for (const auto& m : metrics) {
    const auto pct = number(row, m + "_wow_pct");
    if (pct && (!best || std::fabs(*pct) > std::fabs(best_pct))) {
      best = m;
      best_pct = *pct;
    }
  }
  return best;
}

std::optional<ExplorerPolicy::Finding> ExplorerPolicy::inspect_drill(const Observation& obs,
                                                                     const std::string& dimension,
                                                                     int index) const {
  if (!obs.package || obs.status != ExecStatus::Success) return std::nullopt;
  // Rows may carry a second dimension; sum them into marginals of `dimension`.
  std::vector<Finding> segments;
  std::vector<int> parts;
  double total = 0.0;
  double prior_total = 0.0;
  for (const auto& row : obs.package->execution_results.preview) {
    const auto cur = number(row, metric_);
    const auto delta = number(row, metric_ + "_wow");
    if (!cur || !delta || !row.contains(dimension)) continue;
    const std::string seg = cell_text(row[dimension]);
    auto it = std::find_if(segments.begin(), segments.end(), [&](const Finding& f) { return f.segment == seg; });
    if (it == segments.end()) {
      segments.push_back({dimension, seg, 0, 0, 0, 0, index, number(row, metric_ + "_wow_pct").value_or(0.0)});
      parts.push_back(0);
      it = segments.end() - 1;
    }
    it->delta += *delta;
    it->prior += *cur - *delta;
    ++parts[static_cast<std::size_t>(it - segments.begin())];
    total += *delta;
    prior_total += *cur - *delta;
  }
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (parts[i] > 1) segments[i].pct = segments[i].prior != 0 ? segments[i].delta / segments[i].prior * 100 : 0;
  }
  if (total == 0.0 || prior_total == 0.0) return std::nullopt;
  // A segment swinging against the total harder than the total itself moved means the
  // breakdown reflects units migrating between buckets, not a concentrated cause.
  const double total_rate = total / prior_total;
  for (const auto& s : segments) {
    if (s.prior <= 0.0) continue;
    const double rate = s.delta / s.prior;
    if (rate * total_rate < 0.0 && std::fabs(rate) > std::fabs(total_rate)) return std::nullopt;
  }
  std::optional<Finding> best;
  for (auto s : segments) {
    s.total_delta = total;
    s.prior_total = prior_total;
    const double share = s.delta / total;
    const double base = s.prior / prior_total;
    if (share >= options_.min_share && share - base >= options_.min_lift &&
        (!best || share > best->delta / best->total_delta)) {
      best = s;
    }
  }
  return best;
}

void ExplorerPolicy::begin_drill() {
  std::vector<const DimensionDef*> dims;
  for (const auto& d : catalog_.dimensions()) {
    if (!d.filler && d.grain_class == GrainClass::attribute &&
        catalog_.compatible(metric_, d.canonical_name)) {
      dims.push_back(&d);
    }
  }
  const CounterRng rng(options_.seed);
  for (std::size_t i = dims.size(); i > 1; --i) {
    std::swap(dims[i - 1], dims[rng.bits(0x5eed, i) % i]);
  }
  auto size = [](const DimensionDef* d) {
    return d->enum_values ? d->enum_values->size() : std::size_t(kPreviewRows) + 1;
  };
  drills_.clear();
  for (const auto* d : dims) {
    auto& last = drills_.empty() ? drills_.emplace_back() : drills_.back();
    if (last.size() == 1 && size(catalog_.find_dimension(last[0])) * size(d) <= kPreviewRows) {
      last.push_back(d->canonical_name);
    } else if (last.empty()) {
      last.push_back(d->canonical_name);
    } else {
      drills_.push_back({d->canonical_name});
    }
  }
  next_drill_ = 0;
  stage_ = Stage::drill;
}

// Reads the observation produced by the previous turn and returns the opening sentence
// of the next state_think.
std::string ExplorerPolicy::digest(const Observation* last, int last_index) {
  const Await awaited = awaiting_;
  awaiting_ = Await::nothing;
  if (last == nullptr) return {};
  switch (awaited) {
    case Await::nothing:
      if (last->boundary_violation()) {
        return "Calibration rejected the last request as a boundary violation.";
      }
      return {};
    case Await::trade_overview: {
      double pct = 0.0;
      if (auto m = choose_metric(*last, kTradeKpis, pct)) {
        metric_ = *m;
        metric_pct_ = pct;
      } else {
        metric_ = kTradeKpis.front();
      }
      if (std::fabs(metric_pct_) >= options_.move_threshold_pct) {
        begin_drill();
        if (metric_ == asked_metric_) {
          return "The trade overview shows " + metric_ + " moving past the alert threshold week over week.";
        }
        return "The trade overview shows " + metric_ +
               " as the largest week-over-week mover, past the alert threshold.";
      }
      stage_ = Stage::log_overview;
      return "No trade KPI moved past the alert threshold.";
    }
    case Await::log_overview: {
      double pct = 0.0;
      if (auto m = choose_metric(*last, kLogKpis, pct); m && std::fabs(pct) > std::fabs(metric_pct_)) {
        metric_ = *m;
        metric_pct_ = pct;
      }
      begin_drill();
      return "Across trade and traffic KPIs the largest week-over-week mover is " + metric_ + ".";
    }
    case Await::drill: {
      const auto dims = std::move(pending_);
      pending_.clear();
      std::optional<Finding> best;
      for (const auto& dim : dims) {
        auto f = inspect_drill(*last, dim, last_index);
        if (f && (!best || f->delta / f->total_delta > best->delta / best->total_delta)) best = f;
      }
      std::string joined = dims.front();
      if (dims.size() > 1) joined += " and " + dims[1];
      if (best) {
        finding_ = best;
        stage_ = dims.size() > 1 ? Stage::focus : Stage::report;
        return "The breakdown by " + joined + " isolates " + best->dimension + " " + best->segment +
               ", which carries most of the " + metric_ + " change while holding a much smaller part of the prior-week base.";
      }
      return "The breakdown by " + joined + " shows no segment whose part of the " + metric_ +
             " change clearly exceeds its part of the prior-week base.";
    }
    case Await::focus:
      if (auto f = inspect_drill(*last, finding_->dimension, last_index)) finding_ = f;
      stage_ = Stage::report;
      return "The single-dimension view gives the exact figures for " + finding_->dimension + " " +
             finding_->segment + ".";
  }
  return {};
}

std::optional<std::string> ExplorerPolicy::next_step(const AnalysisState& state,
                                                     const std::vector<Observation>& history) {
  if (stage_ == Stage::done || steps_ >= options_.max_steps) return std::nullopt;
  const Observation* last = history.empty() ? nullptr : &history.back();
  const int next_index = static_cast<int>(history.size());
  const std::string who = entity_of(state);
  if (asked_metric_.empty()) {
    for (const auto* kpis : {&kTradeKpis, &kLogKpis}) {
      for (const auto& m : *kpis) {
        const auto at = state.q.find(m);
        const auto after = at + m.size();
        if (at != std::string::npos && (after == state.q.size() || !std::isalnum(static_cast<unsigned char>(state.q[after])))) {
          asked_metric_ = m;
        }
      }
    }
  }
  std::string opening = digest(last, next_index - 1);
  auto think = [&](const std::string& rest) { return opening.empty() ? rest : opening + " " + rest; };

  StepDraft d;
  switch (stage_) {
    case Stage::probe_unknown:
      d.state_think = think("Check how the environment treats a metric outside the catalog.");
      d.action_think = "Query an unknown metric for " + who + ".";
      d.tool_call = query(state, {"noSuchMetric"}, {});
      stage_ = Stage::probe_pair;
      break;
    case Stage::probe_pair:
      d.state_think = think("Next, check a trade metric against a traffic-only dimension.");
      d.action_think = "Break netGMV down by channel.";
      d.tool_call = query(state, {"netGMV"}, {"channel"});
      stage_ = Stage::overview;
      break;
    case Stage::overview:
      d.state_think = think("Start from the core trade KPIs of " + who + " in the target window.");
      d.action_think = "Pull week-over-week deltas for the trade KPIs.";
      d.tool_call = query(state, kTradeKpis, {});
      d.graph = "graph TD\n  Q[Question] --> K[KPI overview]";
      awaiting_ = Await::trade_overview;
      break;
    case Stage::log_overview:
      d.state_think = think("Check the traffic KPIs of " + who + " next.");
      d.action_think = "Pull week-over-week deltas for the traffic KPIs.";
      d.tool_call = query(state, kLogKpis, {});
      awaiting_ = Await::log_overview;
      break;
    case Stage::drill: {
      // keep one turn for the report, plus one for a focused query after a paired drill
      const int left = options_.max_steps - steps_;
      if (next_drill_ >= drills_.size() || left < 2) {
        stage_ = Stage::done;
        return std::nullopt;
      }
      auto& group = drills_[next_drill_];
      if (group.size() > 1 && left < 3) {
        drills_.insert(drills_.begin() + static_cast<std::ptrdiff_t>(next_drill_) + 1, {group[1]});
        drills_[next_drill_].pop_back();
      }
      pending_ = drills_[next_drill_++];
      d.state_think = think("Drill " + metric_ + " into its attribute breakdowns to locate the segment behind the change.");
      d.action_think = "Break " + metric_ + " down by " + pending_.front() +
                       (pending_.size() > 1 ? " and " + pending_[1] : std::string()) + " with week-over-week deltas.";
      d.tool_call = query(state, {metric_}, pending_);
      awaiting_ = Await::drill;
      break;
    }
    case Stage::focus:
      d.state_think = think("Isolate that dimension on its own to read the segment's exact figures.");
      d.action_think = "Break " + metric_ + " down by " + finding_->dimension + " alone with week-over-week deltas.";
      d.tool_call = query(state, {metric_}, {finding_->dimension});
      awaiting_ = Await::focus;
      break;
    case Stage::report: {
      const auto& f = *finding_;
      const std::string direction = f.total_delta < 0 ? "decline" : "increase";
      const std::string moved = one_decimal(std::fabs(f.delta));
      const std::string rate = one_decimal(std::fabs(f.pct));
      const std::string verb = f.delta < 0 ? " fell by " : " rose by ";
      d.state_think = think("Segment " + f.segment + verb + moved + " in " + metric_ + ", " + rate +
                            "% against its own prior week.");
      InsightDelta insight;
      insight.title = metric_ + " " + direction + " concentrated in " + f.dimension + " " + f.segment;
      insight.status = InsightStatus::New;
      insight.proof = "For " + who + ", " + f.dimension + " " + f.segment + verb + moved + " in " +
                      metric_ + " week over week (" + rate +
                      "% against its own prior week) and carries most of the total change while holding "
                      "a much smaller part of the prior-week base.";
      d.insights.push_back(insight);
      std::vector<std::string> filters;
      for (const auto& [k, v] : state.id) {
        if (k.rfind("ds_", 0) != 0) filters.push_back(k);
      }
      d.key_data.push_back({PayloadType::CSV, metric_ + " by " + f.dimension + " with week-over-week change",
                            {{metric_}, {f.dimension}, filters}, "obs:" + std::to_string(f.observation)});
      d.graph = "graph TD\n  Q[Question] --> K[KPI overview]\n  K --> M[" + metric_ +
                " moved most]\n  M --> D[" + metric_ + " by " + f.dimension + "]\n  D -->|dominant segment| S[" +
                f.dimension + " " + f.segment + "]";
      d.action_think = "Compute the segment's share of the change and of the prior-week base to back the finding.";
      const std::string code =
          "delta_segment = " + format_double(f.delta) + "\n" +
          "delta_total = " + format_double(f.total_delta) + "\n" +
          "prior_segment = " + format_double(f.prior) + "\n" +
          "prior_total = " + format_double(f.prior_total) + "\n" +
          "share = delta_segment / delta_total * 100\n"
          "base = prior_segment / prior_total * 100\n"
          "print(f\"share of change: {share:.1f}%\")\n"
          "print(f\"share of prior base: {base:.1f}%\")\n";
      d.tool_call = {{"name", "python"}, {"arguments", {{"code", code}}}};
      stage_ = Stage::done;
      break;
    }
    case Stage::done:
      return std::nullopt;
  }
  ++steps_;
  return render_draft(d);
}

ordered_json to_json(const StepRecord& r) {
  return {{"step_index", r.step_index},
          {"raw_output", r.raw_output},
          {"parsed", to_json(r.parsed)},
          {"tool_call", r.parsed.tool_call ? r.parsed.tool_call->to_json() : ordered_json(nullptr)},
          {"observation", r.observation ? to_json(*r.observation) : ordered_json(nullptr)},
          {"state_update_error", r.state_update_error},
          {"reward_breakdown", to_json(r.reward)}};
}

StepRecord play_step(int step_index, const std::string& raw, AnalysisState& state,
                     std::vector<Observation>& observations, GroundingIndex& grounding,
                     JudgeClient& judge, Environment* env, const std::optional<Observation>& recorded) {
  StepRecord rec;
  rec.step_index = step_index;
  rec.raw_output = raw;
  rec.parsed = parse_step(raw);
  const StepOutput& p = rec.parsed;
  const AnalysisState prev = state;

  StateUpdate update;
  if (p.insight_schema_ok) update.insight_updates = p.insights;
  bool refs_ok = true;
  if (p.key_data_schema_ok) {
    for (const auto& k : p.key_data) {
      std::optional<std::size_t> source;
      if (k.payload_ref.rfind("obs:", 0) == 0) {
        const std::string n = k.payload_ref.substr(4);
        if (!n.empty() && std::all_of(n.begin(), n.end(), ::isdigit) && std::stoul(n) < observations.size()) {
          source = std::stoul(n);
        }
      } else {
        for (std::size_t i = 0; i < observations.size(); ++i) {
          const auto& pkg = observations[i].package;
          if (pkg && pkg->execution_results.data_path == k.payload_ref) source = i;
        }
      }
      if (!source) {
        refs_ok = false;
        break;
      }
      ObservationEntry e;
      e.type = k.type;
      e.description = k.description;
      e.structure = k.structure;
      e.payload_ref = k.payload_ref;
      for (const auto& num : observations[*source].numerals()) e.numerals.push_back(num.value);
      update.observation_appends.push_back(std::move(e));
    }
    if (!refs_ok) update.observation_appends.clear();
  }
  if (const auto& g = p.graph_block()) update.graph_text = *g;

  bool update_ok = p.insight_schema_ok;
  try {
    state = apply_update(prev, update);
  } catch (const Error& e) {
    rec.state_update_error = e.what();
    update_ok = false;
    update.insight_updates.clear();
    state = apply_update(prev, update);
  }

  std::optional<Observation> obs = recorded;
  if (!obs && env != nullptr && p.tool_call) obs = env->execute_action(*p.tool_call);

  StepScoringInput input{p, prev, grounding, obs ? &*obs : nullptr, update_ok, refs_ok, prev.q};
  rec.reward = score_step(input, judge);
  if (obs) {
    grounding.insert_all(obs->numerals());
    observations.push_back(*obs);
  }
  rec.observation = std::move(obs);
  state.step_index = step_index + 1;
  return rec;
}

Trajectory run_loop(Policy& policy, Environment& env, JudgeClient& judge, AnalysisState initial,
                    int max_steps) {
  Trajectory t;
  t.initial_state = initial;
  AnalysisState state = std::move(initial);
  std::vector<Observation> observations;
  GroundingIndex grounding;
  for (int step = 0; step < max_steps; ++step) {
    auto raw = policy.next_step(state, observations);
    if (!raw) break;
    t.steps.push_back(play_step(step, *raw, state, observations, grounding, judge, &env));
    t.states.push_back(state);
  }
  t.final_state = state;
  return t;
}

void EpisodeConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& msg) {
    throw Error(ErrorKind::config, field, "episode config: " + field + ": " + msg);
  };
  if (max_steps < 1) fail("max_steps", "must be >= 1");
  if (policy == PolicyKind::replay && !std::filesystem::exists(replay_file)) {
    fail("replay_file", "not found: " + replay_file.string());
  }
  if (judge == JudgeKind::remote && judge_endpoint.empty()) fail("judge_endpoint", "required for the remote judge");
  if (!std::filesystem::exists(warehouse_path)) fail("warehouse", "not found: " + warehouse_path.string());
  if (out_dir.empty()) fail("out_dir", "required");
  if (budget.count() <= 0) fail("budget", "must be positive");
}

std::unique_ptr<JudgeClient> judge_for(const ordered_json& header, const Catalog& catalog) {
  std::vector<GroundTruth> truths;
  if (header.contains("ground_truth") && header["ground_truth"].is_object()) {
    truths.push_back(ground_truth_from_json(nlohmann::json::parse(header["ground_truth"].dump())));
  }
  return std::make_unique<MockJudge>(std::move(truths), catalog);
}

Trajectory run_episode(const EpisodeConfig& config) {
  config.validate();
  const Catalog catalog = load_catalog(config.catalog_path.empty() ? default_catalog_path() : config.catalog_path);
  const Warehouse warehouse = Warehouse::open(config.warehouse_path);
  const auto truths = warehouse.ground_truths();

  std::optional<GroundTruth> truth;
  if (!config.scenario_id.empty()) truth = ground_truth(truths, config.scenario_id);
  else if (!truths.empty()) truth = truths.front();

  AnalysisState initial;
  initial.id = config.id;
  initial.q = config.question;
  if (truth) {
    const auto wcfg = warehouse.config();
    for (const auto& s : wcfg.scenarios) {
      if (s.scenario_id != truth->scenario_id) continue;
      const char* column = s.target.kind == EntitySelector::Kind::shop    ? "shopId"
                           : s.target.kind == EntitySelector::Kind::brand ? "brandId"
                                                                          : "district";
      if (initial.id.empty()) {
        initial.id = {{column, s.target.value}, {"ds_from", s.window_from}, {"ds_to", s.window_to}};
      }
      if (initial.q.empty()) {
        const auto spec = effect_spec(s.effect);
        initial.q = std::string("Why did ") + spec.metric + " " +
                    (std::string(spec.direction) == "down" ? "fall" : "rise") + " for " + column + " " +
                    s.target.value + " between " + s.window_from + " and " + s.window_to + "?";
      }
    }
  }
  if (initial.q.empty()) throw Error(ErrorKind::config, "question", "episode config: question required");

  std::filesystem::create_directories(config.out_dir);
  EngineOptions eo;
  eo.budget = config.budget;
  eo.workspace = config.out_dir;
  QueryEngine engine(catalog, warehouse, eo);
  SandboxOptions sandbox = config.sandbox;
  sandbox.workspace = config.out_dir;
  Environment env(engine, sandbox);

  std::unique_ptr<Policy> policy;
  if (config.policy == EpisodeConfig::PolicyKind::replay) {
    policy = std::make_unique<ReplayPolicy>(config.replay_file);
  } else {
    ExplorerPolicy::Options o;
    o.seed = config.explorer_seed;
    o.max_steps = config.max_steps;
    o.probe = config.probe;
    policy = std::make_unique<ExplorerPolicy>(catalog, o);
  }
  std::unique_ptr<JudgeClient> judge;
  if (config.judge == EpisodeConfig::JudgeKind::remote) {
    judge = std::make_unique<RemoteJudge>(config.judge_endpoint);
  } else {
    judge = std::make_unique<MockJudge>(truth ? std::vector<GroundTruth>{*truth} : std::vector<GroundTruth>{},
                                        catalog);
  }

  Trajectory t = run_loop(*policy, env, *judge, initial, config.max_steps);
  ordered_json id = ordered_json::object();
  for (const auto& [k, v] : initial.id) id[k] = v;
  t.header = {{"question", initial.q},
              {"id", id},
              {"scenario_id", truth ? truth->scenario_id : ""},
              {"ground_truth", truth ? ordered_json::parse(to_json(*truth).dump()) : ordered_json(nullptr)},
              {"policy", config.policy == EpisodeConfig::PolicyKind::replay ? "replay" : "explorer"},
              {"explorer_seed", config.explorer_seed},
              {"probe", config.probe},
              {"max_steps", config.max_steps},
              {"judge", config.judge == EpisodeConfig::JudgeKind::remote ? "remote" : "mock"},
              {"steps_run", t.steps.size()}};
  write_trajectory(config.out_dir, t);
  return t;
}

void write_trajectory(const std::filesystem::path& dir, const Trajectory& t) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "trajectory.jsonl", std::ios::binary);
    for (const auto& s : t.steps) out << to_json(s).dump() << "\n";
  }
  for (std::size_t i = 0; i < t.states.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "state_%03zu.json", i);
    std::ofstream out(dir / name, std::ios::binary);
    out << to_json(t.states[i]).dump(2) << "\n";
  }
  {
    std::ofstream out(dir / "final_state.json", std::ios::binary);
    out << to_json(t.final_state).dump(2) << "\n";
  }
  {
    std::ofstream out(dir / "report.txt", std::ios::binary);
    out << render_report(t.final_state);
  }
  {
    std::ofstream out(dir / "episode.json", std::ios::binary);
    out << t.header.dump(2) << "\n";
  }
}

Trajectory load_trajectory(const std::filesystem::path& dir) {
  Trajectory t;
  {
    std::ifstream in(dir / "episode.json", std::ios::binary);
    if (!in) throw Error(ErrorKind::io, dir.string(), "not a trajectory directory: " + dir.string());
    try {
      t.header = ordered_json::parse(in);
    } catch (const ordered_json::exception& e) {
      throw Error(ErrorKind::parse, (dir / "episode.json").string(), e.what());
    }
  }
  t.initial_state.q = t.header.value("question", std::string());
  if (t.header.contains("id")) {
    for (const auto& [k, v] : t.header["id"].items()) t.initial_state.id[k] = v.get<std::string>();
  }
  std::ifstream in(dir / "trajectory.jsonl", std::ios::binary);
  if (!in) throw Error(ErrorKind::io, dir.string(), "missing trajectory.jsonl in " + dir.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = ordered_json::parse(line);
      StepRecord r;
      r.step_index = j.at("step_index").get<int>();
      r.raw_output = j.at("raw_output").get<std::string>();
      r.parsed = parse_step(r.raw_output);
      if (!j.at("observation").is_null()) r.observation = observation_from_json(j["observation"]);
      r.state_update_error = j.value("state_update_error", std::string());
      r.reward = reward_from_json(j.at("reward_breakdown"));
      t.steps.push_back(std::move(r));
    } catch (const ordered_json::exception& e) {
      throw Error(ErrorKind::parse, (dir / "trajectory.jsonl").string(),
                  "trajectory.jsonl:" + std::to_string(lineno) + ": " + e.what(), lineno);
    }
  }
  // States are not logged per step; fold them back from the recorded turns. Verdicts are
  // irrelevant here, so the judge declines every request and the logged rewards are kept.
  struct NoJudge : JudgeClient {
    JudgeVerdict judge(const JudgeRequest&) override { throw std::runtime_error("not consulted"); }
  } no_judge;
  AnalysisState state = t.initial_state;
  std::vector<Observation> observations;
  GroundingIndex grounding;
  for (const auto& s : t.steps) {
    play_step(s.step_index, s.raw_output, state, observations, grounding, no_judge, nullptr, s.observation);
    t.states.push_back(state);
  }
  t.final_state = state;
  return t;
}

Trajectory rescore(const Trajectory& logged, JudgeClient& judge) {
  Trajectory t;
  t.header = logged.header;
  t.initial_state = logged.initial_state;
  AnalysisState state = logged.initial_state;
  std::vector<Observation> observations;
  GroundingIndex grounding;
  for (const auto& s : logged.steps) {
    t.steps.push_back(play_step(s.step_index, s.raw_output, state, observations, grounding, judge,
                                nullptr, s.observation));
    t.states.push_back(state);
  }
  t.final_state = state;
  return t;
}

}  // namespace aida
