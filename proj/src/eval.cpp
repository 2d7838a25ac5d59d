#include "aida/eval.hpp"

#include <algorithm>
#include <fstream>

namespace aida {

double insight_score(bool valid, int h, double alpha) {
  return valid ? std::max(0.0, 1.0 - alpha * h) : -1.0;
}

ScoreReport score_trajectory(const std::vector<JudgedStep>& steps, double alpha) {
  ScoreReport r;
  r.alpha = alpha;
  struct Entry {
    std::string title;
    bool valid = false;
    int h = 0;
  };
  std::vector<Entry> current;  // insight set with resolved statuses, first-seen order
  for (std::size_t t = 0; t < steps.size(); ++t) {
    for (const auto& ins : steps[t]) {
      auto it = std::find_if(current.begin(), current.end(), [&](const Entry& e) { return e.title == ins.title; });
      if (ins.status == InsightStatus::Unchanged) {
        if (it == current.end()) {
          throw Error(ErrorKind::missing_verdict, ins.title,
                      "step " + std::to_string(t) + ": Unchanged insight '" + ins.title + "' was never judged");
        }
        continue;
      }
      if (!ins.valid) {
        throw Error(ErrorKind::missing_verdict, ins.title,
                    "step " + std::to_string(t) + ": insight '" + ins.title + "' has no verdict");
      }
      if (it == current.end()) current.push_back({ins.title, *ins.valid, ins.h});
      else *it = {ins.title, *ins.valid, ins.h};
    }
    double score = 0.0;
    int valid = 0;
    int invalid = 0;
    int h = 0;
    for (const auto& e : current) {
      score += insight_score(e.valid, e.h, alpha);
      e.valid ? ++valid : ++invalid;
      h += e.h;
    }
    r.score.push_back(score);
    r.valid_count.push_back(valid);
    r.invalid_count.push_back(invalid);
    r.hallucination_count.push_back(h);
  }
  for (const auto& e : current) r.insight_scores.emplace_back(e.title, insight_score(e.valid, e.h, alpha));
  return r;
}

std::vector<JudgedStep> judged_steps(const Trajectory& trajectory) {
  std::vector<JudgedStep> out;
  for (const auto& s : trajectory.steps) {
    JudgedStep step;
    if (s.state_update_error.empty() && s.parsed.insight_schema_ok) {
      for (const auto& ins : s.parsed.insights) {
        JudgedInsight j{ins.title, ins.status, std::nullopt, 0};
        for (const auto& v : s.reward.judgements) {
          if (v.title == ins.title) {
            j.valid = v.valid;
            j.h = v.h;
          }
        }
        step.push_back(std::move(j));
      }
    }
    out.push_back(std::move(step));
  }
  return out;
}

std::size_t ExplorationProfile::pair_count(Theme theme) const {
  const auto it = pairs.find(theme);
  return it == pairs.end() ? 0 : it->second.size();
}

ExplorationProfile exploration_profile(const Trajectory& trajectory, const Catalog& catalog) {
  ExplorationProfile p;
  constexpr Violation::Kind kinds[] = {Violation::Kind::unknown_metric, Violation::Kind::unknown_dimension,
                                       Violation::Kind::incompatible_pair};
  int total = 0;
  std::map<Violation::Kind, int> per_kind;
  for (const auto& s : trajectory.steps) {
    if (s.observation && s.observation->tool == Tool::dsl2data) {
      const auto& obs = *s.observation;
      if (obs.boundary_violation()) {
        ++total;
        for (auto k : kinds) {
          if (std::any_of(obs.violations.begin(), obs.violations.end(),
                          [&](const Violation& v) { return v.kind == k; })) {
            ++per_kind[k];
          }
        }
      } else if (obs.package && !obs.schema_error) {
        const auto& q = obs.package->calibration_report.corrected_dsl;
        for (const auto& m : q.metric) {
          const auto* def = catalog.find_metric(m);
          if (def == nullptr) continue;
          for (const auto& d : q.dimension) p.pairs[def->theme].emplace(m, d);
        }
      }
    }
    p.violation_cumulative.push_back(total);
    for (auto k : kinds) p.by_kind[k].push_back(per_kind[k]);
  }
  for (auto t : kAllThemes) p.pairs[t];
  for (auto k : kinds) p.by_kind[k];
  return p;
}

double FilterReport::proportion(InsightStatus status) const {
  std::size_t all = 0;
  for (const auto& [s, n] : status_histogram) all += n;
  const auto it = status_histogram.find(status);
  return all == 0 || it == status_histogram.end() ? 0.0 : static_cast<double>(it->second) / static_cast<double>(all);
}

FilterReport filter_trajectories(const std::vector<Trajectory>& dataset) {
  FilterReport r;
  r.total = dataset.size();
  for (auto s : {InsightStatus::New, InsightStatus::Unchanged, InsightStatus::Reinforced, InsightStatus::Refuted}) {
    r.status_histogram[s] = 0;
  }
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    bool hallucinated = false;
    bool invalid = false;
    for (const auto& s : dataset[i].steps) {
      for (const auto& j : s.reward.judgements) {
        hallucinated = hallucinated || j.h > 0;
        invalid = invalid || !j.valid;
      }
    }
    if (hallucinated) ++r.dropped_hallucination;
    else if (invalid) ++r.dropped_invalid;
    if (hallucinated || invalid) continue;
    r.kept.push_back(i);
    for (const auto& s : dataset[i].steps) {
      if (!s.state_update_error.empty() || !s.parsed.insight_schema_ok) continue;
      for (const auto& ins : s.parsed.insights) ++r.status_histogram[ins.status];
    }
  }
  return r;
}

namespace {

std::ofstream open_csv(const std::filesystem::path& file) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, file.string(), "cannot write " + file.string());
  return out;
}

}  // namespace

void write_score_csv(const std::filesystem::path& file, const ScoreReport& r) {
  auto out = open_csv(file);
  out << "step,score,valid_count,invalid_count,hallucination_count,alpha\n";
  for (std::size_t t = 0; t < r.score.size(); ++t) {
    out << t << ',' << format_double(r.score[t]) << ',' << r.valid_count[t] << ',' << r.invalid_count[t] << ','
        << r.hallucination_count[t] << ',' << format_double(r.alpha) << '\n';
  }
}

void write_exploration_csv(const std::filesystem::path& file, const ExplorationProfile& p) {
  auto out = open_csv(file);
  out << "theme,pair_count\n";
  for (auto t : kAllThemes) out << to_string(t) << ',' << p.pair_count(t) << '\n';
}

void write_violations_csv(const std::filesystem::path& file, const ExplorationProfile& p) {
  auto out = open_csv(file);
  out << "step,cumulative,unknown_metric,unknown_dimension,incompatible_pair\n";
  for (std::size_t t = 0; t < p.violation_cumulative.size(); ++t) {
    out << t << ',' << p.violation_cumulative[t] << ',' << p.by_kind.at(Violation::Kind::unknown_metric)[t] << ','
        << p.by_kind.at(Violation::Kind::unknown_dimension)[t] << ','
        << p.by_kind.at(Violation::Kind::incompatible_pair)[t] << '\n';
  }
}

}  // namespace aida
