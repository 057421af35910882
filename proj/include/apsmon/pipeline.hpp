#pragma once

// End-to-end stages shared by the command-line tool and the acceptance
// suite: cross-validated learning, offline monitor evaluation and the
// paired mitigation study.

#include <cstdio>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "apsmon/learner.hpp"
#include "apsmon/metrics.hpp"
#include "apsmon/monitors.hpp"
#include "apsmon/patients.hpp"
#include "apsmon/sim.hpp"

namespace apsmon {

inline std::vector<const Trace*> pointers(const std::vector<Trace>& v) {
  std::vector<const Trace*> out;
  out.reserve(v.size());
  for (const auto& t : v) out.push_back(&t);
  return out;
}

inline std::map<std::string, std::vector<const Trace*>> by_patient(const std::vector<Trace>& v) {
  std::map<std::string, std::vector<const Trace*>> out;
  for (const auto& t : v) out[t.header.patient].push_back(&t);
  return out;
}

inline void relabel(std::vector<Trace>& traces, const LabelOptions& opt) {
  for (auto& tr : traces) {
    if (tr.size() < opt.window) continue;
    const HazardLabels hl = label(tr.true_bg(), opt);
    for (std::size_t i = 0; i < tr.size(); ++i) tr.rows[i].label = hl.labels[i];
  }
}

// ---------------------------------------------------------------------------
// Cross-validated learning

struct PatientCv {
  std::string patient;
  std::map<std::string, int> fold_of;  // scenario id -> fold
  std::vector<LearnReport> folds;
};

struct CvConfig {
  int k = 4;
  std::uint64_t seed = 1;
  RuleSet rules = default_ruleset();
  ExtractionOptions extraction;
  OptimizerConfig optimizer;
};

/// Splits one patient's traces into k folds by scenario and learns a
/// threshold set per fold from the remaining folds.
inline PatientCv cross_validate(const std::vector<const Trace*>& traces, const CvConfig& cfg) {
  if (traces.empty()) throw std::invalid_argument("cross_validate: no traces");
  std::size_t hazardous_count = 0;
  for (const Trace* t : traces) hazardous_count += hazardous(*t);
  if (hazardous_count < static_cast<std::size_t>(cfg.k)) {
    throw std::invalid_argument("cross_validate: fewer hazardous traces than folds for " +
                                traces.front()->header.patient);
  }
  PatientCv cv;
  cv.patient = traces.front()->header.patient;
  const auto fold = assign_folds(traces.size(), cfg.k, cfg.seed);
  for (std::size_t i = 0; i < traces.size(); ++i) cv.fold_of[traces[i]->header.scenario_id] = fold[i];
  for (int f = 0; f < cfg.k; ++f) {
    std::vector<const Trace*> train;
    for (std::size_t i = 0; i < traces.size(); ++i) {
      if (fold[i] != f) train.push_back(traces[i]);
    }
    LearnReport rep = learn_thresholds(train, cfg.rules, cfg.extraction, cfg.optimizer);
    rep.thresholds.patient = cv.patient;
    rep.thresholds.fold = f;
    cv.folds.push_back(std::move(rep));
  }
  return cv;
}

inline const Thresholds& fold_thresholds(const PatientCv& cv, const std::string& scenario) {
  auto it = cv.fold_of.find(scenario);
  if (it == cv.fold_of.end()) throw std::invalid_argument("no fold for scenario " + scenario);
  return cv.folds.at(static_cast<std::size_t>(it->second)).thresholds;
}

inline nlohmann::json folds_to_json(const PatientCv& cv) {
  nlohmann::json j;
  j["patient"] = cv.patient;
  j["k"] = cv.folds.size();
  for (const auto& [s, f] : cv.fold_of) j["folds"][s] = f;
  return j;
}

// ---------------------------------------------------------------------------
// Monitor evaluation by offline replay

struct MonitorMetrics {
  std::string monitor;
  ConfusionCounts sample;
  ConfusionCounts simulation;
  ReactionStats reaction;
};

struct TraceDetail {
  std::string patient, scenario, monitor;
  bool hazard = false;
  std::optional<double> tth, reaction;
  long alerts = 0;
};

struct Evaluation {
  std::size_t traces = 0;
  double hazard_fraction = 0.0;
  double coverage = 0.0;
  std::map<std::string, double> coverage_by_patient;
  std::vector<double> tth;
  std::vector<MonitorMetrics> monitors;
  std::vector<TraceDetail> detail;
};

struct EvalConfig {
  std::vector<std::string> monitors{"cawt", "cawot", "guideline", "mpc"};
  std::size_t delta = 12;
  RuleSet rules = default_ruleset();
  double alpha = 25.0;
  PatientParams population = population_mean(shipped_profiles());
  double mpc_horizon = 240.0;
};

/// Guideline percentiles from a patient's fault-free traces.
inline GuidelineConfig guideline_for(const std::vector<const Trace*>& traces, double alpha) {
  std::vector<double> bg;
  for (const Trace* t : traces) {
    if (t->header.fault) continue;
    for (const auto& r : t->rows) bg.push_back(r.true_bg);
  }
  if (bg.empty()) {
    throw std::invalid_argument("guideline: no fault-free traces for " +
                                (traces.empty() ? std::string("?") : traces.front()->header.patient));
  }
  GuidelineConfig g;
  g.lambda10 = percentile(bg, 10.0);
  g.lambda90 = percentile(bg, 90.0);
  if (!(g.lambda10 < g.lambda90)) g.lambda90 = g.lambda10 + 1.0;
  g.alpha = alpha;
  return g;
}

inline std::unique_ptr<Monitor> monitor_for(const std::string& name, const Trace& tr,
                                            const EvalConfig& cfg, const PatientCv* cv,
                                            const GuidelineConfig& gl) {
  if (name == "cawt") {
    if (!cv) throw std::invalid_argument("cawt evaluation requires learned thresholds");
    return std::make_unique<ContextRuleMonitor>("cawt", cfg.rules,
                                                fold_thresholds(*cv, tr.header.scenario_id),
                                                tr.header.basal_rate, tr.header.epsilon_action,
                                                tr.header.dt);
  }
  if (name == "cawot") {
    return std::make_unique<ContextRuleMonitor>("cawot", cfg.rules, cawot_defaults(cfg.rules),
                                                tr.header.basal_rate, tr.header.epsilon_action,
                                                tr.header.dt);
  }
  if (name == "guideline") return std::make_unique<GuidelineMonitor>(gl);
  if (name == "mpc") {
    MpcConfig m;
    m.model = cfg.population;
    m.horizon = cfg.mpc_horizon;
    m.dt = tr.header.dt;
    return std::make_unique<MpcMonitor>(m);
  }
  throw std::invalid_argument("unknown monitor: " + name);
}

inline Evaluation evaluate(const std::vector<Trace>& traces,
                           const std::map<std::string, PatientCv>& cv, const EvalConfig& cfg) {
  for (const auto& m : cfg.monitors) {
    if (!known_monitor(m) || m == "none") throw std::invalid_argument("unknown monitor: " + m);
  }
  Evaluation ev;
  const auto all = pointers(traces);
  ev.traces = traces.size();
  long hz = 0;
  for (const Trace* t : all) hz += hazardous(*t);
  ev.hazard_fraction = traces.empty() ? 0.0 : static_cast<double>(hz) / traces.size();
  ev.coverage = hazard_coverage(all);
  ev.tth = time_to_hazard(all);
  const auto groups = by_patient(traces);
  for (const auto& [p, ts] : groups) {
    bool any_fault = false;
    for (const Trace* t : ts) any_fault = any_fault || t->header.fault.has_value();
    if (any_fault) ev.coverage_by_patient[p] = hazard_coverage(ts);
  }

  for (const auto& name : cfg.monitors) {
    MonitorMetrics mm;
    mm.monitor = name;
    for (const auto& [p, ts] : groups) {
      const PatientCv* pcv = nullptr;
      if (auto it = cv.find(p); it != cv.end()) pcv = &it->second;
      GuidelineConfig gl;
      if (name == "guideline") gl = guideline_for(ts, cfg.alpha);
      for (const Trace* t : ts) {
        if (!t->header.valid) continue;
        auto mon = monitor_for(name, *t, cfg, pcv, gl);
        const auto verdicts = replay(*mon, *t);
        std::vector<char> alerts(verdicts.size());
        long count = 0;
        for (std::size_t i = 0; i < verdicts.size(); ++i) {
          alerts[i] = verdicts[i].raised();
          count += alerts[i];
        }
        const auto truth = t->hazards();
        mm.sample += sample_confusion(alerts, truth, cfg.delta);
        mm.simulation += simulation_confusion(alerts, truth, t->header.fault ? fault_step(*t) : 0);
        accumulate_reaction(mm.reaction, *t, alerts);
        TraceDetail d;
        d.patient = p;
        d.scenario = t->header.scenario_id;
        d.monitor = name;
        d.hazard = hazardous(*t);
        if (t->header.fault) {
          if (auto on = fault_onset(*t)) d.tth = t->rows[*on].t - t->header.fault_time();
        }
        d.reaction = reaction_time(*t, alerts);
        d.alerts = count;
        ev.detail.push_back(std::move(d));
      }
    }
    ev.monitors.push_back(std::move(mm));
  }
  return ev;
}

inline const MonitorMetrics& metrics_of(const Evaluation& ev, const std::string& name) {
  for (const auto& m : ev.monitors) {
    if (m.monitor == name) return m;
  }
  throw std::invalid_argument("no metrics for monitor " + name);
}

inline nlohmann::json confusion_json(const ConfusionCounts& c) {
  return {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn},
          {"fpr", c.fpr()}, {"fnr", c.fnr()}, {"acc", c.acc()}, {"f1", c.f1()}};
}

inline nlohmann::json distribution_json(std::vector<double> v) {
  nlohmann::json j;
  j["count"] = v.size();
  if (v.empty()) return j;
  double s = 0.0;
  for (double x : v) s += x;
  const double mean = s / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  j["mean"] = mean;
  j["std"] = std::sqrt(ss / static_cast<double>(v.size()));
  j["p10"] = percentile(v, 10.0);
  j["p50"] = percentile(v, 50.0);
  j["p90"] = percentile(v, 90.0);
  j["min"] = *std::min_element(v.begin(), v.end());
  j["max"] = *std::max_element(v.begin(), v.end());
  return j;
}

inline nlohmann::json evaluation_json(const Evaluation& ev, std::size_t delta) {
  nlohmann::json j;
  j["traces"] = ev.traces;
  j["hazard_fraction"] = ev.hazard_fraction;
  j["hazard_coverage"] = ev.coverage;
  j["coverage_by_patient"] = ev.coverage_by_patient;
  j["tth_min"] = distribution_json(ev.tth);
  j["delta"] = delta;
  for (const auto& m : ev.monitors) {
    nlohmann::json mj;
    mj["sample_level"] = confusion_json(m.sample);
    mj["simulation_level"] = confusion_json(m.simulation);
    mj["reaction_min"] = distribution_json(m.reaction.reaction);
    mj["hazards"] = m.reaction.hazards;
    mj["detected"] = m.reaction.detected;
    mj["early_detection_rate"] = m.reaction.early_detection_rate();
    j["monitors"][m.monitor] = mj;
  }
  return j;
}

inline void write_detail_csv(std::ostream& os, const Evaluation& ev) {
  os << "patient,scenario,monitor,hazard,tth_min,reaction_min,alerts\n";
  for (const auto& d : ev.detail) {
    os << d.patient << ',' << d.scenario << ',' << d.monitor << ',' << (d.hazard ? 1 : 0) << ','
       << (d.tth ? format_double(*d.tth) : "") << ','
       << (d.reaction ? format_double(*d.reaction) : "") << ',' << d.alerts << '\n';
  }
}

/// Two-column histogram (bin start, count) for gnuplot.
inline void write_histogram(std::ostream& os, const std::vector<double>& v, double width) {
  std::map<long, long> bins;
  for (double x : v) bins[static_cast<long>(std::floor(x / width))]++;
  os << "# bin_start count\n";
  for (const auto& [b, c] : bins) os << format_double(b * width) << ' ' << c << '\n';
}

// ---------------------------------------------------------------------------
// Mitigation study

struct MitigationStudy {
  RecoveryStats recovery;
  double risk_baseline = 0.0;   // no monitor: every hazard is an FN
  double risk_mitigated = 0.0;
  std::size_t traces = 0;
};

inline MitigationStudy compare_mitigation(const std::vector<Trace>& baseline,
                                          const std::vector<Trace>& mitigated) {
  MitigationStudy s;
  const auto b = pointers(baseline), m = pointers(mitigated);
  s.recovery = recovery_rate(b, m);
  s.risk_baseline = campaign_average_risk(b, b);
  s.risk_mitigated = campaign_average_risk(b, m);
  s.traces = baseline.size();
  return s;
}

inline nlohmann::json mitigation_json(const MitigationStudy& s) {
  return {{"traces", s.traces},
          {"baseline_hazards", s.recovery.baseline_hazards},
          {"prevented", s.recovery.prevented},
          {"recovery_rate", s.recovery.rate()},
          {"new_hazards", s.recovery.new_hazards},
          {"avg_risk_no_monitor", s.risk_baseline},
          {"avg_risk_mitigated", s.risk_mitigated}};
}

/// CAWT monitor factory using each scenario's held-out fold thresholds.
inline MonitorFactory cawt_factory(const std::map<std::string, PatientCv>& cv,
                                   const RuleSet& rules) {
  return [&cv, rules](const ScenarioConfig& sc) -> std::unique_ptr<Monitor> {
    auto it = cv.find(sc.patient.name);
    if (it == cv.end()) throw std::invalid_argument("no thresholds for " + sc.patient.name);
    return std::make_unique<ContextRuleMonitor>("cawt", rules,
                                                fold_thresholds(it->second, sc.scenario_id),
                                                sc.controller_config.basal_rate,
                                                sc.controller_config.epsilon_action,
                                                sc.controller_config.dt);
  };
}

// ---------------------------------------------------------------------------
// Summary tables

inline std::string summary_table(const Evaluation& ev) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "Traces %zu  hazard %.2f%%  coverage %.2f%%\n\n", ev.traces,
                100.0 * ev.hazard_fraction, 100.0 * ev.coverage);
  out += buf;
  out += "Monitor     | sample level (tolerance window)  | simulation level (two regions)   | reaction (min)\n";
  out += "            |  FPR    FNR    ACC    F1         |  FPR    FNR    ACC    F1         |  mean    EDR\n";
  for (const auto& m : ev.monitors) {
    std::snprintf(buf, sizeof buf,
                  "%-11s | %5.3f  %5.3f  %5.3f  %5.3f      | %5.3f  %5.3f  %5.3f  %5.3f      | %6.1f  %5.3f\n",
                  m.monitor.c_str(), m.sample.fpr(), m.sample.fnr(), m.sample.acc(), m.sample.f1(),
                  m.simulation.fpr(), m.simulation.fnr(), m.simulation.acc(), m.simulation.f1(),
                  m.reaction.mean(), m.reaction.early_detection_rate());
    out += buf;
  }
  return out;
}

inline std::string mitigation_table(const MitigationStudy& s) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "Recovery Rate   %.1f%% (%ld of %ld)\nNo. New Hazard  %ld\n"
                "Avg. Risk       %.3f (no monitor %.3f)\n",
                100.0 * s.recovery.rate(), s.recovery.prevented, s.recovery.baseline_hazards,
                s.recovery.new_hazards, s.risk_mitigated, s.risk_baseline);
  return buf;
}

}  // namespace apsmon
