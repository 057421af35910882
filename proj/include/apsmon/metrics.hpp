#pragma once

// Evaluation metrics: tolerance-window and two-region confusion counts,
// hazard coverage, time-to-hazard, reaction time, recovery and average risk.

#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "apsmon/risk.hpp"
#include "apsmon/trace.hpp"

namespace apsmon {

struct ConfusionCounts {
  long tp = 0, fp = 0, fn = 0, tn = 0;

  long total() const { return tp + fp + fn + tn; }
  static double ratio(double a, double b) { return b > 0.0 ? a / b : 0.0; }
  double fpr() const { return ratio(fp, fp + tn); }
  double fnr() const { return ratio(fn, fn + tp); }
  double acc() const { return ratio(tp + tn, total()); }
  double f1() const { return ratio(2.0 * tp, 2.0 * tp + fp + fn); }

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Tolerance-window confusion. A time t is ground-truth positive when a
/// hazard occurs in [t, t+delta]; it is then a TP iff some prediction lies
/// in [g-delta, t], where g is the first hazard at or after t (the
/// left-most window of length delta ending on a hazard that covers t).
/// Negative times are FP iff predicted.
inline ConfusionCounts sample_confusion(const std::vector<char>& pred,
                                        const std::vector<char>& truth, std::size_t delta) {
  if (pred.size() != truth.size()) throw std::invalid_argument("sample_confusion: length mismatch");
  const std::size_t n = pred.size();
  ConfusionCounts c;
  std::vector<std::size_t> next_g(n + 1, n);
  for (std::size_t t = n; t-- > 0;) next_g[t] = truth[t] ? t : next_g[t + 1];
  std::vector<long> prefix(n + 1, 0);
  for (std::size_t t = 0; t < n; ++t) prefix[t + 1] = prefix[t] + (pred[t] ? 1 : 0);
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t g = next_g[t];
    if (g < n && g - t <= delta) {
      const std::size_t lo = g >= delta ? g - delta : 0;
      (prefix[t + 1] - prefix[lo] > 0 ? c.tp : c.fn)++;
    } else {
      (pred[t] ? c.fp : c.tn)++;
    }
  }
  return c;
}

/// Two regions split at the fault time: [0, t_f) where any alert is an FP,
/// and [t_f, end] scored as one binary case. Fault-free traces have a
/// single region (t_f = 0).
inline ConfusionCounts simulation_confusion(const std::vector<char>& pred,
                                            const std::vector<char>& truth,
                                            std::size_t fault_step) {
  if (pred.size() != truth.size()) throw std::invalid_argument("simulation_confusion: length mismatch");
  const std::size_t n = pred.size();
  const std::size_t split = std::min(fault_step, n);
  ConfusionCounts c;
  if (split > 0) {
    bool alert = false;
    for (std::size_t t = 0; t < split; ++t) alert = alert || pred[t];
    (alert ? c.fp : c.tn)++;
  }
  bool alert = false, hazard = false;
  for (std::size_t t = split; t < n; ++t) {
    alert = alert || pred[t];
    hazard = hazard || truth[t];
  }
  if (alert && hazard) ++c.tp;
  else if (alert) ++c.fp;
  else if (hazard) ++c.fn;
  else ++c.tn;
  return c;
}

inline std::size_t fault_step(const Trace& tr) {
  return static_cast<std::size_t>(std::lround(tr.header.fault_time() / tr.header.dt));
}

/// Hazard onset caused by the fault: first labeled step at or after t_f.
inline std::optional<std::size_t> fault_onset(const Trace& tr) {
  for (std::size_t i = fault_step(tr); i < tr.size(); ++i) {
    if (tr.rows[i].label != Hazard::None) return i;
  }
  return std::nullopt;
}

inline double hazard_coverage(const std::vector<const Trace*>& traces) {
  long faulty = 0, hazardous = 0;
  for (const Trace* t : traces) {
    if (!t->header.fault) continue;
    ++faulty;
    hazardous += fault_onset(*t).has_value();
  }
  if (faulty == 0) throw std::invalid_argument("hazard_coverage: no fault-activated traces");
  return static_cast<double>(hazardous) / static_cast<double>(faulty);
}

/// t_h - t_f per hazardous faulty trace, minutes.
inline std::vector<double> time_to_hazard(const std::vector<const Trace*>& traces) {
  std::vector<double> out;
  for (const Trace* t : traces) {
    if (!t->header.fault) continue;
    if (auto on = fault_onset(*t)) out.push_back(t->rows[*on].t - t->header.fault_time());
  }
  return out;
}

struct ReactionStats {
  std::vector<double> reaction;  // t_h - t_d per detected hazard, minutes
  long hazards = 0;
  long detected = 0;
  long early = 0;  // reaction > 0

  double mean() const {
    if (reaction.empty()) return 0.0;
    double s = 0.0;
    for (double r : reaction) s += r;
    return s / static_cast<double>(reaction.size());
  }
  double early_detection_rate() const {
    return hazards > 0 ? static_cast<double>(early) / static_cast<double>(hazards) : 0.0;
  }
};

/// t_d is the first alert at or after t_f.
inline std::optional<double> reaction_time(const Trace& tr, const std::vector<char>& alerts) {
  const auto on = fault_onset(tr);
  if (!on) return std::nullopt;
  for (std::size_t i = fault_step(tr); i < tr.size(); ++i) {
    if (alerts[i]) return tr.rows[*on].t - tr.rows[i].t;
  }
  return std::nullopt;
}

inline void accumulate_reaction(ReactionStats& s, const Trace& tr, const std::vector<char>& alerts) {
  if (!fault_onset(tr)) return;
  ++s.hazards;
  if (auto r = reaction_time(tr, alerts)) {
    ++s.detected;
    s.reaction.push_back(*r);
    s.early += *r > 0.0;
  }
}

struct RecoveryStats {
  long baseline_hazards = 0;
  long prevented = 0;
  long new_hazards = 0;
  double rate() const {
    return baseline_hazards > 0 ? static_cast<double>(prevented) / baseline_hazards : 0.0;
  }
};

inline std::string pair_key(const Trace& t) { return t.header.patient + "/" + t.header.scenario_id; }

inline bool hazardous(const Trace& t) { return t.onset().has_value(); }

inline RecoveryStats recovery_rate(const std::vector<const Trace*>& baseline,
                                   const std::vector<const Trace*>& mitigated) {
  std::map<std::string, const Trace*> m;
  for (const Trace* t : mitigated) m[pair_key(*t)] = t;
  if (m.size() != baseline.size()) throw std::invalid_argument("recovery_rate: unpaired campaigns");
  RecoveryStats s;
  for (const Trace* b : baseline) {
    auto it = m.find(pair_key(*b));
    if (it == m.end()) throw std::invalid_argument("recovery_rate: unpaired scenario " + pair_key(*b));
    const bool hb = hazardous(*b), hm = hazardous(*it->second);
    if (hb) {
      ++s.baseline_hazards;
      s.prevented += !hm;
    } else {
      s.new_hazards += hm;
    }
  }
  return s;
}

/// (1/N) [sum of mean risk over FN traces + sum over induced-hazard traces].
inline double average_risk(std::size_t n, const std::vector<double>& fn_risk,
                           const std::vector<double>& induced_risk) {
  if (n == 0) throw std::invalid_argument("average_risk: N must be > 0");
  double s = 0.0;
  for (double v : fn_risk) s += v;
  for (double v : induced_risk) s += v;
  return s / static_cast<double>(n);
}

/// Average risk of a campaign against its unmitigated baseline: hazards
/// still present after mitigation are FN cases, hazards appearing only
/// under mitigation are induced. With baseline == campaign every hazard
/// counts as FN (the no-monitor case).
inline double campaign_average_risk(const std::vector<const Trace*>& baseline,
                                    const std::vector<const Trace*>& campaign,
                                    std::size_t window = 12) {
  std::map<std::string, const Trace*> base;
  for (const Trace* t : baseline) base[pair_key(*t)] = t;
  std::vector<double> fn, induced;
  for (const Trace* t : campaign) {
    if (!hazardous(*t)) continue;
    const double ri = mean_risk_index(t->true_bg(), window);
    auto it = base.find(pair_key(*t));
    if (it == base.end()) throw std::invalid_argument("average risk: unpaired scenario " + pair_key(*t));
    (hazardous(*it->second) ? fn : induced).push_back(ri);
  }
  return average_risk(campaign.size(), fn, induced);
}

}  // namespace apsmon
