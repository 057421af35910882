#pragma once

// Threshold learning for SCS slots: training-sample extraction from
// hazardous traces, the tight mean exponential error (TMEE) loss and the
// box-constrained fit.

#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "apsmon/lbfgsb.hpp"
#include "apsmon/scs.hpp"
#include "apsmon/trace.hpp"

namespace apsmon {

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// e^{-r} + r - sigma(2r)
inline double tmee(double r) { return std::exp(-r) + r - sigmoid(2.0 * r); }

inline double tmee_grad(double r) {
  const double s = sigmoid(2.0 * r);
  return -std::exp(-r) + 1.0 - 2.0 * s * (1.0 - s);
}

/// Unique root of tmee_grad, by bisection on [0, 2].
inline double tmee_minimizer() {
  static const double root = [] {
    double lo = 0.0, hi = 2.0;
    for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
      const double mid = 0.5 * (lo + hi);
      (tmee_grad(mid) < 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }();
  return root;
}

struct TrainingSet {
  int rule_id = 0;
  std::string slot;
  bool upper = true;  // `<` slot: beta bounds the samples from above
  std::vector<double> samples;
  std::size_t traces_used = 0;
};

/// Instants qualify when the rule's non-slot context and action hold, the
/// fault is active or past, and a hazard of the rule's type is labeled
/// within `lookahead` samples. `required_lookahead` applies to
/// required-action rules, whose only context is the slot itself.
struct ExtractionOptions {
  std::size_t lookahead = 12;
  std::size_t required_lookahead = 0;
  bool after_fault = true;
  double iob_band = kDefaultIobBand;
};

inline std::vector<ContextVector> trace_contexts(const Trace& tr) {
  const auto bg = tr.true_bg();
  const auto iob = tr.iob();
  std::vector<ContextVector> out;
  out.reserve(tr.size());
  for (std::size_t t = 0; t < tr.size(); ++t) out.push_back(context_of(bg, iob, t, tr.header.dt));
  return out;
}

inline std::vector<Action> trace_actions(const Trace& tr) {
  std::vector<Action> out;
  out.reserve(tr.size());
  for (const auto& r : tr.rows) {
    out.push_back(classify_action(r.raw_cmd, tr.header.basal_rate, tr.header.epsilon_action));
  }
  return out;
}

inline TrainingSet extract_training_set(const std::vector<const Trace*>& traces,
                                        const UCASRule& rule, const RuleSet& rs,
                                        const ExtractionOptions& opt = {}) {
  TrainingSet ts;
  ts.rule_id = rule.id;
  ts.slot = rule.slot;
  ts.upper = rule.upper_slot();
  const stl::Bindings b{{"BGT", rs.bgt}};
  const std::size_t look = rule.required ? opt.required_lookahead : opt.lookahead;
  for (const Trace* tr : traces) {
    if (!tr->header.valid || tr->hazard_type() != rule.hazard) continue;
    const auto ctx = trace_contexts(*tr);
    const auto act = trace_actions(*tr);
    const double tf = tr->header.fault_time();
    const std::size_t n = tr->size();
    // next_hazard[t]: first step >= t labeled with the rule's hazard type.
    std::vector<std::size_t> next_hazard(n + 1, n);
    for (std::size_t t = n; t-- > 0;) {
      next_hazard[t] = tr->rows[t].label == rule.hazard ? t : next_hazard[t + 1];
    }
    bool used = false;
    for (std::size_t t = 0; t < n; ++t) {
      if (opt.after_fault && tr->rows[t].t < tf) continue;
      if (next_hazard[t] == n || next_hazard[t] - t > look) continue;
      if (!action_matches(rule, act[t])) continue;
      if (!context_holds(rule, ctx[t], b, opt.iob_band, false)) continue;
      ts.samples.push_back(context_value(ctx[t], rule.slot_signal, opt.iob_band));
      used = true;
    }
    ts.traces_used += used;
  }
  return ts;
}

struct FitResult {
  double beta = 0.0;
  double bound = 0.0;  // feasibility limit: max sample (`<`) or min sample (`>`)
  OptimizerResult optimizer;
};

/// Mean TMEE of the robustness values r_d(beta).
inline double fit_objective(const TrainingSet& ts, double beta) {
  double s = 0.0;
  for (double mu : ts.samples) s += tmee(ts.upper ? beta - mu : mu - beta);
  return s / static_cast<double>(ts.samples.size());
}

/// Minimizes the mean TMEE over beta subject to r_d >= 0 for every sample,
/// imposed as a box bound at the binding sample.
inline FitResult fit_threshold(const TrainingSet& ts, const OptimizerConfig& cfg = {}) {
  if (ts.samples.empty()) {
    throw std::invalid_argument("fit_threshold: empty training set for slot " + ts.slot);
  }
  for (double v : ts.samples) {
    if (!std::isfinite(v)) throw std::invalid_argument("fit_threshold: non-finite sample");
  }
  const double inf = std::numeric_limits<double>::infinity();
  FitResult out;
  out.bound = ts.upper ? *std::max_element(ts.samples.begin(), ts.samples.end())
                       : *std::min_element(ts.samples.begin(), ts.samples.end());
  const Box box = ts.upper ? Box{{out.bound}, {inf}} : Box{{-inf}, {out.bound}};
  const double x0 = ts.upper ? out.bound + tmee_minimizer() : out.bound - tmee_minimizer();
  const double n = static_cast<double>(ts.samples.size());
  auto f = [&](const std::vector<double>& x) { return fit_objective(ts, x[0]); };
  auto g = [&](const std::vector<double>& x, std::vector<double>& grad) {
    double s = 0.0;
    for (double mu : ts.samples) {
      s += ts.upper ? tmee_grad(x[0] - mu) : -tmee_grad(mu - x[0]);
    }
    grad[0] = s / n;
  };
  out.optimizer = lbfgsb_minimize(f, g, {x0}, box, cfg);
  out.beta = out.optimizer.x[0];
  return out;
}

inline void write_convergence_log(std::ostream& os, const std::string& slot,
                                  const OptimizerResult& r) {
  for (const auto& rec : r.log) {
    os << slot << ',' << rec.iteration << ',' << format_double(rec.objective) << ','
       << format_double(rec.pg_norm) << '\n';
  }
}

/// FNV-1a over the training scenario ids.
inline std::string training_hash(const std::vector<const Trace*>& traces) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
    h ^= 0xff;
    h *= 1099511628211ull;
  };
  for (const Trace* t : traces) {
    mix(t->header.patient);
    mix(t->header.scenario_id);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct LearnReport {
  Thresholds thresholds;
  std::map<std::string, TrainingSet> training;
  std::map<std::string, OptimizerResult> convergence;
  std::vector<std::string> warnings;
};

/// Learns every slot of the rule set; slots without samples keep their
/// CAWOT default and are reported as unlearnable.
inline LearnReport learn_thresholds(const std::vector<const Trace*>& traces, const RuleSet& rs,
                                    const ExtractionOptions& ex = {},
                                    const OptimizerConfig& cfg = {}) {
  LearnReport rep;
  rep.thresholds = cawot_defaults(rs);
  rep.thresholds.training_hash = training_hash(traces);
  for (const auto& rule : rs.rules) {
    TrainingSet ts = extract_training_set(traces, rule, rs, ex);
    if (ts.samples.empty()) {
      rep.warnings.push_back("slot " + rule.slot + " (rule " + std::to_string(rule.id) +
                             "): no training samples, default retained");
    } else {
      try {
        FitResult fr = fit_threshold(ts, cfg);
        rep.thresholds.slots[rule.slot] = fr.beta;
        rep.thresholds.learned[rule.slot] = true;
        rep.convergence[rule.slot] = std::move(fr.optimizer);
      } catch (const NonConvergence& e) {
        rep.warnings.push_back("slot " + rule.slot + ": " + e.what() + ", default retained");
        rep.convergence[rule.slot] = e.best();
      }
    }
    rep.training[rule.slot] = std::move(ts);
  }
  return rep;
}

/// Fold index per item: a seeded permutation dealt round-robin into k folds.
inline std::vector<int> assign_folds(std::size_t n, int k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("assign_folds: k must be >= 2");
  if (n < static_cast<std::size_t>(k)) {
    throw std::invalid_argument("assign_folds: fewer items than folds");
  }
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<int> fold(n);
  for (std::size_t i = 0; i < n; ++i) fold[perm[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  return fold;
}

}  // namespace apsmon
