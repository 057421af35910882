#pragma once

// Safety monitors over the controller's input/output interface and the
// hazard mitigation policy.

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "apsmon/controllers.hpp"
#include "apsmon/glucose_model.hpp"
#include "apsmon/scs.hpp"
#include "apsmon/trace.hpp"

namespace apsmon {

using Verdict = Alarm;

/// What a monitor sees each step: fault-free sensor BG, IOB from delivered
/// insulin, and the command leaving the controller.
struct Observation {
  double t = 0.0;
  double bg = 0.0;
  double iob = 0.0;
  double command = 0.0;  // U/h
};

class Monitor {
 public:
  virtual ~Monitor() = default;
  virtual std::string name() const = 0;
  virtual void reset() = 0;
  virtual Verdict observe(const Observation& obs) = 0;
};

// ---------------------------------------------------------------------------
// CAWT / CAWOT

class ContextRuleMonitor : public Monitor {
 public:
  ContextRuleMonitor(std::string name, RuleSet rs, const Thresholds& th, double basal,
                     double epsilon, double dt = 5.0)
      : name_(std::move(name)), rs_(std::move(rs)), basal_(basal), eps_(epsilon), dt_(dt) {
    require_resolved(rs_, th);
    b_ = bindings(rs_, th);
  }

  std::string name() const override { return name_; }
  void reset() override { prev_.reset(); }

  /// First matching rule in table order.
  Verdict observe(const Observation& o) override {
    ContextVector c{o.bg, 0.0, o.iob, 0.0};
    if (prev_) {
      c.dbg = (o.bg - prev_->bg) / dt_;
      c.diob = (o.iob - prev_->iob) / dt_;
    }
    prev_ = o;
    const Action a = classify_action(o.command, basal_, eps_);
    for (const auto& r : rs_.rules) {
      if (rule_fires(r, c, a, b_, rs_.iob_band)) return {r.hazard, "r" + std::to_string(r.id)};
    }
    return {};
  }

  const RuleSet& rules() const { return rs_; }

 private:
  std::string name_;
  RuleSet rs_;
  stl::Bindings b_;
  double basal_, eps_, dt_;
  std::optional<Observation> prev_;
};

// ---------------------------------------------------------------------------
// Guideline

struct GuidelineConfig {
  double lambda10 = 70.0;
  double lambda90 = 180.0;
  double alpha = 25.0;       // min
  double low = 70.0;
  double high = 180.0;
  double max_drop = -5.0;    // mg/dl per sample
  double max_rise = 3.0;

  void validate() const {
    if (!(lambda10 < lambda90)) throw std::invalid_argument("guideline: lambda10 < lambda90 required");
    if (!(alpha >= 0.0)) throw std::invalid_argument("guideline: alpha must be >= 0");
  }
};

/// Linear-interpolated percentile of a sample.
inline double percentile(std::vector<double> v, double p) {
  if (v.empty()) throw std::invalid_argument("percentile: empty sample");
  std::sort(v.begin(), v.end());
  const double pos = p / 100.0 * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  if (i + 1 >= v.size()) return v.back();
  return v[i] + (pos - static_cast<double>(i)) * (v[i + 1] - v[i]);
}

class GuidelineMonitor : public Monitor {
 public:
  explicit GuidelineMonitor(GuidelineConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  std::string name() const override { return "guideline"; }
  void reset() override {
    prev_.reset();
    below_since_.reset();
    above_since_.reset();
  }

  Verdict observe(const Observation& o) override {
    const double bg = o.bg;
    std::optional<double> delta;
    if (prev_) delta = bg - *prev_;
    prev_ = bg;
    if (bg < cfg_.lambda10) {
      if (!below_since_) below_since_ = o.t;
    } else {
      below_since_.reset();
    }
    if (bg > cfg_.lambda90) {
      if (!above_since_) above_since_ = o.t;
    } else {
      above_since_.reset();
    }

    if (!(bg > cfg_.low && bg < cfg_.high)) return {bg <= cfg_.low ? Hazard::H1 : Hazard::H2, "phi1"};
    if (delta && !(*delta > cfg_.max_drop && *delta < cfg_.max_rise)) {
      return {*delta <= cfg_.max_drop ? Hazard::H1 : Hazard::H2, "phi2"};
    }
    if (below_since_ && o.t - *below_since_ > cfg_.alpha) return {Hazard::H1, "phi3"};
    if (above_since_ && o.t - *above_since_ > cfg_.alpha) return {Hazard::H2, "phi4"};
    return {};
  }

  const GuidelineConfig& config() const { return cfg_; }

 private:
  GuidelineConfig cfg_;
  std::optional<double> prev_;
  std::optional<double> below_since_;
  std::optional<double> above_since_;
};

/// Guideline rules as STL text; lambda10, lambda90 and alpha stay symbolic.
inline std::vector<std::string> guideline_rule_texts() {
  return {
      "G[0,750]((BG > 70) && (BG < 180))",
      "G[0,750]((DBG > -5) && (DBG < 3))",
      "G[0,750]((BG < lambda10) -> F[0,25]((BG > lambda10)))",
      "G[0,750]((BG > lambda90) -> F[0,25]((BG < lambda90)))",
  };
}

// ---------------------------------------------------------------------------
// MPC

struct MpcConfig {
  PatientParams model;     // population parameters
  double horizon = 240.0;  // min, defaults to DIA
  double dt = 5.0;
  double low = 70.0;
  double high = 180.0;
};

/// Internal-model predictor: insulin compartments are driven by the
/// observed commands, glucose is reset to the observed BG, and the current
/// command is held over the horizon.
class MpcMonitor : public Monitor {
 public:
  explicit MpcMonitor(MpcConfig cfg) : cfg_(std::move(cfg)) { cfg_.model.validate(); }

  std::string name() const override { return "mpc"; }
  void reset() override { state_.reset(); }

  Verdict observe(const Observation& o) override {
    const double delivery = uph_to_model(o.command);
    if (!state_) state_ = steady_state(cfg_.model, delivery, o.bg);
    state_->glucose = o.bg;
    const Verdict v = predict(*state_, delivery);
    StepOptions opt;
    opt.dt = cfg_.dt;
    state_ = step(*state_, cfg_.model, delivery, MealProfile{}, o.t, opt).state;
    return v;
  }

  Verdict predict(PatientState s, double delivery) const {
    StepOptions opt;
    opt.dt = cfg_.dt;
    const int n = static_cast<int>(std::lround(cfg_.horizon / cfg_.dt));
    for (int k = 0; k < n; ++k) {
      s = step(s, cfg_.model, delivery, MealProfile{}, 0.0, opt).state;
      if (s.glucose < cfg_.low) return {Hazard::H1, "mpc"};
      if (s.glucose > cfg_.high) return {Hazard::H2, "mpc"};
    }
    return {};
  }

 private:
  MpcConfig cfg_;
  std::optional<PatientState> state_;
};

// ---------------------------------------------------------------------------
// Mitigation

struct MitigationConfig {
  bool enabled = false;
  double max_corrective_insulin = 5.0;  // U/h
  double low = 70.0;
  double high = 180.0;
};

/// H1 stops insulin, H2 delivers the fixed corrective rate; the correction
/// latches until no rule fires and BG is back in [low, high].
class Mitigator {
 public:
  explicit Mitigator(MitigationConfig cfg, double pump_max) : cfg_(cfg), pump_max_(pump_max) {
    if (cfg_.max_corrective_insulin > pump_max_) {
      throw std::invalid_argument("mitigation: corrective insulin exceeds pump maximum");
    }
  }

  struct Output {
    double command = 0.0;
    bool active = false;
  };

  Output apply(const Verdict& v, double bg, double command) {
    if (!cfg_.enabled) return {command, false};
    if (v.raised()) {
      mode_ = v.hazard;
    } else if (mode_ != Hazard::None && bg >= cfg_.low && bg <= cfg_.high) {
      mode_ = Hazard::None;
    }
    if (mode_ == Hazard::None) return {command, false};
    const double c = mode_ == Hazard::H1 ? 0.0 : cfg_.max_corrective_insulin;
    return {std::clamp(c, 0.0, pump_max_), true};
  }

  bool latched() const { return mode_ != Hazard::None; }
  void reset() { mode_ = Hazard::None; }

 private:
  MitigationConfig cfg_;
  double pump_max_;
  Hazard mode_ = Hazard::None;
};

// ---------------------------------------------------------------------------
// Construction by name

struct MonitorSetup {
  std::string name = "none";  // none | cawt | cawot | guideline | mpc
  RuleSet rules = default_ruleset();
  std::optional<Thresholds> thresholds;  // required by cawt
  GuidelineConfig guideline;
  MpcConfig mpc;
};

inline bool known_monitor(std::string_view name) {
  return name == "none" || name == "cawt" || name == "cawot" || name == "guideline" ||
         name == "mpc";
}

inline std::unique_ptr<Monitor> make_monitor(const MonitorSetup& s, const ControllerConfig& ctl) {
  if (s.name == "none") return nullptr;
  if (s.name == "cawt") {
    if (!s.thresholds) throw std::invalid_argument("cawt monitor requires a threshold file");
    return std::make_unique<ContextRuleMonitor>("cawt", s.rules, *s.thresholds, ctl.basal_rate,
                                                ctl.epsilon_action, ctl.dt);
  }
  if (s.name == "cawot") {
    return std::make_unique<ContextRuleMonitor>("cawot", s.rules, cawot_defaults(s.rules),
                                                ctl.basal_rate, ctl.epsilon_action, ctl.dt);
  }
  if (s.name == "guideline") return std::make_unique<GuidelineMonitor>(s.guideline);
  if (s.name == "mpc") {
    MpcConfig m = s.mpc;
    m.dt = ctl.dt;
    return std::make_unique<MpcMonitor>(m);
  }
  throw std::invalid_argument("unknown monitor: " + s.name);
}

/// Offline replay of a persisted trace; alarms match the live run when
/// mitigation was off.
inline std::vector<Verdict> replay(Monitor& m, const Trace& tr) {
  m.reset();
  std::vector<Verdict> out;
  out.reserve(tr.size());
  for (const auto& r : tr.rows) out.push_back(m.observe({r.t, r.true_bg, r.iob, r.raw_cmd}));
  return out;
}

}  // namespace apsmon
