#pragma once

// Four-compartment virtual patient: subcutaneous insulin, plasma insulin,
// insulin effect and blood glucose.
//
//   dI_SC/dt  = -I_SC / tau1 + ID / (tau1 * C_I)
//   dI_P/dt   = (I_SC - I_P) / tau2
//   dI_EFF/dt = -p2 * I_EFF + p2 * S_I * I_P
//   dG/dt     = -(GEZI + I_EFF) * G + EGP + R_A
//
// Insulin delivery ID is expressed in model units (see kModelUnitsPerUph).

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace apsmon {

/// Pump rates (U/h) to model delivery units. 1 U/h is 1e6/60 uU/min; the
/// extra /100 converts a dl/min clearance into a uU/ml concentration.
inline constexpr double kModelUnitsPerUph = 1.0e6 / 60.0 / 100.0;

inline constexpr double uph_to_model(double units_per_hour) {
  return units_per_hour * kModelUnitsPerUph;
}
inline constexpr double model_to_uph(double model_rate) {
  return model_rate / kModelUnitsPerUph;
}

struct PatientParams {
  std::string name;
  double body_weight = 70.0;  // kg
  double clearance = 15.0;    // C_I, dl/min
  double tau1 = 50.0;         // min
  double tau2 = 50.0;         // min
  double p2 = 0.01;           // 1/min
  double sensitivity = 5e-4;  // S_I, ml/uU/min
  double gezi = 0.003;        // 1/min
  double egp = 1.2;           // mg/dl/min
  double volume = 200.0;      // V_G, dl

  /// Throws std::invalid_argument naming the first violated invariant.
  void validate() const {
    auto require = [this](bool ok, const char* what) {
      if (!ok) {
        throw std::invalid_argument("patient '" + name + "': " + what);
      }
    };
    for (double v : {body_weight, clearance, tau1, tau2, p2, sensitivity,
                     gezi, egp, volume}) {
      require(std::isfinite(v) && v > 0.0,
              "all parameters must be finite and > 0");
    }
    require(tau1 >= 1.0 && tau2 >= 1.0, "tau1, tau2 must be >= 1 min");
    require(gezi < 1.0, "GEZI must be < 1");
  }
};

struct PatientState {
  double glucose = 120.0;  // G, mg/dl
  double insulin_sc = 0.0; // I_SC
  double insulin_p = 0.0;  // I_P
  double effect = 0.0;     // I_EFF, 1/min

  bool finite() const {
    return std::isfinite(glucose) && std::isfinite(insulin_sc) &&
           std::isfinite(insulin_p) && std::isfinite(effect);
  }

  friend bool operator==(const PatientState&, const PatientState&) = default;
};

/// Time derivatives of a PatientState; same field layout.
using PatientRate = PatientState;

struct Meal {
  double start = 0.0;      // min
  double amplitude = 0.0;  // R_A, mg/dl/min
  double duration = 0.0;   // min
};

struct MealProfile {
  std::vector<Meal> meals;

  double appearance(double t) const {
    double ra = 0.0;
    for (const auto& m : meals) {
      if (t >= m.start && t < m.start + m.duration) ra += m.amplitude;
    }
    return ra;
  }
};

inline PatientRate derivatives(const PatientState& s, const PatientParams& p,
                               double delivery, double appearance) {
  if (!s.finite() || !std::isfinite(delivery) || !std::isfinite(appearance)) {
    throw std::invalid_argument("derivatives: non-finite input for patient '" +
                                p.name + "'");
  }
  PatientRate r;
  r.insulin_sc = -s.insulin_sc / p.tau1 + delivery / (p.tau1 * p.clearance);
  r.insulin_p = (s.insulin_sc - s.insulin_p) / p.tau2;
  r.effect = -p.p2 * s.effect + p.p2 * p.sensitivity * s.insulin_p;
  r.glucose = -(p.gezi + s.effect) * s.glucose + p.egp + appearance;
  return r;
}

struct StepOptions {
  double dt = 5.0;              // control step, min
  int substeps = 5;             // RK4 steps per control step
  double glucose_floor = 10.0;  // mg/dl
};

struct StepResult {
  PatientState state;
  bool clamped = false;
};

class IntegrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
inline PatientState axpy(const PatientState& s, double h,
                         const PatientRate& k) {
  return {s.glucose + h * k.glucose, s.insulin_sc + h * k.insulin_sc,
          s.insulin_p + h * k.insulin_p, s.effect + h * k.effect};
}
}  // namespace detail

/// Advances one control step with fixed-step RK4. Delivery is held constant
/// over the step; meal appearance is sampled at each stage time.
inline StepResult step(const PatientState& state, const PatientParams& params,
                       double delivery, const MealProfile& meal, double t,
                       const StepOptions& opt = {}) {
  if (!(opt.dt > 0.0) || opt.substeps < 1) {
    throw std::invalid_argument("step: dt must be > 0 and substeps >= 1");
  }
  const double h = opt.dt / opt.substeps;
  PatientState s = state;
  for (int i = 0; i < opt.substeps; ++i) {
    const double t0 = t + i * h;
    const PatientRate k1 = derivatives(s, params, delivery, meal.appearance(t0));
    const PatientRate k2 = derivatives(detail::axpy(s, h / 2, k1), params,
                                       delivery, meal.appearance(t0 + h / 2));
    const PatientRate k3 = derivatives(detail::axpy(s, h / 2, k2), params,
                                       delivery, meal.appearance(t0 + h / 2));
    const PatientRate k4 = derivatives(detail::axpy(s, h, k3), params,
                                       delivery, meal.appearance(t0 + h));
    s.glucose += h / 6 * (k1.glucose + 2 * k2.glucose + 2 * k3.glucose + k4.glucose);
    s.insulin_sc += h / 6 * (k1.insulin_sc + 2 * k2.insulin_sc + 2 * k3.insulin_sc + k4.insulin_sc);
    s.insulin_p += h / 6 * (k1.insulin_p + 2 * k2.insulin_p + 2 * k3.insulin_p + k4.insulin_p);
    s.effect += h / 6 * (k1.effect + 2 * k2.effect + 2 * k3.effect + k4.effect);
  }
  if (!s.finite()) {
    throw IntegrationError("step: non-finite state for patient '" +
                           params.name + "'");
  }
  StepResult out{s, false};
  if (out.state.glucose < opt.glucose_floor) {
    out.state.glucose = opt.glucose_floor;
    out.clamped = true;
  }
  // Compartments are linear and positive; guard round-off only.
  out.state.insulin_sc = std::max(0.0, out.state.insulin_sc);
  out.state.insulin_p = std::max(0.0, out.state.insulin_p);
  out.state.effect = std::max(0.0, out.state.effect);
  return out;
}

/// Constant delivery that holds glucose at `target` in steady state.
inline double steady_basal(const PatientParams& p, double target) {
  if (!(target > 0.0) || !(p.egp / target > p.gezi)) {
    throw std::invalid_argument(
        "steady_basal: infeasible target, requires EGP/G_T > GEZI");
  }
  return p.clearance * (p.egp / target - p.gezi) / p.sensitivity;
}

/// Insulin compartments at equilibrium for a constant delivery, with the
/// given glucose.
inline PatientState steady_state(const PatientParams& p, double delivery,
                                 double glucose) {
  PatientState s;
  s.glucose = glucose;
  s.insulin_sc = delivery / p.clearance;
  s.insulin_p = s.insulin_sc;
  s.effect = p.sensitivity * s.insulin_p;
  return s;
}

}  // namespace apsmon
