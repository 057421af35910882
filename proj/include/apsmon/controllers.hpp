#pragma once

// Reference APS controllers and insulin-on-board bookkeeping.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "apsmon/glucose_model.hpp"

namespace apsmon {

struct ControllerConfig {
  double basal_rate = 1.0;         // U/h
  double correction_factor = 40.0; // mg/dl per U
  double target = 120.0;           // BGT, mg/dl
  double max_rate = 5.0;           // U/h
  double dia = 240.0;              // min
  double epsilon_action = 0.05;
  double hypo_cutoff = 70.0;       // mg/dl
  double correction_scale = 1.0;
  double dt = 5.0;                 // min

  void validate() const {
    auto require = [](bool ok, const char* what) {
      if (!ok) throw std::invalid_argument(std::string("controller config: ") + what);
    };
    require(basal_rate > 0.0 && basal_rate <= max_rate, "0 < basal_rate <= max_rate");
    require(correction_factor > 0.0, "CF > 0");
    require(target >= 70.0 && target <= 180.0, "70 <= BGT <= 180");
    require(dia >= 60.0, "DIA >= 60 min");
    require(epsilon_action > 0.0 && epsilon_action < 0.5, "0 < epsilon_action < 0.5");
    require(dt > 0.0, "dt > 0");
  }
};

/// Per-step decay factor of insulin on board: half-life DIA/2.
inline double iob_decay(double dt, double dia) {
  return std::exp(-dt * std::numbers::ln2 / (dia / 2.0));
}

struct Dose {
  double time = 0.0;  // min
  double units = 0.0; // U
};

struct IOBState {
  double iob = 0.0;   // U
  double now = 0.0;   // min
  std::vector<Dose> history;

  /// Decayed sum of the dose history at `now`; equals `iob` up to round-off.
  double decayed_sum(double dia) const {
    double s = 0.0;
    for (const auto& d : history) s += d.units * iob_decay(now - d.time, dia);
    return s;
  }
};

/// Decays the current IOB over dt, then adds the dose delivered at the end
/// of the interval.
inline IOBState iob_update(IOBState state, double dose, double dt, double dia) {
  if (dose < 0.0) throw std::invalid_argument("iob_update: negative dose");
  state.iob = state.iob * iob_decay(dt, dia) + dose;
  state.now += dt;
  if (dose > 0.0) state.history.push_back({state.now, dose});
  return state;
}

/// IOB reached under a constant rate (U/h) delivered in dt-minute doses.
inline double equilibrium_iob(double rate_uph, double dt, double dia) {
  const double dose = rate_uph * dt / 60.0;
  return dose / (1.0 - iob_decay(dt, dia));
}

/// Correction dose above IOB, spread over one control step.
inline double basal_bolus_step(double bg, const ControllerConfig& c, double iob) {
  if (!(bg > 0.0)) throw std::invalid_argument("basal_bolus_step: BG must be > 0");
  if (bg < c.hypo_cutoff) return 0.0;
  const double correction = std::max(0.0, (bg - c.target) / c.correction_factor - iob);
  const double cmd = c.basal_rate + correction * (60.0 / c.dt) * c.correction_scale;
  return std::clamp(cmd, 0.0, c.max_rate);
}

inline double openaps_eventual_bg(double bg, double trend, const ControllerConfig& c,
                                  double iob) {
  return bg + trend * 30.0 - iob * c.correction_factor;
}

/// Predicts eventual BG 30 min ahead net of IOB and doses toward target over
/// the insulin action time.
inline double openaps_like_step(double bg, double trend, const ControllerConfig& c,
                                double iob) {
  if (!(bg > 0.0)) throw std::invalid_argument("openaps_like_step: BG must be > 0");
  const double eventual = openaps_eventual_bg(bg, trend, c, iob);
  if (eventual < c.hypo_cutoff) return 0.0;
  const double cmd = c.basal_rate +
                     (eventual - c.target) / (c.correction_factor * (c.dia / 60.0));
  return std::clamp(cmd, 0.0, c.max_rate);
}

enum class ControllerKind { BasalBolus, OpenApsLike };

inline ControllerKind parse_controller(std::string_view name) {
  if (name == "basal-bolus") return ControllerKind::BasalBolus;
  if (name == "openaps-like") return ControllerKind::OpenApsLike;
  throw std::invalid_argument("unknown controller: " + std::string(name));
}

inline std::string_view controller_name(ControllerKind k) {
  return k == ControllerKind::BasalBolus ? "basal-bolus" : "openaps-like";
}

/// Patient-tuned controller: basal from the steady-state formula at the
/// target, CF from the simulated glucose nadir after an extra 1 U dose.
inline ControllerConfig calibrate_controller(const PatientParams& p,
                                             ControllerConfig base = {}) {
  const double basal_model = steady_basal(p, base.target);
  base.basal_rate = model_to_uph(basal_model);
  base.max_rate = std::max(base.max_rate, base.basal_rate * 2.0);

  const MealProfile none;
  StepOptions opt;
  opt.dt = base.dt;
  PatientState s = steady_state(p, basal_model, base.target);
  double nadir = s.glucose;
  const double bolus_rate = basal_model + uph_to_model(60.0 / base.dt);  // +1 U
  s = step(s, p, bolus_rate, none, 0.0, opt).state;
  for (int k = 1; k < static_cast<int>(720.0 / base.dt); ++k) {
    s = step(s, p, basal_model, none, k * base.dt, opt).state;
    nadir = std::min(nadir, s.glucose);
  }
  base.correction_factor = std::max(1.0, base.target - nadir);
  base.validate();
  return base;
}

}  // namespace apsmon
