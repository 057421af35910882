#pragma once

// Closed-loop simulation: patient -> (faulted) controller -> monitor ->
// mitigation -> pump -> patient, one control step at a time.

#include <atomic>
#include <cstdio>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "apsmon/controllers.hpp"
#include "apsmon/fault.hpp"
#include "apsmon/glucose_model.hpp"
#include "apsmon/monitors.hpp"
#include "apsmon/risk.hpp"
#include "apsmon/trace.hpp"

namespace apsmon {

inline constexpr SignalBounds kGlucoseBounds{10.0, 600.0};
inline constexpr double kMaxIob = 100.0;  // U, bound for IOB perturbations

struct ScenarioConfig {
  std::string scenario_id;
  PatientParams patient;
  double initial_bg = 120.0;
  ControllerKind controller = ControllerKind::BasalBolus;
  ControllerConfig controller_config;
  std::optional<FaultSpec> fault;
  int steps = 150;
  MealProfile meals;
  std::uint64_t seed = 0;
  LabelOptions labels;

  void validate() const {
    patient.validate();
    controller_config.validate();
    if (initial_bg < 80.0 || initial_bg > 200.0) {
      throw std::invalid_argument("initial BG must lie in [80, 200] mg/dl");
    }
    if (steps < 1) throw std::invalid_argument("steps must be >= 1");
    if (fault) fault->validate();
  }
};

/// Runs one scenario. `monitor` may be null (no monitor); mitigation only
/// acts when a monitor is present.
inline Trace run(const ScenarioConfig& sc, Monitor* monitor = nullptr,
                 const MitigationConfig& mcfg = {}) {
  sc.validate();
  const ControllerConfig& ctl = sc.controller_config;
  const double dt = ctl.dt;

  Trace tr;
  auto& h = tr.header;
  h.scenario_id = sc.scenario_id;
  h.patient = sc.patient.name;
  h.initial_bg = sc.initial_bg;
  h.fault = sc.fault;
  h.controller = std::string(controller_name(sc.controller));
  h.monitor = monitor ? monitor->name() : "none";
  h.mitigation = monitor && mcfg.enabled;
  h.seed = sc.seed;
  h.dt = dt;
  h.basal_rate = ctl.basal_rate;
  h.max_rate = ctl.max_rate;
  h.epsilon_action = ctl.epsilon_action;
  h.bgt = ctl.target;

  if (monitor) monitor->reset();
  Mitigator mitigator(monitor ? mcfg : MitigationConfig{}, ctl.max_rate);

  const double basal_model = uph_to_model(ctl.basal_rate);
  PatientState state = steady_state(sc.patient, basal_model, sc.initial_bg);
  const double iob_eq = equilibrium_iob(ctl.basal_rate, dt, ctl.dia);
  double ctrl_iob = iob_eq;   // controller's belief, from its own commands
  double true_iob = iob_eq;   // from delivered insulin
  double last_seen = sc.initial_bg;
  double prev_seen = sc.initial_bg;
  double last_iob_seen = ctrl_iob;
  double last_cmd = ctl.basal_rate;
  const FaultSpec none{FaultTarget::CommandOutput, FaultKind::TruncateZero, 0.0, 0.0, 0.0};
  const FaultSpec& fault = sc.fault ? *sc.fault : none;
  const bool has_fault = sc.fault.has_value();
  StepOptions opt;
  opt.dt = dt;

  tr.rows.reserve(static_cast<std::size_t>(sc.steps));
  try {
    for (int k = 0; k < sc.steps; ++k) {
      const double t = k * dt;
      TraceRow row;
      row.t = t;
      row.true_bg = state.glucose;
      row.iob = true_iob;
      row.fault = has_fault && fault.active(t);

      double seen = row.true_bg;
      double iob_seen = ctrl_iob;
      if (has_fault) {
        seen = apply(fault, FaultTarget::GlucoseInput, seen, last_seen, t, kGlucoseBounds);
        iob_seen = apply(fault, FaultTarget::ControllerIob, iob_seen, last_iob_seen, t,
                         {0.0, kMaxIob});
      }
      last_seen = seen;
      last_iob_seen = iob_seen;
      row.seen_bg = seen;

      const double trend = k == 0 ? 0.0 : (seen - prev_seen) / dt;
      prev_seen = seen;
      const double net_iob = iob_seen - iob_eq;
      const double cmd = sc.controller == ControllerKind::BasalBolus
                             ? basal_bolus_step(seen, ctl, net_iob)
                             : openaps_like_step(seen, trend, ctl, net_iob);
      double post = cmd;
      if (has_fault) {
        post = apply(fault, FaultTarget::CommandOutput, cmd, last_cmd, t, {0.0, ctl.max_rate});
      }
      last_cmd = post;
      row.raw_cmd = post;

      Verdict v;
      if (monitor) v = monitor->observe({t, row.true_bg, row.iob, post});
      row.alarm = v;
      const auto m = mitigator.apply(v, row.true_bg, post);
      row.delivered_cmd = m.command;
      row.mitig = m.active;
      tr.rows.push_back(row);

      ctrl_iob = ctrl_iob * iob_decay(dt, ctl.dia) + cmd * dt / 60.0;
      true_iob = true_iob * iob_decay(dt, ctl.dia) + row.delivered_cmd * dt / 60.0;
      const StepResult sr =
          step(state, sc.patient, uph_to_model(row.delivered_cmd), sc.meals, t, opt);
      state = sr.state;
      h.clamped_steps += sr.clamped;
    }
  } catch (const std::exception& e) {
    h.valid = false;
    h.error = sc.scenario_id + ": " + e.what();
    return tr;
  }

  if (tr.size() >= sc.labels.window) {
    const HazardLabels hl = label(tr.true_bg(), sc.labels);
    for (std::size_t i = 0; i < tr.size(); ++i) tr.rows[i].label = hl.labels[i];
  }
  return tr;
}

// ---------------------------------------------------------------------------
// Campaigns

inline std::string scenario_id(double initial_bg, std::optional<std::size_t> fault_index) {
  char buf[48];
  if (fault_index) {
    std::snprintf(buf, sizeof buf, "bg%03d_f%04zu", static_cast<int>(std::lround(initial_bg)),
                  *fault_index);
  } else {
    std::snprintf(buf, sizeof buf, "bg%03d_clean", static_cast<int>(std::lround(initial_bg)));
  }
  return buf;
}

struct CampaignOptions {
  ControllerKind controller = ControllerKind::BasalBolus;
  ControllerConfig controller_base;
  int steps = 150;
  LabelOptions labels;
  int jobs = 1;
};

/// One scenario per (patient, initial BG, fault), plus a fault-free
/// scenario per (patient, initial BG) when requested.
inline std::vector<ScenarioConfig> expand_campaign(const CampaignSpec& spec,
                                                   const std::vector<PatientParams>& profiles,
                                                   const CampaignOptions& opt) {
  std::vector<PatientParams> chosen;
  if (spec.patients.empty()) {
    chosen = profiles;
  } else {
    for (const auto& name : spec.patients) {
      auto it = std::find_if(profiles.begin(), profiles.end(),
                             [&](const PatientParams& p) { return p.name == name; });
      if (it == profiles.end()) throw std::invalid_argument("unknown patient: " + name);
      chosen.push_back(*it);
    }
  }
  if (spec.initial_bg.empty()) throw std::invalid_argument("campaign: no initial BG values");
  std::vector<FaultSpec> faults;
  if (spec.grid_size() > 0) faults = generate_campaign(spec);
  if (faults.empty() && !spec.include_fault_free) {
    throw std::invalid_argument("campaign: empty fault grid and no fault-free runs");
  }

  std::vector<ScenarioConfig> out;
  for (const auto& p : chosen) {
    ControllerConfig ctl = calibrate_controller(p, opt.controller_base);
    for (double bg : spec.initial_bg) {
      ScenarioConfig base;
      base.patient = p;
      base.initial_bg = bg;
      base.controller = opt.controller;
      base.controller_config = ctl;
      base.steps = opt.steps;
      base.seed = spec.seed;
      base.labels = opt.labels;
      if (spec.include_fault_free) {
        ScenarioConfig sc = base;
        sc.scenario_id = scenario_id(bg, std::nullopt);
        out.push_back(std::move(sc));
      }
      for (std::size_t i = 0; i < faults.size(); ++i) {
        ScenarioConfig sc = base;
        sc.fault = faults[i];
        sc.scenario_id = scenario_id(bg, i);
        out.push_back(std::move(sc));
      }
    }
  }
  return out;
}

/// Builds the per-scenario monitor; may return null.
using MonitorFactory = std::function<std::unique_ptr<Monitor>(const ScenarioConfig&)>;

/// Runs scenarios over `jobs` worker threads. Results are indexed by
/// scenario, so output order does not depend on scheduling. Failed
/// scenarios come back with valid = false.
inline std::vector<Trace> run_campaign(const std::vector<ScenarioConfig>& scenarios,
                                       const MonitorFactory& factory = nullptr,
                                       const MitigationConfig& mcfg = {}, int jobs = 1,
                                       const std::function<void(std::size_t)>& progress = nullptr) {
  if (scenarios.empty()) throw std::invalid_argument("run_campaign: no scenarios");
  std::vector<Trace> out(scenarios.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::mutex progress_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < scenarios.size(); i = next++) {
      const auto& sc = scenarios[i];
      try {
        std::unique_ptr<Monitor> m = factory ? factory(sc) : nullptr;
        out[i] = run(sc, m.get(), mcfg);
      } catch (const std::exception& e) {
        out[i].header.scenario_id = sc.scenario_id;
        out[i].header.patient = sc.patient.name;
        out[i].header.initial_bg = sc.initial_bg;
        out[i].header.fault = sc.fault;
        out[i].header.valid = false;
        out[i].header.error = sc.scenario_id + ": " + e.what();
      }
      const std::size_t d = ++done;
      if (progress) {
        std::lock_guard lk(progress_mu);
        progress(d);
      }
    }
  };
  const int n = std::max(1, jobs);
  std::vector<std::thread> pool;
  for (int j = 1; j < n; ++j) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  return out;
}

}  // namespace apsmon
