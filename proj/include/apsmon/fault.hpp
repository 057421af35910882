#pragma once

// Software fault / attack injection into controller inputs, internal
// variables and outputs, and campaign grid expansion.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace apsmon {

enum class FaultTarget { GlucoseInput, ControllerIob, CommandOutput };

enum class FaultKind { TruncateZero, HoldLast, SetMax, SetMin, Add, Sub, ScalePow2 };

inline std::string_view to_string(FaultTarget t) {
  switch (t) {
    case FaultTarget::GlucoseInput: return "controller_glucose_input";
    case FaultTarget::ControllerIob: return "controller_iob";
    case FaultTarget::CommandOutput: return "command_output";
  }
  return "?";
}

inline std::string_view to_string(FaultKind k) {
  switch (k) {
    case FaultKind::TruncateZero: return "truncate_zero";
    case FaultKind::HoldLast: return "hold_last";
    case FaultKind::SetMax: return "set_max";
    case FaultKind::SetMin: return "set_min";
    case FaultKind::Add: return "add";
    case FaultKind::Sub: return "sub";
    case FaultKind::ScalePow2: return "scale_pow2";
  }
  return "?";
}

inline FaultTarget parse_fault_target(std::string_view s) {
  for (auto t : {FaultTarget::GlucoseInput, FaultTarget::ControllerIob,
                 FaultTarget::CommandOutput}) {
    if (s == to_string(t)) return t;
  }
  throw std::invalid_argument("unknown fault target: " + std::string(s));
}

inline FaultKind parse_fault_kind(std::string_view s) {
  for (auto k : {FaultKind::TruncateZero, FaultKind::HoldLast, FaultKind::SetMax,
                 FaultKind::SetMin, FaultKind::Add, FaultKind::Sub,
                 FaultKind::ScalePow2}) {
    if (s == to_string(k)) return k;
  }
  throw std::invalid_argument("unknown fault kind: " + std::string(s));
}

/// Admissible range of a perturbed signal.
struct SignalBounds {
  double lo = 0.0;
  double hi = 0.0;
};

struct FaultSpec {
  FaultTarget target = FaultTarget::CommandOutput;
  FaultKind kind = FaultKind::TruncateZero;
  double value = 0.0;  // add/sub magnitude, or the exponent k of scale_pow2
  double trigger = 0.0;   // min
  double duration = 0.0;  // min

  bool active(double t) const { return t >= trigger && t < trigger + duration; }

  void validate() const {
    if (!(trigger >= 0.0)) throw std::invalid_argument("fault trigger must be >= 0");
    if (!(duration > 0.0)) throw std::invalid_argument("fault duration must be > 0");
    if (kind == FaultKind::ScalePow2) {
      const double k = value;
      if (k != -2 && k != -1 && k != 1 && k != 2) {
        throw std::invalid_argument("scale_pow2 exponent must be one of -2,-1,1,2");
      }
    }
    if ((kind == FaultKind::Add || kind == FaultKind::Sub) && !(value >= 0.0)) {
      throw std::invalid_argument("add/sub magnitude must be >= 0");
    }
  }

  std::string label() const {
    std::string s(to_string(kind));
    s += '@';
    s += to_string(target);
    if (kind == FaultKind::Add || kind == FaultKind::Sub || kind == FaultKind::ScalePow2) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "(%g)", value);
      s += buf;
    }
    return s;
  }

  friend bool operator==(const FaultSpec&, const FaultSpec&) = default;
};

/// Perturbs `clean` if `signal` is the fault's target and the fault is
/// active at t; otherwise returns `clean` unchanged. Perturbed values are
/// clamped into `bounds`.
inline double apply(const FaultSpec& f, FaultTarget signal, double clean,
                    double last, double t, SignalBounds bounds) {
  if (!std::isfinite(clean)) throw std::invalid_argument("fault apply: non-finite value");
  if (signal != f.target || !f.active(t)) return clean;
  double v = clean;
  switch (f.kind) {
    case FaultKind::TruncateZero: v = 0.0; break;
    case FaultKind::HoldLast: v = last; break;
    case FaultKind::SetMax: v = bounds.hi; break;
    case FaultKind::SetMin: v = bounds.lo; break;
    case FaultKind::Add: v = clean + f.value; break;
    case FaultKind::Sub: v = clean - f.value; break;
    case FaultKind::ScalePow2: v = clean * std::exp2(f.value); break;
  }
  return std::clamp(v, bounds.lo, bounds.hi);
}

inline nlohmann::json fault_to_json(const FaultSpec& f) {
  return {{"target", to_string(f.target)}, {"kind", to_string(f.kind)},
          {"value", f.value}, {"trigger", f.trigger}, {"duration", f.duration}};
}

inline FaultSpec fault_from_json(const nlohmann::json& j) {
  FaultSpec f;
  f.target = parse_fault_target(j.at("target").get<std::string>());
  f.kind = parse_fault_kind(j.at("kind").get<std::string>());
  f.value = j.value("value", 0.0);
  f.trigger = j.at("trigger").get<double>();
  f.duration = j.at("duration").get<double>();
  f.validate();
  return f;
}

struct Timing {
  double start = 0.0;
  double duration = 0.0;
};

/// Default start x duration pairs: {60,120,180} x {60,150,300} min.
inline std::vector<Timing> default_timings() {
  std::vector<Timing> out;
  for (double s : {60.0, 120.0, 180.0}) {
    for (double d : {60.0, 150.0, 300.0}) out.push_back({s, d});
  }
  return out;
}

/// Grid of fault scenarios. Magnitude levels j map per kind: add/sub use
/// base_unit(target) * 2^j, scale_pow2 cycles k through {1,-1,2,-2}, and
/// the remaining kinds ignore the level.
struct CampaignSpec {
  std::vector<std::string> patients;      // empty: every loaded profile
  std::vector<double> initial_bg;         // mg/dl
  std::vector<FaultKind> kinds;
  std::vector<FaultTarget> targets;
  std::vector<int> levels;
  std::vector<Timing> timings = default_timings();
  double glucose_unit = 4.0;   // mg/dl
  double command_unit = 0.125; // U/h
  double iob_unit = 0.25;      // U
  std::uint64_t seed = 1;
  int max_faults = 0;          // > 0: seeded subsample of the grid
  bool include_fault_free = true;

  std::size_t grid_size() const {
    return kinds.size() * targets.size() * levels.size() * timings.size();
  }
};

inline std::vector<double> default_initial_bg() {
  std::vector<double> out;
  for (int i = 0; i < 7; ++i) out.push_back(80.0 + 20.0 * i);
  return out;
}

/// 7 kinds x 2 targets x 7 levels x 9 timings = 882 fault scenarios.
inline CampaignSpec default_campaign() {
  CampaignSpec c;
  c.initial_bg = default_initial_bg();
  c.kinds = {FaultKind::TruncateZero, FaultKind::HoldLast, FaultKind::SetMax,
             FaultKind::SetMin, FaultKind::Add, FaultKind::Sub, FaultKind::ScalePow2};
  c.targets = {FaultTarget::GlucoseInput, FaultTarget::CommandOutput};
  c.levels = {0, 1, 2, 3, 4, 5, 6};
  return c;
}

inline double level_value(const CampaignSpec& c, FaultKind kind, FaultTarget target,
                          int level) {
  switch (kind) {
    case FaultKind::Add:
    case FaultKind::Sub: {
      const double unit = target == FaultTarget::GlucoseInput ? c.glucose_unit
                          : target == FaultTarget::CommandOutput ? c.command_unit
                                                                 : c.iob_unit;
      return unit * std::exp2(level);
    }
    case FaultKind::ScalePow2: {
      static constexpr int ks[] = {1, -1, 2, -2};
      return ks[((level % 4) + 4) % 4];
    }
    default: return 0.0;
  }
}

/// Deterministic grid expansion in kind, target, level, timing order. With
/// max_faults > 0 a seeded subsample (order preserved) is returned.
inline std::vector<FaultSpec> generate_campaign(const CampaignSpec& c) {
  if (c.grid_size() == 0) throw std::invalid_argument("generate_campaign: empty fault grid");
  std::vector<FaultSpec> out;
  out.reserve(c.grid_size());
  for (auto kind : c.kinds) {
    for (auto target : c.targets) {
      for (int level : c.levels) {
        for (const auto& tm : c.timings) {
          FaultSpec f{target, kind, level_value(c, kind, target, level), tm.start,
                      tm.duration};
          f.validate();
          out.push_back(f);
        }
      }
    }
  }
  if (c.max_faults > 0 && static_cast<std::size_t>(c.max_faults) < out.size()) {
    std::vector<std::size_t> idx(out.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::mt19937_64 rng(c.seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(static_cast<std::size_t>(c.max_faults));
    std::sort(idx.begin(), idx.end());
    std::vector<FaultSpec> sub;
    sub.reserve(idx.size());
    for (auto i : idx) sub.push_back(out[i]);
    out = std::move(sub);
  }
  return out;
}

inline nlohmann::json campaign_to_json(const CampaignSpec& c) {
  nlohmann::json j;
  j["patients"] = c.patients;
  j["initial_bg"] = c.initial_bg;
  for (auto k : c.kinds) j["kinds"].push_back(std::string(to_string(k)));
  for (auto t : c.targets) j["targets"].push_back(std::string(to_string(t)));
  j["levels"] = c.levels;
  for (const auto& t : c.timings) j["timings"].push_back({t.start, t.duration});
  j["glucose_unit"] = c.glucose_unit;
  j["command_unit"] = c.command_unit;
  j["iob_unit"] = c.iob_unit;
  j["seed"] = c.seed;
  j["max_faults"] = c.max_faults;
  j["include_fault_free"] = c.include_fault_free;
  return j;
}

/// Missing keys fall back to default_campaign().
inline CampaignSpec campaign_from_json(const nlohmann::json& j) {
  CampaignSpec c = default_campaign();
  if (j.contains("patients")) c.patients = j["patients"].get<std::vector<std::string>>();
  if (j.contains("initial_bg")) c.initial_bg = j["initial_bg"].get<std::vector<double>>();
  if (j.contains("kinds")) {
    c.kinds.clear();
    for (const auto& k : j["kinds"]) c.kinds.push_back(parse_fault_kind(k.get<std::string>()));
  }
  if (j.contains("targets")) {
    c.targets.clear();
    for (const auto& t : j["targets"]) c.targets.push_back(parse_fault_target(t.get<std::string>()));
  }
  if (j.contains("levels")) c.levels = j["levels"].get<std::vector<int>>();
  if (j.contains("timings")) {
    c.timings.clear();
    for (const auto& t : j["timings"]) c.timings.push_back({t.at(0).get<double>(), t.at(1).get<double>()});
  }
  c.glucose_unit = j.value("glucose_unit", c.glucose_unit);
  c.command_unit = j.value("command_unit", c.command_unit);
  c.iob_unit = j.value("iob_unit", c.iob_unit);
  c.seed = j.value("seed", c.seed);
  c.max_faults = j.value("max_faults", c.max_faults);
  c.include_fault_free = j.value("include_fault_free", c.include_fault_free);
  for (double bg : c.initial_bg) {
    if (bg < 80.0 || bg > 200.0) {
      throw std::invalid_argument("initial BG must lie in [80, 200] mg/dl");
    }
  }
  return c;
}

}  // namespace apsmon
