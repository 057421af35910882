#pragma once

// Safety context specification for the APS: context transform, control
// action abstraction, the twelve unsafe-control-action rules and the
// hazard-mitigation (HMS) rules built from them.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "apsmon/stl.hpp"

namespace apsmon {

enum class Hazard { None, H1, H2 };

inline const char* to_string(Hazard h) {
  return h == Hazard::H1 ? "H1" : h == Hazard::H2 ? "H2" : "none";
}

/// u1..u4: decrease, increase, stop, keep insulin.
enum class Action { Decrease = 1, Increase = 2, Stop = 3, Keep = 4 };

inline std::string action_signal(Action a) { return "u" + std::to_string(static_cast<int>(a)); }

/// Total over [0, inf): stop iff zero, otherwise banded around basal.
inline Action classify_action(double command, double basal, double epsilon) {
  if (command < 0.0) throw std::invalid_argument("classify_action: negative command");
  if (command == 0.0) return Action::Stop;
  if (command < basal * (1.0 - epsilon)) return Action::Decrease;
  if (command > basal * (1.0 + epsilon)) return Action::Increase;
  return Action::Keep;
}

/// mu(x_t) = (BG, dBG/dt, IOB, dIOB/dt).
struct ContextVector {
  double bg = 0.0;    // mg/dl
  double dbg = 0.0;   // mg/dl/min
  double iob = 0.0;   // U
  double diob = 0.0;  // U/min
};

/// Derivatives by backward difference; zero at t = 0.
inline ContextVector context_of(const std::vector<double>& bg, const std::vector<double>& iob,
                                std::size_t t, double dt) {
  if (t >= bg.size() || t >= iob.size()) throw std::out_of_range("context_of: t outside trace");
  ContextVector c{bg[t], 0.0, iob[t], 0.0};
  if (t > 0) {
    c.dbg = (bg[t] - bg[t - 1]) / dt;
    c.diob = (iob[t] - iob[t - 1]) / dt;
  }
  return c;
}

/// Rate of IOB snapped to zero inside the |dIOB| <= band tolerance, so that
/// the three sign cases (< 0, = 0, > 0) partition the real line.
inline double banded(double diob, double band) { return std::abs(diob) <= band ? 0.0 : diob; }

inline constexpr double kDefaultIobBand = 1e-3;  // U/min

struct Predicate {
  std::string signal;  // BG, dBG, IOB, dIOB
  stl::Cmp cmp;
  stl::Threshold threshold;
};

struct UCASRule {
  int id = 0;
  std::vector<Predicate> context;
  Action action = Action::Keep;
  bool required = false;  // rule 10: the action must be taken
  Hazard hazard = Hazard::None;
  std::string slot;       // b1..b11, b21
  std::string slot_signal;
  stl::Cmp slot_cmp = stl::Cmp::Lt;

  /// `<` slots learn an upper bound, `>` slots a lower bound.
  bool upper_slot() const { return slot_cmp == stl::Cmp::Lt || slot_cmp == stl::Cmp::Le; }

  stl::FormulaPtr body() const {
    std::vector<stl::FormulaPtr> atoms;
    for (const auto& p : context) atoms.push_back(stl::atom(p.signal, p.cmp, p.threshold));
    stl::FormulaPtr ctx;
    if (atoms.size() == 4) {
      ctx = stl::conj(stl::conj(atoms[0], atoms[1]), stl::conj(atoms[2], atoms[3]));
    } else {
      ctx = atoms[0];
      for (std::size_t i = 1; i < atoms.size(); ++i) ctx = stl::conj(ctx, atoms[i]);
    }
    stl::FormulaPtr act = stl::prop(action_signal(action));
    return stl::implies(ctx, required ? act : stl::negate(act));
  }

  stl::FormulaPtr formula(double horizon) const { return stl::globally(0.0, horizon, body()); }
};

struct RuleSet {
  double bgt = 120.0;
  double horizon = 750.0;  // t_e, min
  double iob_band = kDefaultIobBand;
  std::vector<UCASRule> rules;
};

inline RuleSet default_ruleset(double bgt = 120.0, double horizon = 750.0) {
  using stl::Cmp;
  using stl::Param;
  const Param BGT{"BGT", false};
  auto slot = [](const char* n) { return Param{n, true}; };
  auto rule = [](int id, std::vector<Predicate> ctx, Action a, bool req, Hazard h,
                 const char* s, const char* sig, Cmp sc) {
    return UCASRule{id, std::move(ctx), a, req, h, s, sig, sc};
  };
  RuleSet rs;
  rs.bgt = bgt;
  rs.horizon = horizon;
  const auto D = Action::Decrease, I = Action::Increase, S = Action::Stop, K = Action::Keep;
  const auto H1 = Hazard::H1, H2 = Hazard::H2;
  rs.rules = {
      rule(1, {{"BG", Cmp::Gt, BGT}, {"dBG", Cmp::Gt, 0.0}, {"dIOB", Cmp::Lt, 0.0}, {"IOB", Cmp::Lt, slot("b1")}}, D, false, H2, "b1", "IOB", Cmp::Lt),
      rule(2, {{"BG", Cmp::Gt, BGT}, {"dBG", Cmp::Gt, 0.0}, {"dIOB", Cmp::Eq, 0.0}, {"IOB", Cmp::Lt, slot("b2")}}, D, false, H2, "b2", "IOB", Cmp::Lt),
      rule(3, {{"BG", Cmp::Gt, BGT}, {"dBG", Cmp::Lt, 0.0}, {"dIOB", Cmp::Gt, 0.0}, {"IOB", Cmp::Lt, slot("b3")}}, D, false, H2, "b3", "IOB", Cmp::Lt),
      rule(4, {{"BG", Cmp::Gt, BGT}, {"dBG", Cmp::Lt, 0.0}, {"dIOB", Cmp::Lt, 0.0}, {"IOB", Cmp::Lt, slot("b4")}}, D, false, H2, "b4", "IOB", Cmp::Lt),
      rule(5, {{"BG", Cmp::Gt, BGT}, {"dBG", Cmp::Lt, 0.0}, {"dIOB", Cmp::Eq, 0.0}, {"IOB", Cmp::Lt, slot("b5")}}, D, false, H2, "b5", "IOB", Cmp::Lt),
      rule(6, {{"BG", Cmp::Lt, BGT}, {"dBG", Cmp::Lt, 0.0}, {"dIOB", Cmp::Gt, 0.0}, {"IOB", Cmp::Gt, slot("b6")}}, I, false, H1, "b6", "IOB", Cmp::Gt),
      rule(7, {{"BG", Cmp::Lt, BGT}, {"dBG", Cmp::Lt, 0.0}, {"dIOB", Cmp::Lt, 0.0}, {"IOB", Cmp::Gt, slot("b7")}}, I, false, H1, "b7", "IOB", Cmp::Gt),
      rule(8, {{"BG", Cmp::Lt, BGT}, {"dBG", Cmp::Lt, 0.0}, {"dIOB", Cmp::Eq, 0.0}, {"IOB", Cmp::Gt, slot("b8")}}, I, false, H1, "b8", "IOB", Cmp::Gt),
      rule(9, {{"BG", Cmp::Gt, BGT}, {"IOB", Cmp::Lt, slot("b9")}}, S, false, H2, "b9", "IOB", Cmp::Lt),
      rule(10, {{"BG", Cmp::Lt, slot("b21")}}, S, true, H1, "b21", "BG", Cmp::Lt),
      rule(11, {{"BG", Cmp::Gt, BGT}, {"dBG", Cmp::Gt, 0.0}, {"dIOB", Cmp::Le, 0.0}, {"IOB", Cmp::Lt, slot("b10")}}, K, false, H2, "b10", "IOB", Cmp::Lt),
      rule(12, {{"BG", Cmp::Lt, BGT}, {"dBG", Cmp::Lt, 0.0}, {"dIOB", Cmp::Ge, 0.0}, {"IOB", Cmp::Gt, slot("b11")}}, K, false, H1, "b11", "IOB", Cmp::Gt),
  };
  return rs;
}

/// Learned (or default) slot values with provenance.
struct Thresholds {
  std::map<std::string, double> slots;
  std::map<std::string, bool> learned;
  std::string patient;
  int fold = -1;
  std::string training_hash;

  double at(const std::string& slot) const {
    auto it = slots.find(slot);
    if (it == slots.end()) throw stl::UnresolvedSlot("unresolved slot '" + slot + "'");
    return it->second;
  }
};

/// Thresholds that leave each IOB predicate vacuous, with b21 = 70 mg/dl.
inline Thresholds cawot_defaults(const RuleSet& rs) {
  Thresholds th;
  for (const auto& r : rs.rules) {
    double v;
    if (r.slot == "b21") v = 70.0;
    else v = r.upper_slot() ? std::numeric_limits<double>::infinity() : 0.0;
    th.slots[r.slot] = v;
    th.learned[r.slot] = false;
  }
  return th;
}

inline stl::Bindings bindings(const RuleSet& rs, const Thresholds& th) {
  stl::Bindings b = th.slots;
  b["BGT"] = rs.bgt;
  return b;
}

inline double context_value(const ContextVector& c, const std::string& signal, double band) {
  if (signal == "BG") return c.bg;
  if (signal == "dBG") return c.dbg;
  if (signal == "IOB") return c.iob;
  if (signal == "dIOB") return banded(c.diob, band);
  throw std::invalid_argument("unknown context signal '" + signal + "'");
}

/// Rule context with the rule's slot predicate excluded.
inline bool context_holds(const UCASRule& r, const ContextVector& c, const stl::Bindings& b,
                          double band, bool include_slot = true) {
  for (const auto& p : r.context) {
    const bool is_slot = std::holds_alternative<stl::Param>(p.threshold) &&
                         std::get<stl::Param>(p.threshold).slot;
    if (is_slot && !include_slot) continue;
    if (!stl::compare(context_value(c, p.signal, band), p.cmp, stl::resolve(p.threshold, b))) {
      return false;
    }
  }
  return true;
}

/// Whether the action matches the rule's unsafe action (for rule 10: any
/// action other than the required one).
inline bool action_matches(const UCASRule& r, Action a) {
  return r.required ? a != r.action : a == r.action;
}

inline bool rule_fires(const UCASRule& r, const ContextVector& c, Action a,
                       const stl::Bindings& b, double band) {
  return action_matches(r, a) && context_holds(r, c, b, band);
}

/// STL view of a context/action series: BG, dBG, IOB, dIOB (banded), u1..u4.
inline stl::SignalTrace to_signal_trace(const std::vector<ContextVector>& ctx,
                                        const std::vector<Action>& actions, double dt,
                                        double band) {
  stl::SignalTrace tr;
  tr.dt = dt;
  auto& bg = tr.signals["BG"];
  auto& dbg = tr.signals["dBG"];
  auto& iob = tr.signals["IOB"];
  auto& diob = tr.signals["dIOB"];
  for (const auto& c : ctx) {
    bg.push_back(c.bg);
    dbg.push_back(c.dbg);
    iob.push_back(c.iob);
    diob.push_back(banded(c.diob, band));
  }
  for (Action a : {Action::Decrease, Action::Increase, Action::Stop, Action::Keep}) {
    auto& u = tr.signals[action_signal(a)];
    for (Action x : actions) u.push_back(x == a ? 1.0 : 0.0);
  }
  tr.validate();
  return tr;
}

inline const std::vector<std::string>& context_signals() {
  static const std::vector<std::string> names{"BG", "dBG", "IOB", "dIOB", "DBG",
                                              "u1", "u2", "u3", "u4"};
  return names;
}

// ---------------------------------------------------------------------------
// Hazard mitigation specification

struct HMSRule {
  int id = 0;  // UCAS rule the context comes from
  std::vector<Predicate> context;
  std::vector<Action> corrective;
  double deadline = 0.0;  // t_s, min

  stl::FormulaPtr formula(double horizon) const {
    stl::FormulaPtr act = stl::prop(action_signal(corrective.front()));
    for (std::size_t i = 1; i < corrective.size(); ++i) {
      act = stl::disj(act, stl::prop(action_signal(corrective[i])));
    }
    stl::FormulaPtr ctx = stl::atom(context[0].signal, context[0].cmp, context[0].threshold);
    for (std::size_t i = 1; i < context.size(); ++i) {
      ctx = stl::conj(ctx, stl::atom(context[i].signal, context[i].cmp, context[i].threshold));
    }
    return stl::globally(0.0, horizon, stl::since(stl::eventually(0.0, deadline, act), ctx));
  }
};

/// One HMS rule per UCAS context: stop insulin for H1 contexts, increase
/// for H2 contexts.
inline std::vector<HMSRule> hms_rules(const RuleSet& rs, double deadline) {
  std::vector<HMSRule> out;
  for (const auto& r : rs.rules) {
    HMSRule h;
    h.id = r.id;
    h.context = r.context;
    h.corrective = {r.hazard == Hazard::H1 ? Action::Stop : Action::Increase};
    h.deadline = deadline;
    out.push_back(std::move(h));
  }
  return out;
}

/// Lower-percentile time-to-hazard, the default HMS deadline.
inline double hms_deadline(std::vector<double> tth, double percentile = 10.0) {
  tth.erase(std::remove_if(tth.begin(), tth.end(), [](double v) { return !(v >= 0.0); }),
            tth.end());
  if (tth.empty()) throw std::invalid_argument("hms_deadline: no non-negative TTH samples");
  std::sort(tth.begin(), tth.end());
  const double pos = percentile / 100.0 * static_cast<double>(tth.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(i);
  if (i + 1 >= tth.size()) return tth.back();
  return tth[i] + frac * (tth[i + 1] - tth[i]);
}

// ---------------------------------------------------------------------------
// Threshold file

inline nlohmann::json thresholds_to_json(const Thresholds& th) {
  nlohmann::json j;
  j["patient"] = th.patient;
  j["fold"] = th.fold;
  j["training_hash"] = th.training_hash;
  for (const auto& [k, v] : th.slots) {
    if (std::isinf(v)) j["slots"][k] = v > 0 ? "inf" : "-inf";
    else j["slots"][k] = v;
  }
  for (const auto& [k, v] : th.learned) j["learned"][k] = v;
  return j;
}

inline Thresholds thresholds_from_json(const nlohmann::json& j) {
  Thresholds th;
  th.patient = j.value("patient", "");
  th.fold = j.value("fold", -1);
  th.training_hash = j.value("training_hash", "");
  for (const auto& [k, v] : j.at("slots").items()) {
    if (v.is_string()) {
      const auto s = v.get<std::string>();
      if (s != "inf" && s != "-inf") throw std::invalid_argument("bad slot value for " + k);
      th.slots[k] = s == "inf" ? std::numeric_limits<double>::infinity()
                               : -std::numeric_limits<double>::infinity();
    } else {
      th.slots[k] = v.get<double>();
    }
  }
  if (j.contains("learned")) {
    for (const auto& [k, v] : j["learned"].items()) th.learned[k] = v.get<bool>();
  }
  return th;
}

/// Rejects threshold sets that leave any rule slot unresolved.
inline void require_resolved(const RuleSet& rs, const Thresholds& th) {
  for (const auto& r : rs.rules) {
    if (!th.slots.count(r.slot)) {
      throw stl::UnresolvedSlot("threshold set lacks slot '" + r.slot + "'");
    }
  }
}

}  // namespace apsmon
