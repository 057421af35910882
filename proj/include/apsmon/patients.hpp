#pragma once

// Shipped virtual-patient profiles and the JSON profile file format.
// Values are illustrative; data/patients.json carries the same table.

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "apsmon/glucose_model.hpp"

namespace apsmon {

inline std::vector<PatientParams> shipped_profiles() {
  // name, body_weight, C_I, tau1, tau2, p2, S_I, GEZI, EGP, V_G
  return {
      {"patient_A", 89, 20.1, 49, 47, 0.01, 0.0006847, 0.002, 1.33, 253},
      {"patient_B", 63, 12.81, 41, 10, 0.01, 0.0001098, 0.004, 0.6, 261},
      {"patient_C", 65, 9.09, 71, 70, 0.02, 0.0003585, 0.003, 1.07, 199},
      {"patient_D", 116, 18.13, 91, 70, 0.008, 0.0004633, 0.0005, 0.98, 337},
      {"patient_E", 64, 15.35, 46, 46, 0.01, 0.0001535, 0.004, 0.6, 188},
      {"patient_F", 51, 5.88, 68, 30, 0.009, 0.000284, 0.001, 0.603, 104},
      {"patient_G", 77, 18.06, 60, 60, 0.01, 0.0006276, 0.0023, 1.11, 263},
      {"patient_H", 65, 5.4, 95, 37, 0.01, 0.0004185, 0.0005, 1.3, 137},
      {"patient_I", 100, 8.75, 131, 21, 0.012, 0.0001719, 0.006, 1.27, 193},
      {"patient_J", 64, 13.09, 53, 53, 0.01, 0.0003142, 0.001, 0.6, 204},
  };
}

inline nlohmann::json profile_to_json(const PatientParams& p) {
  return {{"name", p.name},         {"body_weight", p.body_weight},
          {"clearance", p.clearance}, {"tau1", p.tau1},
          {"tau2", p.tau2},         {"p2", p.p2},
          {"sensitivity", p.sensitivity}, {"gezi", p.gezi},
          {"egp", p.egp},           {"volume", p.volume}};
}

inline PatientParams profile_from_json(const nlohmann::json& j) {
  PatientParams p;
  p.name = j.at("name").get<std::string>();
  p.body_weight = j.at("body_weight").get<double>();
  p.clearance = j.at("clearance").get<double>();
  p.tau1 = j.at("tau1").get<double>();
  p.tau2 = j.at("tau2").get<double>();
  p.p2 = j.at("p2").get<double>();
  p.sensitivity = j.value("sensitivity", 5e-4);
  p.gezi = j.at("gezi").get<double>();
  p.egp = j.at("egp").get<double>();
  p.volume = j.at("volume").get<double>();
  p.validate();
  return p;
}

/// Reads a JSON array of profile records. Throws on I/O, schema or
/// invariant errors.
inline std::vector<PatientParams> load_profiles(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open patient profiles: " + path);
  const auto j = nlohmann::json::parse(in);
  if (!j.is_array() || j.empty()) {
    throw std::runtime_error("patient profiles must be a non-empty array");
  }
  std::vector<PatientParams> out;
  for (const auto& rec : j) out.push_back(profile_from_json(rec));
  return out;
}

/// Population model: arithmetic mean of every numeric parameter.
inline PatientParams population_mean(const std::vector<PatientParams>& ps) {
  if (ps.empty()) throw std::invalid_argument("population_mean: no profiles");
  PatientParams m;
  m.name = "population";
  m.body_weight = m.clearance = m.tau1 = m.tau2 = m.p2 = 0.0;
  m.sensitivity = m.gezi = m.egp = m.volume = 0.0;
  const double n = static_cast<double>(ps.size());
  for (const auto& p : ps) {
    m.body_weight += p.body_weight / n;
    m.clearance += p.clearance / n;
    m.tau1 += p.tau1 / n;
    m.tau2 += p.tau2 / n;
    m.p2 += p.p2 / n;
    m.sensitivity += p.sensitivity / n;
    m.gezi += p.gezi / n;
    m.egp += p.egp / n;
    m.volume += p.volume / n;
  }
  return m;
}

}  // namespace apsmon
