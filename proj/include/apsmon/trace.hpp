#pragma once

// Per-scenario simulation record and its CSV + sidecar JSON persistence.

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "apsmon/fault.hpp"
#include "apsmon/scs.hpp"

namespace apsmon {

inline constexpr const char* kTraceColumns =
    "t_min,true_bg,seen_bg,iob,raw_cmd,delivered_cmd,fault,alarm,mitig,label";

/// Monitor output for one step: hazard type plus the rule or check that fired.
struct Alarm {
  Hazard hazard = Hazard::None;
  std::string source;

  bool raised() const { return hazard != Hazard::None; }
  friend bool operator==(const Alarm&, const Alarm&) = default;
};

inline std::string alarm_to_string(const Alarm& a) {
  if (!a.raised()) return "none";
  return std::string(to_string(a.hazard)) + ":" + a.source;
}

inline Hazard parse_hazard(std::string_view s) {
  if (s == "none") return Hazard::None;
  if (s == "H1") return Hazard::H1;
  if (s == "H2") return Hazard::H2;
  throw std::invalid_argument("bad hazard value '" + std::string(s) + "'");
}

inline Alarm alarm_from_string(std::string_view s) {
  if (s == "none") return {};
  const auto colon = s.find(':');
  if (colon == std::string_view::npos) throw std::invalid_argument("bad alarm '" + std::string(s) + "'");
  return {parse_hazard(s.substr(0, colon)), std::string(s.substr(colon + 1))};
}

struct TraceRow {
  double t = 0.0;             // min
  double true_bg = 0.0;       // mg/dl
  double seen_bg = 0.0;       // controller's (possibly faulted) view
  double iob = 0.0;           // U, from delivered insulin
  double raw_cmd = 0.0;       // U/h, controller output after any output fault
  double delivered_cmd = 0.0; // U/h, after mitigation
  bool fault = false;
  Alarm alarm;
  bool mitig = false;
  Hazard label = Hazard::None;

  friend bool operator==(const TraceRow&, const TraceRow&) = default;
};

struct TraceHeader {
  std::string scenario_id;
  std::string patient;
  double initial_bg = 120.0;
  std::optional<FaultSpec> fault;
  std::string controller;
  std::string monitor = "none";
  bool mitigation = false;
  std::uint64_t seed = 0;
  double dt = 5.0;
  double basal_rate = 1.0;  // U/h
  double max_rate = 5.0;    // U/h
  double epsilon_action = 0.05;
  double bgt = 120.0;
  bool valid = true;
  std::string error;
  int clamped_steps = 0;

  /// Fault activation time; 0 for fault-free traces (single region).
  double fault_time() const { return fault ? fault->trigger : 0.0; }
};

struct Trace {
  TraceHeader header;
  std::vector<TraceRow> rows;

  std::size_t size() const { return rows.size(); }

  std::vector<double> true_bg() const {
    std::vector<double> v;
    v.reserve(rows.size());
    for (const auto& r : rows) v.push_back(r.true_bg);
    return v;
  }
  std::vector<double> iob() const {
    std::vector<double> v;
    v.reserve(rows.size());
    for (const auto& r : rows) v.push_back(r.iob);
    return v;
  }
  std::vector<char> alarms() const {
    std::vector<char> v;
    v.reserve(rows.size());
    for (const auto& r : rows) v.push_back(r.alarm.raised());
    return v;
  }
  std::vector<char> hazards() const {
    std::vector<char> v;
    v.reserve(rows.size());
    for (const auto& r : rows) v.push_back(r.label != Hazard::None);
    return v;
  }
  /// First labeled step, if any.
  std::optional<std::size_t> onset() const {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].label != Hazard::None) return i;
    }
    return std::nullopt;
  }
  Hazard hazard_type() const {
    const auto o = onset();
    return o ? rows[*o].label : Hazard::None;
  }
};

// ---------------------------------------------------------------------------
// Serialization

/// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  if (res.ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw std::invalid_argument("bad number '" + std::string(s) + "'");
  }
  return v;
}

inline nlohmann::json header_to_json(const TraceHeader& h) {
  nlohmann::json j;
  j["scenario_id"] = h.scenario_id;
  j["patient"] = h.patient;
  j["initial_bg"] = h.initial_bg;
  j["fault"] = h.fault ? fault_to_json(*h.fault) : nlohmann::json(nullptr);
  j["controller"] = h.controller;
  j["monitor"] = h.monitor;
  j["mitigation"] = h.mitigation;
  j["seed"] = h.seed;
  j["dt"] = h.dt;
  j["basal_rate"] = h.basal_rate;
  j["max_rate"] = h.max_rate;
  j["epsilon_action"] = h.epsilon_action;
  j["bgt"] = h.bgt;
  j["valid"] = h.valid;
  j["error"] = h.error;
  j["clamped_steps"] = h.clamped_steps;
  return j;
}

inline TraceHeader header_from_json(const nlohmann::json& j) {
  TraceHeader h;
  h.scenario_id = j.at("scenario_id").get<std::string>();
  h.patient = j.at("patient").get<std::string>();
  h.initial_bg = j.at("initial_bg").get<double>();
  if (!j.at("fault").is_null()) h.fault = fault_from_json(j["fault"]);
  h.controller = j.value("controller", "");
  h.monitor = j.value("monitor", "none");
  h.mitigation = j.value("mitigation", false);
  h.seed = j.value("seed", std::uint64_t{0});
  h.dt = j.value("dt", 5.0);
  h.basal_rate = j.at("basal_rate").get<double>();
  h.max_rate = j.at("max_rate").get<double>();
  h.epsilon_action = j.value("epsilon_action", 0.05);
  h.bgt = j.value("bgt", 120.0);
  h.valid = j.value("valid", true);
  h.error = j.value("error", "");
  h.clamped_steps = j.value("clamped_steps", 0);
  return h;
}

inline void write_trace_csv(std::ostream& os, const Trace& tr) {
  os << kTraceColumns << '\n';
  for (const auto& r : tr.rows) {
    os << format_double(r.t) << ',' << format_double(r.true_bg) << ','
       << format_double(r.seen_bg) << ',' << format_double(r.iob) << ','
       << format_double(r.raw_cmd) << ',' << format_double(r.delivered_cmd) << ','
       << (r.fault ? 1 : 0) << ',' << alarm_to_string(r.alarm) << ',' << (r.mitig ? 1 : 0)
       << ',' << to_string(r.label) << '\n';
  }
}

inline std::vector<TraceRow> read_trace_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kTraceColumns) {
    throw std::invalid_argument("trace CSV: unexpected header");
  }
  std::vector<TraceRow> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    std::string_view rest(line);
    while (true) {
      const auto c = rest.find(',');
      f.push_back(rest.substr(0, c));
      if (c == std::string_view::npos) break;
      rest.remove_prefix(c + 1);
    }
    if (f.size() != 10) {
      throw std::invalid_argument("trace CSV line " + std::to_string(lineno) + ": expected 10 fields");
    }
    TraceRow r;
    r.t = parse_double(f[0]);
    r.true_bg = parse_double(f[1]);
    r.seen_bg = parse_double(f[2]);
    r.iob = parse_double(f[3]);
    r.raw_cmd = parse_double(f[4]);
    r.delivered_cmd = parse_double(f[5]);
    r.fault = f[6] == "1";
    r.alarm = alarm_from_string(f[7]);
    r.mitig = f[8] == "1";
    r.label = parse_hazard(f[9]);
    rows.push_back(std::move(r));
  }
  return rows;
}

namespace fs = std::filesystem;

/// campaign/<patient>/<scenario-id>.csv plus <scenario-id>.json.
inline fs::path trace_path(const fs::path& root, const TraceHeader& h) {
  return root / h.patient / (h.scenario_id + ".csv");
}

inline void save_trace(const fs::path& root, const Trace& tr) {
  const fs::path csv = trace_path(root, tr.header);
  fs::create_directories(csv.parent_path());
  {
    std::ofstream os(csv, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + csv.string());
    write_trace_csv(os, tr);
  }
  fs::path js = csv;
  js.replace_extension(".json");
  std::ofstream os(js, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + js.string());
  os << header_to_json(tr.header).dump(2) << '\n';
}

inline Trace load_trace(const fs::path& csv) {
  Trace tr;
  fs::path js = csv;
  js.replace_extension(".json");
  std::ifstream hj(js);
  if (!hj) throw std::runtime_error("missing trace header " + js.string());
  tr.header = header_from_json(nlohmann::json::parse(hj));
  std::ifstream is(csv);
  if (!is) throw std::runtime_error("cannot read " + csv.string());
  tr.rows = read_trace_csv(is);
  return tr;
}

/// Every trace under root, ordered by (patient, scenario id).
inline std::vector<Trace> load_campaign(const fs::path& root) {
  if (!fs::is_directory(root)) throw std::runtime_error("no campaign directory " + root.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file() && e.path().extension() == ".csv" &&
        e.path().parent_path() != root) {
      files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<Trace> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(load_trace(f));
  return out;
}

}  // namespace apsmon
