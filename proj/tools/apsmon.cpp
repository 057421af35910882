// apsmon: campaign simulation, labeling, threshold learning, monitor
// evaluation, mitigation studies and reports.
//
// Exit codes: 0 success, 1 scenario failures, 2 configuration or input errors.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "apsmon/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace apsmon;

namespace {

constexpr const char* kVersion = "0.3.0";

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(p.string() + ": " + e.what());
  }
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << text;
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

std::uint64_t fnv1a(std::uint64_t h, std::string_view s) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

/// Content hash of every regular file under dir except the manifest.
std::string hash_tree(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& f : files) {
    h = fnv1a(h, fs::relative(f, dir).generic_string());
    std::ifstream in(f, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    h = fnv1a(h, ss.str());
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Every output directory carries the manifest that produced it.
void write_manifest(const fs::path& out, const std::string& stage, const json& configs,
                    std::uint64_t seed) {
  json m;
  m["tool"] = "apsmon";
  m["version"] = kVersion;
  m["stage"] = stage;
  m["configs"] = configs;
  m["seed"] = seed;
  m["output_dir"] = out.generic_string();
  json hashes = json::object();
  const fs::path prev = out / "manifest.json";
  if (fs::exists(prev)) {
    const json old = read_json(prev);
    if (old.contains("hashes")) hashes = old["hashes"];
  }
  hashes[stage] = hash_tree(out);
  m["hashes"] = hashes;
  write_json(prev, m);
}

std::vector<PatientParams> profiles_from(const std::string& path) {
  if (path.empty()) return shipped_profiles();
  try {
    return load_profiles(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

std::vector<Trace> load_traces(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("no campaign directory " + dir.string());
  auto t = load_campaign(dir);
  if (t.empty()) throw ConfigError("no traces under " + dir.string());
  return t;
}

// Threshold directory: <dir>/<patient>/folds.json, fold<k>.json, all.json.

void save_cv(const fs::path& dir, const PatientCv& cv, const LearnReport& all) {
  const fs::path pd = dir / cv.patient;
  write_json(pd / "folds.json", folds_to_json(cv));
  std::ostringstream log;
  log << "fold,slot,iteration,objective,pg_norm\n";
  for (std::size_t f = 0; f < cv.folds.size(); ++f) {
    write_json(pd / ("fold" + std::to_string(f) + ".json"), thresholds_to_json(cv.folds[f].thresholds));
    for (const auto& [slot, r] : cv.folds[f].convergence) {
      std::ostringstream rows;
      write_convergence_log(rows, slot, r);
      std::istringstream in(rows.str());
      for (std::string line; std::getline(in, line);) log << f << ',' << line << '\n';
    }
  }
  write_text(pd / "convergence.csv", log.str());
  write_json(pd / "all.json", thresholds_to_json(all.thresholds));
}

std::map<std::string, PatientCv> load_cv(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("no threshold directory " + dir.string());
  std::map<std::string, PatientCv> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_directory() || !fs::exists(e.path() / "folds.json")) continue;
    const json fj = read_json(e.path() / "folds.json");
    PatientCv cv;
    cv.patient = fj.at("patient").get<std::string>();
    for (const auto& [s, f] : fj.at("folds").items()) cv.fold_of[s] = f.get<int>();
    const int k = fj.at("k").get<int>();
    for (int f = 0; f < k; ++f) {
      LearnReport rep;
      rep.thresholds = thresholds_from_json(read_json(e.path() / ("fold" + std::to_string(f) + ".json")));
      require_resolved(default_ruleset(), rep.thresholds);
      cv.folds.push_back(std::move(rep));
    }
    out[cv.patient] = std::move(cv);
  }
  if (out.empty()) throw ConfigError("no thresholds under " + dir.string());
  return out;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string campaign, patients, controller = "basal-bolus", monitor = "none", thresholds, out;
  bool mitigate = false;
  double max_corrective = 5.0;
  long long seed = -1;
  int jobs = 1;
  int steps = 150;
};

int cmd_simulate(const SimulateArgs& a) {
  CampaignSpec spec;
  try {
    spec = campaign_from_json(read_json(a.campaign));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(a.campaign + ": " + e.what());
  }
  if (a.seed >= 0) spec.seed = static_cast<std::uint64_t>(a.seed);
  if (!known_monitor(a.monitor)) throw ConfigError("unknown monitor: " + a.monitor);
  if (a.mitigate && a.monitor == "none") throw ConfigError("--mitigate requires --monitor");
  CampaignOptions opt;
  try {
    opt.controller = parse_controller(a.controller);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  opt.steps = a.steps;
  const auto profiles = profiles_from(a.patients);

  std::vector<ScenarioConfig> scenarios;
  try {
    scenarios = expand_campaign(spec, profiles, opt);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }

  std::map<std::string, PatientCv> cv;
  if (a.monitor == "cawt") {
    if (a.thresholds.empty()) throw ConfigError("--monitor cawt requires --thresholds");
    cv = load_cv(a.thresholds);
  }
  // Guideline percentiles come from each patient's fault-free runs.
  std::map<std::string, GuidelineConfig> guideline;
  if (a.monitor == "guideline") {
    std::vector<ScenarioConfig> clean;
    for (const auto& s : scenarios) {
      if (!s.fault) clean.push_back(s);
    }
    if (clean.empty()) throw ConfigError("guideline monitor needs fault-free scenarios");
    const auto ct = run_campaign(clean, nullptr, {}, a.jobs);
    for (const auto& [p, ts] : by_patient(ct)) guideline[p] = guideline_for(ts, 25.0);
  }

  const RuleSet rules = default_ruleset();
  const PatientParams population = population_mean(profiles);
  MonitorFactory factory;
  if (a.monitor == "cawt") {
    factory = cawt_factory(cv, rules);
  } else if (a.monitor != "none") {
    factory = [&](const ScenarioConfig& sc) -> std::unique_ptr<Monitor> {
      MonitorSetup ms;
      ms.name = a.monitor;
      ms.rules = rules;
      ms.mpc.model = population;
      ms.mpc.horizon = sc.controller_config.dia;
      if (a.monitor == "guideline") ms.guideline = guideline.at(sc.patient.name);
      return make_monitor(ms, sc.controller_config);
    };
  }
  MitigationConfig mc;
  mc.enabled = a.mitigate;
  mc.max_corrective_insulin = a.max_corrective;

  const std::size_t total = scenarios.size();
  std::fprintf(stderr, "simulating %zu scenarios\n", total);
  auto progress = [total](std::size_t done) {
    if (done % 1000 == 0 || done == total) std::fprintf(stderr, "  %zu/%zu\n", done, total);
  };
  const auto traces = run_campaign(scenarios, factory, mc, a.jobs, progress);

  const fs::path out(a.out);
  fs::create_directories(out);
  long failed = 0;
  for (const auto& t : traces) {
    if (!t.header.valid) {
      ++failed;
      std::fprintf(stderr, "scenario failed: %s\n", t.header.error.c_str());
    }
    save_trace(out, t);
  }
  json configs{{"campaign", a.campaign}, {"patients", a.patients.empty() ? "<shipped>" : a.patients},
               {"controller", a.controller}, {"monitor", a.monitor},
               {"thresholds", a.thresholds}, {"mitigate", a.mitigate},
               {"max_corrective", a.max_corrective}, {"steps", a.steps},
               {"campaign_spec", campaign_to_json(spec)}};
  write_manifest(out, "simulate", configs, spec.seed);
  std::printf("%zu traces written to %s (%ld failed)\n", traces.size(), out.string().c_str(), failed);
  return failed > 0 ? 1 : 0;
}

struct LabelArgs {
  std::string dir;
  std::size_t window = 12;
  double lbgi = 5.0, hbgi = 9.0;
};

int cmd_label(const LabelArgs& a) {
  auto traces = load_traces(a.dir);
  LabelOptions lo{a.window, a.lbgi, a.hbgi};
  relabel(traces, lo);
  json summary;
  long hz = 0;
  for (const auto& t : traces) {
    save_trace(a.dir, t);
    const auto on = t.onset();
    hz += on.has_value();
    json r{{"patient", t.header.patient}, {"scenario", t.header.scenario_id},
           {"hazard", to_string(t.hazard_type())}};
    r["onset_min"] = on ? json(t.rows[*on].t) : json(nullptr);
    summary["traces"].push_back(r);
  }
  summary["hazardous"] = hz;
  summary["total"] = traces.size();
  summary["window"] = a.window;
  summary["lbgi_threshold"] = a.lbgi;
  summary["hbgi_threshold"] = a.hbgi;
  write_json(fs::path(a.dir) / "labels.json", summary);
  write_manifest(a.dir, "label", {{"window", a.window}, {"lbgi", a.lbgi}, {"hbgi", a.hbgi}}, 0);
  std::printf("%zu traces labeled, %ld hazardous\n", traces.size(), hz);
  return 0;
}

struct LearnArgs {
  std::string dir, out;
  int folds = 4;
  long long seed = 1;
  std::size_t lookahead = 12;
};

int cmd_learn(const LearnArgs& a) {
  const auto traces = load_traces(a.dir);
  CvConfig cc;
  cc.k = a.folds;
  cc.seed = static_cast<std::uint64_t>(a.seed);
  cc.extraction.lookahead = a.lookahead;
  const fs::path out(a.out);
  for (const auto& [patient, ts] : by_patient(traces)) {
    LearnReport all = learn_thresholds(ts, cc.rules, cc.extraction, cc.optimizer);
    all.thresholds.patient = patient;
    std::size_t hz = 0;
    for (const Trace* t : ts) hz += hazardous(*t);
    PatientCv cv;
    if (hz >= static_cast<std::size_t>(cc.k) && ts.size() >= static_cast<std::size_t>(cc.k)) {
      cv = cross_validate(ts, cc);
    } else {
      std::fprintf(stderr, "warning: %s has %zu hazardous traces; emitting default thresholds\n",
                   patient.c_str(), hz);
      cv.patient = patient;
      const auto fold = assign_folds(std::max<std::size_t>(ts.size(), cc.k), cc.k, cc.seed);
      for (std::size_t i = 0; i < ts.size(); ++i) cv.fold_of[ts[i]->header.scenario_id] = fold[i];
      for (int f = 0; f < cc.k; ++f) {
        LearnReport r;
        r.thresholds = cawot_defaults(cc.rules);
        r.thresholds.patient = patient;
        r.thresholds.fold = f;
        cv.folds.push_back(r);
      }
    }
    for (const auto& w : all.warnings) std::fprintf(stderr, "warning: %s: %s\n", patient.c_str(), w.c_str());
    save_cv(out, cv, all);
  }
  write_manifest(out, "learn",
                 {{"campaign", a.dir}, {"folds", a.folds}, {"lookahead", a.lookahead}},
                 static_cast<std::uint64_t>(a.seed));
  std::printf("thresholds written to %s\n", out.string().c_str());
  return 0;
}

struct EvalArgs {
  std::string dir, thresholds, out;
  std::size_t delta = 12;
  std::vector<std::string> monitors{"cawt", "cawot", "guideline", "mpc"};
};

int cmd_eval(const EvalArgs& a) {
  for (const auto& m : a.monitors) {
    if (!known_monitor(m) || m == "none") throw ConfigError("unknown monitor: " + m);
  }
  const auto traces = load_traces(a.dir);
  std::map<std::string, PatientCv> cv;
  const bool need_cawt = std::find(a.monitors.begin(), a.monitors.end(), "cawt") != a.monitors.end();
  if (need_cawt) {
    if (a.thresholds.empty()) throw ConfigError("cawt evaluation requires --thresholds");
    cv = load_cv(a.thresholds);
  }
  EvalConfig ec;
  ec.monitors = a.monitors;
  ec.delta = a.delta;
  Evaluation ev;
  try {
    ev = evaluate(traces, cv, ec);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const fs::path out(a.out);
  write_json(out / "metrics.json", evaluation_json(ev, a.delta));
  std::ostringstream detail;
  write_detail_csv(detail, ev);
  write_text(out / "per_trace.csv", detail.str());
  std::ostringstream tth;
  write_histogram(tth, ev.tth, 30.0);
  write_text(out / "tth_hist.dat", tth.str());
  for (const auto& m : ev.monitors) {
    std::ostringstream h;
    write_histogram(h, m.reaction.reaction, 30.0);
    write_text(out / ("reaction_" + m.monitor + "_hist.dat"), h.str());
  }
  const std::string table = summary_table(ev);
  write_text(out / "summary.txt", table);
  write_manifest(out, "eval", {{"campaign", a.dir}, {"thresholds", a.thresholds}, {"delta", a.delta}}, 0);
  std::printf("%s", table.c_str());
  return 0;
}

struct MitigateArgs {
  std::string baseline, mitigated, out;
};

int cmd_mitigate_eval(const MitigateArgs& a) {
  const auto base = load_traces(a.baseline);
  const auto mit = load_traces(a.mitigated);
  MitigationStudy s;
  try {
    s = compare_mitigation(base, mit);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const fs::path out(a.out);
  write_json(out / "mitigation.json", mitigation_json(s));
  write_manifest(out, "mitigate-eval", {{"baseline", a.baseline}, {"mitigated", a.mitigated}}, 0);
  std::printf("%s", mitigation_table(s).c_str());
  return 0;
}

struct ReportArgs {
  std::string eval_dir, mitigation, out;
};

int cmd_report(const ReportArgs& a) {
  const json m = read_json(fs::path(a.eval_dir) / "metrics.json");
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "No. Sim. %d   Hazard%% %.2f   Hazard coverage %.2f%%\n\n",
                m.at("traces").get<int>(), 100.0 * m.at("hazard_fraction").get<double>(),
                100.0 * m.at("hazard_coverage").get<double>());
  os << buf;
  os << "Prediction accuracy (sample level, tolerance window " << m.at("delta").get<int>() << ")\n";
  os << "Monitor      FPR    FNR    ACC    F1\n";
  for (const auto& [name, mj] : m.at("monitors").items()) {
    const auto& s = mj.at("sample_level");
    std::snprintf(buf, sizeof buf, "%-10s  %5.3f  %5.3f  %5.3f  %5.3f\n", name.c_str(),
                  s.at("fpr").get<double>(), s.at("fnr").get<double>(), s.at("acc").get<double>(),
                  s.at("f1").get<double>());
    os << buf;
  }
  os << "\nPrediction accuracy (simulation level, two regions)\n";
  os << "Monitor      FPR    FNR    ACC    F1\n";
  for (const auto& [name, mj] : m.at("monitors").items()) {
    const auto& s = mj.at("simulation_level");
    std::snprintf(buf, sizeof buf, "%-10s  %5.3f  %5.3f  %5.3f  %5.3f\n", name.c_str(),
                  s.at("fpr").get<double>(), s.at("fnr").get<double>(), s.at("acc").get<double>(),
                  s.at("f1").get<double>());
    os << buf;
  }
  os << "\nReaction time (min)\n";
  os << "Monitor      mean     std      EDR\n";
  for (const auto& [name, mj] : m.at("monitors").items()) {
    const auto& r = mj.at("reaction_min");
    std::snprintf(buf, sizeof buf, "%-10s  %7.1f  %7.1f  %5.3f\n", name.c_str(), r.value("mean", 0.0),
                  r.value("std", 0.0), mj.at("early_detection_rate").get<double>());
    os << buf;
  }
  if (!a.mitigation.empty()) {
    const json mj = read_json(a.mitigation);
    std::snprintf(buf, sizeof buf,
                  "\nMitigation\nRecovery Rate   %.1f%%\nNo. New Hazard  %ld\nAvg. Risk       %.3f   (no monitor %.3f)\n",
                  100.0 * mj.at("recovery_rate").get<double>(), mj.at("new_hazards").get<long>(),
                  mj.at("avg_risk_mitigated").get<double>(), mj.at("avg_risk_no_monitor").get<double>());
    os << buf;
  }
  if (!a.out.empty()) write_text(a.out, os.str());
  std::printf("%s", os.str().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Closed-loop APS simulation and context-aware safety monitoring"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Run a fault-injection campaign");
  s->add_option("campaign", sim.campaign, "Campaign spec JSON")->required();
  s->add_option("--patients", sim.patients, "Patient profile JSON (default: shipped profiles)");
  s->add_option("--controller", sim.controller, "basal-bolus | openaps-like");
  s->add_option("--monitor", sim.monitor, "none | cawt | cawot | guideline | mpc");
  s->add_option("--thresholds", sim.thresholds, "Threshold directory from 'learn' (cawt)");
  s->add_flag("--mitigate", sim.mitigate, "Apply the mitigation policy on alarms");
  s->add_option("--max-corrective", sim.max_corrective, "Corrective insulin for H2, U/h");
  s->add_option("--out", sim.out, "Output directory")->required();
  s->add_option("--seed", sim.seed, "Override the campaign seed");
  s->add_option("--jobs", sim.jobs, "Worker threads")->check(CLI::PositiveNumber);
  s->add_option("--steps", sim.steps, "Control steps per scenario")->check(CLI::PositiveNumber);

  LabelArgs lab;
  auto* l = app.add_subcommand("label", "Recompute hazard labels of a campaign in place");
  l->add_option("campaign_dir", lab.dir)->required();
  l->add_option("--window", lab.window, "Risk-index window, samples");
  l->add_option("--lbgi", lab.lbgi, "LBGI threshold");
  l->add_option("--hbgi", lab.hbgi, "HBGI threshold");

  LearnArgs lea;
  auto* le = app.add_subcommand("learn", "Learn per-patient thresholds with k-fold cross-validation");
  le->add_option("campaign_dir", lea.dir)->required();
  le->add_option("--out", lea.out, "Threshold directory")->required();
  le->add_option("--folds", lea.folds, "Number of folds")->check(CLI::Range(2, 100));
  le->add_option("--seed", lea.seed, "Fold assignment seed");
  le->add_option("--lookahead", lea.lookahead, "Hazard lookahead for training instants, samples");

  EvalArgs eva;
  auto* e = app.add_subcommand("eval", "Replay monitors over a campaign and score them");
  e->add_option("campaign_dir", eva.dir)->required();
  e->add_option("--thresholds", eva.thresholds, "Threshold directory from 'learn'");
  e->add_option("--delta", eva.delta, "Tolerance window, samples");
  e->add_option("--monitors", eva.monitors, "Monitors to evaluate")->delimiter(',');
  e->add_option("--out", eva.out, "Output directory")->required();

  MitigateArgs mit;
  auto* m = app.add_subcommand("mitigate-eval", "Compare a mitigated campaign with its baseline");
  m->add_option("baseline_dir", mit.baseline)->required();
  m->add_option("mitigated_dir", mit.mitigated)->required();
  m->add_option("--out", mit.out, "Output directory")->required();

  ReportArgs rep;
  auto* r = app.add_subcommand("report", "Summary tables from evaluation outputs");
  r->add_option("eval_dir", rep.eval_dir)->required();
  r->add_option("--mitigation", rep.mitigation, "mitigation.json from 'mitigate-eval'");
  r->add_option("--out", rep.out, "Write the report to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& ok) {
    return app.exit(ok);
  } catch (const CLI::ParseError& pe) {
    app.exit(pe);
    return 2;
  }

  try {
    if (*s) return cmd_simulate(sim);
    if (*l) return cmd_label(lab);
    if (*le) return cmd_learn(lea);
    if (*e) return cmd_eval(eva);
    if (*m) return cmd_mitigate_eval(mit);
    if (*r) return cmd_report(rep);
  } catch (const ConfigError& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 2;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 2;
  }
  return 2;
}
