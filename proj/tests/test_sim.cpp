#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "apsmon/pipeline.hpp"

using namespace apsmon;
namespace fs = std::filesystem;

namespace {
ScenarioConfig scenario(std::size_t patient = 0) {
  const auto p = shipped_profiles()[patient];
  ScenarioConfig sc;
  sc.scenario_id = "t";
  sc.patient = p;
  sc.controller_config = calibrate_controller(p);
  return sc;
}
}  // namespace

TEST(Sim, FaultFreeStaysInRange) {
  for (std::size_t i = 0; i < shipped_profiles().size(); ++i) {
    const auto tr = run(scenario(i));
    ASSERT_EQ(tr.size(), 150u);
    EXPECT_TRUE(tr.header.valid);
    for (const auto& r : tr.rows) {
      ASSERT_GE(r.true_bg, 70.0);
      ASSERT_LE(r.true_bg, 180.0);
      ASSERT_FALSE(r.fault);
    }
    EXPECT_FALSE(tr.onset().has_value());
  }
}

TEST(Sim, MaxInsulinFaultLowersGlucose) {
  auto sc = scenario(3);
  sc.fault = FaultSpec{FaultTarget::CommandOutput, FaultKind::SetMax, 0.0, 60.0, 300.0};
  const auto tr = run(sc);
  for (std::size_t k = 13; k + 1 < tr.size() && tr.rows[k + 1].fault; ++k) {
    if (tr.rows[k + 1].true_bg <= 10.0) break;
    ASSERT_LT(tr.rows[k + 1].true_bg, tr.rows[k].true_bg) << k;
  }
  EXPECT_TRUE(tr.rows[12].fault);
  EXPECT_FALSE(tr.rows[11].fault);
  EXPECT_EQ(tr.rows[12].raw_cmd, sc.controller_config.max_rate);
}

TEST(Sim, NoMonitorDeliversPostFaultCommand) {
  auto sc = scenario(1);
  sc.fault = FaultSpec{FaultTarget::CommandOutput, FaultKind::ScalePow2, 2.0, 60.0, 150.0};
  const auto tr = run(sc);
  for (const auto& r : tr.rows) {
    ASSERT_EQ(r.delivered_cmd, r.raw_cmd);
    ASSERT_FALSE(r.alarm.raised());
    ASSERT_FALSE(r.mitig);
  }
}

TEST(Sim, GlucoseInputFaultChangesSeenOnly) {
  auto sc = scenario(2);
  sc.fault = FaultSpec{FaultTarget::GlucoseInput, FaultKind::Add, 64.0, 60.0, 60.0};
  const auto tr = run(sc);
  EXPECT_EQ(tr.rows[12].seen_bg, tr.rows[12].true_bg + 64.0);
  EXPECT_EQ(tr.rows[11].seen_bg, tr.rows[11].true_bg);
  EXPECT_GT(tr.rows[12].raw_cmd, tr.rows[11].raw_cmd);
}

TEST(Sim, ReplayMatchesLiveAlarms) {
  auto sc = scenario(4);
  sc.fault = FaultSpec{FaultTarget::CommandOutput, FaultKind::TruncateZero, 0.0, 60.0, 300.0};
  MonitorSetup ms;
  ms.name = "cawot";
  auto live = make_monitor(ms, sc.controller_config);
  const auto tr = run(sc, live.get());
  auto again = make_monitor(ms, sc.controller_config);
  const auto v = replay(*again, tr);
  bool any = false;
  for (std::size_t i = 0; i < tr.size(); ++i) {
    ASSERT_EQ(v[i], tr.rows[i].alarm) << i;
    any = any || v[i].raised();
  }
  EXPECT_TRUE(any);
}

TEST(Sim, MitigationChangesDelivery) {
  auto sc = scenario(0);
  sc.fault = FaultSpec{FaultTarget::CommandOutput, FaultKind::SetMax, 0.0, 60.0, 300.0};
  MonitorSetup ms;
  ms.name = "cawot";
  auto mon = make_monitor(ms, sc.controller_config);
  MitigationConfig mc;
  mc.enabled = true;
  const auto tr = run(sc, mon.get(), mc);
  EXPECT_TRUE(tr.header.mitigation);
  const auto base = run(sc);
  bool mitigated = false;
  for (const auto& r : tr.rows) mitigated = mitigated || (r.mitig && r.delivered_cmd != r.raw_cmd);
  EXPECT_TRUE(mitigated);
  EXPECT_LT(mean_risk_index(tr.true_bg()), mean_risk_index(base.true_bg()));
}

TEST(Sim, InvalidConfigRejected) {
  auto sc = scenario();
  sc.initial_bg = 250.0;
  EXPECT_THROW(run(sc), std::invalid_argument);
}

TEST(Campaign, CountAndIds) {
  CampaignSpec spec;
  spec.initial_bg = default_initial_bg();
  spec.kinds = {FaultKind::HoldLast};
  spec.targets = {FaultTarget::CommandOutput};
  spec.levels = {0};
  spec.include_fault_free = false;
  const auto sc = expand_campaign(spec, shipped_profiles(), {});
  EXPECT_EQ(sc.size(), 630u);
  EXPECT_EQ(sc.front().scenario_id, "bg080_f0000");
  EXPECT_EQ(scenario_id(120.0, std::nullopt), "bg120_clean");
}

TEST(Campaign, EmptyGridFaultFreeOnly) {
  CampaignSpec spec;
  spec.patients = {"patient_B"};
  spec.initial_bg = {100.0, 140.0};
  const auto sc = expand_campaign(spec, shipped_profiles(), {});
  ASSERT_EQ(sc.size(), 2u);
  const auto traces = run_campaign(sc);
  for (const auto& t : traces) {
    for (const auto& r : t.rows) ASSERT_FALSE(r.fault);
  }
  spec.include_fault_free = false;
  EXPECT_THROW(expand_campaign(spec, shipped_profiles(), {}), std::invalid_argument);
  spec.patients = {"nobody"};
  spec.include_fault_free = true;
  EXPECT_THROW(expand_campaign(spec, shipped_profiles(), {}), std::invalid_argument);
}

TEST(Campaign, DeterministicAcrossThreadCounts) {
  auto spec = default_campaign();
  spec.patients = {"patient_C", "patient_F"};
  spec.initial_bg = {100.0, 180.0};
  spec.max_faults = 20;
  const auto sc = expand_campaign(spec, shipped_profiles(), {});
  const auto a = run_campaign(sc, nullptr, {}, 1);
  const auto b = run_campaign(sc, nullptr, {}, 4);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    std::ostringstream x, y;
    write_trace_csv(x, a[i]);
    write_trace_csv(y, b[i]);
    ASSERT_EQ(x.str(), y.str()) << a[i].header.scenario_id;
    ASSERT_EQ(header_to_json(a[i].header).dump(), header_to_json(b[i].header).dump());
  }
}

TEST(TraceIo, RoundTripThroughFiles) {
  auto sc = scenario(5);
  sc.fault = FaultSpec{FaultTarget::GlucoseInput, FaultKind::Sub, 32.0, 120.0, 150.0};
  MonitorSetup ms;
  ms.name = "cawot";
  auto mon = make_monitor(ms, sc.controller_config);
  const auto tr = run(sc, mon.get());
  const fs::path dir = fs::temp_directory_path() / "apsmon_trace_io";
  fs::remove_all(dir);
  save_trace(dir, tr);
  EXPECT_TRUE(fs::exists(dir / tr.header.patient / (tr.header.scenario_id + ".csv")));
  const auto back = load_trace(trace_path(dir, tr.header));
  EXPECT_EQ(back.rows, tr.rows);
  EXPECT_EQ(header_to_json(back.header), header_to_json(tr.header));
  const auto all = load_campaign(dir);
  ASSERT_EQ(all.size(), 1u);
  fs::remove_all(dir);
}

TEST(TraceIo, CsvHeaderAndErrors) {
  Trace tr;
  tr.rows.push_back({});
  std::ostringstream os;
  write_trace_csv(os, tr);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), kTraceColumns);
  std::istringstream bad("t_min,true_bg\n0,1\n");
  EXPECT_THROW(read_trace_csv(bad), std::invalid_argument);
  EXPECT_EQ(alarm_from_string(alarm_to_string({Hazard::H2, "r9"})), (Alarm{Hazard::H2, "r9"}));
  EXPECT_THROW(alarm_from_string("H3:x"), std::invalid_argument);
}

TEST(TraceIo, ShortestRoundTripNumbers) {
  for (double v : {0.1, 1.0 / 3.0, 123.456789, 1e-300, 0.0}) EXPECT_EQ(parse_double(format_double(v)), v);
}
