#include <gtest/gtest.h>

#include "apsmon/monitors.hpp"
#include "apsmon/patients.hpp"
#include "fixtures.hpp"

using namespace apsmon;

namespace {
ContextRuleMonitor cawot() {
  const auto rs = default_ruleset();
  return ContextRuleMonitor("cawot", rs, cawot_defaults(rs), 1.0, 0.05);
}
}  // namespace

TEST(ContextMonitor, RuleOneUnsafe) {
  const auto rs = default_ruleset();
  auto th = cawot_defaults(rs);
  th.slots["b1"] = 2.5;
  ContextRuleMonitor m("cawt", rs, th, 1.0, 0.05);
  EXPECT_FALSE(m.observe({0, 140.0, 2.0, 1.0}).raised());
  const auto v = m.observe({5, 145.0, 1.9, 0.5});
  EXPECT_EQ(v.hazard, Hazard::H2);
  EXPECT_EQ(v.source, "r1");
}

TEST(ContextMonitor, BoundaryBgIsSafe) {
  auto m = cawot();
  m.observe({0, 120.0, 2.0, 0.5});
  EXPECT_FALSE(m.observe({5, 120.0, 1.9, 0.5}).raised());
}

TEST(ContextMonitor, RequiredStopRule) {
  const auto rs = default_ruleset();
  auto th = cawot_defaults(rs);
  th.slots["b21"] = 90.0;
  ContextRuleMonitor m("cawt", rs, th, 1.0, 0.05);
  const auto v = m.observe({0, 85.0, 1.0, 1.0});
  EXPECT_EQ(v.hazard, Hazard::H1);
  EXPECT_EQ(v.source, "r10");
  m.reset();
  EXPECT_FALSE(m.observe({0, 85.0, 1.0, 0.0}).raised());
}

TEST(ContextMonitor, CawotVacuousIobBound) {
  auto m = cawot();
  m.observe({0, 140.0, 50.0, 1.0});
  EXPECT_EQ(m.observe({5, 145.0, 49.0, 0.5}).hazard, Hazard::H2);
}

TEST(ContextMonitor, CawotDefaultLowBg) {
  auto m = cawot();
  const auto v = m.observe({0, 65.0, 1.0, 1.0});
  EXPECT_EQ(v.hazard, Hazard::H1);
  EXPECT_EQ(v.source, "r10");
}

TEST(ContextMonitor, SteadyStateKeepIsSafe) {
  auto m = cawot();
  for (int k = 0; k < 10; ++k) EXPECT_FALSE(m.observe({k * 5.0, 120.0, 1.0, 1.0}).raised());
}

TEST(ContextMonitor, UnresolvedThresholdsRejected) {
  const auto rs = default_ruleset();
  Thresholds th;
  EXPECT_THROW(ContextRuleMonitor("cawt", rs, th, 1.0, 0.05), stl::UnresolvedSlot);
}

TEST(Guideline, LowBg) {
  GuidelineMonitor m({});
  const auto v = m.observe({0, 65.0, 0, 0});
  EXPECT_EQ(v.hazard, Hazard::H1);
  EXPECT_EQ(v.source, "phi1");
}

TEST(Guideline, FastRise) {
  GuidelineMonitor m({});
  m.observe({0, 120.0, 0, 0});
  const auto v = m.observe({5, 124.0, 0, 0});
  EXPECT_EQ(v.hazard, Hazard::H2);
  EXPECT_EQ(v.source, "phi2");
}

TEST(Guideline, DeadlineMetIsSafe) {
  GuidelineConfig c;
  c.lambda10 = 100.0;
  c.lambda90 = 170.0;
  const std::vector<double> ok{104, 101, 98, 96, 95, 95, 96, 98, 100.5, 102};
  GuidelineMonitor m(c);
  for (std::size_t i = 0; i < ok.size(); ++i) {
    EXPECT_FALSE(m.observe({5.0 * i, ok[i], 0, 0}).raised()) << i;
  }
  std::vector<double> late = ok;
  late[8] = 99.0;
  m.reset();
  Verdict last;
  for (std::size_t i = 0; i <= 8; ++i) last = m.observe({5.0 * i, late[i], 0, 0});
  EXPECT_EQ(last.source, "phi3");
}

TEST(Guideline, RejectsInvertedPercentiles) {
  GuidelineConfig c;
  c.lambda10 = 150.0;
  c.lambda90 = 100.0;
  EXPECT_THROW(GuidelineMonitor{c}, std::invalid_argument);
}

TEST(Guideline, Percentile) {
  EXPECT_DOUBLE_EQ(percentile({1, 2, 3, 4, 5}, 50.0), 3.0);
  EXPECT_DOUBLE_EQ(percentile({0, 10}, 10.0), 1.0);
  EXPECT_THROW(percentile({}, 10.0), std::invalid_argument);
}

TEST(Mpc, SteadyStateSafe) {
  const auto pop = population_mean(shipped_profiles());
  MpcConfig c;
  c.model = pop;
  MpcMonitor m(c);
  const double basal = model_to_uph(steady_basal(pop, 120.0));
  EXPECT_FALSE(m.observe({0, 120.0, 0, basal}).raised());
}

TEST(Mpc, NoInsulinPredictsHyper) {
  MpcConfig c;
  c.model = population_mean(shipped_profiles());
  ASSERT_GT(c.model.egp, c.model.gezi * 170.0);
  MpcMonitor m(c);
  EXPECT_EQ(m.observe({0, 170.0, 0, 0.0}).hazard, Hazard::H2);
}

TEST(Mpc, MaxInsulinPredictsHypo) {
  MpcConfig c;
  c.model = population_mean(shipped_profiles());
  MpcMonitor m(c);
  EXPECT_EQ(m.observe({0, 80.0, 0, 5.0}).hazard, Hazard::H1);
}

TEST(Mitigation, H1StopsInsulin) {
  Mitigator m({true, 5.0}, 5.0);
  const auto o = m.apply({Hazard::H1, "r10"}, 60.0, 3.0);
  EXPECT_EQ(o.command, 0.0);
  EXPECT_TRUE(o.active);
}

TEST(Mitigation, H2DeliversCorrection) {
  Mitigator m({true, 4.0}, 5.0);
  EXPECT_EQ(m.apply({Hazard::H2, "r9"}, 250.0, 0.0).command, 4.0);
}

TEST(Mitigation, SafeWithoutLatchPassesThrough) {
  Mitigator m({true, 5.0}, 5.0);
  const auto o = m.apply({}, 120.0, 1.3);
  EXPECT_EQ(o.command, 1.3);
  EXPECT_FALSE(o.active);
}

TEST(Mitigation, LatchReleasesInRange) {
  Mitigator m({true, 5.0}, 5.0);
  m.apply({Hazard::H2, "r1"}, 250.0, 1.0);
  EXPECT_EQ(m.apply({}, 200.0, 1.0).command, 5.0);
  EXPECT_TRUE(m.latched());
  EXPECT_EQ(m.apply({}, 170.0, 1.0).command, 1.0);
  EXPECT_FALSE(m.latched());
}

TEST(Mitigation, DisabledIsIdentity) {
  Mitigator m({false, 5.0}, 5.0);
  EXPECT_EQ(m.apply({Hazard::H1, "r10"}, 60.0, 3.0).command, 3.0);
}

TEST(Mitigation, CorrectionAbovePumpMaxRejected) {
  EXPECT_THROW(Mitigator({true, 8.0}, 5.0), std::invalid_argument);
}

TEST(Factory, NamesAndErrors) {
  ControllerConfig ctl;
  MonitorSetup s;
  EXPECT_EQ(make_monitor(s, ctl), nullptr);
  s.name = "cawot";
  EXPECT_EQ(make_monitor(s, ctl)->name(), "cawot");
  s.name = "cawt";
  EXPECT_THROW(make_monitor(s, ctl), std::invalid_argument);
  s.name = "mpc";
  s.mpc.model = population_mean(shipped_profiles());
  EXPECT_EQ(make_monitor(s, ctl)->name(), "mpc");
  s.name = "oracle";
  EXPECT_THROW(make_monitor(s, ctl), std::invalid_argument);
  EXPECT_FALSE(known_monitor("oracle"));
}

TEST(Replay, ObservesTraceColumns) {
  const auto tr = fixture::falling_h1();
  auto m = cawot();
  const auto v = replay(m, tr);
  ASSERT_EQ(v.size(), tr.size());
  EXPECT_EQ(v.back().hazard, Hazard::H1);
}
