#include <gtest/gtest.h>

#include <random>

#include "apsmon/metrics.hpp"
#include "apsmon/pipeline.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace apsmon;

namespace {
std::vector<char> bits(std::initializer_list<int> v) { return {v.begin(), v.end()}; }

Trace faulty(std::string id, bool hazard_after_fault, double trigger = 50.0) {
  fixture::Column c;
  for (int i = 0; i < 30; ++i) {
    c.bg.push_back(120.0);
    c.iob.push_back(1.0);
    c.cmd.push_back(1.0);
    c.label.push_back(hazard_after_fault && i >= 20 ? Hazard::H1 : Hazard::None);
  }
  auto tr = fixture::make_trace(c, std::move(id));
  tr.header.fault = FaultSpec{FaultTarget::CommandOutput, FaultKind::SetMax, 0.0, trigger, 60.0};
  return tr;
}
}  // namespace

TEST(SampleConfusion, AllNegative) {
  const auto c = sample_confusion(bits({0, 0, 0, 0}), bits({0, 0, 0, 0}), 3);
  EXPECT_EQ(c, (ConfusionCounts{0, 0, 0, 4}));
}

TEST(SampleConfusion, AlertInsideToleranceWindow) {
  const auto p = bits({0, 1, 0, 0, 0});
  const auto g = bits({0, 0, 0, 1, 0});
  const auto c = sample_confusion(p, g, 2);
  // t=1..3 are positive (hazard at 3 within 2 steps); the alert at 1 covers them.
  EXPECT_EQ(c.tp, 3);
  EXPECT_EQ(c.fn, 0);
  EXPECT_EQ(c.tn, 2);
}

TEST(SampleConfusion, IsolatedAlertIsFalsePositive) {
  std::vector<char> p(8, 0), g(8, 0);
  p[5] = 1;
  const auto c = sample_confusion(p, g, 2);
  EXPECT_EQ(c.fp, 1);
  EXPECT_EQ(c.tn, 7);
}

TEST(SampleConfusion, MatchesEnumerator) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 400; ++i) {
    const std::size_t n = 1 + i % 60, d = i % 13;
    std::vector<char> p(n), g(n);
    for (std::size_t t = 0; t < n; ++t) {
      p[t] = u(rng) < 0.2;
      g[t] = u(rng) < 0.15;
    }
    const auto c = sample_confusion(p, g, d);
    const auto o = oracle::window_confusion(p, g, d);
    ASSERT_EQ(c.tp, o.tp);
    ASSERT_EQ(c.fp, o.fp);
    ASSERT_EQ(c.fn, o.fn);
    ASSERT_EQ(c.tn, o.tn);
  }
}

TEST(SampleConfusion, LengthMismatchThrows) {
  EXPECT_THROW(sample_confusion(bits({0}), bits({0, 1}), 1), std::invalid_argument);
}

TEST(Rates, Definitions) {
  const ConfusionCounts c{6, 2, 3, 9};
  EXPECT_DOUBLE_EQ(c.fpr(), 2.0 / 11.0);
  EXPECT_DOUBLE_EQ(c.fnr(), 3.0 / 9.0);
  EXPECT_DOUBLE_EQ(c.acc(), 15.0 / 20.0);
  EXPECT_DOUBLE_EQ(c.f1(), 12.0 / 17.0);
  EXPECT_EQ(ConfusionCounts{}.f1(), 0.0);
}

TEST(SimulationConfusion, Regions) {
  // hazard after t_f, alert after t_f
  auto c = simulation_confusion(bits({0, 0, 0, 1, 0}), bits({0, 0, 0, 0, 1}), 2);
  EXPECT_EQ(c, (ConfusionCounts{1, 0, 0, 1}));
  c = simulation_confusion(bits({1, 0, 0, 0, 0}), bits({0, 0, 0, 0, 0}), 2);
  EXPECT_EQ(c, (ConfusionCounts{0, 1, 0, 1}));
  c = simulation_confusion(bits({0, 0, 0, 0, 0}), bits({0, 0, 0, 1, 1}), 2);
  EXPECT_EQ(c, (ConfusionCounts{0, 0, 1, 1}));
  c = simulation_confusion(bits({0, 0, 0}), bits({0, 0, 0}), 0);
  EXPECT_EQ(c, (ConfusionCounts{0, 0, 0, 1}));
}

TEST(Coverage, Fractions) {
  std::vector<Trace> all;
  for (int i = 0; i < 10; ++i) all.push_back(faulty("f" + std::to_string(i), i < 3));
  EXPECT_DOUBLE_EQ(hazard_coverage(pointers(all)), 0.3);
  for (auto& t : all) t = faulty(t.header.scenario_id, true);
  EXPECT_DOUBLE_EQ(hazard_coverage(pointers(all)), 1.0);
  for (auto& t : all) t = faulty(t.header.scenario_id, false);
  EXPECT_DOUBLE_EQ(hazard_coverage(pointers(all)), 0.0);
  std::vector<Trace> clean{fixture::falling_h1()};
  EXPECT_THROW(hazard_coverage(pointers(clean)), std::invalid_argument);
}

TEST(Coverage, HazardBeforeFaultIgnored) {
  auto t = faulty("early", true, 120.0);  // labels from t=100, before trigger 120
  for (std::size_t i = 24; i < t.size(); ++i) t.rows[i].label = Hazard::None;
  EXPECT_FALSE(fault_onset(t).has_value());
}

TEST(TimeToHazard, OnsetMinusTrigger) {
  const std::vector<Trace> all{faulty("a", true), faulty("b", false)};
  const auto tth = time_to_hazard(pointers(all));
  ASSERT_EQ(tth.size(), 1u);
  EXPECT_DOUBLE_EQ(tth[0], 100.0 - 50.0);
}

TEST(Reaction, FirstAlertAfterFault) {
  const auto t = faulty("a", true);
  std::vector<char> alerts(t.size(), 0);
  alerts[2] = 1;   // before the fault, ignored
  alerts[14] = 1;  // 70 min
  const auto r = reaction_time(t, alerts);
  ASSERT_TRUE(r.has_value());
  EXPECT_DOUBLE_EQ(*r, 30.0);
  ReactionStats s;
  accumulate_reaction(s, t, alerts);
  alerts.assign(t.size(), 0);
  alerts[25] = 1;
  accumulate_reaction(s, t, alerts);
  EXPECT_EQ(s.hazards, 2);
  EXPECT_EQ(s.early, 1);
  EXPECT_DOUBLE_EQ(s.mean(), (30.0 - 25.0) / 2.0);
  EXPECT_DOUBLE_EQ(s.early_detection_rate(), 0.5);
}

TEST(Recovery, IdenticalCampaigns) {
  const std::vector<Trace> a{faulty("a", true), faulty("b", false)};
  const auto s = recovery_rate(pointers(a), pointers(a));
  EXPECT_EQ(s.rate(), 0.0);
  EXPECT_EQ(s.new_hazards, 0);
}

TEST(Recovery, AllPrevented) {
  const std::vector<Trace> base{faulty("a", true), faulty("b", true)};
  const std::vector<Trace> mit{faulty("a", false), faulty("b", false)};
  EXPECT_EQ(recovery_rate(pointers(base), pointers(mit)).rate(), 1.0);
}

TEST(Recovery, CountsPreventedAndInduced) {
  std::vector<Trace> base, mit;
  for (int i = 0; i < 200; ++i) {
    const std::string id = "s" + std::to_string(i);
    const bool hb = i < 100;
    const bool hm = hb ? i >= 54 : i < 108;
    base.push_back(faulty(id, hb));
    mit.push_back(faulty(id, hm));
  }
  const auto s = recovery_rate(pointers(base), pointers(mit));
  EXPECT_DOUBLE_EQ(s.rate(), 0.54);
  EXPECT_EQ(s.new_hazards, 8);
}

TEST(Recovery, UnpairedRejected) {
  const std::vector<Trace> a{faulty("a", true)}, b{faulty("b", true)};
  EXPECT_THROW(recovery_rate(pointers(a), pointers(b)), std::invalid_argument);
}

TEST(AverageRisk, Arithmetic) {
  EXPECT_EQ(average_risk(10, {}, {}), 0.0);
  EXPECT_EQ(average_risk(10, {6.0, 4.0}, {5.0}), 1.5);
  EXPECT_EQ(average_risk(20, {6.0, 4.0}, {5.0}), 0.75);
  EXPECT_THROW(average_risk(0, {}, {}), std::invalid_argument);
}

TEST(AverageRisk, NoMonitorCountsEveryHazard) {
  const std::vector<Trace> a{fixture::falling_h1("x"), faulty("y", false)};
  const double ri = mean_risk_index(a[0].true_bg());
  EXPECT_DOUBLE_EQ(campaign_average_risk(pointers(a), pointers(a)), ri / 2.0);
}

TEST(Report, JsonAndTables) {
  MitigationStudy s;
  s.recovery = {100, 54, 8};
  s.risk_baseline = 2.0;
  s.risk_mitigated = 1.0;
  s.traces = 700;
  const auto j = mitigation_json(s);
  EXPECT_DOUBLE_EQ(j["recovery_rate"].get<double>(), 0.54);
  const auto t = mitigation_table(s);
  EXPECT_NE(t.find("Recovery Rate"), std::string::npos);
  EXPECT_NE(t.find("Avg. Risk"), std::string::npos);
  std::ostringstream os;
  write_histogram(os, {5.0, 12.0, 14.0}, 10.0);
  EXPECT_NE(os.str().find("10"), std::string::npos);
}
