#include <gtest/gtest.h>

#include "apsmon/risk.hpp"
#include "apsmon/sim.hpp"
#include "apsmon/patients.hpp"
#include "oracles.hpp"

using namespace apsmon;

namespace {
double zero_risk_bg() { return std::exp(std::pow(5.381, 1.0 / 1.084)); }
}  // namespace

TEST(Risk, Anchors) {
  EXPECT_NEAR(risk(50.0), 22.5, 0.01);
  EXPECT_TRUE(risk_low_side(50.0));
  EXPECT_NEAR(risk(20.0), 100.0, 0.5);
  EXPECT_NEAR(risk(600.0), 100.0, 0.5);
  EXPECT_TRUE(risk_low_side(20.0));
  EXPECT_FALSE(risk_low_side(600.0));
  EXPECT_NEAR(oracle::bisect(risk_transform, 50.0, 300.0), 112.5, 0.2);
  EXPECT_NEAR(risk(zero_risk_bg()), 0.0, 1e-20);
  EXPECT_THROW(risk(0.0), std::invalid_argument);
}

TEST(RiskIndex, ZeroRiskWindow) {
  const std::vector<double> w(12, zero_risk_bg());
  const auto r = lbgi_hbgi(w);
  EXPECT_NEAR(r.lbgi, 0.0, 1e-20);
  EXPECT_NEAR(r.hbgi, 0.0, 1e-20);
}

TEST(RiskIndex, LowWindow) {
  const std::vector<double> w(12, 50.0);
  const auto r = lbgi_hbgi(w);
  EXPECT_NEAR(r.lbgi, risk(50.0), 1e-12);
  EXPECT_EQ(r.hbgi, 0.0);
}

TEST(RiskIndex, MeanOverFullWindow) {
  std::vector<double> w(6, 50.0);
  w.insert(w.end(), 6, zero_risk_bg());
  EXPECT_NEAR(lbgi_hbgi(w).lbgi, risk(50.0) / 2.0, 1e-12);
}

TEST(RiskSeries, TrailingWindow) {
  std::vector<double> bg(20, 120.0);
  bg[15] = 50.0;
  const auto s = risk_series(bg, 12);
  EXPECT_NEAR(s.lbgi[15], risk(50.0) / 12.0, 1e-12);
  EXPECT_NEAR(s.lbgi[19], risk(50.0) / 12.0, 1e-12);
  EXPECT_THROW(risk_series(bg, 0), std::invalid_argument);
}

TEST(Label, EuglycemicTraceUnlabeled) {
  const std::vector<double> bg(150, 120.0);
  const auto l = label(bg);
  EXPECT_FALSE(l.hazardous());
}

TEST(Label, FlatPlateauNotLabeled) {
  const double g = oracle::bisect([](double x) { return risk(x) - 6.0; }, 40.0, 112.0);
  const std::vector<double> bg(40, g);
  EXPECT_FALSE(label(bg).hazardous());
}

TEST(Label, FallingGlucoseGivesH1) {
  std::vector<double> bg;
  for (int i = 0; i < 40; ++i) bg.push_back(120.0 - 2.5 * i);
  const auto l = label(bg);
  ASSERT_TRUE(l.hazardous());
  EXPECT_EQ(l.type, Hazard::H1);
}

TEST(Label, RisingGlucoseGivesH2) {
  std::vector<double> bg;
  for (int i = 0; i < 40; ++i) bg.push_back(150.0 + 8.0 * i);
  const auto l = label(bg);
  ASSERT_TRUE(l.hazardous());
  EXPECT_EQ(l.type, Hazard::H2);
}

TEST(Label, ShortTraceRejected) {
  EXPECT_THROW(label(std::vector<double>(5, 100.0)), std::invalid_argument);
}

TEST(Label, MaxInsulinFaultCausesH1AfterTrigger) {
  int severe = 0;
  for (const auto& p : shipped_profiles()) {
    ScenarioConfig sc;
    sc.scenario_id = "maxfault";
    sc.patient = p;
    sc.controller_config = calibrate_controller(p);
    sc.fault = FaultSpec{FaultTarget::CommandOutput, FaultKind::SetMax, 0.0, 60.0, 300.0};
    const auto tr = run(sc);
    double min_bg = 1e9;
    for (const auto& r : tr.rows) min_bg = std::min(min_bg, r.true_bg);
    if (min_bg >= 40.0) continue;
    ++severe;
    ASSERT_TRUE(tr.onset().has_value()) << p.name;
    EXPECT_EQ(tr.hazard_type(), Hazard::H1) << p.name;
    EXPECT_GT(tr.rows[*tr.onset()].t, 60.0) << p.name;
  }
  EXPECT_GT(severe, 0);
}

TEST(RiskIndex, MeanRiskIndex) {
  const std::vector<double> bg(24, 50.0);
  EXPECT_NEAR(mean_risk_index(bg), risk(50.0), 1e-12);
  EXPECT_EQ(mean_risk_index({}), 0.0);
}
