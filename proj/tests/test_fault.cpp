#include <gtest/gtest.h>

#include "apsmon/fault.hpp"

using namespace apsmon;

namespace {
FaultSpec fault(FaultKind k, FaultTarget t, double v = 0.0) { return {t, k, v, 60.0, 150.0}; }
const SignalBounds kCmd{0.0, 5.0};
const SignalBounds kBg{10.0, 600.0};
}  // namespace

TEST(Fault, InactiveBeforeTrigger) {
  const auto f = fault(FaultKind::SetMax, FaultTarget::CommandOutput);
  EXPECT_DOUBLE_EQ(apply(f, FaultTarget::CommandOutput, 1.3, 1.0, 55.0, kCmd), 1.3);
  EXPECT_DOUBLE_EQ(apply(f, FaultTarget::CommandOutput, 1.3, 1.0, 210.0, kCmd), 1.3);
}

TEST(Fault, OtherSignalUntouched) {
  const auto f = fault(FaultKind::TruncateZero, FaultTarget::GlucoseInput);
  EXPECT_DOUBLE_EQ(apply(f, FaultTarget::CommandOutput, 1.3, 1.0, 100.0, kCmd), 1.3);
}

TEST(Fault, SetMaxAndMin) {
  EXPECT_DOUBLE_EQ(apply(fault(FaultKind::SetMax, FaultTarget::CommandOutput),
                         FaultTarget::CommandOutput, 1.0, 1.0, 60.0, kCmd), 5.0);
  EXPECT_DOUBLE_EQ(apply(fault(FaultKind::SetMin, FaultTarget::GlucoseInput),
                         FaultTarget::GlucoseInput, 140.0, 140.0, 60.0, kBg), 10.0);
}

TEST(Fault, AddClampsToBound) {
  const auto f = fault(FaultKind::Add, FaultTarget::GlucoseInput, 50.0);
  EXPECT_DOUBLE_EQ(apply(f, FaultTarget::GlucoseInput, 580.0, 580.0, 100.0, kBg), 600.0);
  EXPECT_DOUBLE_EQ(apply(f, FaultTarget::GlucoseInput, 100.0, 580.0, 100.0, kBg), 150.0);
}

TEST(Fault, SubTruncateHoldScale) {
  EXPECT_DOUBLE_EQ(apply(fault(FaultKind::Sub, FaultTarget::CommandOutput, 2.0),
                         FaultTarget::CommandOutput, 1.0, 1.0, 100.0, kCmd), 0.0);
  EXPECT_DOUBLE_EQ(apply(fault(FaultKind::TruncateZero, FaultTarget::CommandOutput),
                         FaultTarget::CommandOutput, 3.0, 1.0, 100.0, kCmd), 0.0);
  EXPECT_DOUBLE_EQ(apply(fault(FaultKind::HoldLast, FaultTarget::CommandOutput),
                         FaultTarget::CommandOutput, 3.0, 1.25, 100.0, kCmd), 1.25);
  EXPECT_DOUBLE_EQ(apply(fault(FaultKind::ScalePow2, FaultTarget::CommandOutput, -2.0),
                         FaultTarget::CommandOutput, 2.0, 1.0, 100.0, kCmd), 0.5);
  EXPECT_DOUBLE_EQ(apply(fault(FaultKind::ScalePow2, FaultTarget::CommandOutput, 2.0),
                         FaultTarget::CommandOutput, 2.0, 1.0, 100.0, kCmd), 5.0);
}

TEST(Fault, Validation) {
  auto f = fault(FaultKind::ScalePow2, FaultTarget::CommandOutput, 3.0);
  EXPECT_THROW(f.validate(), std::invalid_argument);
  f = fault(FaultKind::Add, FaultTarget::CommandOutput, 1.0);
  f.duration = 0.0;
  EXPECT_THROW(f.validate(), std::invalid_argument);
  EXPECT_THROW(apply(fault(FaultKind::Add, FaultTarget::CommandOutput, 1.0),
                     FaultTarget::CommandOutput, std::nan(""), 1.0, 100.0, kCmd),
               std::invalid_argument);
}

TEST(Fault, JsonRoundTrip) {
  const auto f = fault(FaultKind::Sub, FaultTarget::GlucoseInput, 16.0);
  EXPECT_EQ(fault_from_json(fault_to_json(f)), f);
  EXPECT_THROW(parse_fault_kind("flip"), std::invalid_argument);
  EXPECT_THROW(parse_fault_target("sensor"), std::invalid_argument);
}

TEST(Campaign, FullGridSize) {
  const auto c = default_campaign();
  EXPECT_EQ(c.grid_size(), 882u);
  EXPECT_EQ(generate_campaign(c).size(), 882u);
}

TEST(Campaign, SeededSubsampleIsDeterministic) {
  auto c = default_campaign();
  c.max_faults = 100;
  c.seed = 42;
  const auto a = generate_campaign(c), b = generate_campaign(c);
  ASSERT_EQ(a.size(), 100u);
  EXPECT_EQ(a, b);
  c.seed = 43;
  EXPECT_NE(generate_campaign(c), a);
}

TEST(Campaign, SingleCellGivesNineTimings) {
  CampaignSpec c;
  c.initial_bg = {120.0};
  c.kinds = {FaultKind::SetMax};
  c.targets = {FaultTarget::CommandOutput};
  c.levels = {0};
  EXPECT_EQ(generate_campaign(c).size(), 9u);
}

TEST(Campaign, LevelMapping) {
  const auto c = default_campaign();
  EXPECT_DOUBLE_EQ(level_value(c, FaultKind::Add, FaultTarget::GlucoseInput, 3), 32.0);
  EXPECT_DOUBLE_EQ(level_value(c, FaultKind::Sub, FaultTarget::CommandOutput, 0), 0.125);
  EXPECT_DOUBLE_EQ(level_value(c, FaultKind::ScalePow2, FaultTarget::CommandOutput, 1), -1.0);
  EXPECT_DOUBLE_EQ(level_value(c, FaultKind::HoldLast, FaultTarget::CommandOutput, 5), 0.0);
}

TEST(Campaign, EmptyGridThrows) {
  CampaignSpec c;
  EXPECT_THROW(generate_campaign(c), std::invalid_argument);
}

TEST(Campaign, JsonRoundTripAndValidation) {
  auto c = default_campaign();
  c.max_faults = 12;
  const auto back = campaign_from_json(campaign_to_json(c));
  EXPECT_EQ(generate_campaign(back), generate_campaign(c));
  EXPECT_THROW(campaign_from_json({{"initial_bg", {60.0}}}), std::invalid_argument);
}
