#include <gtest/gtest.h>

#include <cmath>

#include "radur/losses.hpp"
#include "test_util.hpp"

using namespace radur;
using namespace radur::testing;

TEST(Bce, ClosedForms) {
  EXPECT_NEAR(bce_loss(std::vector<double>{0.9}, std::vector<double>{1.0}), -std::log(0.9), 1e-15);
  EXPECT_NEAR(bce_loss(std::vector<double>(7, 0.5), std::vector<double>{1, 0, 1, 0, 0, 1, 1}), std::log(2.0), 1e-15);
  EXPECT_LE(bce_loss(std::vector<double>{1.0, 0.0}, std::vector<double>{1.0, 0.0}), -std::log(1 - 1e-7) + 1e-15);
  EXPECT_THROW(bce_loss(std::vector<double>{0.5}, std::vector<double>{1.0, 0.0}), ShapeError);
}

TEST(Focal, ClosedFormOracle) {
  const double oracle = 0.65 * std::pow(1 - 0.9, 2) * -std::log(0.9);
  const double got = focal_loss(std::vector<double>{0.9}, std::vector<double>{1.0}, {0.65, 2.0});
  EXPECT_NEAR(got, oracle, 1e-15);
  EXPECT_NEAR(got, 6.85e-4, 2e-7);  // the rounded constant
}

TEST(Focal, GammaZeroHalfBetaIsHalfBce) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const auto p = random_values(rng, 10, 0.0, 1.0);
    std::vector<double> y(10);
    for (auto& v : y) v = static_cast<double>(rng() % 2);
    EXPECT_NEAR(focal_loss(p, y, {0.5, 0.0}), 0.5 * bce_loss(p, y), 1e-9);
  }
}

TEST(Focal, NonNegative) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const auto p = random_values(rng, 5, 0.0, 1.0);
    const auto y = random_values(rng, 5, 0.0, 1.0);
    EXPECT_GE(focal_loss(p, y, {0.65, 2.0}), 0.0);
  }
}

TEST(Focal, ConfigValidation) {
  EXPECT_THROW((FocalConfig{1.0, 2.0}.validate()), std::invalid_argument);
  EXPECT_THROW((FocalConfig{0.5, -1.0}.validate()), std::invalid_argument);
  EXPECT_THROW((DurationWeightConfig{-1.0}.validate()), std::invalid_argument);
}

TEST(DurationWeight, Endpoints) {
  DurationWeightConfig intent{1.5, 0.0, 10.0, DurationWeightMode::intent};
  DurationWeightConfig literal{1.5, 0.0, 10.0, DurationWeightMode::literal};
  EXPECT_NEAR(duration_weight(0.0, intent), 2.5, 1e-12);
  EXPECT_NEAR(duration_weight(10.0, intent), 1.0, 1e-12);
  EXPECT_NEAR(duration_weight(0.0, literal), 1.0, 1e-12);
  EXPECT_NEAR(duration_weight(10.0, literal), 2.5, 1e-12);
  EXPECT_NEAR(duration_weight(-3.0, intent), 2.5, 1e-12);  // clipped
  EXPECT_NEAR(duration_weight(42.0, intent), 1.0, 1e-12);
  for (double w : {0.0, 1.0, 5.0, 10.0}) {
    EXPECT_EQ(duration_weight(w, {0.0, 0.0, 10.0, DurationWeightMode::intent}), 1.0);
    EXPECT_EQ(duration_weight(w, {0.0, 0.0, 10.0, DurationWeightMode::literal}), 1.0);
  }
}

TEST(DurationWeight, MonotoneAndBounded) {
  DurationWeightConfig intent{1.5, 0.0, 10.0, DurationWeightMode::intent};
  DurationWeightConfig literal{1.5, 0.0, 10.0, DurationWeightMode::literal};
  double prev_i = 1e9, prev_l = -1e9;
  for (int i = 0; i <= 1000; ++i) {
    const double w = 10.0 * i / 1000.0;
    const double a = duration_weight(w, intent), b = duration_weight(w, literal);
    EXPECT_LE(a, prev_i);
    EXPECT_GE(b, prev_l);
    EXPECT_GE(a, 1.0);
    EXPECT_LE(a, 2.5);
    prev_i = a;
    prev_l = b;
  }
}

TEST(DuFocal, ScalesFocalByClassWeight) {
  const DurationStats stats{{"short", 0.0}, {"long", 10.0}, {"mid", 3.0}};
  const std::vector<double> p{0.2, 0.7, 0.9}, y{0, 1, 1};
  const FocalConfig f;
  const double base = focal_loss(p, y, f);
  EXPECT_NEAR(du_focal_loss(p, y, "short", stats, f, {}), 2.5 * base, 1e-15);
  EXPECT_EQ(du_focal_loss(p, y, "mid", stats, f, {0.0}), base);
  EXPECT_GE(du_focal_loss(p, y, "short", stats, f, {}), du_focal_loss(p, y, "mid", stats, f, {}));
  EXPECT_GE(du_focal_loss(p, y, "mid", stats, f, {}), du_focal_loss(p, y, "long", stats, f, {}));
  EXPECT_THROW(du_focal_loss(p, y, "unknown", stats, f, {}), MissingStats);
}

TEST(LossGradients, FocalAndDuFocalMatchFiniteDifferences) {
  std::mt19937_64 rng(3);
  const DurationStats stats{{"c", 2.0}};
  for (int trial = 0; trial < 20; ++trial) {
    Var p = random_param(rng, {6}, 0.05, 0.95);
    std::vector<double> y(6);
    for (auto& v : y) v = static_cast<double>(rng() % 2);
    const FocalConfig f{std::uniform_real_distribution<double>(0.1, 0.9)(rng),
                        std::uniform_real_distribution<double>(0.0, 3.0)(rng)};
    const DurationWeightConfig d{std::uniform_real_distribution<double>(0.0, 2.0)(rng)};
    EXPECT_LT(gradient_error([&] { return focal_loss(p, y, f); }, {p}), 1e-4);
    EXPECT_LT(gradient_error([&] { return du_focal_loss(p, y, "c", stats, f, d); }, {p}), 1e-4);
    EXPECT_LT(gradient_error([&] { return bce_loss(p, y); }, {p}), 1e-4);
  }
}

TEST(LossValues, VarAndPlainVersionsAgree) {
  std::mt19937_64 rng(4);
  const auto p = random_values(rng, 9, 0.0, 1.0);
  std::vector<double> y(9);
  for (auto& v : y) v = static_cast<double>(rng() % 2);
  const Var pv = Var::constant({9}, p);
  EXPECT_EQ(focal_loss(pv, y, {}).item(), focal_loss(p, y, {}));
  EXPECT_EQ(bce_loss(pv, y).item(), bce_loss(p, y));
}

TEST(DurationMode, Parsing) {
  EXPECT_EQ(parse_duration_mode("intent"), DurationWeightMode::intent);
  EXPECT_EQ(parse_duration_mode("literal"), DurationWeightMode::literal);
  EXPECT_THROW(parse_duration_mode("other"), std::invalid_argument);
}
