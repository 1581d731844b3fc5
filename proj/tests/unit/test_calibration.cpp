#include <random>

#include <gtest/gtest.h>

#include "../support/calibration_oracle.hpp"
#include "fpcagg/calibration.hpp"

using namespace fpcagg;

TEST(Calibration, MatchesGridSearchPosteriorMode) {
  for (const auto& fx : oracle::fixtures()) {
    SCOPED_TRACE(fx.name);
    const auto g = oracle::group_pairs(fx.pairs);
    const auto fit = fit_calibration(fx.pairs, {fx.s0, fx.s1});
    const auto ref = oracle::grid_map(g, fx.s0, fx.s1);
    ASSERT_TRUE(ref.interior);
    EXPECT_TRUE(fit.converged);
    EXPECT_NEAR(fit.beta0, ref.b0, 1e-3);
    EXPECT_NEAR(fit.beta1, ref.b1, 1e-3);
    // No grid point beats the fitted mode.
    EXPECT_GE(oracle::log_posterior(g, fit.beta0, fit.beta1, fx.s0, fx.s1), ref.grid_best - 1e-12);
    const auto [d0, d1] = oracle::fd_gradient(g, fit.beta0, fit.beta1, fx.s0, fx.s1);
    EXPECT_LT(std::max(std::abs(d0), std::abs(d1)), 1e-6);
  }
}

TEST(Calibration, SeparatedDataStayFinite) {
  const auto fx = oracle::fixtures()[1];
  const auto fit = fit_calibration(fx.pairs);
  EXPECT_TRUE(std::isfinite(fit.beta0));
  EXPECT_LT(std::abs(fit.beta1), 40.0);
  EXPECT_GT(fit.beta1, 0.0);
}

TEST(Calibration, ConstantPredictorIsShrunk) {
  const auto fit = fit_calibration(oracle::fixtures()[2].pairs);
  EXPECT_LT(std::abs(fit.beta1), 0.1);
  EXPECT_NEAR(fit.beta0, 0.0, 0.05);
  EXPECT_NEAR(fit.probability(0.5), 0.5, 1e-6);
}

TEST(Calibration, RecoversGeneratingCoefficients) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> up(0.01, 0.99), u(0.0, 1.0);
  std::vector<CalibrationPair> pairs(100000);
  for (auto& pr : pairs) {
    pr.p = up(rng);
    pr.y = u(rng) < 1.0 / (1.0 + std::exp(-4.0 * pr.p)) ? 1 : 0;
  }
  const auto fit = fit_calibration(pairs);
  EXPECT_NEAR(fit.beta0, 0.0, 0.1);
  EXPECT_NEAR(fit.beta1, 4.0, 0.1);

  // With a flat-ish prior the intercept score equation nearly holds:
  // mean fitted probability equals the observed rate.
  double mp = 0.0, my = 0.0;
  for (const auto& pr : pairs) {
    mp += fit.probability(pr.p);
    my += pr.y;
  }
  EXPECT_NEAR(mp / pairs.size(), my / pairs.size(), 1e-4);
}

TEST(Calibration, WellCalibratedInputStaysNearIdentityAtOneHalf) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 3; ++rep) {
    std::vector<CalibrationPair> pairs(10000);
    for (auto& pr : pairs) {
      pr.p = u(rng);
      pr.y = u(rng) < pr.p ? 1 : 0;
    }
    const auto fit = fit_calibration(pairs);
    EXPECT_GE(fit.beta1, 0.0);
    EXPECT_LT(std::abs(fit.probability(0.5) - 0.5), 0.05);
  }
}

TEST(Calibration, LabelUsesStrictThreshold) {
  CalibrationModel m;
  m.beta0 = -1.0;
  m.beta1 = 2.0;
  EXPECT_EQ(m.label(0.5), 0);  // exactly 0.5 -> class 0
  EXPECT_EQ(m.label(0.5 + 1e-9), 1);
  EXPECT_NEAR(m.probability(0.75), 1.0 / (1.0 + std::exp(-0.5)), 1e-15);
}

TEST(Calibration, InputErrors) {
  auto code = [](const std::vector<CalibrationPair>& p, CalibrationOptions o = {}) {
    try {
      fit_calibration(p, o);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Config;
  };
  EXPECT_EQ(code({{0.2, 1}, {0.7, 1}, {0.9, 1}}), ErrorCode::DegenerateLabels);
  EXPECT_EQ(code({{0.2, 1}}), ErrorCode::InsufficientData);
  EXPECT_EQ(code({{0.2, 1}, {0.4, 0}}, {0.0, 2.5}), ErrorCode::Config);
}

TEST(Calibration, ClampsExtremeProbabilities) {
  const std::vector<CalibrationPair> a{{0.0, 0}, {1.0, 1}, {0.3, 1}, {0.6, 0}};
  const std::vector<CalibrationPair> b{{1e-12, 0}, {1.0 - 1e-12, 1}, {0.3, 1}, {0.6, 0}};
  const auto fa = fit_calibration(a), fb = fit_calibration(b);
  EXPECT_DOUBLE_EQ(fa.beta0, fb.beta0);
  EXPECT_DOUBLE_EQ(fa.beta1, fb.beta1);
}
