#pragma once

// Bayesian logistic calibration logit(pi) = b0 + b1 * p with independent
// Cauchy(0, s0) and Cauchy(0, s1) priors. The posterior mode is found by the
// EM-within-IWLS scheme: each Cauchy prior is a scale mixture of normals, the
// E-step sets the normal prior precision to (nu + 1) / (nu s^2 + b^2) with
// nu = 1, and the M-step takes one penalized IWLS step.

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "fpcagg/classifiers.hpp"
#include "fpcagg/error.hpp"

namespace fpcagg {

struct CalibrationPair {
  double p = 0.5;
  int y = 0;
};

struct CalibrationModel {
  double beta0 = 0.0;
  double beta1 = 0.0;
  double prior_scale0 = 10.0;
  double prior_scale1 = 2.5;
  bool converged = false;
  int iterations = 0;

  double probability(double p) const { return logistic(beta0 + beta1 * p); }
  int label(double p) const { return probability(p) > 0.5 ? 1 : 0; }
};

struct CalibrationOptions {
  double prior_scale0 = 10.0;
  double prior_scale1 = 2.5;
  int max_iter = 200;
  double tol = 1e-8;
};

inline CalibrationModel fit_calibration(const std::vector<CalibrationPair>& pairs, const CalibrationOptions& opt = {}) {
  if (pairs.size() < 2) throw Error(ErrorCode::InsufficientData, "calibration needs at least 2 pairs");
  if (!(opt.prior_scale0 > 0.0) || !(opt.prior_scale1 > 0.0))
    throw Error(ErrorCode::Config, "prior scales must be positive");
  int ones = 0;
  for (const auto& pr : pairs) {
    if (pr.y != 0 && pr.y != 1) throw Error(ErrorCode::Config, "calibration labels must be 0 or 1");
    ones += pr.y;
  }
  if (ones == 0 || ones == static_cast<int>(pairs.size()))
    throw Error(ErrorCode::DegenerateLabels, "calibration labels are all identical");

  const auto n = static_cast<Eigen::Index>(pairs.size());
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = clamp_probability(pairs[static_cast<std::size_t>(i)].p);
    y[i] = pairs[static_cast<std::size_t>(i)].y;
  }
  const Eigen::Vector2d scale2(opt.prior_scale0 * opt.prior_scale0, opt.prior_scale1 * opt.prior_scale1);

  CalibrationModel out;
  out.prior_scale0 = opt.prior_scale0;
  out.prior_scale1 = opt.prior_scale1;
  Eigen::Vector2d beta = Eigen::Vector2d::Zero();
  for (int it = 1; it <= opt.max_iter; ++it) {
    const Eigen::VectorXd eta = X * beta;
    const Eigen::VectorXd mu = eta.unaryExpr([](double e) { return logistic(e); });
    const Eigen::VectorXd w = mu.cwiseProduct((1.0 - mu.array()).matrix()).cwiseMax(1e-300);
    // E-step: expected normal precision under the t_1 scale mixture.
    const Eigen::Vector2d precision = (2.0 / (scale2.array() + beta.array().square())).matrix();
    Eigen::Matrix2d H = X.transpose() * w.asDiagonal() * X;
    H.diagonal() += precision;
    // M-step: penalized IWLS, written as an update on the working response.
    const Eigen::Vector2d g = X.transpose() * (y - mu) - precision.cwiseProduct(beta);
    const Eigen::Vector2d step = H.ldlt().solve(g);
    if (!step.allFinite()) throw Error(ErrorCode::Numerical, "calibration IWLS step is not finite");
    beta += step;
    out.iterations = it;
    if (step.cwiseAbs().maxCoeff() < opt.tol) {
      out.converged = true;
      break;
    }
  }
  out.beta0 = beta[0];
  out.beta1 = beta[1];
  return out;
}

}  // namespace fpcagg
