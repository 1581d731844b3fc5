#pragma once

// Functional principal component analysis for sparse curves: local linear
// smoothing of the pooled mean and of the off-diagonal raw covariances,
// quadrature-weighted eigendecomposition, and conditional-expectation (PACE)
// scores.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fpcagg/curve_data.hpp"
#include "fpcagg/error.hpp"

namespace fpcagg {

class EvaluationGrid {
 public:
  EvaluationGrid() = default;

  EvaluationGrid(Domain domain, int size) : domain_(domain), size_(size) {
    if (size < 2) throw Error(ErrorCode::Config, "grid needs at least 2 points");
    if (!(domain.hi > domain.lo)) throw Error(ErrorCode::Domain, "grid domain must have positive length");
    step_ = domain.length() / (size - 1);
    points_.resize(size);
    for (int a = 0; a < size; ++a) points_[a] = domain.lo + step_ * a;
    points_[size - 1] = domain.hi;
  }

  int size() const noexcept { return size_; }
  double step() const noexcept { return step_; }
  const Domain& domain() const noexcept { return domain_; }
  const Eigen::VectorXd& points() const noexcept { return points_; }
  double operator[](int a) const { return points_[a]; }

  Eigen::VectorXd trapezoid_weights() const {
    Eigen::VectorXd w = Eigen::VectorXd::Constant(size_, step_);
    w[0] *= 0.5;
    w[size_ - 1] *= 0.5;
    return w;
  }

  bool contains(double t) const noexcept { return domain_.contains(t, 1e-12 * domain_.length()); }

  // Left interval index and fractional position for linear interpolation.
  std::pair<int, double> locate(double t) const {
    if (!contains(t)) throw Error(ErrorCode::Extrapolation, "time " + std::to_string(t) + " outside grid domain");
    double u = (t - domain_.lo) / step_;
    int a = std::clamp(static_cast<int>(std::floor(u)), 0, size_ - 2);
    return {a, std::clamp(u - a, 0.0, 1.0)};
  }

  double interpolate(const Eigen::Ref<const Eigen::VectorXd>& values, double t) const {
    auto [a, f] = locate(t);
    return (1.0 - f) * values[a] + f * values[a + 1];
  }

 private:
  Domain domain_{};
  int size_ = 0;
  double step_ = 0.0;
  Eigen::VectorXd points_;
};

struct MeanFunction {
  EvaluationGrid grid;
  Eigen::VectorXd values;
  double bandwidth = 0.0;

  double operator()(double t) const { return grid.interpolate(values, t); }
};

struct CovarianceSurface {
  EvaluationGrid grid;
  Eigen::MatrixXd values;
  double bandwidth = 0.0;
};

struct CovarianceEstimate {
  CovarianceSurface surface;
  double noise_variance = 0.0;
  Eigen::VectorXd diagonal_smooth;  // V(t): smoothed squared residuals
};

struct EigenResult {
  Eigen::VectorXd eigenvalues;     // all retained positive eigenvalues, descending
  Eigen::MatrixXd eigenfunctions;  // grid x eigenvalues.size()
  int K = 0;
  double pve = 0.0;  // cumulative fraction explained by the first K
};

struct FpcaConfig {
  int grid_size = 51;
  std::optional<double> mean_bandwidth;  // default 10% of domain length
  std::optional<double> cov_bandwidth;   // default 20% of domain length
  std::optional<double> noise_bandwidth; // default 7.5% of domain length
  double pve_threshold = 0.99;
  std::optional<int> k_min;
  std::optional<int> k_max;
};

struct FpcaModel {
  MeanFunction mean;
  Eigen::VectorXd eigenvalues;     // K, descending, positive
  Eigen::MatrixXd eigenfunctions;  // grid x K
  double noise_variance = 0.0;
  int K = 0;
  double pve_threshold = 0.99;
  double pve = 0.0;

  const EvaluationGrid& grid() const noexcept { return mean.grid; }
  const Domain& domain() const noexcept { return mean.grid.domain(); }
};

namespace detail {

inline double epanechnikov(double u) noexcept { return std::abs(u) < 1.0 ? 0.75 * (1.0 - u * u) : 0.0; }

constexpr int kMaxBandwidthDoublings = 10;
constexpr double kSingularRatio = 1e-10;

// Local linear estimate at x0 from points sorted by x. Returns nullopt when the
// local design is singular.
inline std::optional<double> local_linear_1d(const std::vector<double>& xs, const std::vector<double>& ys, double x0,
                                             double h) {
  auto first = std::lower_bound(xs.begin(), xs.end(), x0 - h);
  auto last = std::upper_bound(first, xs.end(), x0 + h);
  double s0 = 0, s1 = 0, s2 = 0, t0 = 0, t1 = 0;
  for (auto it = first; it != last; ++it) {
    const std::size_t i = static_cast<std::size_t>(it - xs.begin());
    const double d = xs[i] - x0;
    const double w = epanechnikov(d / h);
    if (w <= 0.0) continue;
    s0 += w;
    s1 += w * d;
    s2 += w * d * d;
    t0 += w * ys[i];
    t1 += w * d * ys[i];
  }
  const double det = s0 * s2 - s1 * s1;
  if (!(s0 > 0.0) || !(s2 > 0.0) || det <= kSingularRatio * s0 * s2) return std::nullopt;
  return (s2 * t0 - s1 * t1) / det;
}

inline Eigen::VectorXd smooth_1d(std::vector<std::pair<double, double>> pts, const EvaluationGrid& grid, double h) {
  std::sort(pts.begin(), pts.end());
  std::vector<double> xs(pts.size()), ys(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    xs[i] = pts[i].first;
    ys[i] = pts[i].second;
  }
  Eigen::VectorXd out(grid.size());
  for (int a = 0; a < grid.size(); ++a) {
    double bw = h;
    std::optional<double> est;
    for (int k = 0; k <= kMaxBandwidthDoublings && !est; ++k, bw *= 2.0) est = local_linear_1d(xs, ys, grid[a], bw);
    if (!est) throw Error(ErrorCode::SmoothingFailure, "local design singular at t=" + std::to_string(grid[a]));
    out[a] = *est;
  }
  return out;
}

// Solves the 3x3 local linear system; nullopt when singular.
inline std::optional<double> solve_local_plane(double s00, double s10, double s01, double s20, double s11, double s02,
                                               double t00, double t10, double t01, double scale00) {
  if (!(s00 > 1e-12 * scale00) || !(s20 > 0.0) || !(s02 > 0.0)) return std::nullopt;
  // Cofactors of [[s00,s10,s01],[s10,s20,s11],[s01,s11,s02]].
  const double c00 = s20 * s02 - s11 * s11;
  const double c01 = -(s10 * s02 - s11 * s01);
  const double c02 = s10 * s11 - s20 * s01;
  const double det = s00 * c00 + s10 * c01 + s01 * c02;
  if (!(det > kSingularRatio * s00 * s20 * s02)) return std::nullopt;
  return (c00 * t00 + c01 * t10 + c02 * t01) / det;
}

}  // namespace detail

inline EvaluationGrid make_grid(const Domain& domain, int size = 51) { return EvaluationGrid(domain, size); }

inline MeanFunction estimate_mean(const FunctionalDataset& data, const EvaluationGrid& grid, double bandwidth) {
  if (!(bandwidth > 0.0)) throw Error(ErrorCode::Config, "mean bandwidth must be positive");
  if (data.total_observations() < 2) throw Error(ErrorCode::InsufficientData, "need at least 2 pooled observations");
  std::vector<std::pair<double, double>> pts;
  pts.reserve(data.total_observations());
  for (const auto& c : data.curves())
    for (std::size_t j = 0; j < c.size(); ++j) pts.emplace_back(c.times()[j], c.values()[j]);
  return MeanFunction{grid, detail::smooth_1d(std::move(pts), grid, bandwidth), bandwidth};
}

// Raw covariances (Z(t_j) - mu(t_j)) (Z(t_l) - mu(t_l)) for all j != l within a
// curve are smoothed with a product-kernel local linear fit. Because each raw
// covariance is a product of residuals, every kernel moment factorizes per
// curve: sum_{j != l} u(j) v(l) = (sum_j u(j)) (sum_l v(l)) - sum_j u(j) v(j).
inline CovarianceEstimate estimate_covariance(const FunctionalDataset& data, const MeanFunction& mean,
                                              double bandwidth, std::optional<double> noise_bandwidth = std::nullopt) {
  if (!(bandwidth > 0.0)) throw Error(ErrorCode::Config, "covariance bandwidth must be positive");
  const double hn = noise_bandwidth.value_or(0.375 * bandwidth);
  if (!(hn > 0.0)) throw Error(ErrorCode::Config, "noise bandwidth must be positive");
  const EvaluationGrid& grid = mean.grid;
  const int G = grid.size();
  const double h = bandwidth;

  std::vector<std::size_t> paired;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data[i].size() >= 2) paired.push_back(i);
  if (paired.empty()) throw Error(ErrorCode::CovarianceInestimable, "no curve has two or more observations");

  std::vector<std::vector<double>> resid(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& c = data[i];
    resid[i].resize(c.size());
    for (std::size_t j = 0; j < c.size(); ++j) resid[i][j] = c.values()[j] - mean(c.times()[j]);
  }

  const auto m = static_cast<Eigen::Index>(paired.size());
  Eigen::MatrixXd U0 = Eigen::MatrixXd::Zero(G, m), U1 = U0, U2 = U0, V0 = U0, V1 = U0;
  Eigen::MatrixXd D00 = Eigen::MatrixXd::Zero(G, G), D10 = D00, D20 = D00, D11 = D00, E00 = D00, E10 = D00;

  auto window = [&](double t) {
    int lo = static_cast<int>(std::ceil((t - h - grid.domain().lo) / grid.step()));
    int hi = static_cast<int>(std::floor((t + h - grid.domain().lo) / grid.step()));
    return std::pair{std::max(lo, 0), std::min(hi, G - 1)};
  };

  std::vector<double> w0(G), w1(G), w2(G);
  for (Eigen::Index col = 0; col < m; ++col) {
    const auto& c = data[paired[col]];
    const auto& r = resid[paired[col]];
    for (std::size_t j = 0; j < c.size(); ++j) {
      const double t = c.times()[j];
      auto [lo, hi] = window(t);
      for (int a = lo; a <= hi; ++a) {
        const double d = t - grid[a];
        const double w = detail::epanechnikov(d / h);
        w0[a] = w;
        w1[a] = w * d;
        w2[a] = w * d * d;
        U0(a, col) += w0[a];
        U1(a, col) += w1[a];
        U2(a, col) += w2[a];
        V0(a, col) += w0[a] * r[j];
        V1(a, col) += w1[a] * r[j];
      }
      const double r2 = r[j] * r[j];
      for (int b = lo; b <= hi; ++b) {
        for (int a = lo; a <= hi; ++a) {
          const double p = w0[a] * w0[b];
          D00(a, b) += p;
          D10(a, b) += w1[a] * w0[b];
          D20(a, b) += w2[a] * w0[b];
          D11(a, b) += w1[a] * w1[b];
          E00(a, b) += p * r2;
          E10(a, b) += w1[a] * w0[b] * r2;
        }
      }
    }
  }

  const Eigen::MatrixXd S00 = U0 * U0.transpose() - D00;
  const Eigen::MatrixXd S10 = U1 * U0.transpose() - D10;
  const Eigen::MatrixXd S20 = U2 * U0.transpose() - D20;
  const Eigen::MatrixXd S11 = U1 * U1.transpose() - D11;
  const Eigen::MatrixXd T00 = V0 * V0.transpose() - E00;
  const Eigen::MatrixXd T10 = V1 * V0.transpose() - E10;
  const double scale00 = S00.maxCoeff();

  struct RawPair {
    double s, t, c;
  };
  std::vector<RawPair> pairs;
  for (auto i : paired) {
    const auto& c = data[i];
    for (std::size_t j = 0; j < c.size(); ++j)
      for (std::size_t l = 0; l < c.size(); ++l)
        if (j != l) pairs.push_back({c.times()[j], c.times()[l], resid[i][j] * resid[i][l]});
  }

  auto brute_force = [&](int a, int b) -> double {
    double bw = h;
    for (int k = 1; k <= detail::kMaxBandwidthDoublings; ++k) {
      bw *= 2.0;
      double s00 = 0, s10 = 0, s01 = 0, s20 = 0, s11 = 0, s02 = 0, t00 = 0, t10 = 0, t01 = 0;
      for (const auto& p : pairs) {
        const double dx = p.s - grid[a], dy = p.t - grid[b];
        const double w = detail::epanechnikov(dx / bw) * detail::epanechnikov(dy / bw);
        if (w <= 0.0) continue;
        s00 += w;
        s10 += w * dx;
        s01 += w * dy;
        s20 += w * dx * dx;
        s11 += w * dx * dy;
        s02 += w * dy * dy;
        t00 += w * p.c;
        t10 += w * dx * p.c;
        t01 += w * dy * p.c;
      }
      if (auto est = detail::solve_local_plane(s00, s10, s01, s20, s11, s02, t00, t10, t01, 0.0)) return *est;
    }
    throw Error(ErrorCode::SmoothingFailure,
                "covariance design singular at (" + std::to_string(grid[a]) + ", " + std::to_string(grid[b]) + ")");
  };

  // G(t,t) for the noise variance: rotated coordinates u along and v across
  // the diagonal, linear in u and quadratic in v, so the ridge curvature across
  // the diagonal is not smoothed into the estimate. V(t) and this fit share the
  // narrower bandwidth hn so their along-diagonal biases cancel.
  std::sort(pairs.begin(), pairs.end(), [](const RawPair& x, const RawPair& y) { return x.s + x.t < y.s + y.t; });
  auto diagonal_at = [&](int a) -> std::optional<double> {
    double bw = hn;
    for (int k = 0; k <= detail::kMaxBandwidthDoublings; ++k, bw *= 2.0) {
      const double lo_key = 2.0 * (grid[a] - bw), hi_key = 2.0 * (grid[a] + bw);
      auto first = std::lower_bound(pairs.begin(), pairs.end(), lo_key,
                                    [](const RawPair& p, double key) { return p.s + p.t < key; });
      Eigen::Matrix3d M = Eigen::Matrix3d::Zero();
      Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
      for (auto it = first; it != pairs.end() && it->s + it->t <= hi_key; ++it) {
        const double u = 0.5 * (it->s + it->t) - grid[a], v = 0.5 * (it->s - it->t);
        const double w = detail::epanechnikov(u / bw) * detail::epanechnikov(v / bw);
        if (w <= 0.0) continue;
        const Eigen::Vector3d x(1.0, u, v * v);
        M.noalias() += w * x * x.transpose();
        rhs.noalias() += w * it->c * x;
      }
      if (!(M(0, 0) > 0.0) || !(M(1, 1) > 0.0) || !(M(2, 2) > 0.0)) continue;
      if (!(M.determinant() > detail::kSingularRatio * M(0, 0) * M(1, 1) * M(2, 2))) continue;
      return M.ldlt().solve(rhs)[0];
    }
    return std::nullopt;
  };

  Eigen::MatrixXd Ghat(G, G);
  for (int b = 0; b < G; ++b) {
    for (int a = 0; a < G; ++a) {
      auto est = detail::solve_local_plane(S00(a, b), S10(a, b), S10(b, a), S20(a, b), S11(a, b), S20(b, a),
                                           T00(a, b), T10(a, b), T10(b, a), scale00);
      Ghat(a, b) = est ? *est : brute_force(a, b);
    }
  }
  Eigen::MatrixXd sym = 0.5 * (Ghat + Ghat.transpose());

  std::vector<std::pair<double, double>> diag;
  diag.reserve(data.total_observations());
  for (std::size_t i = 0; i < data.size(); ++i)
    for (std::size_t j = 0; j < data[i].size(); ++j) diag.emplace_back(data[i].times()[j], resid[i][j] * resid[i][j]);
  Eigen::VectorXd V = detail::smooth_1d(std::move(diag), grid, hn);

  const double L = grid.domain().length();
  const double lo = grid.domain().lo + 0.1 * L - 1e-12 * L, hi = grid.domain().hi - 0.1 * L + 1e-12 * L;
  double acc = 0.0;
  int count = 0;
  for (int a = 0; a < G; ++a) {
    if (grid[a] < lo || grid[a] > hi) continue;
    auto ridge = diagonal_at(a);
    if (!ridge) continue;
    acc += V[a] - *ridge;
    ++count;
  }
  const double sigma2 = count > 0 ? std::max(0.0, acc / count) : 0.0;
  return CovarianceEstimate{CovarianceSurface{grid, std::move(sym), bandwidth}, sigma2, std::move(V)};
}

// Smallest K whose cumulative share of the positive eigenvalues reaches the
// threshold, optionally clamped.
inline int select_k(const Eigen::VectorXd& positive_eigenvalues, double pve_threshold,
                    std::optional<int> k_min = std::nullopt, std::optional<int> k_max = std::nullopt) {
  const auto n = static_cast<int>(positive_eigenvalues.size());
  const double total = positive_eigenvalues.sum();
  int K = n;
  double cum = 0.0;
  for (int k = 0; k < n; ++k) {
    cum += positive_eigenvalues[k];
    if (cum / total >= pve_threshold - 1e-12) {
      K = k + 1;
      break;
    }
  }
  if (k_min) K = std::max(K, *k_min);
  if (k_max) K = std::min(K, *k_max);
  return std::clamp(K, 1, n);
}

inline EigenResult eigendecompose(const CovarianceSurface& surface, double pve_threshold,
                                  std::optional<int> k_min = std::nullopt, std::optional<int> k_max = std::nullopt) {
  if (!(pve_threshold > 0.0 && pve_threshold <= 1.0)) throw Error(ErrorCode::Config, "pve_threshold must lie in (0,1]");
  if (k_min && k_max && *k_min > *k_max) throw Error(ErrorCode::Config, "k_min exceeds k_max");
  const Eigen::VectorXd w = surface.grid.trapezoid_weights();
  const Eigen::VectorXd sw = w.cwiseSqrt();
  Eigen::MatrixXd A = sw.asDiagonal() * surface.values * sw.asDiagonal();
  A = 0.5 * (A + A.transpose()).eval();
  if (!A.allFinite()) throw Error(ErrorCode::Numerical, "covariance surface has non-finite entries");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(A);
  if (solver.info() != Eigen::Success) throw Error(ErrorCode::Numerical, "eigensolver failed");
  const Eigen::VectorXd& vals = solver.eigenvalues();  // ascending
  const double top = vals.size() ? vals[vals.size() - 1] : 0.0;
  if (!(top > 0.0)) throw Error(ErrorCode::DegenerateCovariance, "no positive eigenvalues");
  const double floor = 1e-12 * top;

  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = vals.size() - 1; i >= 0 && vals[i] > floor; --i) keep.push_back(i);

  EigenResult out;
  out.eigenvalues.resize(static_cast<Eigen::Index>(keep.size()));
  out.eigenfunctions.resize(surface.grid.size(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    out.eigenvalues[kk] = vals[keep[k]];
    Eigen::VectorXd phi = solver.eigenvectors().col(keep[k]).cwiseQuotient(sw);
    phi /= std::sqrt(w.dot(phi.cwiseProduct(phi)));
    Eigen::Index arg = 0;
    phi.cwiseAbs().maxCoeff(&arg);
    if (phi[arg] < 0.0) phi = -phi;
    out.eigenfunctions.col(kk) = phi;
  }
  out.K = select_k(out.eigenvalues, pve_threshold, k_min, k_max);
  out.pve = out.eigenvalues.head(out.K).sum() / out.eigenvalues.sum();
  return out;
}

// E[xi | Z] for one curve under the fitted model.
inline Eigen::VectorXd pace_scores(const FpcaModel& model, const SparseCurve& curve) {
  const auto n = static_cast<Eigen::Index>(curve.size());
  const int K = model.K;
  Eigen::MatrixXd phi(n, K);
  Eigen::VectorXd centered(n);
  const auto& grid = model.grid();
  for (Eigen::Index j = 0; j < n; ++j) {
    auto [a, f] = grid.locate(curve.times()[j]);
    phi.row(j) = (1.0 - f) * model.eigenfunctions.row(a) + f * model.eigenfunctions.row(a + 1);
    centered[j] = curve.values()[j] - ((1.0 - f) * model.mean.values[a] + f * model.mean.values[a + 1]);
  }
  Eigen::MatrixXd sigma = phi * model.eigenvalues.asDiagonal() * phi.transpose();
  if (model.noise_variance > 0.0) {
    sigma.diagonal().array() += model.noise_variance;
  } else {
    const double tr = sigma.trace();
    sigma.diagonal().array() += 1e-8 * (tr > 0.0 ? tr : 1.0) / static_cast<double>(n);
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(sigma);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw Error(ErrorCode::Numerical, "score covariance is not positive definite for curve '" + curve.id() + "'");
  Eigen::VectorXd solved = ldlt.solve(centered);
  Eigen::VectorXd xi = model.eigenvalues.cwiseProduct(phi.transpose() * solved);
  if (!xi.allFinite()) throw Error(ErrorCode::Numerical, "non-finite scores for curve '" + curve.id() + "'");
  return xi;
}

inline Eigen::MatrixXd pace_scores(const FpcaModel& model, const FunctionalDataset& data) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(data.size()), model.K);
  for (std::size_t i = 0; i < data.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = pace_scores(model, data[i]);
  return out;
}

inline FpcaModel fit_fpca(const FunctionalDataset& data, const FpcaConfig& config = {}) {
  if (data.size() < 2) throw Error(ErrorCode::InsufficientData, "FPCA needs at least 2 curves");
  const EvaluationGrid grid(data.domain(), config.grid_size);
  const double L = data.domain().length();
  MeanFunction mean = estimate_mean(data, grid, config.mean_bandwidth.value_or(0.10 * L));
  CovarianceEstimate cov = estimate_covariance(data, mean, config.cov_bandwidth.value_or(0.20 * L),
                                               config.noise_bandwidth.value_or(0.075 * L));
  EigenResult eig = eigendecompose(cov.surface, config.pve_threshold, config.k_min, config.k_max);

  FpcaModel model;
  model.mean = std::move(mean);
  model.K = eig.K;
  model.eigenvalues = eig.eigenvalues.head(eig.K);
  model.eigenfunctions = eig.eigenfunctions.leftCols(eig.K);
  model.noise_variance = cov.noise_variance;
  model.pve_threshold = config.pve_threshold;
  model.pve = eig.pve;
  return model;
}

// Debug dump: CSV blocks introduced by '# <section>' lines.
inline void write_fpca_dump(std::ostream& out, const FpcaModel& model) {
  const auto& grid = model.grid();
  out << "# summary\nK,pve_threshold,pve,noise_variance,mean_bandwidth\n"
      << model.K << ',' << detail::format_double(model.pve_threshold) << ',' << detail::format_double(model.pve) << ','
      << detail::format_double(model.noise_variance) << ',' << detail::format_double(model.mean.bandwidth) << "\n";
  out << "# eigenvalues\nk,eigenvalue\n";
  for (int k = 0; k < model.K; ++k) out << k + 1 << ',' << detail::format_double(model.eigenvalues[k]) << '\n';
  out << "# functions\nt,mean";
  for (int k = 0; k < model.K; ++k) out << ",phi" << k + 1;
  out << '\n';
  for (int a = 0; a < grid.size(); ++a) {
    out << detail::format_double(grid[a]) << ',' << detail::format_double(model.mean.values[a]);
    for (int k = 0; k < model.K; ++k) out << ',' << detail::format_double(model.eigenfunctions(a, k));
    out << '\n';
  }
}

}  // namespace fpcagg
