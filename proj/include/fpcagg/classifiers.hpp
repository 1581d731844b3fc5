#pragma once

// Probability-emitting binary classifiers over FPC score vectors: logistic
// regression (IRLS), LDA, QDA, Gaussian naive Bayes, random forest with
// OOB-tuned mtry, and gradient boosting with cross-validated tuning.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "fpcagg/error.hpp"
#include "fpcagg/rng.hpp"
#include "fpcagg/tree.hpp"

namespace fpcagg {

enum class ClassifierKind { Logit, LDA, QDA, NaiveBayes, RandomForest, GBM };

inline constexpr std::array<ClassifierKind, 6> kAllClassifiers{ClassifierKind::Logit,      ClassifierKind::LDA,
                                                               ClassifierKind::QDA,        ClassifierKind::NaiveBayes,
                                                               ClassifierKind::RandomForest, ClassifierKind::GBM};

inline const char* to_string(ClassifierKind k) {
  switch (k) {
    case ClassifierKind::Logit: return "logit";
    case ClassifierKind::LDA: return "lda";
    case ClassifierKind::QDA: return "qda";
    case ClassifierKind::NaiveBayes: return "naivebayes";
    case ClassifierKind::RandomForest: return "rf";
    case ClassifierKind::GBM: return "gbm";
  }
  return "?";
}

inline ClassifierKind parse_classifier(std::string_view s) {
  for (auto k : kAllClassifiers)
    if (s == to_string(k)) return k;
  if (s == "nb" || s == "naive_bayes") return ClassifierKind::NaiveBayes;
  if (s == "randomforest" || s == "random_forest") return ClassifierKind::RandomForest;
  throw Error(ErrorCode::Config, "unknown classifier '" + std::string(s) + "'");
}

constexpr double kProbFloor = 1e-12;

inline double clamp_probability(double p) {
  if (std::isnan(p)) return 0.5;
  return std::clamp(p, kProbFloor, 1.0 - kProbFloor);
}

inline double logistic(double eta) {
  return eta >= 0 ? 1.0 / (1.0 + std::exp(-eta)) : std::exp(eta) / (1.0 + std::exp(eta));
}

struct TrainingMatrix {
  Eigen::MatrixXd X;  // n x K scores
  std::vector<int> y;

  Eigen::Index rows() const { return X.rows(); }
  int features() const { return static_cast<int>(X.cols()); }

  void validate() const {
    if (static_cast<std::size_t>(X.rows()) != y.size()) throw Error(ErrorCode::Shape, "rows and labels differ in length");
    if (X.cols() < 1) throw Error(ErrorCode::Shape, "need at least one score column");
    if (!X.allFinite()) throw Error(ErrorCode::Numerical, "training scores contain non-finite entries");
    int ones = 0;
    for (int v : y) {
      if (v != 0 && v != 1) throw Error(ErrorCode::Config, "labels must be 0 or 1");
      ones += v;
    }
    if (ones == 0 || ones == static_cast<int>(y.size()))
      throw Error(ErrorCode::DegenerateLabels, "training data contains a single class");
  }
};

struct GbmGrid {
  std::vector<int> n_trees{50, 100, 150};
  std::vector<int> depth{1, 2, 3};
  std::vector<double> shrinkage{0.1, 0.05};
  std::vector<int> min_node{5, 10};
};

struct ClassifierTuning {
  int logit_max_iter = 100;
  double logit_tol = 1e-8;

  int rf_trees = 500;
  int rf_tune_trees = 50;  // forest size while searching mtry
  double rf_step = 1.5;
  double rf_improve = 0.01;
  std::optional<int> rf_mtry;  // skip the search when set

  GbmGrid gbm_grid;
  int gbm_folds = 5;
};

// --- per-kind parameters ----------------------------------------------------

struct LogitParams {
  Eigen::VectorXd coef;  // intercept first
  int iterations = 0;
  bool converged = false;
  bool separation = false;
};

struct LdaParams {
  std::array<Eigen::VectorXd, 2> means;
  Eigen::MatrixXd covariance;
  std::array<double, 2> priors{0.5, 0.5};
  Eigen::MatrixXd precision;  // covariance inverse

  static LdaParams from_moments(std::array<Eigen::VectorXd, 2> means, Eigen::MatrixXd cov,
                                std::array<double, 2> priors) {
    LdaParams p;
    p.means = std::move(means);
    p.covariance = std::move(cov);
    p.priors = priors;
    const auto K = p.covariance.rows();
    p.precision = p.covariance.ldlt().solve(Eigen::MatrixXd::Identity(K, K));
    return p;
  }
};

struct QdaParams {
  std::array<Eigen::VectorXd, 2> means;
  std::array<Eigen::MatrixXd, 2> covariances;
  std::array<double, 2> priors{0.5, 0.5};
  std::array<Eigen::MatrixXd, 2> precisions;
  std::array<double, 2> log_dets{0.0, 0.0};

  static QdaParams from_moments(std::array<Eigen::VectorXd, 2> means, std::array<Eigen::MatrixXd, 2> covs,
                                std::array<double, 2> priors) {
    QdaParams p;
    p.means = std::move(means);
    p.covariances = std::move(covs);
    p.priors = priors;
    for (int c = 0; c < 2; ++c) {
      Eigen::LDLT<Eigen::MatrixXd> ldlt(p.covariances[c]);
      const auto K = p.covariances[c].rows();
      p.precisions[c] = ldlt.solve(Eigen::MatrixXd::Identity(K, K));
      p.log_dets[c] = ldlt.vectorD().array().log().sum();
    }
    return p;
  }
};

struct NaiveBayesParams {
  std::array<Eigen::VectorXd, 2> means;
  std::array<Eigen::VectorXd, 2> variances;
  std::array<double, 2> priors{0.5, 0.5};
};

struct ForestParams {
  std::vector<tree::Tree> trees;
  int mtry = 1;
  double oob_error = 0.0;
};

struct GbmParams {
  double initial = 0.0;
  double shrinkage = 0.1;
  int depth = 1;
  int min_node = 5;
  std::vector<tree::Tree> stages;
  double cv_log_loss = 0.0;
};

using ClassifierParams =
    std::variant<LogitParams, LdaParams, QdaParams, NaiveBayesParams, ForestParams, GbmParams>;

struct ClassifierModel {
  ClassifierKind kind = ClassifierKind::Logit;
  int n_features = 0;
  ClassifierParams params;
};

namespace detail {

inline std::array<int, 2> class_counts(const std::vector<int>& y) {
  std::array<int, 2> n{0, 0};
  for (int v : y) ++n[v];
  return n;
}

inline Eigen::VectorXd class_mean(const TrainingMatrix& d, int c) {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(d.features());
  int n = 0;
  for (Eigen::Index i = 0; i < d.rows(); ++i)
    if (d.y[i] == c) {
      m += d.X.row(i).transpose();
      ++n;
    }
  return m / std::max(n, 1);
}

inline Eigen::MatrixXd scatter(const TrainingMatrix& d, int c, const Eigen::VectorXd& mean) {
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(d.features(), d.features());
  for (Eigen::Index i = 0; i < d.rows(); ++i)
    if (d.y[i] == c) {
      Eigen::VectorXd r = d.X.row(i).transpose() - mean;
      s.noalias() += r * r.transpose();
    }
  return s;
}

// Adds 1e-6 * tr/K to the diagonal when the smallest eigenvalue is below 1e-10.
inline Eigen::MatrixXd regularize(Eigen::MatrixXd cov) {
  cov = 0.5 * (cov + cov.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < 1e-10) {
    const double K = static_cast<double>(cov.rows());
    const double tr = cov.trace();
    cov.diagonal().array() += 1e-6 * (tr > 0.0 ? tr / K : 1.0);
  }
  return cov;
}

inline double softmax_class1(double d0, double d1) { return logistic(d1 - d0); }

}  // namespace detail

// --- fitting ----------------------------------------------------------------

inline LogitParams fit_logit(const TrainingMatrix& d, int max_iter = 100, double tol = 1e-8) {
  const auto n = d.rows();
  const auto p = d.features() + 1;
  Eigen::MatrixXd X(n, p);
  X.col(0).setOnes();
  X.rightCols(p - 1) = d.X;
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = d.y[i];

  LogitParams out;
  out.coef = Eigen::VectorXd::Zero(p);
  for (int it = 1; it <= max_iter; ++it) {
    Eigen::VectorXd eta = X * out.coef;
    Eigen::VectorXd mu = eta.unaryExpr([](double e) { return logistic(e); });
    Eigen::VectorXd w = mu.cwiseProduct((1.0 - mu.array()).matrix()).cwiseMax(1e-12);
    Eigen::MatrixXd H = X.transpose() * w.asDiagonal() * X;
    H.diagonal().array() += 1e-12 * std::max(H.trace(), 1.0);
    Eigen::VectorXd step = H.ldlt().solve(X.transpose() * (y - mu));
    if (!step.allFinite()) break;
    out.coef += step;
    out.iterations = it;
    if (step.cwiseAbs().maxCoeff() < tol) {
      out.converged = true;
      break;
    }
  }
  Eigen::VectorXd eta = X * out.coef;
  const bool saturated = (eta.array().abs() > 25.0).any();
  out.separation = !out.converged || saturated;
  return out;
}

inline LdaParams fit_lda(const TrainingMatrix& d) {
  const auto counts = detail::class_counts(d.y);
  std::array<Eigen::VectorXd, 2> means{detail::class_mean(d, 0), detail::class_mean(d, 1)};
  Eigen::MatrixXd pooled = detail::scatter(d, 0, means[0]) + detail::scatter(d, 1, means[1]);
  pooled /= std::max<double>(static_cast<double>(d.rows()) - 2.0, 1.0);
  const double n = static_cast<double>(d.rows());
  return LdaParams::from_moments(means, detail::regularize(pooled), {counts[0] / n, counts[1] / n});
}

inline QdaParams fit_qda(const TrainingMatrix& d) {
  const auto counts = detail::class_counts(d.y);
  std::array<Eigen::VectorXd, 2> means{detail::class_mean(d, 0), detail::class_mean(d, 1)};
  std::array<Eigen::MatrixXd, 2> covs;
  for (int c = 0; c < 2; ++c)
    covs[c] = detail::regularize(detail::scatter(d, c, means[c]) / std::max(counts[c] - 1, 1));
  const double n = static_cast<double>(d.rows());
  return QdaParams::from_moments(means, covs, {counts[0] / n, counts[1] / n});
}

inline NaiveBayesParams fit_naive_bayes(const TrainingMatrix& d) {
  const auto counts = detail::class_counts(d.y);
  NaiveBayesParams p;
  const double n = static_cast<double>(d.rows());
  for (int c = 0; c < 2; ++c) {
    p.means[c] = detail::class_mean(d, c);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(d.features());
    for (Eigen::Index i = 0; i < d.rows(); ++i)
      if (d.y[i] == c) v += (d.X.row(i).transpose() - p.means[c]).cwiseAbs2();
    p.variances[c] = (v / std::max(counts[c] - 1, 1)).cwiseMax(1e-9);
    p.priors[c] = counts[c] / n;
  }
  return p;
}

namespace detail {

struct ForestFit {
  std::vector<tree::Tree> trees;
  double oob_error = 0.0;
};

inline ForestFit grow_forest(const TrainingMatrix& d, int n_trees, int mtry, std::uint64_t seed) {
  const auto n = static_cast<int>(d.rows());
  ForestFit out;
  out.trees.reserve(static_cast<std::size_t>(n_trees));
  std::vector<int> votes1(n, 0), votes(n, 0);
  std::vector<int> counts(n);
  tree::ClassificationTreeBuilder builder(d.X, d.y);
  for (int b = 0; b < n_trees; ++b) {
    Rng rng = make_rng(seed, {static_cast<std::uint64_t>(b)});
    std::fill(counts.begin(), counts.end(), 0);
    for (int i = 0; i < n; ++i) ++counts[bounded(rng, static_cast<std::uint64_t>(n))];
    out.trees.push_back(builder.grow(counts, mtry, rng));
    const auto& t = out.trees.back();
    for (int i = 0; i < n; ++i) {
      if (counts[i]) continue;
      ++votes[i];
      votes1[i] += t.predict(d.X.row(i)) > 0.5 ? 1 : 0;
    }
  }
  int wrong = 0, counted = 0;
  for (int i = 0; i < n; ++i) {
    if (votes[i] == 0) continue;
    ++counted;
    const int pred = 2 * votes1[i] > votes[i] ? 1 : 0;
    wrong += pred != d.y[i];
  }
  out.oob_error = counted ? static_cast<double>(wrong) / counted : 0.0;
  return out;
}

}  // namespace detail

// mtry starts at floor(sqrt(K)) and moves up, then down, by the step factor
// while the OOB error improves by more than the relative threshold.
inline ForestParams fit_random_forest(const TrainingMatrix& d, const ClassifierTuning& tuning, std::uint64_t seed) {
  const int K = d.features();
  int best_mtry = tuning.rf_mtry.value_or(std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(K))))));
  best_mtry = std::clamp(best_mtry, 1, K);
  if (!tuning.rf_mtry && K > 1) {
    const auto tune_seed = [&](int m) { return derive_seed(seed, {0x7ae1ULL, static_cast<std::uint64_t>(m)}); };
    const int start = best_mtry;
    double best_err = detail::grow_forest(d, tuning.rf_tune_trees, start, tune_seed(start)).oob_error;
    for (int dir : {+1, -1}) {
      int cur = start;
      double cur_err = best_err;
      while (true) {
        int next = dir > 0 ? std::min(K, std::max(cur + 1, static_cast<int>(std::floor(cur * tuning.rf_step))))
                           : std::max(1, std::min(cur - 1, static_cast<int>(std::ceil(cur / tuning.rf_step))));
        if (next == cur) break;
        const double err = detail::grow_forest(d, tuning.rf_tune_trees, next, tune_seed(next)).oob_error;
        const bool improved = cur_err > 0.0 && (1.0 - err / cur_err) > tuning.rf_improve;
        if (err < best_err) {
          best_err = err;
          best_mtry = next;
        }
        if (!improved) break;
        cur = next;
        cur_err = err;
      }
    }
  }
  auto forest = detail::grow_forest(d, tuning.rf_trees, best_mtry, derive_seed(seed, {0xf0e5ULL}));
  return ForestParams{std::move(forest.trees), best_mtry, forest.oob_error};
}

namespace detail {

// Boosting on the rows flagged active; returns per-stage scores for every row
// of `eval` when provided.
inline GbmParams boost(const TrainingMatrix& d, const tree::Presorted& presorted, const std::vector<char>& active,
                       int n_trees, int depth, double shrinkage, int min_node,
                       std::vector<std::vector<double>>* staged = nullptr, const std::vector<int>* eval_rows = nullptr,
                       const std::vector<int>* checkpoints = nullptr) {
  const auto n = static_cast<int>(d.rows());
  GbmParams out;
  out.shrinkage = shrinkage;
  out.depth = depth;
  out.min_node = min_node;
  int n1 = 0, na = 0;
  for (int i = 0; i < n; ++i)
    if (active[i]) {
      ++na;
      n1 += d.y[i];
    }
  const double p0 = std::clamp(static_cast<double>(n1) / std::max(na, 1), 1e-6, 1.0 - 1e-6);
  out.initial = std::log(p0 / (1.0 - p0));
  std::vector<double> F(n, out.initial), residual(n), hess(n);
  std::size_t next_checkpoint = 0;
  for (int m = 1; m <= n_trees; ++m) {
    for (int i = 0; i < n; ++i) {
      const double p = logistic(F[i]);
      residual[i] = d.y[i] - p;
      hess[i] = p * (1.0 - p);
    }
    out.stages.push_back(tree::grow_regression_tree(d.X, presorted, residual, hess, active, depth, min_node));
    const auto& t = out.stages.back();
    for (int i = 0; i < n; ++i) F[i] += shrinkage * t.predict(d.X.row(i));
    if (staged && checkpoints && next_checkpoint < checkpoints->size() && (*checkpoints)[next_checkpoint] == m) {
      std::vector<double> snap;
      snap.reserve(eval_rows->size());
      for (int r : *eval_rows) snap.push_back(F[r]);
      staged->push_back(std::move(snap));
      ++next_checkpoint;
    }
  }
  return out;
}

inline double log_loss(int y, double eta) {
  const double p = clamp_probability(logistic(eta));
  return y ? -std::log(p) : -std::log(1.0 - p);
}

}  // namespace detail

// Grid search over (depth, shrinkage, min_node, n_trees) by k-fold CV log-loss;
// tree counts are read off staged predictions of one fit per fold.
inline GbmParams fit_gbm(const TrainingMatrix& d, const ClassifierTuning& tuning, std::uint64_t seed) {
  const auto n = static_cast<int>(d.rows());
  const auto& grid = tuning.gbm_grid;
  if (grid.n_trees.empty() || grid.depth.empty() || grid.shrinkage.empty() || grid.min_node.empty())
    throw Error(ErrorCode::Config, "GBM tuning grid has an empty dimension");
  std::vector<int> checkpoints = grid.n_trees;
  std::sort(checkpoints.begin(), checkpoints.end());
  checkpoints.erase(std::unique(checkpoints.begin(), checkpoints.end()), checkpoints.end());
  const int max_trees = checkpoints.back();

  // Stratified fold assignment.
  const int folds = std::clamp(tuning.gbm_folds, 2, n);
  std::vector<int> fold(n);
  {
    Rng rng = make_rng(seed, {0xf01dULL});
    int dealt = 0;
    for (int c = 0; c < 2; ++c) {
      std::vector<int> idx;
      for (int i = 0; i < n; ++i)
        if (d.y[i] == c) idx.push_back(i);
      for (std::size_t j = idx.size(); j > 1; --j) {
        std::uniform_int_distribution<std::size_t> pick(0, j - 1);
        std::swap(idx[j - 1], idx[pick(rng)]);
      }
      for (int i : idx) fold[i] = dealt++ % folds;
    }
  }

  const tree::Presorted presorted(d.X);
  struct Candidate {
    int depth;
    double shrinkage;
    int min_node;
    int n_trees;
    double loss;
  };
  std::optional<Candidate> best;
  for (int depth : grid.depth) {
    for (double shrinkage : grid.shrinkage) {
      for (int min_node : grid.min_node) {
        std::vector<double> loss(checkpoints.size(), 0.0);
        for (int f = 0; f < folds; ++f) {
          std::vector<char> active(n);
          std::vector<int> held;
          for (int i = 0; i < n; ++i) {
            active[i] = fold[i] != f;
            if (fold[i] == f) held.push_back(i);
          }
          std::vector<std::vector<double>> staged;
          detail::boost(d, presorted, active, max_trees, depth, shrinkage, min_node, &staged, &held, &checkpoints);
          for (std::size_t c = 0; c < checkpoints.size(); ++c)
            for (std::size_t j = 0; j < held.size(); ++j) loss[c] += detail::log_loss(d.y[held[j]], staged[c][j]);
        }
        for (std::size_t c = 0; c < checkpoints.size(); ++c) {
          const double l = loss[c] / n;
          if (!best || l < best->loss - 1e-12) best = Candidate{depth, shrinkage, min_node, checkpoints[c], l};
        }
      }
    }
  }
  std::vector<char> all(n, 1);
  GbmParams out =
      detail::boost(d, presorted, all, best->n_trees, best->depth, best->shrinkage, best->min_node);
  out.cv_log_loss = best->loss;
  return out;
}

inline ClassifierModel fit(ClassifierKind kind, const TrainingMatrix& data, const ClassifierTuning& tuning = {},
                           std::uint64_t seed = 0) {
  data.validate();
  if (data.rows() < 4) throw Error(ErrorCode::InsufficientData, "classifier fit needs at least 4 rows");
  ClassifierModel model;
  model.kind = kind;
  model.n_features = data.features();
  switch (kind) {
    case ClassifierKind::Logit: model.params = fit_logit(data, tuning.logit_max_iter, tuning.logit_tol); break;
    case ClassifierKind::LDA: model.params = fit_lda(data); break;
    case ClassifierKind::QDA: model.params = fit_qda(data); break;
    case ClassifierKind::NaiveBayes: model.params = fit_naive_bayes(data); break;
    case ClassifierKind::RandomForest: model.params = fit_random_forest(data, tuning, seed); break;
    case ClassifierKind::GBM: model.params = fit_gbm(data, tuning, seed); break;
  }
  return model;
}

// --- prediction ---------------------------------------------------------------

inline std::array<double, 2> discriminants(const LdaParams& p, const Eigen::VectorXd& x) {
  std::array<double, 2> d{};
  for (int c = 0; c < 2; ++c) {
    const Eigen::VectorXd pm = p.precision * p.means[c];
    d[c] = x.dot(pm) - 0.5 * p.means[c].dot(pm) + std::log(p.priors[c]);
  }
  return d;
}

inline std::array<double, 2> discriminants(const QdaParams& p, const Eigen::VectorXd& x) {
  std::array<double, 2> d{};
  for (int c = 0; c < 2; ++c) {
    const Eigen::VectorXd r = x - p.means[c];
    d[c] = -0.5 * p.log_dets[c] - 0.5 * r.dot(p.precisions[c] * r) + std::log(p.priors[c]);
  }
  return d;
}

inline std::array<double, 2> discriminants(const NaiveBayesParams& p, const Eigen::VectorXd& x) {
  std::array<double, 2> d{};
  for (int c = 0; c < 2; ++c) {
    double s = std::log(p.priors[c]);
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      const double v = p.variances[c][k];
      const double r = x[k] - p.means[c][k];
      s += -0.5 * std::log(2.0 * std::numbers::pi * v) - 0.5 * r * r / v;
    }
    d[c] = s;
  }
  return d;
}

inline double raw_probability(const ClassifierModel& model, const Eigen::VectorXd& x) {
  return std::visit(
      [&](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, LogitParams>) {
          return logistic(p.coef[0] + x.dot(p.coef.tail(x.size())));
        } else if constexpr (std::is_same_v<T, ForestParams>) {
          int ones = 0;
          const Eigen::RowVectorXd row = x.transpose();
          for (const auto& t : p.trees) ones += t.predict(row) > 0.5 ? 1 : 0;
          return p.trees.empty() ? 0.5 : static_cast<double>(ones) / static_cast<double>(p.trees.size());
        } else if constexpr (std::is_same_v<T, GbmParams>) {
          double f = p.initial;
          const Eigen::RowVectorXd row = x.transpose();
          for (const auto& t : p.stages) f += p.shrinkage * t.predict(row);
          return logistic(f);
        } else {
          auto d = discriminants(p, x);
          return detail::softmax_class1(d[0], d[1]);
        }
      },
      model.params);
}

// P(Y = 1 | scores), clamped to [1e-12, 1 - 1e-12].
inline double predict_proba(const ClassifierModel& model, const Eigen::VectorXd& scores) {
  if (scores.size() != model.n_features)
    throw Error(ErrorCode::Shape, "expected " + std::to_string(model.n_features) + " scores, got " +
                                      std::to_string(scores.size()));
  return clamp_probability(raw_probability(model, scores));
}

inline int predict_label(const ClassifierModel& model, const Eigen::VectorXd& scores) {
  return predict_proba(model, scores) > 0.5 ? 1 : 0;
}

// Batch form over the rows of `scores`. Tree ensembles run every row through
// one tree before moving to the next, which keeps each tree cache-resident.
inline Eigen::VectorXd predict_proba_rows(const ClassifierModel& model, const Eigen::MatrixXd& scores) {
  if (scores.cols() != model.n_features)
    throw Error(ErrorCode::Shape, "expected " + std::to_string(model.n_features) + " score columns, got " +
                                      std::to_string(scores.cols()));
  const Eigen::Index n = scores.rows();
  Eigen::VectorXd out(n);
  if (const auto* f = std::get_if<ForestParams>(&model.params)) {
    Eigen::VectorXi ones = Eigen::VectorXi::Zero(n);
    for (const auto& t : f->trees)
      for (Eigen::Index i = 0; i < n; ++i) ones[i] += t.predict(scores.row(i)) > 0.5 ? 1 : 0;
    for (Eigen::Index i = 0; i < n; ++i)
      out[i] = f->trees.empty() ? 0.5 : static_cast<double>(ones[i]) / static_cast<double>(f->trees.size());
  } else if (const auto* g = std::get_if<GbmParams>(&model.params)) {
    Eigen::VectorXd F = Eigen::VectorXd::Constant(n, g->initial);
    for (const auto& t : g->stages)
      for (Eigen::Index i = 0; i < n; ++i) F[i] += g->shrinkage * t.predict(scores.row(i));
    for (Eigen::Index i = 0; i < n; ++i) out[i] = logistic(F[i]);
  } else {
    for (Eigen::Index i = 0; i < n; ++i) out[i] = raw_probability(model, scores.row(i).transpose());
  }
  return out.unaryExpr([](double p) { return clamp_probability(p); });
}

inline bool separation_warning(const ClassifierModel& model) {
  if (const auto* p = std::get_if<LogitParams>(&model.params)) return p->separation;
  return false;
}

}  // namespace fpcagg
