#pragma once

// Bootstrap ensembles of (FPCA, classifier) replicas and the four decision
// rules built on them: single fit, majority vote, OOB-error weighted vote, and
// Bayesian-calibrated probability aggregation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "fpcagg/calibration.hpp"
#include "fpcagg/classifiers.hpp"
#include "fpcagg/curve_data.hpp"
#include "fpcagg/error.hpp"
#include "fpcagg/fpca.hpp"
#include "fpcagg/rng.hpp"

namespace fpcagg {

enum class AggregationRule { Single, MajorityVote, OobWeight, Bayesian };

inline constexpr std::array<AggregationRule, 4> kAllRules{AggregationRule::Single, AggregationRule::MajorityVote,
                                                          AggregationRule::OobWeight, AggregationRule::Bayesian};

inline const char* to_string(AggregationRule r) {
  switch (r) {
    case AggregationRule::Single: return "single";
    case AggregationRule::MajorityVote: return "majority";
    case AggregationRule::OobWeight: return "oob";
    case AggregationRule::Bayesian: return "bayesian";
  }
  return "?";
}

inline AggregationRule parse_rule(std::string_view s) {
  for (auto r : kAllRules)
    if (s == to_string(r)) return r;
  if (s == "majority_vote" || s == "mv") return AggregationRule::MajorityVote;
  if (s == "oob_weight" || s == "oobweight") return AggregationRule::OobWeight;
  throw Error(ErrorCode::Config, "unknown aggregation rule '" + std::string(s) + "'");
}

enum class CalibrationMode { AllReplicas, OobOnly };

inline const char* to_string(CalibrationMode m) { return m == CalibrationMode::AllReplicas ? "all" : "oob"; }

inline CalibrationMode parse_calibration_mode(std::string_view s) {
  if (s == "all" || s == "all-replicas") return CalibrationMode::AllReplicas;
  if (s == "oob" || s == "oob-only") return CalibrationMode::OobOnly;
  throw Error(ErrorCode::Config, "unknown calibration mode '" + std::string(s) + "'");
}

struct Replica {
  std::shared_ptr<const FpcaModel> fpca;
  ClassifierModel classifier;
  std::vector<std::size_t> inbag;  // training-set indices drawn, with repeats
  double oob_error = 0.0;
  std::size_t oob_count = 0;
  int attempts = 1;
};

struct EnsembleModel {
  ClassifierKind kind = ClassifierKind::Logit;
  std::vector<Replica> replicas;
  std::vector<std::string> train_ids;

  std::size_t B() const noexcept { return replicas.size(); }

  std::vector<double> oob_errors() const {
    std::vector<double> e;
    e.reserve(replicas.size());
    for (const auto& r : replicas) e.push_back(r.oob_error);
    return e;
  }

  // Every training curve is out-of-bag in at least one replica.
  bool oob_coverage_complete() const {
    std::vector<char> seen(train_ids.size(), 0);
    for (const auto& r : replicas) {
      std::vector<char> in(train_ids.size(), 0);
      for (auto i : r.inbag) in[i] = 1;
      for (std::size_t i = 0; i < in.size(); ++i)
        if (!in[i]) seen[i] = 1;
    }
    return std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; });
  }
};

struct EnsembleConfig {
  int B = 100;
  FpcaConfig fpca;
  ClassifierTuning tuning;
  int max_attempts = 20;
};

// --- vote rules on raw replica outputs --------------------------------------

inline int majority_vote(const std::vector<int>& votes) {
  std::size_t ones = 0;
  for (int v : votes) ones += v == 1;
  return 2 * ones > votes.size() ? 1 : 0;
}

// Weights 1/e_b; zero errors take the smallest nonzero error, and all-zero
// errors give equal weights.
inline std::vector<double> oob_weights(const std::vector<double>& errors) {
  double min_nonzero = 0.0;
  for (double e : errors)
    if (e > 0.0 && (min_nonzero == 0.0 || e < min_nonzero)) min_nonzero = e;
  std::vector<double> w(errors.size(), 1.0);
  if (min_nonzero == 0.0) return w;
  for (std::size_t b = 0; b < errors.size(); ++b) w[b] = 1.0 / (errors[b] > 0.0 ? errors[b] : min_nonzero);
  return w;
}

inline double oob_weighted_mean(const std::vector<int>& votes, const std::vector<double>& errors) {
  if (votes.size() != errors.size()) throw Error(ErrorCode::Shape, "votes and errors differ in length");
  const auto w = oob_weights(errors);
  double num = 0.0, den = 0.0;
  for (std::size_t b = 0; b < votes.size(); ++b) {
    num += w[b] * votes[b];
    den += w[b];
  }
  return den > 0.0 ? num / den : 0.0;
}

inline int oob_weighted_vote(const std::vector<int>& votes, const std::vector<double>& errors) {
  return oob_weighted_mean(votes, errors) > 0.5 ? 1 : 0;
}

inline double mean_probability(const std::vector<double>& probs) {
  if (probs.empty()) throw Error(ErrorCode::Shape, "no replica probabilities");
  double s = 0.0;
  for (double p : probs) s += p;
  return s / static_cast<double>(probs.size());
}

// --- fitting ------------------------------------------------------------------

namespace detail {

inline TrainingMatrix score_rows(const FpcaModel& model, const FunctionalDataset& data,
                                 const std::vector<std::size_t>& rows) {
  // Score each distinct curve once.
  std::vector<std::size_t> uniq(rows);
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  Eigen::MatrixXd cache(static_cast<Eigen::Index>(uniq.size()), model.K);
  for (std::size_t u = 0; u < uniq.size(); ++u)
    cache.row(static_cast<Eigen::Index>(u)) = pace_scores(model, data[uniq[u]]);
  TrainingMatrix out;
  out.X.resize(static_cast<Eigen::Index>(rows.size()), model.K);
  out.y.resize(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto pos = std::lower_bound(uniq.begin(), uniq.end(), rows[r]) - uniq.begin();
    out.X.row(static_cast<Eigen::Index>(r)) = cache.row(pos);
    out.y[r] = data[rows[r]].label().value_or(0);
  }
  return out;
}

}  // namespace detail

// One bootstrap pass shared by several classifier kinds: replica b draws its
// resample from stream (seed, b, attempt), fits FPCA once, and trains every
// requested kind on the same scores.
inline std::vector<EnsembleModel> bootstrap_fit_many(const FunctionalDataset& train,
                                                     const std::vector<ClassifierKind>& kinds,
                                                     const EnsembleConfig& config, std::uint64_t seed) {
  train.require_labels();
  if (config.B < 1) throw Error(ErrorCode::Config, "B must be at least 1");
  if (kinds.empty()) throw Error(ErrorCode::Config, "no classifier kinds requested");
  const std::size_t n = train.size();
  std::vector<EnsembleModel> out(kinds.size());
  for (std::size_t k = 0; k < kinds.size(); ++k) {
    out[k].kind = kinds[k];
    for (const auto& c : train.curves()) out[k].train_ids.push_back(c.id());
    out[k].replicas.reserve(static_cast<std::size_t>(config.B));
  }

  for (int b = 0; b < config.B; ++b) {
    bool done = false;
    std::string last_error = "no attempt made";
    for (int attempt = 0; attempt < config.max_attempts && !done; ++attempt) {
      Rng rng = make_rng(seed, {static_cast<std::uint64_t>(b), static_cast<std::uint64_t>(attempt)});
      std::uniform_int_distribution<std::size_t> draw(0, n - 1);
      std::vector<std::size_t> inbag(n);
      int ones = 0;
      for (auto& i : inbag) {
        i = draw(rng);
        ones += *train[i].label();
      }
      if (ones == 0 || ones == static_cast<int>(n)) {
        last_error = "single-class resample";
        continue;
      }
      try {
        auto fpca = std::make_shared<const FpcaModel>(fit_fpca(train.subset(inbag), config.fpca));
        const TrainingMatrix mat = detail::score_rows(*fpca, train, inbag);

        std::vector<char> in(n, 0);
        for (auto i : inbag) in[i] = 1;
        std::vector<std::size_t> oob;
        for (std::size_t i = 0; i < n; ++i)
          if (!in[i]) oob.push_back(i);
        const TrainingMatrix oob_mat = detail::score_rows(*fpca, train, oob);

        std::vector<Replica> fitted;
        for (std::size_t k = 0; k < kinds.size(); ++k) {
          Replica rep;
          rep.fpca = fpca;
          rep.inbag = inbag;
          rep.attempts = attempt + 1;
          rep.classifier = fit(kinds[k], mat, config.tuning,
                               derive_seed(seed, {static_cast<std::uint64_t>(b), static_cast<std::uint64_t>(attempt),
                                                  0xc1a55ULL + static_cast<std::uint64_t>(kinds[k])}));
          int wrong = 0;
          if (oob_mat.rows() > 0) {
            const Eigen::VectorXd p = predict_proba_rows(rep.classifier, oob_mat.X);
            for (Eigen::Index r = 0; r < p.size(); ++r) wrong += (p[r] > 0.5 ? 1 : 0) != oob_mat.y[r];
          }
          rep.oob_count = oob.size();
          rep.oob_error = oob.empty() ? 0.0 : static_cast<double>(wrong) / static_cast<double>(oob.size());
          fitted.push_back(std::move(rep));
        }
        for (std::size_t k = 0; k < kinds.size(); ++k) out[k].replicas.push_back(std::move(fitted[k]));
        done = true;
      } catch (const Error& e) {
        last_error = e.what();
      }
    }
    if (!done)
      throw Error(ErrorCode::ReplicaFailure, "replica " + std::to_string(b + 1) + " failed after " +
                                                 std::to_string(config.max_attempts) + " attempts: " + last_error);
  }
  return out;
}

inline EnsembleModel bootstrap_fit(const FunctionalDataset& train, ClassifierKind kind, const EnsembleConfig& config,
                                   std::uint64_t seed) {
  return std::move(bootstrap_fit_many(train, {kind}, config, seed).front());
}

// --- prediction -----------------------------------------------------------------

struct ReplicaOutputs {
  std::vector<double> probs;
  std::vector<int> votes;
  std::vector<double> errors;
};

namespace detail {

inline bool covers(const FpcaModel& fpca, const SparseCurve& curve) {
  const auto& grid = fpca.grid();
  return grid.contains(curve.times().front()) && grid.contains(curve.times().back());
}

}  // namespace detail

// n x B matrix of replica class-1 probabilities, each replica scoring through
// its own FPCA model; NaN where a replica's domain does not cover the curve.
inline Eigen::MatrixXd replica_probabilities(const EnsembleModel& model, const FunctionalDataset& data) {
  const auto n = static_cast<Eigen::Index>(data.size());
  Eigen::MatrixXd P = Eigen::MatrixXd::Constant(n, static_cast<Eigen::Index>(model.B()), std::nan(""));
  std::vector<std::size_t> rows;
  for (std::size_t b = 0; b < model.B(); ++b) {
    const auto& r = model.replicas[b];
    rows.clear();
    for (std::size_t i = 0; i < data.size(); ++i)
      if (detail::covers(*r.fpca, data[i])) rows.push_back(i);
    if (rows.empty()) continue;
    Eigen::MatrixXd scores(static_cast<Eigen::Index>(rows.size()), r.fpca->K);
    for (std::size_t k = 0; k < rows.size(); ++k)
      scores.row(static_cast<Eigen::Index>(k)) = pace_scores(*r.fpca, data[rows[k]]);
    const Eigen::VectorXd p = predict_proba_rows(r.classifier, scores);
    for (std::size_t k = 0; k < rows.size(); ++k)
      P(static_cast<Eigen::Index>(rows[k]), static_cast<Eigen::Index>(b)) = p[static_cast<Eigen::Index>(k)];
  }
  return P;
}

// Outputs of the replicas that did not abstain, from one row of a
// replica_probabilities matrix.
inline ReplicaOutputs replica_outputs(const EnsembleModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& probs,
                                      const std::string& curve_id) {
  ReplicaOutputs out;
  for (std::size_t b = 0; b < model.B(); ++b) {
    const double p = probs[static_cast<Eigen::Index>(b)];
    if (std::isnan(p)) continue;
    out.probs.push_back(p);
    out.votes.push_back(p > 0.5 ? 1 : 0);
    out.errors.push_back(model.replicas[b].oob_error);
  }
  if (out.probs.empty())
    throw Error(ErrorCode::Extrapolation, "curve '" + curve_id + "' lies outside every replica domain");
  return out;
}

// Each replica scores the curve through its own FPCA model. Replicas whose
// domain does not cover the curve abstain.
inline ReplicaOutputs replica_outputs(const EnsembleModel& model, const SparseCurve& curve) {
  ReplicaOutputs out;
  for (const auto& r : model.replicas) {
    if (!detail::covers(*r.fpca, curve)) continue;
    const double p = predict_proba(r.classifier, pace_scores(*r.fpca, curve));
    out.probs.push_back(p);
    out.votes.push_back(p > 0.5 ? 1 : 0);
    out.errors.push_back(r.oob_error);
  }
  if (out.probs.empty())
    throw Error(ErrorCode::Extrapolation, "curve '" + curve.id() + "' lies outside every replica domain");
  return out;
}

inline int predict_majority(const EnsembleModel& model, const SparseCurve& curve) {
  return majority_vote(replica_outputs(model, curve).votes);
}

inline int predict_oob_weighted(const EnsembleModel& model, const SparseCurve& curve) {
  auto o = replica_outputs(model, curve);
  return oob_weighted_vote(o.votes, o.errors);
}

inline double aggregate_proba(const EnsembleModel& model, const SparseCurve& curve) {
  return mean_probability(replica_outputs(model, curve).probs);
}

struct BayesianPrediction {
  double probability = 0.5;
  int label = 0;
};

inline BayesianPrediction predict_bayesian(const EnsembleModel& model, const CalibrationModel& calib,
                                           const SparseCurve& curve) {
  const double pi = calib.probability(aggregate_proba(model, curve));
  return {pi, pi > 0.5 ? 1 : 0};
}

struct TrainingProbabilities {
  std::vector<CalibrationPair> pairs;
  std::vector<bool> fallback;  // oob-only mode: curve was never out-of-bag
  std::size_t fallback_count = 0;
};

inline TrainingProbabilities training_aggregated_probs(const EnsembleModel& model, const FunctionalDataset& train,
                                                       CalibrationMode mode) {
  train.require_labels();
  if (train.size() != model.train_ids.size())
    throw Error(ErrorCode::Shape, "training set does not match the ensemble's training set");
  const std::size_t n = train.size();
  std::vector<std::vector<char>> inbag(model.B(), std::vector<char>(n, 0));
  for (std::size_t b = 0; b < model.B(); ++b)
    for (auto i : model.replicas[b].inbag) inbag[b][i] = 1;

  const Eigen::MatrixXd P = replica_probabilities(model, train);
  TrainingProbabilities out;
  out.pairs.reserve(n);
  out.fallback.assign(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    double all = 0.0, oob = 0.0;
    std::size_t n_all = 0, n_oob = 0;
    for (std::size_t b = 0; b < model.B(); ++b) {
      const double p = P(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(b));
      if (std::isnan(p)) continue;
      all += p;
      ++n_all;
      if (!inbag[b][i]) {
        oob += p;
        ++n_oob;
      }
    }
    if (n_all == 0)
      throw Error(ErrorCode::Extrapolation, "training curve '" + train[i].id() + "' lies outside every replica domain");
    double p = all / static_cast<double>(n_all);
    if (mode == CalibrationMode::OobOnly) {
      if (n_oob > 0) {
        p = oob / static_cast<double>(n_oob);
      } else {
        out.fallback[i] = true;
        ++out.fallback_count;
      }
    }
    out.pairs.push_back({p, *train[i].label()});
  }
  return out;
}

inline CalibrationModel calibrate(const EnsembleModel& model, const FunctionalDataset& train, CalibrationMode mode,
                                  const CalibrationOptions& options = {}) {
  return fit_calibration(training_aggregated_probs(model, train, mode).pairs, options);
}

// --- single-fit baseline --------------------------------------------------------

struct SingleModel {
  FpcaModel fpca;
  ClassifierModel classifier;
};

inline SingleModel fit_single(const FunctionalDataset& train, ClassifierKind kind, const FpcaConfig& fpca_config,
                              const ClassifierTuning& tuning, std::uint64_t seed) {
  train.require_labels();
  SingleModel m{fit_fpca(train, fpca_config), {}};
  TrainingMatrix mat{pace_scores(m.fpca, train), train.labels()};
  m.classifier = fit(kind, mat, tuning, seed);
  return m;
}

inline double predict_proba(const SingleModel& m, const SparseCurve& curve) {
  return predict_proba(m.classifier, pace_scores(m.fpca, curve));
}

// --- diagnostics export -----------------------------------------------------------

inline void write_ensemble_summary(std::ostream& out, const EnsembleModel& model,
                                   const std::optional<CalibrationModel>& calib = std::nullopt) {
  out << "# replicas\nreplica,K,pve,noise_variance,oob_error,oob_count,attempts\n";
  for (std::size_t b = 0; b < model.B(); ++b) {
    const auto& r = model.replicas[b];
    out << b + 1 << ',' << r.fpca->K << ',' << detail::format_double(r.fpca->pve) << ','
        << detail::format_double(r.fpca->noise_variance) << ',' << detail::format_double(r.oob_error) << ','
        << r.oob_count << ',' << r.attempts << '\n';
  }
  if (calib) {
    out << "# calibration\nbeta0,beta1,prior_scale0,prior_scale1,converged,iterations\n"
        << detail::format_double(calib->beta0) << ',' << detail::format_double(calib->beta1) << ','
        << detail::format_double(calib->prior_scale0) << ',' << detail::format_double(calib->prior_scale1) << ','
        << (calib->converged ? 1 : 0) << ',' << calib->iterations << '\n';
  }
}

}  // namespace fpcagg
