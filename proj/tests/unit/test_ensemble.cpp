#include <functional>
#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "fpcagg/ensemble.hpp"
#include "fpcagg/simgen.hpp"

using namespace fpcagg;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no fpcagg::Error thrown";
  return ErrorCode::Config;
}

FunctionalDataset scenario_data(int id, std::uint64_t seed, int n = 200) {
  auto cfg = sim::scenario(id);
  cfg.seed = seed;
  cfg.n = n;
  return sim::generate(cfg);
}

EnsembleConfig config(int B) {
  EnsembleConfig c;
  c.B = B;
  c.tuning.rf_trees = 50;
  return c;
}

// A logit replica that ignores its scores and always outputs p.
ClassifierModel constant_classifier(int K, double p) {
  LogitParams lp;
  lp.coef = Eigen::VectorXd::Zero(K + 1);
  lp.coef[0] = std::log(p / (1.0 - p));
  ClassifierModel m;
  m.kind = ClassifierKind::Logit;
  m.n_features = K;
  m.params = lp;
  return m;
}

// Ensemble over `train` whose replicas output fixed probabilities.
EnsembleModel constant_ensemble(const FunctionalDataset& train, const std::vector<double>& probs) {
  auto m = bootstrap_fit(train, ClassifierKind::LDA, config(static_cast<int>(probs.size())), 5);
  for (std::size_t b = 0; b < probs.size(); ++b) {
    m.replicas[b].classifier = constant_classifier(m.replicas[b].fpca->K, probs[b]);
    m.kind = ClassifierKind::Logit;
  }
  return m;
}

}  // namespace

// --- vote rules -------------------------------------------------------------------

TEST(Votes, MajorityWithTieToZero) {
  EXPECT_EQ(majority_vote({1, 1, 0}), 1);
  EXPECT_EQ(majority_vote({1, 1, 0, 0}), 0);
  EXPECT_EQ(majority_vote({0}), 0);
  EXPECT_EQ(majority_vote({1}), 1);
}

TEST(Votes, OobWeightedExamples) {
  EXPECT_NEAR(oob_weighted_mean({1, 0}, {0.1, 0.2}), 10.0 / 15.0, 1e-15);
  EXPECT_EQ(oob_weighted_vote({1, 0}, {0.1, 0.2}), 1);
  // A zero error takes the smallest nonzero one, so the weights tie.
  EXPECT_NEAR(oob_weighted_mean({0, 1}, {0.0, 0.2}), 0.5, 1e-15);
  EXPECT_EQ(oob_weighted_vote({0, 1}, {0.0, 0.2}), 0);
  // All-zero errors: equal weights.
  EXPECT_NEAR(oob_weighted_mean({1, 1, 0}, {0.0, 0.0, 0.0}), 2.0 / 3.0, 1e-15);
  EXPECT_EQ(code_of([] { oob_weighted_mean({1}, {0.1, 0.2}); }), ErrorCode::Shape);
}

TEST(Votes, EqualErrorsReduceToMajority) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> bit(0, 1), half(0, 25);
  std::uniform_real_distribution<double> err(0.0, 0.5);
  for (int trial = 0; trial < 1000; ++trial) {
    const int B = 2 * half(rng) + 1;
    std::vector<int> votes(static_cast<std::size_t>(B));
    for (auto& v : votes) v = bit(rng);
    const std::vector<double> e(votes.size(), trial % 10 == 0 ? 0.0 : err(rng));
    ASSERT_EQ(oob_weighted_vote(votes, e), majority_vote(votes)) << "trial " << trial;
  }
}

TEST(Votes, MeanProbability) {
  EXPECT_DOUBLE_EQ(mean_probability({0.6, 0.8}), 0.7);
  EXPECT_DOUBLE_EQ(mean_probability({0.5, 0.5, 0.5}), 0.5);
  EXPECT_EQ(code_of([] { mean_probability({}); }), ErrorCode::Shape);
}

// --- bootstrap fit ----------------------------------------------------------------

TEST(Bootstrap, SingleReplicaEqualsFitOnItsResample) {
  const auto train = scenario_data(4, 1);
  const auto test = scenario_data(4, 2, 40);
  const auto cfg = config(1);
  const auto model = bootstrap_fit(train, ClassifierKind::LDA, cfg, 3);
  ASSERT_EQ(model.B(), 1u);
  const auto& rep = model.replicas[0];
  const auto direct = fit_single(train.subset(rep.inbag), ClassifierKind::LDA, cfg.fpca, cfg.tuning, 0);
  for (const auto& c : test.curves()) {
    const double p = predict_proba(direct, c);
    EXPECT_NEAR(aggregate_proba(model, c), p, 1e-10);
    const int label = p > 0.5 ? 1 : 0;
    EXPECT_EQ(predict_majority(model, c), label);
    EXPECT_EQ(predict_oob_weighted(model, c), label);
  }
}

TEST(Bootstrap, OobErrorsMatchDirectRecount) {
  const auto train = scenario_data(1, 4);
  const auto model = bootstrap_fit(train, ClassifierKind::NaiveBayes, config(8), 11);
  for (const auto& r : model.replicas) {
    std::set<std::size_t> in(r.inbag.begin(), r.inbag.end());
    EXPECT_EQ(r.inbag.size(), train.size());
    int wrong = 0, count = 0;
    for (std::size_t i = 0; i < train.size(); ++i) {
      if (in.count(i)) continue;
      ++count;
      wrong += predict_label(r.classifier, pace_scores(*r.fpca, train[i])) != *train[i].label();
    }
    EXPECT_EQ(r.oob_count, static_cast<std::size_t>(count));
    EXPECT_NEAR(r.oob_error, static_cast<double>(wrong) / count, 1e-15);
  }
}

TEST(Bootstrap, DeterministicGivenSeed) {
  const auto train = scenario_data(2, 6);
  const auto a = bootstrap_fit(train, ClassifierKind::RandomForest, config(4), 21);
  const auto b = bootstrap_fit(train, ClassifierKind::RandomForest, config(4), 21);
  const auto c = bootstrap_fit(train, ClassifierKind::RandomForest, config(4), 22);
  for (std::size_t r = 0; r < 4; ++r) {
    EXPECT_EQ(a.replicas[r].inbag, b.replicas[r].inbag);
    EXPECT_EQ(a.replicas[r].oob_error, b.replicas[r].oob_error);
  }
  EXPECT_NE(a.replicas[0].inbag, c.replicas[0].inbag);
  const auto test = scenario_data(2, 7, 20);
  EXPECT_EQ(replica_probabilities(a, test), replica_probabilities(b, test));
}

TEST(Bootstrap, SharedPassMatchesSeparateFits) {
  const auto train = scenario_data(5, 2);
  const auto many = bootstrap_fit_many(train, {ClassifierKind::LDA, ClassifierKind::QDA}, config(3), 8);
  const auto qda = bootstrap_fit(train, ClassifierKind::QDA, config(3), 8);
  const auto test = scenario_data(5, 3, 20);
  EXPECT_EQ(replica_probabilities(many[1], test), replica_probabilities(qda, test));
}

TEST(Bootstrap, PerReplicaComponentCountInRange) {
  const auto train = scenario_data(1, 42);
  const auto model = bootstrap_fit(train, ClassifierKind::LDA, config(100), 42);
  double mean = 0.0;
  for (const auto& r : model.replicas) {
    EXPECT_GE(r.fpca->K, 2);
    EXPECT_LE(r.fpca->K, 6);
    mean += r.fpca->K;
  }
  mean /= 100.0;
  EXPECT_GT(mean, 3.0);
  EXPECT_LT(mean, 5.0);
}

TEST(Bootstrap, RedrawsSingleClassResamplesThenFails) {
  // One positive among 40 curves: about a third of resamples miss it.
  auto d = scenario_data(1, 9, 40);
  std::vector<SparseCurve> curves;
  for (std::size_t i = 0; i < d.size(); ++i)
    curves.emplace_back(d[i].id(), d[i].times(), d[i].values(), i == 0 ? 1 : 0);
  const FunctionalDataset skewed(curves, d.domain());
  auto cfg = config(30);
  const auto model = bootstrap_fit(skewed, ClassifierKind::NaiveBayes, cfg, 1);
  int redrawn = 0;
  for (const auto& r : model.replicas) {
    redrawn += r.attempts > 1;
    std::set<std::size_t> in(r.inbag.begin(), r.inbag.end());
    EXPECT_TRUE(in.count(0));
  }
  EXPECT_GT(redrawn, 0);

  cfg.max_attempts = 1;
  EXPECT_EQ(code_of([&] { bootstrap_fit(skewed, ClassifierKind::NaiveBayes, cfg, 1); }), ErrorCode::ReplicaFailure);
}

TEST(Bootstrap, ConfigErrors) {
  const auto train = scenario_data(1, 1, 20);
  EXPECT_EQ(code_of([&] { bootstrap_fit(train, ClassifierKind::LDA, config(0), 1); }), ErrorCode::Config);
  EXPECT_EQ(code_of([&] { bootstrap_fit_many(train, {}, config(2), 1); }), ErrorCode::Config);
}

// --- aggregation ------------------------------------------------------------------

TEST(Aggregate, ReplicaMeanAndBounds) {
  const auto train = scenario_data(4, 3, 60);
  const auto m = constant_ensemble(train, {0.6, 0.8});
  const auto& c = train[0];
  EXPECT_NEAR(aggregate_proba(m, c), 0.7, 1e-12);
  EXPECT_EQ(predict_majority(m, c), 1);

  const auto fitted = bootstrap_fit(train, ClassifierKind::Logit, config(9), 4);
  const Eigen::MatrixXd P = replica_probabilities(fitted, train);
  for (std::size_t i = 0; i < train.size(); ++i) {
    const double a = aggregate_proba(fitted, train[i]);
    EXPECT_GE(a, P.row(static_cast<Eigen::Index>(i)).minCoeff() - 1e-15);
    EXPECT_LE(a, P.row(static_cast<Eigen::Index>(i)).maxCoeff() + 1e-15);
    EXPECT_NEAR(a, P.row(static_cast<Eigen::Index>(i)).mean(), 1e-12);
  }
}

TEST(Aggregate, CurveOutsideEveryDomainIsExtrapolation) {
  const auto train = scenario_data(4, 3, 60);
  const auto m = bootstrap_fit(train, ClassifierKind::LDA, config(2), 4);
  const SparseCurve far("x", {11.0, 12.0}, {0.0, 0.0});
  EXPECT_EQ(code_of([&] { predict_majority(m, far); }), ErrorCode::Extrapolation);
  EXPECT_EQ(code_of([&] { aggregate_proba(m, far); }), ErrorCode::Extrapolation);
}

TEST(TrainingProbs, OobOnlyAndFallback) {
  const auto train = scenario_data(4, 3, 60);
  auto m = constant_ensemble(train, {0.4, 0.6});
  // Curve 0 in-bag in both replicas; curve 1 out-of-bag only in replica 2.
  for (auto& r : m.replicas) {
    std::vector<std::size_t> inbag;
    for (std::size_t i = 0; i < train.size(); ++i) inbag.push_back(i);
    r.inbag = inbag;
  }
  m.replicas[1].inbag[1] = 0;

  const auto all = training_aggregated_probs(m, train, CalibrationMode::AllReplicas);
  const auto oob = training_aggregated_probs(m, train, CalibrationMode::OobOnly);
  EXPECT_NEAR(all.pairs[0].p, 0.5, 1e-12);
  EXPECT_NEAR(oob.pairs[0].p, 0.5, 1e-12);
  EXPECT_TRUE(oob.fallback[0]);
  EXPECT_NEAR(oob.pairs[1].p, 0.6, 1e-12);
  EXPECT_FALSE(oob.fallback[1]);
  EXPECT_EQ(oob.fallback_count, train.size() - 1);
  EXPECT_EQ(all.fallback_count, 0u);
  EXPECT_FALSE(m.oob_coverage_complete());
}

TEST(TrainingProbs, AllReplicasModeEqualsAggregateProba) {
  const auto train = scenario_data(3, 8, 80);
  const auto m = bootstrap_fit(train, ClassifierKind::QDA, config(6), 2);
  const auto all = training_aggregated_probs(m, train, CalibrationMode::AllReplicas);
  ASSERT_EQ(all.pairs.size(), train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    EXPECT_NEAR(all.pairs[i].p, aggregate_proba(m, train[i]), 1e-12);
    EXPECT_EQ(all.pairs[i].y, *train[i].label());
  }
  EXPECT_EQ(code_of([&] { training_aggregated_probs(m, train.subset({0, 1}), CalibrationMode::AllReplicas); }),
            ErrorCode::Shape);
}

TEST(Bayesian, LogisticOfAggregate) {
  const auto train = scenario_data(4, 3, 60);
  const auto m = constant_ensemble(train, {0.5, 0.5, 0.5});
  CalibrationModel c;
  c.beta0 = 0.0;
  c.beta1 = 1.0;
  auto r = predict_bayesian(m, c, train[0]);
  EXPECT_NEAR(r.probability, 1.0 / (1.0 + std::exp(-0.5)), 1e-12);
  EXPECT_NEAR(r.probability, 0.6225, 1e-4);
  EXPECT_EQ(r.label, 1);
  c.beta1 = 0.0;
  r = predict_bayesian(m, c, train[0]);
  EXPECT_DOUBLE_EQ(r.probability, 0.5);
  EXPECT_EQ(r.label, 0);
}

TEST(Bayesian, PositiveSlopeGivesAThresholdRule) {
  CalibrationModel c;
  c.beta0 = -2.0;
  c.beta1 = 5.0;
  int changes = 0, prev = c.label(0.0);
  for (int k = 1; k <= 1000; ++k) {
    const int l = c.label(k / 1000.0);
    changes += l != prev;
    prev = l;
  }
  EXPECT_EQ(changes, 1);
}

TEST(Summary, ListsEveryReplica) {
  const auto train = scenario_data(4, 3, 60);
  const auto m = bootstrap_fit(train, ClassifierKind::LDA, config(3), 4);
  std::ostringstream out;
  write_ensemble_summary(out, m, calibrate(m, train, CalibrationMode::AllReplicas));
  const std::string s = out.str();
  EXPECT_NE(s.find("replica,K,pve"), std::string::npos);
  EXPECT_NE(s.find("\n3,"), std::string::npos);
  EXPECT_NE(s.find("beta0,beta1"), std::string::npos);
}
