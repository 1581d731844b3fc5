#pragma once

// Monte Carlo and real-data experiment driver: per repetition it draws data,
// fits the single baseline and one shared bootstrap ensemble per classifier,
// and records the test error of every requested (classifier, rule) cell.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "fpcagg/calibration.hpp"
#include "fpcagg/classifiers.hpp"
#include "fpcagg/curve_data.hpp"
#include "fpcagg/ensemble.hpp"
#include "fpcagg/error.hpp"
#include "fpcagg/fpca.hpp"
#include "fpcagg/rng.hpp"
#include "fpcagg/simgen.hpp"

namespace fpcagg {

struct ScenarioSource {
  sim::ScenarioConfig scenario;  // seed is ignored; each repetition derives its own
  int test_n = 100;
};

struct RealDataSource {
  FunctionalDataset data;
  std::optional<ObsRange> sparsify;  // keep every observation when unset
  double train_fraction = 2.0 / 3.0;
};

using ExperimentSource = std::variant<ScenarioSource, RealDataSource>;

struct ExperimentConfig {
  ExperimentSource source = ScenarioSource{};
  std::vector<ClassifierKind> classifiers{ClassifierKind::RandomForest};
  std::vector<AggregationRule> rules{kAllRules.begin(), kAllRules.end()};
  int repetitions = 100;
  int B = 100;
  FpcaConfig fpca_single;
  FpcaConfig fpca_bag;
  ClassifierTuning tuning;
  CalibrationMode calibration_mode = CalibrationMode::AllReplicas;
  CalibrationOptions calibration;
  int max_attempts = 20;
  std::uint64_t seed = 1;
  int workers = 1;
  double max_failure_fraction = 0.10;

  void validate() const {
    if (classifiers.empty()) throw Error(ErrorCode::Config, "no classifiers requested");
    if (rules.empty()) throw Error(ErrorCode::Config, "no aggregation rules requested");
    if (repetitions < 1) throw Error(ErrorCode::Config, "repetitions must be at least 1");
    if (B < 1) throw Error(ErrorCode::Config, "B must be at least 1");
    if (workers < 1) throw Error(ErrorCode::Config, "workers must be at least 1");
    if (max_attempts < 1) throw Error(ErrorCode::Config, "max_attempts must be at least 1");
    auto dup = [](auto v) {
      std::sort(v.begin(), v.end());
      return std::adjacent_find(v.begin(), v.end()) != v.end();
    };
    if (dup(classifiers)) throw Error(ErrorCode::Config, "duplicate classifier in request");
    if (dup(rules)) throw Error(ErrorCode::Config, "duplicate rule in request");
    if (const auto* s = std::get_if<ScenarioSource>(&source)) {
      sim::validate(s->scenario);
      if (s->test_n < 2 || s->test_n % 2 != 0) throw Error(ErrorCode::Config, "test_n must be even and at least 2");
    } else {
      const auto& r = std::get<RealDataSource>(source);
      r.data.require_labels();
      if (!(r.train_fraction > 0.0 && r.train_fraction < 1.0))
        throw Error(ErrorCode::Config, "train_fraction must lie in (0,1)");
    }
  }

  bool needs_ensemble() const {
    return std::any_of(rules.begin(), rules.end(), [](AggregationRule r) { return r != AggregationRule::Single; });
  }
};

struct RepetitionResult {
  int rep = 0;
  bool ok = false;
  std::string failure;
  std::vector<double> errors;  // classifier-major: errors[c * rules + j], percent
  std::optional<int> single_k;
  std::vector<int> bag_k;  // one entry per replica
};

struct KSummary {
  int min = 0;
  int max = 0;
  double mean = 0.0;
  std::size_t count = 0;
};

struct ResultsTable {
  std::vector<ClassifierKind> classifiers;
  std::vector<AggregationRule> rules;
  std::vector<RepetitionResult> reps;  // sorted by rep, failures included

  std::size_t cells() const noexcept { return classifiers.size() * rules.size(); }
  std::size_t cell(std::size_t c, std::size_t j) const noexcept { return c * rules.size() + j; }

  std::size_t successes() const {
    return static_cast<std::size_t>(std::count_if(reps.begin(), reps.end(), [](const auto& r) { return r.ok; }));
  }
  std::size_t failures() const { return reps.size() - successes(); }

  std::vector<double> column(std::size_t c, std::size_t j) const {
    std::vector<double> out;
    for (const auto& r : reps)
      if (r.ok) out.push_back(r.errors[cell(c, j)]);
    return out;
  }

  double mean(std::size_t c, std::size_t j) const {
    const auto v = column(c, j);
    if (v.empty()) return std::nan("");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  }

  // Standard deviation of the per-repetition errors (n - 1 denominator); 0 for
  // a single repetition.
  double sd(std::size_t c, std::size_t j) const {
    const auto v = column(c, j);
    if (v.size() < 2) return 0.0;
    const double m = mean(c, j);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
  }

  std::optional<std::size_t> index_of(ClassifierKind k, AggregationRule r) const {
    auto ci = std::find(classifiers.begin(), classifiers.end(), k);
    auto ri = std::find(rules.begin(), rules.end(), r);
    if (ci == classifiers.end() || ri == rules.end()) return std::nullopt;
    return cell(static_cast<std::size_t>(ci - classifiers.begin()), static_cast<std::size_t>(ri - rules.begin()));
  }

  double mean(ClassifierKind k, AggregationRule r) const {
    auto i = index_of(k, r);
    if (!i) throw Error(ErrorCode::Config, std::string("no results for ") + to_string(k) + "/" + to_string(r));
    return mean(*i / rules.size(), *i % rules.size());
  }

  double sd(ClassifierKind k, AggregationRule r) const {
    auto i = index_of(k, r);
    if (!i) throw Error(ErrorCode::Config, std::string("no results for ") + to_string(k) + "/" + to_string(r));
    return sd(*i / rules.size(), *i % rules.size());
  }

  std::optional<KSummary> single_k() const {
    std::vector<int> ks;
    for (const auto& r : reps)
      if (r.ok && r.single_k) ks.push_back(*r.single_k);
    return summarize(ks);
  }

  std::optional<KSummary> bag_k() const {
    std::vector<int> ks;
    for (const auto& r : reps)
      if (r.ok) ks.insert(ks.end(), r.bag_k.begin(), r.bag_k.end());
    return summarize(ks);
  }

 private:
  static std::optional<KSummary> summarize(const std::vector<int>& ks) {
    if (ks.empty()) return std::nullopt;
    KSummary s;
    s.min = *std::min_element(ks.begin(), ks.end());
    s.max = *std::max_element(ks.begin(), ks.end());
    double sum = 0.0;
    for (int k : ks) sum += k;
    s.mean = sum / static_cast<double>(ks.size());
    s.count = ks.size();
    return s;
  }
};

namespace detail {

inline double error_pct(const std::vector<int>& predicted, const FunctionalDataset& test) {
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < test.size(); ++i) wrong += predicted[i] != *test[i].label();
  return 100.0 * static_cast<double>(wrong) / static_cast<double>(test.size());
}

inline TrainTestSplit draw_repetition_data(const ExperimentConfig& cfg, int rep) {
  const auto r = static_cast<std::uint64_t>(rep);
  if (const auto* s = std::get_if<ScenarioSource>(&cfg.source)) {
    sim::ScenarioConfig train_cfg = s->scenario;
    train_cfg.seed = derive_seed(cfg.seed, {r, 0});
    sim::ScenarioConfig test_cfg = s->scenario;
    test_cfg.n = s->test_n;
    test_cfg.seed = derive_seed(cfg.seed, {r, 1});
    return {sim::generate(train_cfg), sim::generate(test_cfg)};
  }
  const auto& real = std::get<RealDataSource>(cfg.source);
  const FunctionalDataset sparse =
      real.sparsify ? fpcagg::sparsify(real.data, *real.sparsify, derive_seed(cfg.seed, {r, 0})) : real.data;
  return split(sparse, SplitSpec{real.train_fraction, derive_seed(cfg.seed, {r, 1})});
}

}  // namespace detail

// One repetition; fpcagg::Error marks the repetition failed, anything else
// propagates.
inline RepetitionResult run_repetition(const ExperimentConfig& cfg, int rep) {
  RepetitionResult out;
  out.rep = rep;
  out.errors.assign(cfg.classifiers.size() * cfg.rules.size(), std::nan(""));
  const auto r = static_cast<std::uint64_t>(rep);
  try {
    const auto [train, test] = detail::draw_repetition_data(cfg, rep);
    const std::size_t n_test = test.size();
    auto rule_index = [&](AggregationRule rule) -> std::optional<std::size_t> {
      auto it = std::find(cfg.rules.begin(), cfg.rules.end(), rule);
      if (it == cfg.rules.end()) return std::nullopt;
      return static_cast<std::size_t>(it - cfg.rules.begin());
    };

    if (auto j = rule_index(AggregationRule::Single)) {
      const FpcaModel fpca = fit_fpca(train, cfg.fpca_single);
      out.single_k = fpca.K;
      const TrainingMatrix mat{pace_scores(fpca, train), train.labels()};
      const Eigen::MatrixXd test_scores = pace_scores(fpca, test);
      for (std::size_t c = 0; c < cfg.classifiers.size(); ++c) {
        const auto kind = cfg.classifiers[c];
        const ClassifierModel model =
            fit(kind, mat, cfg.tuning, derive_seed(cfg.seed, {r, 3, static_cast<std::uint64_t>(kind)}));
        std::vector<int> pred(n_test);
        for (std::size_t i = 0; i < n_test; ++i)
          pred[i] = predict_label(model, test_scores.row(static_cast<Eigen::Index>(i)).transpose());
        out.errors[c * cfg.rules.size() + *j] = detail::error_pct(pred, test);
      }
    }

    if (cfg.needs_ensemble()) {
      EnsembleConfig ec;
      ec.B = cfg.B;
      ec.fpca = cfg.fpca_bag;
      ec.tuning = cfg.tuning;
      ec.max_attempts = cfg.max_attempts;
      const auto ensembles = bootstrap_fit_many(train, cfg.classifiers, ec, derive_seed(cfg.seed, {r, 2}));
      for (const auto& rep_model : ensembles.front().replicas) out.bag_k.push_back(rep_model.fpca->K);

      const auto jm = rule_index(AggregationRule::MajorityVote);
      const auto jo = rule_index(AggregationRule::OobWeight);
      const auto jb = rule_index(AggregationRule::Bayesian);
      for (std::size_t c = 0; c < cfg.classifiers.size(); ++c) {
        const EnsembleModel& model = ensembles[c];
        std::optional<CalibrationModel> calib;
        if (jb) calib = calibrate(model, train, cfg.calibration_mode, cfg.calibration);
        const Eigen::MatrixXd P = replica_probabilities(model, test);
        std::vector<int> maj(n_test), oob(n_test), bayes(n_test);
        for (std::size_t i = 0; i < n_test; ++i) {
          const ReplicaOutputs o = replica_outputs(model, P.row(static_cast<Eigen::Index>(i)), test[i].id());
          maj[i] = majority_vote(o.votes);
          oob[i] = oob_weighted_vote(o.votes, o.errors);
          if (calib) bayes[i] = calib->label(mean_probability(o.probs));
        }
        const std::size_t base = c * cfg.rules.size();
        if (jm) out.errors[base + *jm] = detail::error_pct(maj, test);
        if (jo) out.errors[base + *jo] = detail::error_pct(oob, test);
        if (jb) out.errors[base + *jb] = detail::error_pct(bayes, test);
      }
    }
    out.ok = true;
  } catch (const Error& e) {
    out.ok = false;
    out.failure = e.what();
    std::fill(out.errors.begin(), out.errors.end(), std::nan(""));
    out.bag_k.clear();
    out.single_k.reset();
  }
  return out;
}

using ProgressCallback = std::function<void(const RepetitionResult&, int done, int total)>;

// Repetitions run on a pool of cfg.workers threads; each is a pure function of
// (cfg, rep), so the table does not depend on the worker count.
inline ResultsTable run_experiment(const ExperimentConfig& cfg, const ProgressCallback& progress = {}) {
  cfg.validate();
  ResultsTable table;
  table.classifiers = cfg.classifiers;
  table.rules = cfg.rules;
  table.reps.resize(static_cast<std::size_t>(cfg.repetitions));

  std::atomic<int> next{0};
  int done = 0;
  std::mutex mu;
  std::exception_ptr fatal;
  auto worker = [&] {
    for (;;) {
      const int rep = next.fetch_add(1);
      if (rep >= cfg.repetitions) return;
      try {
        RepetitionResult res = run_repetition(cfg, rep);
        std::lock_guard lock(mu);
        table.reps[static_cast<std::size_t>(rep)] = std::move(res);
        ++done;
        if (progress) progress(table.reps[static_cast<std::size_t>(rep)], done, cfg.repetitions);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!fatal) fatal = std::current_exception();
        next.store(cfg.repetitions);
        return;
      }
    }
  };
  const int n_workers = std::min(cfg.workers, cfg.repetitions);
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (fatal) std::rethrow_exception(fatal);

  const std::size_t failed = table.failures();
  if (static_cast<double>(failed) > cfg.max_failure_fraction * static_cast<double>(cfg.repetitions)) {
    std::string first;
    for (const auto& r : table.reps)
      if (!r.ok) {
        first = r.failure;
        break;
      }
    throw Error(ErrorCode::ExperimentFailure, std::to_string(failed) + " of " + std::to_string(cfg.repetitions) +
                                                  " repetitions failed; first failure: " + first);
  }
  return table;
}

// --- output files ---------------------------------------------------------------

namespace detail {

inline std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "' for writing");
  return out;
}

inline void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw Error(ErrorCode::Io, "write to '" + path.string() + "' failed");
}

}  // namespace detail

inline void write_summary_csv(std::ostream& out, const ResultsTable& t) {
  out << "classifier,rule,mean_error_pct,se_pct,n_reps\n";
  const std::size_t n = t.successes();
  for (std::size_t c = 0; c < t.classifiers.size(); ++c)
    for (std::size_t j = 0; j < t.rules.size(); ++j)
      out << to_string(t.classifiers[c]) << ',' << to_string(t.rules[j]) << ',' << detail::fixed(t.mean(c, j)) << ','
          << detail::fixed(t.sd(c, j)) << ',' << n << '\n';
}

inline void write_errors_long_csv(std::ostream& out, const ResultsTable& t) {
  out << "rep,classifier,rule,error_pct\n";
  for (const auto& r : t.reps) {
    if (!r.ok) continue;
    for (std::size_t c = 0; c < t.classifiers.size(); ++c)
      for (std::size_t j = 0; j < t.rules.size(); ++j)
        out << r.rep + 1 << ',' << to_string(t.classifiers[c]) << ',' << to_string(t.rules[j]) << ','
            << detail::fixed(r.errors[t.cell(c, j)]) << '\n';
  }
}

// Running mean over successful repetitions in repetition order.
inline void write_trace_csv(std::ostream& out, const ResultsTable& t) {
  out << "rep,classifier,rule,running_mean_pct\n";
  std::vector<double> sum(t.cells(), 0.0);
  std::size_t count = 0;
  for (const auto& r : t.reps) {
    if (!r.ok) continue;
    ++count;
    for (std::size_t c = 0; c < t.classifiers.size(); ++c)
      for (std::size_t j = 0; j < t.rules.size(); ++j) {
        const std::size_t k = t.cell(c, j);
        sum[k] += r.errors[k];
        out << r.rep + 1 << ',' << to_string(t.classifiers[c]) << ',' << to_string(t.rules[j]) << ','
            << detail::fixed(sum[k] / static_cast<double>(count)) << '\n';
      }
  }
}

inline void write_k_summary_csv(std::ostream& out, const ResultsTable& t) {
  out << "model,min_k,max_k,mean_k,n\n";
  auto row = [&](const char* name, const std::optional<KSummary>& s) {
    if (s) out << name << ',' << s->min << ',' << s->max << ',' << detail::fixed(s->mean) << ',' << s->count << '\n';
  };
  row("single", t.single_k());
  row("bagging", t.bag_k());
}

inline void write_failures_csv(std::ostream& out, const ResultsTable& t) {
  out << "rep,message\n";
  for (const auto& r : t.reps) {
    if (r.ok) continue;
    std::string msg = r.failure;
    std::replace(msg.begin(), msg.end(), '"', '\'');
    out << r.rep + 1 << ",\"" << msg << "\"\n";
  }
}

// Writes summary.csv, errors_long.csv, trace.csv and k_summary.csv, plus
// failures.csv when any repetition failed.
inline void emit_outputs(const ResultsTable& table, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create output directory '" + dir.string() + "': " + ec.message());
  auto emit = [&](const char* name, void (*writer)(std::ostream&, const ResultsTable&)) {
    const auto path = dir / name;
    auto out = detail::open_output(path);
    writer(out, table);
    detail::finish(out, path);
  };
  emit("summary.csv", write_summary_csv);
  emit("errors_long.csv", write_errors_long_csv);
  emit("trace.csv", write_trace_csv);
  emit("k_summary.csv", write_k_summary_csv);
  if (table.failures() > 0) emit("failures.csv", write_failures_csv);
}

}  // namespace fpcagg
