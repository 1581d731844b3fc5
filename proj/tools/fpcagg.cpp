// fpcagg: simulation studies, real-data experiments, dataset generation, FPCA
// dumps and ensemble prediction from the command line.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fpcagg/curve_data.hpp"
#include "fpcagg/ensemble.hpp"
#include "fpcagg/experiment.hpp"
#include "fpcagg/fpca.hpp"
#include "fpcagg/serialize.hpp"
#include "fpcagg/simgen.hpp"

namespace {

using namespace fpcagg;

constexpr int kUsageExit = 2;
constexpr int kFailureExit = 1;

struct FpcaFlags {
  int grid_size = 51;
  std::optional<double> mean_bw, cov_bw, noise_bw;
  double pve = 0.99;
  std::optional<int> k_min, k_max;

  void add(CLI::App& app) {
    app.add_option("--grid-size", grid_size, "FPCA evaluation grid points")->capture_default_str();
    app.add_option("--mean-bw", mean_bw, "mean smoother bandwidth (default 10% of domain)");
    app.add_option("--cov-bw", cov_bw, "covariance smoother bandwidth (default 20% of domain)");
    app.add_option("--noise-bw", noise_bw, "noise-variance bandwidth (default 7.5% of domain)");
    app.add_option("--pve", pve, "variance fraction that selects K")->capture_default_str();
    app.add_option("--k-min", k_min, "lower bound on K");
    app.add_option("--k-max", k_max, "upper bound on K");
  }

  FpcaConfig config() const {
    FpcaConfig c;
    c.grid_size = grid_size;
    c.mean_bandwidth = mean_bw;
    c.cov_bandwidth = cov_bw;
    c.noise_bandwidth = noise_bw;
    c.pve_threshold = pve;
    c.k_min = k_min;
    c.k_max = k_max;
    return c;
  }
};

struct TuningFlags {
  int rf_trees = 500;
  std::optional<int> rf_mtry;

  void add(CLI::App& app) {
    app.add_option("--rf-trees", rf_trees, "trees per random forest")->capture_default_str();
    app.add_option("--rf-mtry", rf_mtry, "fixed mtry (skips the OOB search)");
  }

  ClassifierTuning tuning() const {
    ClassifierTuning t;
    t.rf_trees = rf_trees;
    t.rf_mtry = rf_mtry;
    return t;
  }
};

struct CalibrationFlags {
  std::string mode = "all";
  double scale0 = 10.0;
  double scale1 = 2.5;

  void add(CLI::App& app) {
    app.add_option("--calibration-mode", mode, "calibration inputs: all | oob")->capture_default_str();
    app.add_option("--prior-scale0", scale0, "Cauchy prior scale for the intercept")->capture_default_str();
    app.add_option("--prior-scale1", scale1, "Cauchy prior scale for the slope")->capture_default_str();
  }

  CalibrationOptions options() const {
    CalibrationOptions o;
    o.prior_scale0 = scale0;
    o.prior_scale1 = scale1;
    return o;
  }
};

struct ExperimentFlags {
  std::vector<std::string> classifiers{"rf"};
  std::vector<std::string> rules{"single", "majority", "oob", "bayesian"};
  int reps = 100;
  int B = 100;
  std::uint64_t seed = 1;
  int workers = 1;
  int max_attempts = 20;
  std::string out = "results";
  bool quiet = false;
  FpcaFlags fpca;
  TuningFlags tuning;
  CalibrationFlags calibration;

  void add(CLI::App& app) {
    app.add_option("--classifiers", classifiers, "logit,lda,qda,naivebayes,rf,gbm")
        ->delimiter(',')
        ->capture_default_str();
    app.add_option("--rules", rules, "single,majority,oob,bayesian")->delimiter(',')->capture_default_str();
    app.add_option("--reps", reps, "repetitions")->capture_default_str();
    app.add_option("--B", B, "bootstrap replicas per ensemble")->capture_default_str();
    app.add_option("--seed", seed, "master seed")->capture_default_str();
    app.add_option("--workers", workers, "worker threads")->capture_default_str();
    app.add_option("--max-attempts", max_attempts, "draws per replica before giving up")->capture_default_str();
    app.add_option("--out", out, "output directory")->capture_default_str();
    app.add_flag("--quiet", quiet, "no progress on stderr");
    fpca.add(app);
    tuning.add(app);
    calibration.add(app);
  }

  ExperimentConfig config() const {
    ExperimentConfig c;
    c.classifiers.clear();
    for (const auto& s : classifiers) c.classifiers.push_back(parse_classifier(s));
    c.rules.clear();
    for (const auto& s : rules) c.rules.push_back(parse_rule(s));
    c.repetitions = reps;
    c.B = B;
    c.seed = seed;
    c.workers = workers;
    c.max_attempts = max_attempts;
    c.fpca_single = c.fpca_bag = fpca.config();
    c.tuning = tuning.tuning();
    c.calibration_mode = parse_calibration_mode(calibration.mode);
    c.calibration = calibration.options();
    return c;
  }
};

struct CsvFlags {
  std::string id = "id", time = "time", value = "value", label = "label";

  void add(CLI::App& app) {
    app.add_option("--id-col", id, "curve id column")->capture_default_str();
    app.add_option("--time-col", time, "time column")->capture_default_str();
    app.add_option("--value-col", value, "value column")->capture_default_str();
    app.add_option("--label-col", label, "0/1 label column")->capture_default_str();
  }

  CsvSchema schema() const { return {id, time, value, label}; }
};

ObsRange parse_range(const std::string& s) {
  const auto comma = s.find(',');
  try {
    if (comma == std::string::npos) {
      const int v = std::stoi(s);
      return {v, v};
    }
    return {std::stoi(s.substr(0, comma)), std::stoi(s.substr(comma + 1))};
  } catch (const std::exception&) {
    throw Error(ErrorCode::Config, "observation range '" + s + "' is not 'lo,hi'");
  }
}

void run_and_emit(const ExperimentConfig& cfg, const ExperimentFlags& flags) {
  ProgressCallback progress;
  if (!flags.quiet)
    progress = [](const RepetitionResult& r, int done, int total) {
      std::fprintf(stderr, "rep %d/%d%s\n", done, total, r.ok ? "" : (" failed: " + r.failure).c_str());
    };
  const ResultsTable table = run_experiment(cfg, progress);
  emit_outputs(table, flags.out);
  write_summary_csv(std::cout, table);
  if (table.failures() > 0) std::cerr << table.failures() << " repetition(s) failed; see failures.csv\n";
}

std::ofstream open_or_throw(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot open '" + path + "' for writing");
  return out;
}

void write_scores_csv(std::ostream& out, const FpcaModel& model, const FunctionalDataset& data) {
  const Eigen::MatrixXd S = pace_scores(model, data);
  out << "id";
  for (int k = 0; k < model.K; ++k) out << ",xi" << k + 1;
  out << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << data[i].id();
    for (int k = 0; k < model.K; ++k) out << ',' << detail::format_double(S(static_cast<Eigen::Index>(i), k));
    out << '\n';
  }
}

void write_predictions(std::ostream& out, const SavedModel& model, const FunctionalDataset& data) {
  const Eigen::MatrixXd P = replica_probabilities(model.ensemble, data);
  out << "id,mean_probability,majority_vote,oob_weight";
  if (model.calibration) out << ",bayesian_probability,bayesian";
  out << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    const ReplicaOutputs o = replica_outputs(model.ensemble, P.row(static_cast<Eigen::Index>(i)), data[i].id());
    const double p = mean_probability(o.probs);
    out << data[i].id() << ',' << detail::format_double(p) << ',' << majority_vote(o.votes) << ','
        << oob_weighted_vote(o.votes, o.errors);
    if (model.calibration) {
      const double pi = model.calibration->probability(p);
      out << ',' << detail::format_double(pi) << ',' << (pi > 0.5 ? 1 : 0);
    }
    out << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bagged sparse-FPCA classification with Bayesian aggregation"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value file; [subcommand] sections apply to that subcommand, flags override");
  app.allow_config_extras(CLI::config_extras_mode::error);

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo study on a built-in scenario");
  int sim_scenario = 1;
  int sim_n_train = 200, sim_n_test = 100;
  ExperimentFlags sim_flags;
  sim_cmd->add_option("--scenario", sim_scenario, "scenario id (1-9)")->required();
  sim_cmd->add_option("--n-train", sim_n_train, "training curves per repetition")->capture_default_str();
  sim_cmd->add_option("--n-test", sim_n_test, "test curves per repetition")->capture_default_str();
  sim_flags.add(*sim_cmd);

  // realdata
  auto* real_cmd = app.add_subcommand("realdata", "repeated random-split experiment on a long-format CSV");
  std::string real_path;
  std::optional<std::string> real_sparsify;
  double real_train_fraction = 2.0 / 3.0;
  CsvFlags real_csv;
  ExperimentFlags real_flags;
  real_cmd->add_option("--data", real_path, "long CSV with id,time,value,label")->required();
  real_cmd->add_option("--sparsify", real_sparsify, "keep lo..hi observations per curve, as 'lo,hi'");
  real_cmd->add_option("--train-fraction", real_train_fraction, "share of curves used for training")
      ->capture_default_str();
  real_csv.add(*real_cmd);
  real_flags.add(*real_cmd);

  // generate
  auto* gen_cmd = app.add_subcommand("generate", "write one scenario dataset as long CSV");
  int gen_scenario = 1, gen_n = 200;
  std::uint64_t gen_seed = 1;
  std::string gen_out = "-";
  gen_cmd->add_option("--scenario", gen_scenario, "scenario id (1-9)")->required();
  gen_cmd->add_option("--seed", gen_seed, "generator seed")->capture_default_str();
  gen_cmd->add_option("--n", gen_n, "number of curves (even)")->capture_default_str();
  gen_cmd->add_option("--out", gen_out, "output file, '-' for stdout")->capture_default_str();

  // fpca
  auto* fpca_cmd = app.add_subcommand("fpca", "fit sparse FPCA and dump the model");
  std::optional<std::string> fpca_data;
  std::optional<int> fpca_scenario;
  std::uint64_t fpca_seed = 1;
  std::string fpca_out = "-";
  std::optional<std::string> fpca_scores;
  CsvFlags fpca_csv;
  FpcaFlags fpca_flags;
  auto* fpca_data_opt = fpca_cmd->add_option("--data", fpca_data, "long CSV input");
  auto* fpca_scen_opt = fpca_cmd->add_option("--scenario", fpca_scenario, "generate input from a scenario instead");
  fpca_data_opt->excludes(fpca_scen_opt);
  fpca_cmd->add_option("--seed", fpca_seed, "generator seed with --scenario")->capture_default_str();
  fpca_cmd->add_option("--out", fpca_out, "model dump, '-' for stdout")->capture_default_str();
  fpca_cmd->add_option("--scores", fpca_scores, "also write per-curve scores to this CSV");
  fpca_csv.add(*fpca_cmd);
  fpca_flags.add(*fpca_cmd);

  // predict
  auto* pred_cmd = app.add_subcommand("predict", "score curves with a saved or freshly trained ensemble");
  std::optional<std::string> pred_model, pred_train, pred_save;
  std::string pred_data, pred_out = "-";
  std::string pred_classifier = "rf";
  int pred_B = 100, pred_max_attempts = 20;
  std::uint64_t pred_seed = 1;
  CsvFlags pred_csv;
  FpcaFlags pred_fpca;
  TuningFlags pred_tuning;
  CalibrationFlags pred_calib;
  auto* model_opt = pred_cmd->add_option("--model", pred_model, "saved ensemble (.json or .cbor)");
  auto* train_opt = pred_cmd->add_option("--train", pred_train, "labelled long CSV to fit an ensemble on");
  model_opt->excludes(train_opt);
  pred_cmd->add_option("--save-model", pred_save, "write the fitted ensemble here (with --train)")->needs(train_opt);
  pred_cmd->add_option("--data", pred_data, "curves to score (long CSV)")->required();
  pred_cmd->add_option("--out", pred_out, "predictions CSV, '-' for stdout")->capture_default_str();
  pred_cmd->add_option("--classifier", pred_classifier, "classifier for --train")->capture_default_str();
  pred_cmd->add_option("--B", pred_B, "bootstrap replicas for --train")->capture_default_str();
  pred_cmd->add_option("--seed", pred_seed, "seed for --train")->capture_default_str();
  pred_cmd->add_option("--max-attempts", pred_max_attempts, "draws per replica")->capture_default_str();
  pred_csv.add(*pred_cmd);
  pred_fpca.add(*pred_cmd);
  pred_tuning.add(*pred_cmd);
  pred_calib.add(*pred_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageExit;
  }

  try {
    if (*sim_cmd) {
      ExperimentConfig cfg = sim_flags.config();
      ScenarioSource src;
      src.scenario = sim::scenario(sim_scenario);
      src.scenario.n = sim_n_train;
      src.test_n = sim_n_test;
      cfg.source = src;
      run_and_emit(cfg, sim_flags);
    } else if (*real_cmd) {
      ExperimentConfig cfg = real_flags.config();
      RealDataSource src{load_long_csv(real_path, real_csv.schema()), std::nullopt, real_train_fraction};
      if (real_sparsify) src.sparsify = parse_range(*real_sparsify);
      cfg.source = std::move(src);
      run_and_emit(cfg, real_flags);
    } else if (*gen_cmd) {
      sim::ScenarioConfig sc = sim::scenario(gen_scenario);
      sc.seed = gen_seed;
      sc.n = gen_n;
      const FunctionalDataset data = sim::generate(sc);
      if (gen_out == "-") {
        write_long_csv(std::cout, data);
      } else {
        save_long_csv(gen_out, data);
      }
    } else if (*fpca_cmd) {
      const FunctionalDataset data = [&] {
        if (fpca_data) return load_long_csv(*fpca_data, fpca_csv.schema());
        if (!fpca_scenario) throw Error(ErrorCode::Config, "fpca needs --data or --scenario");
        sim::ScenarioConfig sc = sim::scenario(*fpca_scenario);
        sc.seed = fpca_seed;
        return sim::generate(sc);
      }();
      const FpcaModel model = fit_fpca(data, fpca_flags.config());
      if (fpca_out == "-") {
        write_fpca_dump(std::cout, model);
      } else {
        auto out = open_or_throw(fpca_out);
        write_fpca_dump(out, model);
      }
      if (fpca_scores) {
        auto out = open_or_throw(*fpca_scores);
        write_scores_csv(out, model, data);
      }
    } else if (*pred_cmd) {
      SavedModel model;
      if (pred_model) {
        model = load_model(*pred_model);
      } else if (pred_train) {
        const FunctionalDataset train = load_long_csv(*pred_train, pred_csv.schema());
        EnsembleConfig ec;
        ec.B = pred_B;
        ec.fpca = pred_fpca.config();
        ec.tuning = pred_tuning.tuning();
        ec.max_attempts = pred_max_attempts;
        model.ensemble = bootstrap_fit(train, parse_classifier(pred_classifier), ec, pred_seed);
        model.calibration_mode = parse_calibration_mode(pred_calib.mode);
        model.calibration = calibrate(model.ensemble, train, model.calibration_mode, pred_calib.options());
        if (pred_save) save_model(*pred_save, model);
      } else {
        throw Error(ErrorCode::Config, "predict needs --model or --train");
      }
      // Labels are optional for scoring; an all-unlabelled file has no label column.
      const FunctionalDataset data = load_long_csv(pred_data, pred_csv.schema());
      if (pred_out == "-") {
        write_predictions(std::cout, model, data);
      } else {
        auto out = open_or_throw(pred_out);
        write_predictions(out, model, data);
      }
    }
  } catch (const Error& e) {
    std::cerr << "fpcagg: " << e.what() << '\n';
    return kFailureExit;
  } catch (const std::exception& e) {
    std::cerr << "fpcagg: unexpected failure: " << e.what() << '\n';
    return kFailureExit;
  }
  return 0;
}
