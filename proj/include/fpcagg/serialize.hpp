#pragma once

// JSON persistence for fitted ensembles. Doubles are written with
// shortest round-trip precision, so a reloaded model predicts bit-identically.
// Paths ending in ".cbor" use the binary CBOR encoding of the same document.

#include <array>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <memory>
#include <optional>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include <json.hpp>

#include "fpcagg/calibration.hpp"
#include "fpcagg/classifiers.hpp"
#include "fpcagg/ensemble.hpp"
#include "fpcagg/error.hpp"
#include "fpcagg/fpca.hpp"

namespace fpcagg {

using json = nlohmann::json;

struct SavedModel {
  EnsembleModel ensemble;
  std::optional<CalibrationModel> calibration;
  CalibrationMode calibration_mode = CalibrationMode::AllReplicas;
};

namespace io {

inline constexpr int kFormatVersion = 1;

inline json vec_to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Eigen::VectorXd vec_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Row-major nested arrays.
inline json mat_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd mat_from_json(const json& j, Eigen::Index cols_if_empty = 0) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : cols_if_empty;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (static_cast<Eigen::Index>(row.size()) != cols) throw Error(ErrorCode::Schema, "ragged matrix in model file");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

// Trees as column arrays: far smaller than one object per node.
inline json tree_to_json(const tree::Tree& t) {
  std::vector<int> feature, left, right;
  std::vector<double> threshold, value;
  for (const auto& n : t.nodes) {
    feature.push_back(n.feature);
    threshold.push_back(n.threshold);
    left.push_back(n.left);
    right.push_back(n.right);
    value.push_back(n.value);
  }
  return {{"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right}, {"value", value}};
}

inline tree::Tree tree_from_json(const json& j) {
  const auto feature = j.at("feature").get<std::vector<int>>();
  const auto threshold = j.at("threshold").get<std::vector<double>>();
  const auto left = j.at("left").get<std::vector<int>>();
  const auto right = j.at("right").get<std::vector<int>>();
  const auto value = j.at("value").get<std::vector<double>>();
  const std::size_t n = feature.size();
  if (n == 0 || threshold.size() != n || left.size() != n || right.size() != n || value.size() != n)
    throw Error(ErrorCode::Schema, "malformed tree in model file");
  tree::Tree t;
  t.nodes.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool split = feature[i] >= 0;
    // Children always follow their parent, which also rules out cycles.
    if (split && (left[i] <= static_cast<int>(i) || right[i] <= static_cast<int>(i) || left[i] >= static_cast<int>(n) ||
                  right[i] >= static_cast<int>(n)))
      throw Error(ErrorCode::Schema, "tree node has out-of-range children");
    t.nodes[i] = {feature[i], threshold[i], left[i], right[i], value[i]};
  }
  return t;
}

inline json trees_to_json(const std::vector<tree::Tree>& ts) {
  json a = json::array();
  for (const auto& t : ts) a.push_back(tree_to_json(t));
  return a;
}

inline std::vector<tree::Tree> trees_from_json(const json& j) {
  std::vector<tree::Tree> out;
  out.reserve(j.size());
  for (const auto& t : j) out.push_back(tree_from_json(t));
  return out;
}

inline json params_to_json(const ClassifierParams& params) {
  auto vpair = [](const std::array<Eigen::VectorXd, 2>& a) { return json::array({vec_to_json(a[0]), vec_to_json(a[1])}); };
  return std::visit(
      [&](const auto& p) -> json {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, LogitParams>) {
          return {{"coef", vec_to_json(p.coef)},
                  {"iterations", p.iterations},
                  {"converged", p.converged},
                  {"separation", p.separation}};
        } else if constexpr (std::is_same_v<P, LdaParams>) {
          return {{"means", vpair(p.means)}, {"covariance", mat_to_json(p.covariance)}, {"priors", p.priors}};
        } else if constexpr (std::is_same_v<P, QdaParams>) {
          return {{"means", vpair(p.means)},
                  {"covariances", json::array({mat_to_json(p.covariances[0]), mat_to_json(p.covariances[1])})},
                  {"priors", p.priors}};
        } else if constexpr (std::is_same_v<P, NaiveBayesParams>) {
          return {{"means", vpair(p.means)}, {"variances", vpair(p.variances)}, {"priors", p.priors}};
        } else if constexpr (std::is_same_v<P, ForestParams>) {
          return {{"mtry", p.mtry}, {"oob_error", p.oob_error}, {"trees", trees_to_json(p.trees)}};
        } else {
          return {{"initial", p.initial},     {"shrinkage", p.shrinkage},     {"depth", p.depth},
                  {"min_node", p.min_node},   {"cv_log_loss", p.cv_log_loss}, {"stages", trees_to_json(p.stages)}};
        }
      },
      params);
}

inline std::array<Eigen::VectorXd, 2> vpair_from_json(const json& j) {
  if (j.size() != 2) throw Error(ErrorCode::Schema, "expected two class entries");
  return {vec_from_json(j[0]), vec_from_json(j[1])};
}

inline ClassifierParams params_from_json(ClassifierKind kind, const json& j, int K) {
  switch (kind) {
    case ClassifierKind::Logit: {
      LogitParams p;
      p.coef = vec_from_json(j.at("coef"));
      p.iterations = j.at("iterations").get<int>();
      p.converged = j.at("converged").get<bool>();
      p.separation = j.at("separation").get<bool>();
      if (p.coef.size() != K + 1) throw Error(ErrorCode::Schema, "logit coefficient count mismatch");
      return p;
    }
    case ClassifierKind::LDA:
      return LdaParams::from_moments(vpair_from_json(j.at("means")), mat_from_json(j.at("covariance"), K),
                                     j.at("priors").get<std::array<double, 2>>());
    case ClassifierKind::QDA: {
      const auto& c = j.at("covariances");
      if (c.size() != 2) throw Error(ErrorCode::Schema, "expected two class covariances");
      return QdaParams::from_moments(vpair_from_json(j.at("means")), {mat_from_json(c[0], K), mat_from_json(c[1], K)},
                                     j.at("priors").get<std::array<double, 2>>());
    }
    case ClassifierKind::NaiveBayes: {
      NaiveBayesParams p;
      p.means = vpair_from_json(j.at("means"));
      p.variances = vpair_from_json(j.at("variances"));
      p.priors = j.at("priors").get<std::array<double, 2>>();
      return p;
    }
    case ClassifierKind::RandomForest: {
      ForestParams p;
      p.mtry = j.at("mtry").get<int>();
      p.oob_error = j.at("oob_error").get<double>();
      p.trees = trees_from_json(j.at("trees"));
      return p;
    }
    case ClassifierKind::GBM: {
      GbmParams p;
      p.initial = j.at("initial").get<double>();
      p.shrinkage = j.at("shrinkage").get<double>();
      p.depth = j.at("depth").get<int>();
      p.min_node = j.at("min_node").get<int>();
      p.cv_log_loss = j.at("cv_log_loss").get<double>();
      p.stages = trees_from_json(j.at("stages"));
      return p;
    }
  }
  throw Error(ErrorCode::Schema, "unknown classifier kind");
}

inline void check_tree_features(const std::vector<tree::Tree>& ts, int K) {
  for (const auto& t : ts)
    for (const auto& n : t.nodes)
      if (n.feature >= K) throw Error(ErrorCode::Schema, "tree splits on a feature beyond K");
}

inline json classifier_to_json(const ClassifierModel& m) {
  return {{"kind", to_string(m.kind)}, {"n_features", m.n_features}, {"params", params_to_json(m.params)}};
}

inline ClassifierModel classifier_from_json(const json& j) {
  ClassifierModel m;
  m.kind = parse_classifier(j.at("kind").get<std::string>());
  m.n_features = j.at("n_features").get<int>();
  if (m.n_features < 1) throw Error(ErrorCode::Schema, "classifier needs at least one feature");
  m.params = params_from_json(m.kind, j.at("params"), m.n_features);
  if (const auto* f = std::get_if<ForestParams>(&m.params)) check_tree_features(f->trees, m.n_features);
  if (const auto* g = std::get_if<GbmParams>(&m.params)) check_tree_features(g->stages, m.n_features);
  return m;
}

inline json fpca_to_json(const FpcaModel& m) {
  const auto& g = m.grid();
  return {{"domain", {g.domain().lo, g.domain().hi}},
          {"grid_size", g.size()},
          {"mean", vec_to_json(m.mean.values)},
          {"mean_bandwidth", m.mean.bandwidth},
          {"eigenvalues", vec_to_json(m.eigenvalues)},
          {"eigenfunctions", mat_to_json(m.eigenfunctions)},
          {"noise_variance", m.noise_variance},
          {"K", m.K},
          {"pve_threshold", m.pve_threshold},
          {"pve", m.pve}};
}

inline FpcaModel fpca_from_json(const json& j) {
  const auto dom = j.at("domain").get<std::array<double, 2>>();
  FpcaModel m;
  m.mean.grid = EvaluationGrid(Domain{dom[0], dom[1]}, j.at("grid_size").get<int>());
  m.mean.values = vec_from_json(j.at("mean"));
  m.mean.bandwidth = j.at("mean_bandwidth").get<double>();
  m.eigenvalues = vec_from_json(j.at("eigenvalues"));
  m.K = j.at("K").get<int>();
  m.eigenfunctions = mat_from_json(j.at("eigenfunctions"), m.K);
  m.noise_variance = j.at("noise_variance").get<double>();
  m.pve_threshold = j.at("pve_threshold").get<double>();
  m.pve = j.at("pve").get<double>();
  const int G = m.mean.grid.size();
  if (m.mean.values.size() != G || m.eigenfunctions.rows() != G || m.eigenfunctions.cols() != m.K ||
      m.eigenvalues.size() != m.K || m.K < 1)
    throw Error(ErrorCode::Schema, "FPCA model dimensions are inconsistent");
  return m;
}

}  // namespace io

inline json to_json(const SavedModel& s) {
  json replicas = json::array();
  for (const auto& r : s.ensemble.replicas) {
    replicas.push_back({{"fpca", io::fpca_to_json(*r.fpca)},
                        {"classifier", io::classifier_to_json(r.classifier)},
                        {"inbag", r.inbag},
                        {"oob_error", r.oob_error},
                        {"oob_count", r.oob_count},
                        {"attempts", r.attempts}});
  }
  json j = {{"format", "fpcagg-ensemble"},
            {"version", io::kFormatVersion},
            {"kind", to_string(s.ensemble.kind)},
            {"train_ids", s.ensemble.train_ids},
            {"replicas", std::move(replicas)}};
  if (s.calibration) {
    const auto& c = *s.calibration;
    j["calibration"] = {{"mode", to_string(s.calibration_mode)},
                        {"beta0", c.beta0},
                        {"beta1", c.beta1},
                        {"prior_scale0", c.prior_scale0},
                        {"prior_scale1", c.prior_scale1},
                        {"converged", c.converged},
                        {"iterations", c.iterations}};
  }
  return j;
}

inline SavedModel saved_model_from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != "fpcagg-ensemble")
      throw Error(ErrorCode::Schema, "not an fpcagg ensemble file");
    if (j.at("version").get<int>() != io::kFormatVersion)
      throw Error(ErrorCode::Schema, "unsupported model file version " + j.at("version").dump());
    SavedModel s;
    s.ensemble.kind = parse_classifier(j.at("kind").get<std::string>());
    s.ensemble.train_ids = j.at("train_ids").get<std::vector<std::string>>();
    const std::size_t n = s.ensemble.train_ids.size();
    for (const auto& rj : j.at("replicas")) {
      Replica r;
      r.fpca = std::make_shared<const FpcaModel>(io::fpca_from_json(rj.at("fpca")));
      r.classifier = io::classifier_from_json(rj.at("classifier"));
      if (r.classifier.kind != s.ensemble.kind || r.classifier.n_features != r.fpca->K)
        throw Error(ErrorCode::Schema, "replica classifier does not match its FPCA model");
      r.inbag = rj.at("inbag").get<std::vector<std::size_t>>();
      for (auto i : r.inbag)
        if (i >= n) throw Error(ErrorCode::Schema, "in-bag index beyond the training set");
      r.oob_error = rj.at("oob_error").get<double>();
      r.oob_count = rj.at("oob_count").get<std::size_t>();
      r.attempts = rj.at("attempts").get<int>();
      s.ensemble.replicas.push_back(std::move(r));
    }
    if (s.ensemble.replicas.empty()) throw Error(ErrorCode::Schema, "model file has no replicas");
    if (j.contains("calibration")) {
      const auto& c = j["calibration"];
      CalibrationModel m;
      m.beta0 = c.at("beta0").get<double>();
      m.beta1 = c.at("beta1").get<double>();
      m.prior_scale0 = c.at("prior_scale0").get<double>();
      m.prior_scale1 = c.at("prior_scale1").get<double>();
      m.converged = c.at("converged").get<bool>();
      m.iterations = c.at("iterations").get<int>();
      s.calibration = m;
      s.calibration_mode = parse_calibration_mode(c.at("mode").get<std::string>());
    }
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Schema, std::string("model file: ") + e.what());
  } catch (const Error& e) {
    // unknown enum names surface as Config from the parsers
    if (e.code() == ErrorCode::Config) throw Error(ErrorCode::Schema, std::string("model file: ") + e.what());
    throw;
  }
}

namespace io {
inline bool is_cbor_path(const std::string& path) {
  return path.size() >= 5 && path.compare(path.size() - 5, 5, ".cbor") == 0;
}
}  // namespace io

inline void save_model(const std::string& path, const SavedModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot open '" + path + "' for writing");
  const json j = to_json(model);
  if (io::is_cbor_path(path)) {
    const auto bytes = json::to_cbor(j);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  } else {
    out << j.dump() << '\n';
  }
  if (!out) throw Error(ErrorCode::Io, "failed writing '" + path + "'");
}

inline SavedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  json j;
  try {
    if (io::is_cbor_path(path)) {
      const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      j = json::from_cbor(bytes);
    } else {
      j = json::parse(in);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, "model file '" + path + "': " + e.what());
  }
  return saved_model_from_json(j);
}

}  // namespace fpcagg
