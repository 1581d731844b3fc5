#pragma once

// Synthetic two-group sparse functional data on [0, 10] with three Fourier
// eigenfunctions, normal or t3 scores, outlier shifts and extra noise.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <string>
#include <vector>

#include "fpcagg/curve_data.hpp"
#include "fpcagg/error.hpp"
#include "fpcagg/rng.hpp"

namespace fpcagg::sim {

enum class Model { A, B, C };
enum class ScoreDist { Normal, T3 };
enum class MeanShape { TPlusSin, TPlusCos };

struct GroupSpec {
  MeanShape mean_fn = MeanShape::TPlusSin;
  std::array<double, 3> eigenvalues{4.0, 2.0, 1.0};

  double mean(double t) const { return mean_fn == MeanShape::TPlusSin ? t + std::sin(t) : t + std::cos(t); }
};

struct ScenarioConfig {
  Model model = Model::A;
  ScoreDist score_dist = ScoreDist::Normal;
  double rho_out = 0.0;
  double noise_var = 0.0;
  int n = 200;
  ObsRange n_obs_range{5, 10};
  Domain domain{0.0, 10.0};
  double measurement_sd = 0.5;
  std::uint64_t seed = 0;

  bool operator==(const ScenarioConfig&) const = default;
};

constexpr double kOutlierShift = 5.0;

inline double eigenfunction(int k, double t) {
  if (k < 1 || k > 3) throw Error(ErrorCode::Domain, "eigenfunction index must be 1, 2 or 3");
  const double arg = std::numbers::pi * k * t / 5.0;
  return (k % 2 == 1 ? std::cos(arg) : std::sin(arg)) / std::sqrt(5.0);
}

inline GroupSpec group_spec(Model model, int group) {
  const std::array<double, 3> small{4.0, 2.0, 1.0}, large{16.0, 8.0, 4.0};
  switch (model) {
    case Model::A: return group == 0 ? GroupSpec{MeanShape::TPlusSin, small} : GroupSpec{MeanShape::TPlusCos, large};
    case Model::B: return group == 0 ? GroupSpec{MeanShape::TPlusSin, small} : GroupSpec{MeanShape::TPlusCos, small};
    case Model::C: return group == 0 ? GroupSpec{MeanShape::TPlusSin, small} : GroupSpec{MeanShape::TPlusSin, large};
  }
  throw Error(ErrorCode::Domain, "unknown model");
}

inline std::array<double, 3> draw_scores(const GroupSpec& group, ScoreDist dist, Rng& rng) {
  std::array<double, 3> xi{};
  for (int k = 0; k < 3; ++k) {
    const double lambda = group.eigenvalues[k];
    if (dist == ScoreDist::Normal) {
      xi[k] = std::normal_distribution<double>(0.0, 1.0)(rng) * std::sqrt(lambda);
    } else {
      xi[k] = std::student_t_distribution<double>(3.0)(rng) * std::sqrt(lambda / 3.0);
    }
  }
  return xi;
}

inline ScenarioConfig scenario(int id) {
  struct Row {
    Model model;
    ScoreDist dist;
    double rho, noise;
  };
  static constexpr Row rows[9] = {
      {Model::A, ScoreDist::Normal, 0.10, 0.0}, {Model::A, ScoreDist::T3, 0.10, 0.0},
      {Model::A, ScoreDist::T3, 0.15, 0.1},     {Model::B, ScoreDist::T3, 0.0, 0.0},
      {Model::B, ScoreDist::Normal, 0.0, 0.0},  {Model::B, ScoreDist::Normal, 0.10, 1.0},
      {Model::C, ScoreDist::T3, 0.10, 0.1},     {Model::C, ScoreDist::Normal, 0.10, 0.1},
      {Model::C, ScoreDist::T3, 0.0, 1.0},
  };
  if (id < 1 || id > 9) throw Error(ErrorCode::Domain, "scenario id must be in 1..9, got " + std::to_string(id));
  const Row& r = rows[id - 1];
  ScenarioConfig cfg;
  cfg.model = r.model;
  cfg.score_dist = r.dist;
  cfg.rho_out = r.rho;
  cfg.noise_var = r.noise;
  return cfg;
}

inline void validate(const ScenarioConfig& cfg) {
  if (cfg.n_obs_range.lo < 1 || cfg.n_obs_range.hi < cfg.n_obs_range.lo)
    throw Error(ErrorCode::Config, "n_obs_range must satisfy 1 <= lo <= hi");
  if (cfg.n < 2 || cfg.n % 2 != 0) throw Error(ErrorCode::Config, "n must be even and at least 2");
  if (!(cfg.rho_out >= 0.0 && cfg.rho_out <= 1.0)) throw Error(ErrorCode::Config, "rho_out must lie in [0,1]");
  if (!(cfg.measurement_sd >= 0.0)) throw Error(ErrorCode::Config, "measurement sd must be nonnegative");
  if (!(cfg.noise_var >= 0.0)) throw Error(ErrorCode::Config, "noise variance must be nonnegative");
  if (!(cfg.domain.hi > cfg.domain.lo)) throw Error(ErrorCode::Config, "domain must have positive length");
}

inline std::size_t outlier_count(const ScenarioConfig& cfg) {
  return static_cast<std::size_t>(std::llround(cfg.rho_out * cfg.n));
}

inline FunctionalDataset generate(const ScenarioConfig& cfg) {
  validate(cfg);
  Rng rng = make_rng(cfg.seed, {0x51a9e4ULL});
  std::normal_distribution<double> std_normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif_t(cfg.domain.lo, cfg.domain.hi);
  std::uniform_int_distribution<int> count(cfg.n_obs_range.lo, cfg.n_obs_range.hi);

  struct Raw {
    std::vector<double> t, z;
    int g;
  };
  std::vector<Raw> raw;
  raw.reserve(static_cast<std::size_t>(cfg.n));
  for (int g = 0; g < 2; ++g) {
    const GroupSpec spec = group_spec(cfg.model, g);
    for (int i = 0; i < cfg.n / 2; ++i) {
      Raw c;
      c.g = g;
      const int ni = count(rng);
      do {
        c.t.clear();
        for (int j = 0; j < ni; ++j) c.t.push_back(unif_t(rng));
        std::sort(c.t.begin(), c.t.end());
      } while (std::adjacent_find(c.t.begin(), c.t.end()) != c.t.end());
      const auto xi = draw_scores(spec, cfg.score_dist, rng);
      for (double t : c.t) {
        double z = spec.mean(t);
        for (int k = 0; k < 3; ++k) z += xi[k] * eigenfunction(k + 1, t);
        z += cfg.measurement_sd * std_normal(rng);
        c.z.push_back(z);
      }
      raw.push_back(std::move(c));
    }
  }

  // Outliers are drawn from the pooled sample without replacement.
  const std::size_t n_out = outlier_count(cfg);
  std::vector<std::size_t> idx(raw.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (std::size_t j = 0; j < n_out; ++j) {
    std::uniform_int_distribution<std::size_t> pick(j, idx.size() - 1);
    std::swap(idx[j], idx[pick(rng)]);
  }
  for (std::size_t j = 0; j < n_out; ++j)
    for (double& z : raw[idx[j]].z) z += kOutlierShift;

  if (cfg.noise_var > 0.0) {
    const double sd = std::sqrt(cfg.noise_var);
    for (auto& c : raw)
      for (double& z : c.z) z += sd * std_normal(rng);
  }

  std::vector<SparseCurve> curves;
  curves.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "c%04zu", i + 1);
    curves.emplace_back(id, std::move(raw[i].t), std::move(raw[i].z), raw[i].g);
  }
  return FunctionalDataset(std::move(curves), cfg.domain);
}

inline const char* to_string(Model m) { return m == Model::A ? "A" : m == Model::B ? "B" : "C"; }
inline const char* to_string(ScoreDist d) { return d == ScoreDist::Normal ? "normal" : "t3"; }

}  // namespace fpcagg::sim
