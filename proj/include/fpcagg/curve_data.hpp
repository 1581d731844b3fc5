#pragma once

// Sparse functional datasets: one row per observation in long CSV form,
// artificial sparsification of dense curves, and stratified train/test splits.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fpcagg/error.hpp"
#include "fpcagg/rng.hpp"

namespace fpcagg {

struct Domain {
  double lo = 0.0;
  double hi = 1.0;

  double length() const noexcept { return hi - lo; }
  bool contains(double t, double tol = 0.0) const noexcept { return t >= lo - tol && t <= hi + tol; }
  bool operator==(const Domain&) const = default;
};

// One subject's irregular observations. Times are strictly ascending.
class SparseCurve {
 public:
  SparseCurve(std::string id, std::vector<double> times, std::vector<double> values,
              std::optional<int> label = std::nullopt)
      : id_(std::move(id)), times_(std::move(times)), values_(std::move(values)), label_(label) {
    if (times_.empty() || times_.size() != values_.size())
      throw Error(ErrorCode::Shape, "curve '" + id_ + "' needs equal-length, nonempty times and values");
    for (std::size_t j = 1; j < times_.size(); ++j) {
      if (times_[j] == times_[j - 1])
        throw Error(ErrorCode::DuplicateObservation, "curve '" + id_ + "' repeats time " + std::to_string(times_[j]));
      if (times_[j] < times_[j - 1])
        throw Error(ErrorCode::Config, "curve '" + id_ + "' times are not ascending");
    }
    for (std::size_t j = 0; j < times_.size(); ++j)
      if (!std::isfinite(times_[j]) || !std::isfinite(values_[j]))
        throw Error(ErrorCode::Parse, "curve '" + id_ + "' has non-finite entries");
    if (label_ && *label_ != 0 && *label_ != 1)
      throw Error(ErrorCode::Parse, "curve '" + id_ + "' label must be 0 or 1");
  }

  const std::string& id() const noexcept { return id_; }
  const std::vector<double>& times() const noexcept { return times_; }
  const std::vector<double>& values() const noexcept { return values_; }
  const std::optional<int>& label() const noexcept { return label_; }
  std::size_t size() const noexcept { return times_.size(); }

  SparseCurve with_values(std::vector<double> values) const {
    return SparseCurve(id_, times_, std::move(values), label_);
  }

  bool operator==(const SparseCurve&) const = default;

 private:
  std::string id_;
  std::vector<double> times_;
  std::vector<double> values_;
  std::optional<int> label_;
};

class FunctionalDataset {
 public:
  FunctionalDataset(std::vector<SparseCurve> curves, Domain domain)
      : curves_(std::move(curves)), domain_(domain) {
    if (curves_.empty()) throw Error(ErrorCode::InsufficientData, "dataset has no curves");
    if (!(domain_.hi > domain_.lo)) throw Error(ErrorCode::Domain, "domain must have positive length");
    for (const auto& c : curves_)
      if (!domain_.contains(c.times().front()) || !domain_.contains(c.times().back()))
        throw Error(ErrorCode::Domain, "curve '" + c.id() + "' has times outside the dataset domain");
  }

  // Domain spans the observed time range.
  explicit FunctionalDataset(const std::vector<SparseCurve>& curves) : FunctionalDataset(curves, span_of(curves)) {}

  const std::vector<SparseCurve>& curves() const noexcept { return curves_; }
  const SparseCurve& operator[](std::size_t i) const { return curves_[i]; }
  std::size_t size() const noexcept { return curves_.size(); }
  const Domain& domain() const noexcept { return domain_; }

  bool fully_labeled() const noexcept {
    return std::all_of(curves_.begin(), curves_.end(), [](const SparseCurve& c) { return c.label().has_value(); });
  }

  void require_labels() const {
    for (const auto& c : curves_)
      if (!c.label()) throw Error(ErrorCode::LabelMissing, "curve '" + c.id() + "' has no label");
  }

  std::vector<int> labels() const {
    require_labels();
    std::vector<int> out;
    out.reserve(curves_.size());
    for (const auto& c : curves_) out.push_back(*c.label());
    return out;
  }

  std::size_t total_observations() const noexcept {
    std::size_t n = 0;
    for (const auto& c : curves_) n += c.size();
    return n;
  }

  FunctionalDataset subset(const std::vector<std::size_t>& indices) const {
    std::vector<SparseCurve> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(curves_.at(i));
    return FunctionalDataset(std::move(out), domain_);
  }

  FunctionalDataset with_domain(Domain d) const { return FunctionalDataset(curves_, d); }

  bool operator==(const FunctionalDataset&) const = default;

 private:
  static Domain span_of(const std::vector<SparseCurve>& curves) {
    if (curves.empty()) throw Error(ErrorCode::InsufficientData, "dataset has no curves");
    Domain d{curves.front().times().front(), curves.front().times().back()};
    for (const auto& c : curves) {
      d.lo = std::min(d.lo, c.times().front());
      d.hi = std::max(d.hi, c.times().back());
    }
    return d;
  }

  std::vector<SparseCurve> curves_;
  Domain domain_;
};

// ---------------------------------------------------------------------------
// Long CSV

struct CsvSchema {
  std::string id = "id";
  std::string time = "time";
  std::string value = "value";
  std::string label = "label";
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      out.push_back(trim(line.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

inline FunctionalDataset read_long_csv(std::istream& in, const CsvSchema& schema = {},
                                       std::optional<Domain> domain_override = std::nullopt) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::Schema, "empty input, expected a header row");
  auto header = detail::split_csv_line(line);
  auto column = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    return std::nullopt;
  };
  auto id_col = column(schema.id), time_col = column(schema.time), value_col = column(schema.value);
  auto label_col = column(schema.label);
  if (!id_col) throw Error(ErrorCode::Schema, "missing column '" + schema.id + "'");
  if (!time_col) throw Error(ErrorCode::Schema, "missing column '" + schema.time + "'");
  if (!value_col) throw Error(ErrorCode::Schema, "missing column '" + schema.value + "'");

  struct Obs {
    double t, v;
    std::size_t row;
  };
  struct Group {
    std::vector<Obs> obs;
    std::optional<int> label;
  };
  std::vector<std::string> order;
  std::map<std::string, Group> groups;

  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_csv_line(line);
    std::size_t need = std::max({*id_col, *time_col, *value_col}) + 1;
    if (cells.size() < need) throw Error(ErrorCode::Parse, "row " + std::to_string(row) + ": too few columns");
    auto t = detail::parse_double(cells[*time_col]);
    if (!t) throw Error(ErrorCode::Parse, "row " + std::to_string(row) + ": non-numeric time");
    auto v = detail::parse_double(cells[*value_col]);
    if (!v) throw Error(ErrorCode::Parse, "row " + std::to_string(row) + ": non-numeric value");
    std::optional<int> label;
    if (label_col && *label_col < cells.size() && !cells[*label_col].empty()) {
      auto l = detail::parse_double(cells[*label_col]);
      if (!l || (*l != 0.0 && *l != 1.0))
        throw Error(ErrorCode::Parse, "row " + std::to_string(row) + ": label must be 0 or 1");
      label = static_cast<int>(*l);
    }
    std::string id(cells[*id_col]);
    auto [it, inserted] = groups.try_emplace(id);
    if (inserted) {
      order.push_back(id);
      it->second.label = label;
    } else if (it->second.label != label) {
      throw Error(ErrorCode::Parse, "row " + std::to_string(row) + ": inconsistent label for id '" + id + "'");
    }
    it->second.obs.push_back({*t, *v, row});
  }
  if (order.empty()) throw Error(ErrorCode::InsufficientData, "no data rows");

  std::vector<SparseCurve> curves;
  curves.reserve(order.size());
  for (const auto& id : order) {
    auto& g = groups[id];
    std::stable_sort(g.obs.begin(), g.obs.end(), [](const Obs& a, const Obs& b) { return a.t < b.t; });
    for (std::size_t j = 1; j < g.obs.size(); ++j)
      if (g.obs[j].t == g.obs[j - 1].t)
        throw Error(ErrorCode::DuplicateObservation,
                    "row " + std::to_string(g.obs[j].row) + ": id '" + id + "' repeats time " +
                        detail::format_double(g.obs[j].t));
    std::vector<double> ts, vs;
    for (const auto& o : g.obs) {
      ts.push_back(o.t);
      vs.push_back(o.v);
    }
    curves.emplace_back(id, std::move(ts), std::move(vs), g.label);
  }
  if (domain_override) return FunctionalDataset(std::move(curves), *domain_override);
  return FunctionalDataset(std::move(curves));
}

inline FunctionalDataset load_long_csv(const std::string& path, const CsvSchema& schema = {},
                                       std::optional<Domain> domain_override = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  return read_long_csv(in, schema, domain_override);
}

inline void write_long_csv(std::ostream& out, const FunctionalDataset& data) {
  const bool labeled = std::any_of(data.curves().begin(), data.curves().end(),
                                   [](const SparseCurve& c) { return c.label().has_value(); });
  out << (labeled ? "id,time,value,label\n" : "id,time,value\n");
  for (const auto& c : data.curves()) {
    for (std::size_t j = 0; j < c.size(); ++j) {
      out << c.id() << ',' << detail::format_double(c.times()[j]) << ',' << detail::format_double(c.values()[j]);
      if (labeled) {
        out << ',';
        if (c.label()) out << *c.label();
      }
      out << '\n';
    }
  }
}

inline void save_long_csv(const std::string& path, const FunctionalDataset& data) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path + "'");
  write_long_csv(out, data);
  if (!out) throw Error(ErrorCode::Io, "write to '" + path + "' failed");
}

// ---------------------------------------------------------------------------
// Sparsification and splitting

struct ObsRange {
  int lo = 1;
  int hi = 1;
};

// Keeps a uniformly drawn number of observations in [lo, hi] per curve, sampled
// without replacement and in original time order.
inline FunctionalDataset sparsify(const FunctionalDataset& data, ObsRange range, std::uint64_t seed) {
  if (range.lo < 1 || range.hi < range.lo)
    throw Error(ErrorCode::Config, "observation range must satisfy 1 <= lo <= hi");
  Rng rng = make_rng(seed, {0x5ba751fULL});
  std::vector<SparseCurve> out;
  out.reserve(data.size());
  for (const auto& c : data.curves()) {
    if (c.size() < static_cast<std::size_t>(range.hi))
      throw Error(ErrorCode::InsufficientObservations,
                  "curve '" + c.id() + "' has " + std::to_string(c.size()) + " observations, need " +
                      std::to_string(range.hi));
    std::uniform_int_distribution<int> count(range.lo, range.hi);
    const auto keep = static_cast<std::size_t>(count(rng));
    // Partial Fisher-Yates over positions, then restore time order.
    std::vector<std::size_t> pos(c.size());
    for (std::size_t j = 0; j < pos.size(); ++j) pos[j] = j;
    for (std::size_t j = 0; j < keep; ++j) {
      std::uniform_int_distribution<std::size_t> pick(j, pos.size() - 1);
      std::swap(pos[j], pos[pick(rng)]);
    }
    pos.resize(keep);
    std::sort(pos.begin(), pos.end());
    std::vector<double> ts, vs;
    for (auto j : pos) {
      ts.push_back(c.times()[j]);
      vs.push_back(c.values()[j]);
    }
    out.emplace_back(c.id(), std::move(ts), std::move(vs), c.label());
  }
  return FunctionalDataset(std::move(out), data.domain());
}

struct SplitSpec {
  double train_fraction = 0.5;
  std::uint64_t seed = 0;
};

struct TrainTestSplit {
  FunctionalDataset train;
  FunctionalDataset test;
};

// Stratified by label. The train side has round(train_fraction * n) curves;
// per-class quotas use largest remainders.
inline TrainTestSplit split(const FunctionalDataset& data, const SplitSpec& spec) {
  data.require_labels();
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
    throw Error(ErrorCode::Config, "train_fraction must lie in (0,1)");
  const std::size_t n = data.size();
  const auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(n)));
  if (n_train < 1 || n_train >= n) throw Error(ErrorCode::Config, "split leaves one side empty");

  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < n; ++i) by_class[*data[i].label()].push_back(i);

  Rng rng = make_rng(spec.seed, {0x5b117ULL});
  for (auto& idx : by_class) {
    for (std::size_t j = idx.size(); j > 1; --j) {
      std::uniform_int_distribution<std::size_t> pick(0, j - 1);
      std::swap(idx[j - 1], idx[pick(rng)]);
    }
  }

  std::size_t quota[2];
  double frac[2];
  std::size_t assigned = 0;
  for (int c = 0; c < 2; ++c) {
    double exact = spec.train_fraction * static_cast<double>(by_class[c].size());
    quota[c] = static_cast<std::size_t>(std::floor(exact));
    frac[c] = exact - std::floor(exact);
    assigned += quota[c];
  }
  while (assigned < n_train) {
    int c = frac[0] >= frac[1] ? 0 : 1;
    if (quota[c] >= by_class[c].size()) c = 1 - c;
    ++quota[c];
    frac[c] = -1.0;
    ++assigned;
  }
  while (assigned > n_train) {
    int c = quota[0] >= quota[1] ? 0 : 1;
    --quota[c];
    --assigned;
  }
  // Keep both classes on both sides when a class has room for it.
  for (int c = 0; c < 2; ++c) {
    const int o = 1 - c;
    if (by_class[c].size() >= 2 && quota[c] == 0 && quota[o] > 1) {
      ++quota[c];
      --quota[o];
    }
    if (by_class[c].size() >= 2 && quota[c] == by_class[c].size() && quota[o] < by_class[o].size()) {
      --quota[c];
      ++quota[o];
    }
  }

  std::vector<std::size_t> train_idx, test_idx;
  for (int c = 0; c < 2; ++c) {
    for (std::size_t j = 0; j < by_class[c].size(); ++j)
      (j < quota[c] ? train_idx : test_idx).push_back(by_class[c][j]);
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  return {data.subset(train_idx), data.subset(test_idx)};
}

}  // namespace fpcagg
