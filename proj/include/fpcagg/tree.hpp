#pragma once

// Binary decision trees on dense score matrices: Gini classification trees
// grown to purity with per-node feature subsampling (forest members), and
// depth-limited least-squares regression trees with Newton leaves (boosting
// stages).

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "fpcagg/rng.hpp"

namespace fpcagg::tree {

struct Node {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf payload: class-1 fraction or regression value
};

struct Tree {
  std::vector<Node> nodes;

  // x: any indexable vector expression (row, column, or std::vector).
  template <class Vec>
  const Node& leaf_for(const Vec& x) const {
    int i = 0;
    while (nodes[i].feature >= 0) i = x[nodes[i].feature] <= nodes[i].threshold ? nodes[i].left : nodes[i].right;
    return nodes[i];
  }

  template <class Vec>
  double predict(const Vec& x) const {
    return leaf_for(x).value;
  }

  int depth() const {
    std::vector<int> d(nodes.size(), 0);
    int best = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i].feature < 0) continue;
      d[nodes[i].left] = d[nodes[i].right] = d[i] + 1;
      best = std::max(best, d[i] + 1);
    }
    return best;
  }
};

// Presorted row order per feature, shared by all boosting stages of one fit.
struct Presorted {
  std::vector<std::vector<int>> order;

  explicit Presorted(const Eigen::MatrixXd& X) : order(static_cast<std::size_t>(X.cols())) {
    for (Eigen::Index f = 0; f < X.cols(); ++f) {
      auto& o = order[static_cast<std::size_t>(f)];
      o.resize(static_cast<std::size_t>(X.rows()));
      std::iota(o.begin(), o.end(), 0);
      std::stable_sort(o.begin(), o.end(), [&](int a, int b) { return X(a, f) < X(b, f); });
    }
  }
};

// Grows Gini classification trees to purity on bootstrap samples given as
// per-row multiplicities. Each feature keeps its own sorted copy of the node's
// entries, expanded from a forest-wide presort; a split stably partitions every
// copy, so node ranges stay aligned across features and nothing is sorted per
// tree. Scratch buffers are reused across the trees of one forest.
class ClassificationTreeBuilder {
 public:
  ClassificationTreeBuilder(const Eigen::MatrixXd& X, const std::vector<int>& y)
      : X_(X), y_(y), presorted_(X), p_(static_cast<int>(X.cols())), sorted_(static_cast<std::size_t>(p_)),
        goes_left_(static_cast<std::size_t>(X.rows()), 0), features_(static_cast<std::size_t>(p_)) {}

  Tree grow(const std::vector<int>& counts, int mtry, Rng& rng) {
    int n_total = 0, ones_total = 0;
    for (std::size_t r = 0; r < counts.size(); ++r) {
      n_total += counts[r];
      ones_total += counts[r] * y_[r];
    }
    for (int f = 0; f < p_; ++f) {
      auto& e = sorted_[static_cast<std::size_t>(f)];
      e.clear();
      for (int r : presorted_.order[static_cast<std::size_t>(f)])
        for (int k = 0; k < counts[r]; ++k) e.push_back({X_(r, f), r});
    }
    left_buf_.resize(static_cast<std::size_t>(n_total) + 1);  // +1: the partition writes one past the end
    right_buf_.resize(static_cast<std::size_t>(n_total) + 1);

    Tree tree;
    tree.nodes.reserve(static_cast<std::size_t>(2 * n_total));
    tree.nodes.push_back({});
    stack_.clear();
    stack_.push_back({0, 0, n_total, ones_total});
    const int m = std::min(mtry, p_);

    while (!stack_.empty()) {
      const Task task = stack_.back();
      stack_.pop_back();
      const int n = task.end - task.begin, ones = task.ones;
      tree.nodes[task.node].value = n > 0 ? static_cast<double>(ones) / n : 0.0;
      if (ones == 0 || ones == n || n < 2) continue;

      std::iota(features_.begin(), features_.end(), 0);
      for (int j = 0; j < m; ++j)
        std::swap(features_[j], features_[j + static_cast<int>(bounded(rng, static_cast<std::uint64_t>(p_ - j)))]);

      // Weighted child Gini is minimized where (l1^2 + l0^2)/nl + (r1^2 + r0^2)/nr
      // is maximized; the parent's value is the no-split baseline.
      double best_score = (static_cast<double>(ones) * ones + static_cast<double>(n - ones) * (n - ones)) / n;
      int best_feature = -1, best_left = 0, best_left_ones = 0;
      double best_threshold = 0.0;
      for (int j = 0; j < m; ++j) {
        const int f = features_[j];
        const Entry* e = sorted_[f].data() + task.begin;
        int left_ones = 0;
        for (int i = 0; i + 1 < n; ++i) {
          left_ones += y_[e[i].row];
          if (!(e[i].x < e[i + 1].x)) continue;
          const int left_n = i + 1, right_n = n - left_n, right_ones = ones - left_ones;
          const double l0 = left_n - left_ones, r0 = right_n - right_ones;
          const double score = (static_cast<double>(left_ones) * left_ones + l0 * l0) / left_n +
                               (static_cast<double>(right_ones) * right_ones + r0 * r0) / right_n;
          if (score > best_score + 1e-12) {
            best_score = score;
            best_feature = f;
            best_left = left_n;
            best_left_ones = left_ones;
            best_threshold = 0.5 * (e[i].x + e[i + 1].x);
          }
        }
      }
      if (best_feature < 0) continue;

      // Copies of a row share x, so a row-keyed flag is unambiguous.
      const Entry* be = sorted_[best_feature].data() + task.begin;
      for (int i = 0; i < n; ++i) goes_left_[be[i].row] = i < best_left;
      for (int f = 0; f < p_; ++f) {
        if (f == best_feature) continue;
        Entry* e = sorted_[f].data() + task.begin;
        // Branch-free stable partition: each entry is written to both sides
        // and only the matching cursor advances.
        int l = 0, r = 0;
        for (int i = 0; i < n; ++i) {
          const int g = goes_left_[e[i].row];
          left_buf_[l] = e[i];
          right_buf_[r] = e[i];
          l += g;
          r += 1 - g;
        }
        std::copy(left_buf_.begin(), left_buf_.begin() + l, e);
        std::copy(right_buf_.begin(), right_buf_.begin() + r, e + l);
      }
      const int split = task.begin + best_left;
      const int left = static_cast<int>(tree.nodes.size());
      tree.nodes.push_back({});
      tree.nodes.push_back({});
      Node& node = tree.nodes[task.node];
      node.feature = best_feature;
      node.threshold = best_threshold;
      node.left = left;
      node.right = left + 1;
      stack_.push_back({left + 1, split, task.end, ones - best_left_ones});
      stack_.push_back({left, task.begin, split, best_left_ones});
    }
    return tree;
  }

 private:
  struct Entry {
    double x;
    int row;
  };
  struct Task {
    int node, begin, end, ones;
  };

  const Eigen::MatrixXd& X_;
  const std::vector<int>& y_;
  Presorted presorted_;
  int p_;
  std::vector<std::vector<Entry>> sorted_;
  std::vector<char> goes_left_;
  std::vector<int> features_;
  std::vector<Entry> left_buf_, right_buf_;
  std::vector<Task> stack_;
};

// One tree from the drawn row indices (repeats allowed).
inline Tree grow_classification_tree(const Eigen::MatrixXd& X, const std::vector<int>& y,
                                     const std::vector<int>& sample, int mtry, Rng& rng) {
  std::vector<int> counts(static_cast<std::size_t>(X.rows()), 0);
  for (int r : sample) ++counts[r];
  return ClassificationTreeBuilder(X, y).grow(counts, mtry, rng);
}

// Least-squares regression tree on `residual` over rows where active != 0.
// Leaves hold sum(residual) / sum(hessian), the one-step Newton update for the
// logistic loss.
inline Tree grow_regression_tree(const Eigen::MatrixXd& X, const Presorted& presorted,
                                 const std::vector<double>& residual, const std::vector<double>& hessian,
                                 const std::vector<char>& active, int max_depth, int min_node) {
  const auto rows = static_cast<int>(X.rows());
  const auto p = static_cast<int>(X.cols());
  Tree tree;
  std::vector<int> node_of(rows, -1);
  for (int r = 0; r < rows; ++r)
    if (active[r]) node_of[r] = 0;
  tree.nodes.push_back({});

  auto set_leaf = [&](int node) {
    double g = 0.0, hs = 0.0;
    for (int r = 0; r < rows; ++r)
      if (node_of[r] == node) {
        g += residual[r];
        hs += hessian[r];
      }
    tree.nodes[node].value = hs > 1e-12 ? g / hs : 0.0;
  };

  std::vector<int> frontier{0};
  for (int depth = 0; depth < max_depth && !frontier.empty(); ++depth) {
    std::vector<int> next;
    for (int node : frontier) {
      double sum = 0.0;
      int n = 0;
      for (int r = 0; r < rows; ++r)
        if (node_of[r] == node) {
          sum += residual[r];
          ++n;
        }
      if (n < 2 * min_node) continue;
      const double base = sum * sum / n;
      double best_gain = 1e-12;
      int best_feature = -1;
      double best_threshold = 0.0;
      for (int f = 0; f < p; ++f) {
        const auto& order = presorted.order[f];
        double left_sum = 0.0;
        int left_n = 0, prev = -1;
        for (int r : order) {
          if (node_of[r] != node) continue;
          if (prev >= 0 && left_n >= min_node && n - left_n >= min_node && X(prev, f) < X(r, f)) {
            const double right_sum = sum - left_sum;
            const double gain =
                left_sum * left_sum / left_n + right_sum * right_sum / (n - left_n) - base;
            if (gain > best_gain) {
              best_gain = gain;
              best_feature = f;
              best_threshold = 0.5 * (X(prev, f) + X(r, f));
            }
          }
          left_sum += residual[r];
          ++left_n;
          prev = r;
        }
      }
      if (best_feature < 0) continue;
      const int left = static_cast<int>(tree.nodes.size());
      tree.nodes.push_back({});
      tree.nodes.push_back({});
      tree.nodes[node].feature = best_feature;
      tree.nodes[node].threshold = best_threshold;
      tree.nodes[node].left = left;
      tree.nodes[node].right = left + 1;
      for (int r = 0; r < rows; ++r)
        if (node_of[r] == node) node_of[r] = X(r, best_feature) <= best_threshold ? left : left + 1;
      next.push_back(left);
      next.push_back(left + 1);
    }
    frontier = std::move(next);
  }
  for (std::size_t i = 0; i < tree.nodes.size(); ++i)
    if (tree.nodes[i].feature < 0) set_leaf(static_cast<int>(i));
  return tree;
}

}  // namespace fpcagg::tree
