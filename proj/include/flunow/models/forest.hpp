#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "flunow/error.hpp"
#include "flunow/rng.hpp"

namespace flunow {

struct ForestOptions {
  int n_trees = 100;
  int max_depth = 0;     // 0 = unlimited
  int min_leaf = 2;      // minimum training samples per leaf
  bool bootstrap = true;
  int max_features = 0;  // 0 = ceil(p / 3)
  std::uint64_t seed = 0;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf mean
};

struct RegressionTree {
  std::vector<TreeNode> nodes;

  double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    int at = 0;
    while (nodes[static_cast<std::size_t>(at)].feature >= 0) {
      const auto& node = nodes[static_cast<std::size_t>(at)];
      at = x(node.feature) <= node.threshold ? node.left : node.right;
    }
    return nodes[static_cast<std::size_t>(at)].value;
  }
};

struct ForestModel {
  std::vector<RegressionTree> trees;
  ForestOptions options;
  Eigen::Index n_features = 0;

  double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    double sum = 0.0;
    for (const auto& tree : trees) sum += tree.predict(x);
    return sum / static_cast<double>(trees.size());
  }

  Eigen::VectorXd predict_batch(const Eigen::MatrixXd& X) const {
    Eigen::VectorXd out(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) out(i) = predict(X.row(i));
    return out;
  }
};

namespace detail {

class TreeBuilder {
 public:
  TreeBuilder(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const ForestOptions& options, int max_features,
              Rng& rng)
      : X_(X), y_(y), options_(options), max_features_(max_features), rng_(rng) {}

  RegressionTree build(std::vector<Eigen::Index> rows) {
    RegressionTree tree;
    grow(tree, rows, 0);
    return tree;
  }

 private:
  struct Candidate {
    int feature = -1;
    double threshold = 0.0;
    double score = 0.0;
  };

  int grow(RegressionTree& tree, std::vector<Eigen::Index>& rows, int depth) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    double sum = 0.0;
    for (auto r : rows) sum += y_(r);
    const double n = static_cast<double>(rows.size());
    tree.nodes.back().value = sum / n;

    const bool depth_ok = options_.max_depth <= 0 || depth < options_.max_depth;
    const bool size_ok = rows.size() >= 2 * static_cast<std::size_t>(options_.min_leaf);
    const bool impure = std::any_of(rows.begin(), rows.end(), [&](auto r) { return y_(r) != y_(rows.front()); });
    if (!depth_ok || !size_ok || !impure) return id;

    const Candidate best = best_split(rows, sum);
    if (best.feature < 0) return id;

    std::vector<Eigen::Index> left, right;
    for (auto r : rows) (X_(r, best.feature) <= best.threshold ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();

    tree.nodes[static_cast<std::size_t>(id)].feature = best.feature;
    tree.nodes[static_cast<std::size_t>(id)].threshold = best.threshold;
    const int l = grow(tree, left, depth + 1);
    tree.nodes[static_cast<std::size_t>(id)].left = l;
    const int r = grow(tree, right, depth + 1);
    tree.nodes[static_cast<std::size_t>(id)].right = r;
    return id;
  }

  std::vector<int> sample_features() {
    const int p = static_cast<int>(X_.cols());
    std::vector<int> features(static_cast<std::size_t>(p));
    std::iota(features.begin(), features.end(), 0);
    if (max_features_ < p) {
      for (int k = 0; k < max_features_; ++k) {
        const auto pick = k + static_cast<int>(rng_.below(static_cast<std::uint64_t>(p - k)));
        std::swap(features[static_cast<std::size_t>(k)], features[static_cast<std::size_t>(pick)]);
      }
      features.resize(static_cast<std::size_t>(max_features_));
      std::sort(features.begin(), features.end());
    }
    return features;
  }

  /// Maximizes S_L^2/n_L + S_R^2/n_R (equivalently, the reduction in
  /// squared error). Near-ties keep the lowest feature, then the lowest
  /// threshold.
  Candidate best_split(const std::vector<Eigen::Index>& rows, double total) {
    const double n = static_cast<double>(rows.size());
    const double parent = total * total / n;
    Candidate best;
    best.score = parent;
    const auto min_leaf = static_cast<std::size_t>(options_.min_leaf);
    std::vector<Eigen::Index> order(rows);
    for (int f : sample_features()) {
      std::sort(order.begin(), order.end(), [&](auto a, auto b) {
        const double xa = X_(a, f), xb = X_(b, f);
        return xa != xb ? xa < xb : a < b;
      });
      double left_sum = 0.0;
      for (std::size_t k = 0; k + 1 < order.size(); ++k) {
        left_sum += y_(order[k]);
        const double x_here = X_(order[k], f);
        const double x_next = X_(order[k + 1], f);
        const std::size_t n_left = k + 1;
        const std::size_t n_right = order.size() - n_left;
        if (x_here == x_next || n_left < min_leaf || n_right < min_leaf) continue;
        const double right_sum = total - left_sum;
        const double score = left_sum * left_sum / static_cast<double>(n_left) +
                             right_sum * right_sum / static_cast<double>(n_right);
        if (score > best.score + 1e-12 * std::max(1.0, std::abs(best.score))) {
          double threshold = 0.5 * (x_here + x_next);
          if (!(threshold < x_next)) threshold = x_here;
          best = {f, threshold, score};
        }
      }
    }
    return best;
  }

  const Eigen::MatrixXd& X_;
  const Eigen::VectorXd& y_;
  const ForestOptions& options_;
  int max_features_;
  Rng& rng_;
};

}  // namespace detail

/// Bagged CART regression trees. Tree t draws from its own stream seeded
/// by derive_seed(seed, t), so each tree depends only on (data, seed, t).
inline ForestModel fit_forest(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const ForestOptions& options = {}) {
  if (X.rows() < 1 || y.size() != X.rows()) throw Error(ErrorKind::NoData, "forest needs at least one row");
  if (options.n_trees < 1 || options.min_leaf < 1) {
    throw Error(ErrorKind::InvalidArgument, "forest needs n_trees >= 1 and min_leaf >= 1");
  }
  const int p = static_cast<int>(X.cols());
  const int max_features =
      options.max_features > 0 ? std::min(options.max_features, p) : std::max(1, (p + 2) / 3);

  ForestModel model;
  model.options = options;
  model.n_features = X.cols();
  model.trees.reserve(static_cast<std::size_t>(options.n_trees));
  const auto n = static_cast<std::uint64_t>(X.rows());
  for (int t = 0; t < options.n_trees; ++t) {
    Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(t)));
    std::vector<Eigen::Index> rows(n);
    if (options.bootstrap) {
      for (auto& r : rows) r = static_cast<Eigen::Index>(rng.below(n));
    } else {
      std::iota(rows.begin(), rows.end(), Eigen::Index{0});
    }
    detail::TreeBuilder builder(X, y, options, max_features, rng);
    model.trees.push_back(builder.build(std::move(rows)));
  }
  return model;
}

}  // namespace flunow
