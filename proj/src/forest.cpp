#include "latelab/forest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "latelab/errors.hpp"
#include "latelab/rng.hpp"

namespace latelab {
namespace {

// Leading tag for per-tree streams, so forest draws never collide with other
// consumers (bootstrap replicates, simulation replications) fed the same seed.
constexpr std::uint64_t kTreeStream = 0x74726565ULL;  // "tree"

// First `take` entries of a Fisher-Yates shuffle of [0, n).
std::vector<Eigen::Index> draw_without_replacement(Eigen::Index n, Eigen::Index take,
                                                   RngStream& rng) {
  std::vector<Eigen::Index> pool(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
  for (Eigen::Index i = 0; i < take; ++i) {
    const Eigen::Index j =
        i + static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(n - i)));
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  pool.resize(static_cast<std::size_t>(take));
  return pool;
}

struct SplitChoice {
  bool found = false;
  int feature = -1;
  double threshold = 0.0;
  double sse = std::numeric_limits<double>::infinity();
};

// Builds one tree's node vector from the structure rows.  Recursion pushes the
// parent before either child, so parents always precede children in `nodes`.
class Grower {
 public:
  Grower(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int min_leaf, int mtry,
         RngStream& rng, std::vector<ForestNode>& nodes)
      : x_(x), y_(y), min_leaf_(min_leaf), mtry_(mtry), rng_(rng), nodes_(nodes) {}

  std::int32_t grow(const std::vector<Eigen::Index>& rows, std::int32_t parent) {
    const std::int32_t idx = static_cast<std::int32_t>(nodes_.size());
    nodes_.emplace_back();
    nodes_.back().parent = parent;

    if (rows.size() < 2 * static_cast<std::size_t>(min_leaf_)) return idx;

    const SplitChoice split = best_split(rows);
    if (!split.found) return idx;

    std::vector<Eigen::Index> left;
    std::vector<Eigen::Index> right;
    left.reserve(rows.size());
    right.reserve(rows.size());
    for (const Eigen::Index r : rows) {
      (x_(r, split.feature) <= split.threshold ? left : right).push_back(r);
    }

    nodes_[static_cast<std::size_t>(idx)].feature = split.feature;
    nodes_[static_cast<std::size_t>(idx)].threshold = split.threshold;
    const std::int32_t li = grow(left, idx);
    nodes_[static_cast<std::size_t>(idx)].left = li;
    const std::int32_t ri = grow(right, idx);
    nodes_[static_cast<std::size_t>(idx)].right = ri;
    return idx;
  }

 private:
  // Minimizes left SSE + right SSE over `mtry_` randomly drawn features, with
  // thresholds at midpoints between consecutive distinct sorted values and at
  // least min_leaf rows on each side.  Ties keep the first candidate examined,
  // so the outcome is fixed by the stream state.
  SplitChoice best_split(const std::vector<Eigen::Index>& rows) {
    const auto cnt = static_cast<Eigen::Index>(rows.size());
    double sum = 0.0;
    double sumsq = 0.0;
    for (const Eigen::Index r : rows) {
      sum += y_[r];
      sumsq += y_[r] * y_[r];
    }
    const double parent_sse = std::max(0.0, sumsq - sum * sum / static_cast<double>(cnt));

    const std::vector<Eigen::Index> features =
        draw_without_replacement(x_.cols(), std::min<Eigen::Index>(mtry_, x_.cols()), rng_);

    SplitChoice best;
    std::vector<std::pair<double, double>> vals;  // (feature value, response)
    for (const Eigen::Index f : features) {
      vals.clear();
      vals.reserve(static_cast<std::size_t>(cnt));
      for (const Eigen::Index r : rows) vals.emplace_back(x_(r, f), y_[r]);
      std::stable_sort(vals.begin(), vals.end(),
                       [](const auto& a, const auto& b) { return a.first < b.first; });

      double lsum = 0.0;
      double lsq = 0.0;
      for (Eigen::Index i = 0; i < cnt - 1; ++i) {
        lsum += vals[static_cast<std::size_t>(i)].second;
        lsq += vals[static_cast<std::size_t>(i)].second * vals[static_cast<std::size_t>(i)].second;
        const Eigen::Index nl = i + 1;
        const Eigen::Index nr = cnt - nl;
        if (nl < min_leaf_) continue;
        if (nr < min_leaf_) break;
        const double lo = vals[static_cast<std::size_t>(i)].first;
        const double hi = vals[static_cast<std::size_t>(i + 1)].first;
        if (!(lo < hi)) continue;  // need distinct values to place a threshold
        const double rsum = sum - lsum;
        const double rsq = sumsq - lsq;
        const double sse = std::max(0.0, lsq - lsum * lsum / static_cast<double>(nl)) +
                           std::max(0.0, rsq - rsum * rsum / static_cast<double>(nr));
        if (sse < best.sse) {
          best.found = true;
          best.feature = static_cast<int>(f);
          best.threshold = 0.5 * (lo + hi);
          best.sse = sse;
        }
      }
    }
    if (best.found && !(best.sse < parent_sse)) best.found = false;
    return best;
  }

  const Eigen::MatrixXd& x_;
  const Eigen::VectorXd& y_;
  int min_leaf_;
  int mtry_;
  RngStream& rng_;
  std::vector<ForestNode>& nodes_;
};

// Routes the tree's estimation rows down the (already grown) tree and fills
// every node's value: its own estimation mean when it holds at least min_leaf
// such rows, otherwise the nearest ancestor's value (the root always uses its
// own mean).  Shared by fit and refit_leaves.
void populate_values(ForestTree& tree, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                     int min_leaf) {
  std::vector<double> sum(tree.nodes.size(), 0.0);
  std::vector<Eigen::Index> count(tree.nodes.size(), 0);
  for (const Eigen::Index r : tree.estimation_rows) {
    std::int32_t idx = 0;
    for (;;) {
      sum[static_cast<std::size_t>(idx)] += y[r];
      ++count[static_cast<std::size_t>(idx)];
      const ForestNode& node = tree.nodes[static_cast<std::size_t>(idx)];
      if (node.feature < 0) break;
      idx = x(r, node.feature) <= node.threshold ? node.left : node.right;
    }
  }
  // Parents precede children, so one forward pass resolves the fallback chain.
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    ForestNode& node = tree.nodes[i];
    if (node.parent < 0) {
      node.value = count[i] > 0 ? sum[i] / static_cast<double>(count[i]) : 0.0;
    } else if (count[i] >= min_leaf) {
      node.value = sum[i] / static_cast<double>(count[i]);
    } else {
      node.value = tree.nodes[static_cast<std::size_t>(node.parent)].value;
    }
  }
}

}  // namespace

Eigen::Index ForestTree::leaf_for(const Eigen::RowVectorXd& x0) const {
  std::int32_t idx = 0;
  for (;;) {
    const ForestNode& node = nodes[static_cast<std::size_t>(idx)];
    if (node.feature < 0) return idx;
    idx = x0[node.feature] <= node.threshold ? node.left : node.right;
  }
}

HonestForest HonestForest::fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                               const ForestParams& params, std::uint64_t seed) {
  if (x.rows() != y.size()) fail(errc::bad_argument, "covariates and response sizes differ");
  if (x.cols() < 1) fail(errc::bad_argument, "forest needs at least one covariate");
  if (!x.allFinite() || !y.allFinite())
    fail(errc::non_finite_value, "forest inputs must be finite");
  if (params.n_trees < 1) fail(errc::bad_config, "n_trees must be positive");
  if (!(params.subsample_fraction > 0.0) || params.subsample_fraction > 1.0)
    fail(errc::bad_config, "subsample_fraction must lie in (0, 1]");
  if (params.min_leaf < 1) fail(errc::bad_config, "min_leaf must be positive");

  const Eigen::Index n = x.rows();
  if (n < 2 * static_cast<Eigen::Index>(params.min_leaf))
    fail(errc::insufficient_data, "forest needs at least 2*min_leaf rows");
  const auto subsample =
      static_cast<Eigen::Index>(std::floor(params.subsample_fraction * static_cast<double>(n)));
  if (subsample < 2)
    fail(errc::insufficient_data, "subsample too small to split into two halves");

  const int mtry =
      params.mtry > 0
          ? params.mtry
          : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(x.cols()))));

  std::vector<ForestTree> trees;
  trees.reserve(static_cast<std::size_t>(params.n_trees));
  for (int t = 0; t < params.n_trees; ++t) {
    RngStream rng(seed, {kTreeStream, static_cast<std::uint64_t>(t)});
    std::vector<Eigen::Index> drawn = draw_without_replacement(n, subsample, rng);

    ForestTree tree;
    const auto half = static_cast<std::size_t>(subsample / 2);
    tree.structure_rows.assign(drawn.begin(), drawn.begin() + static_cast<std::ptrdiff_t>(half));
    tree.estimation_rows.assign(drawn.begin() + static_cast<std::ptrdiff_t>(half), drawn.end());
    std::sort(tree.structure_rows.begin(), tree.structure_rows.end());
    std::sort(tree.estimation_rows.begin(), tree.estimation_rows.end());

    Grower grower(x, y, params.min_leaf, mtry, rng, tree.nodes);
    grower.grow(tree.structure_rows, -1);
    populate_values(tree, x, y, params.min_leaf);
    trees.push_back(std::move(tree));
  }
  return HonestForest(std::move(trees), params);
}

double HonestForest::predict_one(const Eigen::RowVectorXd& x0) const {
  if (trees_.empty()) fail(errc::bad_argument, "forest holds no trees");
  double acc = 0.0;
  for (const ForestTree& tree : trees_) {
    acc += tree.nodes[static_cast<std::size_t>(tree.leaf_for(x0))].value;
  }
  return acc / static_cast<double>(trees_.size());
}

Eigen::VectorXd HonestForest::predict(const Eigen::MatrixXd& x) const {
  Eigen::VectorXd out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out[i] = predict_one(x.row(i));
  return out;
}

void HonestForest::refit_leaves(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  if (x.rows() != y.size()) fail(errc::bad_argument, "covariates and response sizes differ");
  for (ForestTree& tree : trees_) {
    for (const Eigen::Index r : tree.estimation_rows) {
      if (r >= x.rows()) fail(errc::bad_argument, "refit data smaller than the fitted sample");
    }
    populate_values(tree, x, y, params_.min_leaf);
  }
}

}  // namespace latelab
