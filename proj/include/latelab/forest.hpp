#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace latelab {

struct ForestParams {
  int n_trees = 500;
  double subsample_fraction = 0.5;
  int min_leaf = 5;
  int mtry = 0;  // features tried per split; 0 means ceil(sqrt(K))
};

struct ForestNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::int32_t parent = -1;
  double value = 0.0;  // honest mean after the min-leaf fallback chain
};

// One regression tree.  Splits were chosen on the structure rows only; node
// values come exclusively from the estimation rows, so a node's mean can be
// recomputed for a new response without touching the tree shape.
struct ForestTree {
  std::vector<ForestNode> nodes;  // nodes[0] is the root
  std::vector<Eigen::Index> structure_rows;   // ascending original row ids
  std::vector<Eigen::Index> estimation_rows;  // ascending, disjoint from above

  Eigen::Index leaf_for(const Eigen::RowVectorXd& x0) const;
};

// Subsampled honest regression forest: each tree draws floor(s*n) rows
// without replacement, grows CART variance-reduction splits on one half and
// averages the response of the other half within each leaf (leaves holding
// fewer than min_leaf estimation rows inherit the nearest ancestor mean).
class HonestForest {
 public:
  // Hand-construction hook for tests and tooling.
  HonestForest(std::vector<ForestTree> trees, ForestParams params)
      : trees_(std::move(trees)), params_(params) {}

  static HonestForest fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                          const ForestParams& params, std::uint64_t seed);

  double predict_one(const Eigen::RowVectorXd& x0) const;
  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;

  // Recomputes every node value from the stored estimation rows against a new
  // response (same covariates: routing is shape-only).  This is what makes
  // honesty checkable — structure-row responses can change arbitrarily
  // without moving any leaf mean.
  void refit_leaves(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

  const std::vector<ForestTree>& trees() const { return trees_; }
  const ForestParams& params() const { return params_; }

 private:
  std::vector<ForestTree> trees_;
  ForestParams params_;
};

}  // namespace latelab
