#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "latelab/dataset.hpp"

namespace latelab {

enum class MatchMetric { propensity_gap, normalized_euclidean };

// Matches for one reference observation: opposite-arm row indices in
// ascending order with nonnegative weights that sum to one.
struct MatchSet {
  std::vector<Eigen::Index> indices;
  std::vector<double> weights;
};

struct MatchPlan {
  std::vector<MatchSet> sets;  // one per dataset row, original order
  MatchMetric metric = MatchMetric::propensity_gap;
  double max_pair_distance = 0.0;  // largest nearest-neighbour gap seen
  double radius = 0.0;             // 0 for pair plans
};

// Nearest opposite-arm unit for every observation (both directions), with
// replacement.  Distances: |score_i - score_k| for propensity_gap, or the
// covariate Euclidean metric with each column scaled by the inverse of its
// full-sample variance.  Ties go to the lowest row index.  `scores` is
// required for (and only used by) the propensity metric.
MatchPlan pair_match(const Dataset& data, MatchMetric metric,
                     const Eigen::VectorXd* scores = nullptr);

// All opposite-arm units within radius = radius_multiplier x the maximum
// pair-matching distance, weighted by inverse distance and normalized.  A
// reference with an empty ball keeps its pair match at weight one.  With
// extra_covariate named, the metric becomes Euclidean in the plane spanned by
// the score and that covariate standardized to unit variance, in both the
// pair and the radius stage.
MatchPlan radius_match(const Dataset& data, const Eigen::VectorXd& scores,
                       double radius_multiplier = 3.0,
                       const std::string& extra_covariate = "");

// Regression-adjusted matched contrast per reference i:
//   (t_i - sum_j w_ij t_j) - (m(x_i) - sum_j w_ij m(x_j))
// where m is fitted on the arm the matches were drawn from (OLS for a
// non-binary target, probit mean for a binary one; a target constant within
// the arm short-circuits to that constant).  Contrasts are signed from the
// reference's own arm, so z=0 references yield the 0-minus-1 direction.
Eigen::VectorXd bias_correct(const MatchPlan& plan, const Dataset& data,
                             const Eigen::VectorXd& target);

}  // namespace latelab
