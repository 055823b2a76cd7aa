#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "latelab/dataset.hpp"

namespace latelab {

// Which estimator to run and how.  `options` carries backend overrides as
// strings (parsed on use): radius_multiplier, extra_covariate, n_trees,
// min_leaf, trim_all ("1" forces trimming even for `means`).
struct EstimatorSpec {
  std::string name;
  double trim_threshold = 5.0;  // percent of total arm weight one row may carry
  std::map<std::string, std::string> options;
};

struct LateEstimate {
  double theta = 0.0;
  double first_stage = 0.0;  // denominator of the Wald-type ratio
  Eigen::Index n_trimmed = 0;
  Eigen::Index n_used = 0;
  std::map<std::string, double> diagnostics;
};

// The closed registry of estimator names, in reporting order.
const std::vector<std::string>& estimator_registry();
bool is_known_estimator(const std::string& name);

// Rows kept (true) under the weight-share trimming rule: observation i is
// dropped when its normalized inverse-probability weight share, computed from
// the kernel-regression instrument score on the full sample, exceeds t/100.
// Throws AllTrimmed when either instrument arm would be emptied.
std::vector<bool> compute_trim_mask(const Dataset& data, double t);

// The same rule applied to caller-supplied scores (strictly inside (0,1)).
std::vector<bool> trim_mask_from_scores(const Eigen::VectorXd& scores,
                                        const Eigen::VectorXd& z, double t);

// Full estimation pipeline: trimming (except `means` without trim_all), the
// method-specific score/outcome-model fits, and the Wald-type ratio.  The
// weak-denominator check runs last so that model-fit errors surface first.
// Deterministic given (spec, data, seed); only forest-based estimators
// consume the seed.
LateEstimate estimate(const EstimatorSpec& spec, const Dataset& data, std::uint64_t seed);

}  // namespace latelab
