#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "latelab/dataset.hpp"
#include "latelab/estimators.hpp"

namespace latelab {

struct BootstrapResult {
  double se = 0.0;
  std::vector<double> replicate_estimates;  // successful draws, in draw order
  int n_failed = 0;
  int B = 0;
};

// Nonparametric bootstrap of the full estimation pipeline: each draw resamples
// n rows with replacement, reruns propensity fits, trimming and matching, and
// records the resulting estimate.  Draw b's resample indices come from the
// stream (seed, b), independent of the data, so results do not depend on
// scheduling order.  Replicates that raise a library error are dropped; more
// than 25% of them raises TooManyFailures.  The reported se is the sample
// standard deviation over the successful replicates.
BootstrapResult bootstrap_se(const EstimatorSpec& spec, const Dataset& data, int B = 199,
                             std::uint64_t seed = 0);

// Normal-approximation interval theta +- z * se; level is a percent.
std::pair<double, double> confidence_interval(double theta, double se, double level = 95.0);

// Percentile interval from the replicate distribution.
std::pair<double, double> percentile_interval(const std::vector<double>& replicates,
                                              double level = 95.0);

}  // namespace latelab
