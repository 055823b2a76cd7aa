#include "latelab/inference.hpp"

#include <algorithm>
#include <cmath>

#include "latelab/errors.hpp"
#include "latelab/rng.hpp"
#include "latelab/stats.hpp"

namespace latelab {
namespace {

// Leading tag for per-draw resample streams.
constexpr std::uint64_t kBootstrapTag = 0x62747374ULL;  // "btst"

}  // namespace

BootstrapResult bootstrap_se(const EstimatorSpec& spec, const Dataset& data, int B,
                             std::uint64_t seed) {
  if (B < 2) fail(errc::bad_config, "bootstrap needs at least two draws");

  BootstrapResult result;
  result.B = B;
  result.replicate_estimates.reserve(static_cast<std::size_t>(B));

  const Eigen::Index n = data.n();
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
  for (int b = 0; b < B; ++b) {
    RngStream rng(seed, {kBootstrapTag, static_cast<std::uint64_t>(b)});
    for (Eigen::Index i = 0; i < n; ++i) {
      rows[static_cast<std::size_t>(i)] =
          static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(n)));
    }
    const std::uint64_t replicate_seed = rng.next_u64();
    try {
      const Dataset resample = data.select_rows(rows);
      result.replicate_estimates.push_back(estimate(spec, resample, replicate_seed).theta);
    } catch (const Error&) {
      ++result.n_failed;
    }
  }

  if (4 * result.n_failed > B) {
    fail(errc::too_many_failures, "more than a quarter of the bootstrap draws failed (" +
                                      std::to_string(result.n_failed) + " of " +
                                      std::to_string(B) + ")");
  }

  const auto& reps = result.replicate_estimates;
  const auto [lo, hi] = std::minmax_element(reps.begin(), reps.end());
  // A degenerate statistic has an exactly-zero spread; bypass the accumulation
  // so rounding in the mean cannot manufacture a tiny positive sd.
  result.se = (*lo == *hi) ? 0.0 : sample_sd(reps);
  return result;
}

std::pair<double, double> confidence_interval(double theta, double se, double level) {
  if (!(se >= 0.0)) fail(errc::bad_argument, "standard error must be nonnegative");
  if (!(level > 0.0 && level < 100.0)) fail(errc::bad_config, "level must lie in (0, 100)");
  const double zq = norm_ppf(0.5 + level / 200.0);
  return {theta - zq * se, theta + zq * se};
}

std::pair<double, double> percentile_interval(const std::vector<double>& replicates,
                                              double level) {
  if (replicates.empty()) fail(errc::bad_argument, "no replicates to take quantiles of");
  if (!(level > 0.0 && level < 100.0)) fail(errc::bad_config, "level must lie in (0, 100)");
  const double alpha = 1.0 - level / 100.0;
  return {quantile(replicates, alpha / 2.0), quantile(replicates, 1.0 - alpha / 2.0)};
}

}  // namespace latelab
