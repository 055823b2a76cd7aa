#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "latelab/dataset.hpp"
#include "latelab/estimators.hpp"

// Empirical Monte Carlo engine: a synthetic "census extract" base population,
// design transformations that plant a pseudo-instrument with known potential
// treatments/outcomes, and the replication loop + metric aggregation on top.

namespace latelab {

// ---------------------------------------------------------------------------
// Synthetic base population.
//
// Shaped like a large census extract of young mothers: age and age at first
// birth in decades, race and birth-quarter dummies, weeks worked per year (in
// tens, with a large point mass at zero), an any-work indicator, a fertility
// treatment confounded with the outcomes through the covariates, and a rare,
// nearly random instrument (twin-birth style: every instrument-positive row is
// treated).
struct BaseSample {
  Eigen::MatrixXd x;  // n x 7, columns in `covariate_names` order
  Eigen::VectorXd weeks;
  Eigen::VectorXd workpay;  // 1(weeks > 0)
  Eigen::VectorXd d;
  Eigen::VectorXd z;
  std::vector<std::string> covariate_names;

  Eigen::Index n() const { return z.size(); }
};

BaseSample synth_base_population(Eigen::Index size, std::uint64_t seed);

// ---------------------------------------------------------------------------
// The design grid.

struct DgpSpec {
  int dgp_id = 1;
  bool heterogeneity = false;     // effect heterogeneity through the covariates
  bool strong_selection = false;  // score-matched assignment with donor discards
  bool observed_strength = true;  // first stage ~60pp; false: weak (~6pp)
  bool binary_outcome = false;    // any-work indicator instead of weeks
  Eigen::Index sample_size = 1000;
};

// The fixed 32-design grid; `dgp_from_id` throws BadArgument outside 1..32.
const std::vector<DgpSpec>& dgp_table();
DgpSpec dgp_from_id(int dgp_id);

// ---------------------------------------------------------------------------
// Greedy 1:M matching without replacement.
//
// References claim donors in reference-row order; each takes its `m` nearest
// unclaimed donors by Euclidean distance (callers scale columns beforehand),
// ties broken toward the lower donor index.  Each reference's donor list is
// sorted by (distance, index).  Throws InsufficientDonors when the donor pool
// cannot supply m donors per reference.
std::vector<std::vector<Eigen::Index>> matching_without_replacement(
    const Eigen::MatrixXd& references, const Eigen::MatrixXd& donors, int m);

// Smallest per-reference quota M >= 1 whose post-assignment instrument share
//   M*R / (D - discard_per_ref*M*R)
// lands in [0.45, 0.55] (D donors, R references; discard_per_ref = 0 for the
// covariate-matched design).  Throws InsufficientDonors when no quota fits.
int rescale_match_quota(Eigen::Index n_references, Eigen::Index n_donors, int discard_per_ref);

// ---------------------------------------------------------------------------
// Design-transformed population with stored potentials.

struct DesignConfig {
  // Multiplier on the covariate part of the fitted assignment index when the
  // strong-selection design amplifies its instrument propensity.
  double selection_amplifier = 1.5;
  // Donors discarded per pseudo-instrument row in the strong-selection design
  // (the second, imbalance-creating matching step).
  int discard_quota = 3;
  // Latent threshold whose exceedance turns a non-treated row into a complier
  // under the weak-first-stage designs.
  double weak_compliance_cutoff = 1.25;
};

struct Population {
  Eigen::MatrixXd x;  // covariates the estimators see (base columns)
  std::vector<std::string> covariate_names;
  Eigen::VectorXd z;       // planted pseudo-instrument
  Eigen::VectorXd d0, d1;  // potential treatment by instrument state
  Eigen::VectorXd y0, y1;  // potential outcome by instrument state
  double true_late = 0.0;
  DgpSpec spec;

  // Design diagnostics recorded at build time.
  double instrument_share = 0.0;
  double first_stage = 0.0;  // population mean of d1 - d0
  int match_quota = 0;       // M of the assignment matching step
  std::uint64_t seed = 0;

  Eigen::Index n() const { return z.size(); }
};

Population build_population(const BaseSample& base, const DgpSpec& spec, std::uint64_t seed,
                            const DesignConfig& config = {});

// Mean of y1 - y0 over compliers (d1 - d0 == 1); throws NoCompliers when the
// population has none.
double true_late_of(const Population& pop);

// Observed dataset for the given population rows (repeats allowed): the
// instrument state reveals one potential treatment and outcome per row.
Dataset reveal_sample(const Population& pop, const std::vector<Eigen::Index>& rows);

// ---------------------------------------------------------------------------
// Replication loop.

struct ReplicationRecord {
  int rep = 0;
  std::string estimator;
  double theta = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  bool point_ok = false;
  bool se_ok = false;
  Eigen::Index n_used = 0;
  Eigen::Index n_trimmed = 0;
  int bootstrap_failures = 0;
  std::string error;  // empty on success; else the error code name
};

struct MetricsRow {
  int dgp_id = 0;
  std::string estimator;
  double coverage = 0.0;         // percent of kept intervals containing theta0
  double interval_length = 0.0;  // mean ci_hi - ci_lo over kept replications
  double abs_bias = 0.0;
  double sd = 0.0;
  double rmse = 0.0;     // sqrt(bias^2 + sd^2) by construction
  double se_bias = 0.0;  // median reported se minus the Monte Carlo sd
  double rank_coverage = 0.0;  // 1 = best within the run's DGP, ties averaged
  double rank_interval = 0.0;
  double rank_bias = 0.0;
  double rank_sd = 0.0;
  double rank_rmse = 0.0;
  double rank_se_bias = 0.0;
  long nsimp = 0;   // replications with a usable point estimate
  long nsimse = 0;  // subset with a usable standard error
  long n_reps = 0;
  double true_late = 0.0;
};

struct SimulationOptions {
  int n_reps = 200;
  int bootstrap = 199;
  double trim = 5.0;
  std::string ci = "normal";  // or "percentile"
  Eigen::Index sample_size = 0;  // 0: take the spec's size
  Eigen::Index base_size = 50000;
  int threads = 1;
  std::map<std::string, std::string> estimator_options;  // forwarded to EstimatorSpec
};

struct SimulationResult {
  DgpSpec spec;
  double true_late = 0.0;
  // Replication-major, estimators in request order within each replication.
  std::vector<ReplicationRecord> replications;
  std::vector<MetricsRow> metrics;  // one row per estimator, request order
};

// Point metrics use replications with point_ok and |theta| < 1e10 (count
// nsimp); coverage, interval length and se bias additionally require se_ok and
// se < 150 * sd (count nsimse; the se filter is skipped when sd == 0, which
// would otherwise discard every replication).  Ranks are filled per metric
// across the rows of one call: 1 = best, ties get the average position,
// coverage ranked by |coverage - 95|, se bias by |se_bias|.
std::vector<MetricsRow> aggregate_metrics(int dgp_id, double theta0, long n_reps,
                                          const std::vector<std::string>& estimators,
                                          const std::vector<ReplicationRecord>& records);

// Replications draw with-replacement samples of the population; replication
// r's RNG stream and estimator seed derive from (seed, dgp_id, r), so results
// are identical for any thread count.  Per-replication estimator failures are
// recorded, never fatal.
SimulationResult run_simulation(const Population& pop, const std::vector<std::string>& estimators,
                                const SimulationOptions& opts, std::uint64_t seed);

// Convenience: synthesize the base, build the design, run the loop.
SimulationResult run_simulation(const DgpSpec& spec, const std::vector<std::string>& estimators,
                                const SimulationOptions& opts, std::uint64_t seed);

// ---------------------------------------------------------------------------
// File-level driver.

struct SimConfig {
  std::vector<int> dgps;                 // required ("all" = 1..32)
  std::vector<std::string> estimators;   // required ("all" = full registry)
  int n_reps = 0;                        // required
  std::uint64_t seed = 0;                // required
  std::string output_dir;                // required
  int bootstrap = 199;
  double trim = 5.0;
  std::string ci = "normal";
  Eigen::Index base_size = 50000;
  Eigen::Index sample_size = 0;  // 0: per-spec default
  int threads = 1;
  bool dump_population = false;
  std::map<std::string, std::string> estimator_options;
};

// Key = value lines; '#' starts a comment.  Throws BadConfig naming the first
// missing required key or the first unknown key / unparseable value.
SimConfig parse_sim_config(const std::string& text);
SimConfig load_sim_config(const std::string& path);

// Runs every configured DGP and writes, under output_dir:
//   metrics.csv                     one row per (dgp, estimator)
//   replications_<dgp>_<est>.csv    per-replication records ('^' -> '-')
//   population_<dgp>.csv            potential-outcome dump (when configured)
// Every file starts with "# seed=..."; per-DGP files also carry the true
// effect in a "# true_late=..." line.  Returns the metric rows in write order.
std::vector<MetricsRow> simulate_to_files(const SimConfig& config);

// metrics.csv round-trip (full-precision fields).
void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows,
                       std::uint64_t seed);
std::vector<MetricsRow> read_metrics_csv(const std::string& path);

}  // namespace latelab
