// late-lab: command-line front end for the LATE estimation library.
//
// Subcommands: describe (balance diagnostics for an observed sample),
// estimate (one estimator or the whole registry on a CSV file), simulate
// (config-driven Monte Carlo study) and report (metrics.csv -> comparison
// tables).  Exit codes: 0 success, 1 usage error, 2 data/contract error.
// All output is deterministic for fixed argv and input files.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "CLI11.hpp"
#include "latelab/csv.hpp"
#include "latelab/dataset.hpp"
#include "latelab/emcs.hpp"
#include "latelab/errors.hpp"
#include "latelab/estimators.hpp"
#include "latelab/inference.hpp"
#include "latelab/numopt.hpp"
#include "latelab/report.hpp"
#include "latelab/stats.hpp"

namespace {

using namespace latelab;

constexpr const char* kVersion = "late-lab 1.0.0";

// Text views round to 6 significant digits; CSV artifacts keep full precision
// via format_double.
std::string six(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

int usage_error(const std::string& msg) {
  std::fprintf(stderr, "late-lab: %s\n", msg.c_str());
  return 1;
}

void emit(const std::string& text, const std::string& output_path) {
  if (output_path.empty()) {
    std::fputs(text.c_str(), stdout);
    return;
  }
  std::ofstream out(output_path, std::ios::binary);
  if (!out) fail(errc::bad_argument, "cannot open output file: " + output_path);
  out << text;
}

// Column-role flags shared by describe and estimate.
struct SchemaFlags {
  std::string outcome = "y";
  std::string treatment = "d";
  std::string instrument = "z";
  std::vector<std::string> covariates;
  std::vector<std::string> exclude;

  void attach(CLI::App* cmd) {
    cmd->add_option("--outcome-col", outcome, "Outcome column name")->capture_default_str();
    cmd->add_option("--treatment-col", treatment, "Treatment column name")
        ->capture_default_str();
    cmd->add_option("--instrument-col", instrument, "Instrument column name")
        ->capture_default_str();
    cmd->add_option("--covariates", covariates,
                    "Covariate columns (comma separated; default: all non-role columns)")
        ->delimiter(',');
    cmd->add_option("--exclude", exclude, "Columns to ignore (comma separated)")
        ->delimiter(',');
  }

  CsvSchema schema() const { return CsvSchema{outcome, treatment, instrument, covariates, exclude}; }
};

// ---------------------------------------------------------------------------
// describe

struct DescribeArgs {
  std::string data;
  SchemaFlags schema;
};

void split_by_instrument(const Eigen::VectorXd& values, const Eigen::VectorXd& z,
                         std::vector<double>& g0, std::vector<double>& g1) {
  g0.clear();
  g1.clear();
  for (Eigen::Index i = 0; i < values.size(); ++i)
    (z[i] > 0.5 ? g1 : g0).push_back(values[i]);
}

int run_describe(const DescribeArgs& args) {
  const Dataset ds = load_csv(args.data, args.schema.schema());
  const Eigen::Index n = ds.n();

  std::vector<double> g0, g1;
  split_by_instrument(ds.d(), ds.z(), g0, g1);
  const double d1 = mean(g1);
  const double d0 = mean(g0);

  std::printf("n          %lld  (z=1: %lld, z=0: %lld)\n", static_cast<long long>(n),
              static_cast<long long>(ds.n1()), static_cast<long long>(ds.n0()));
  std::printf("z share    %s%%\n", six(100.0 * static_cast<double>(ds.n1()) / n).c_str());
  std::printf("d | z=1    %s\n", six(d1).c_str());
  std::printf("d | z=0    %s\n", six(d0).c_str());
  std::printf("first stage %s\n", six(d1 - d0).c_str());

  // How predictable is instrument assignment from the covariates?  Near zero
  // for an as-good-as-random instrument.
  try {
    Eigen::MatrixXd design(n, ds.k() + 1);
    design.col(0).setOnes();
    design.rightCols(ds.k()) = ds.x();
    const GlmFit full = fit_binary_glm(design, ds.z(), LinkFunction::probit);
    const GlmFit null_fit =
        fit_binary_glm(Eigen::MatrixXd::Ones(n, 1), ds.z(), LinkFunction::probit);
    std::printf("instrument probit pseudo-R2 %s\n",
                six(nagelkerke_pseudo_r2(null_fit.loglik, full.loglik, n)).c_str());
  } catch (const Error& e) {
    std::printf("instrument probit pseudo-R2 unavailable (%s)\n", errc_name(e.code()));
  }
  std::printf("\n");

  // Balance table across instrument arms.
  std::vector<std::vector<std::string>> cells;
  cells.push_back({"variable", "mean z=1", "sd z=1", "mean z=0", "sd z=0", "st.diff"});
  auto add_row = [&](const std::string& label, const Eigen::VectorXd& values) {
    split_by_instrument(values, ds.z(), g0, g1);
    std::string stdiff = "nan";
    try {
      stdiff = six(standardized_difference(g0, g1));
    } catch (const Error&) {
      // constant column in both arms: balance is undefined, not an error here
    }
    cells.push_back({label, six(mean(g1)), six(sample_sd(g1)), six(mean(g0)),
                     six(sample_sd(g0)), stdiff});
  };
  for (Eigen::Index j = 0; j < ds.k(); ++j) add_row(ds.column_names()[j], ds.x().col(j));
  add_row("[treatment]", ds.d());
  add_row("[outcome]", ds.y());

  std::vector<std::size_t> width(cells[0].size(), 0);
  for (const auto& line : cells)
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
  for (const auto& line : cells) {
    std::string built;
    for (std::size_t c = 0; c < line.size(); ++c) {
      if (c > 0) built += "  ";
      const std::string pad(width[c] - line[c].size(), ' ');
      built += c == 0 ? line[c] + pad : pad + line[c];
    }
    built.erase(built.find_last_not_of(' ') + 1);
    std::printf("%s\n", built.c_str());
  }
  return 0;
}

// ---------------------------------------------------------------------------
// estimate

struct EstimateArgs {
  std::string data;
  std::string estimator;
  double trim = 5.0;
  int bootstrap = 199;
  std::string ci = "normal";
  std::uint64_t seed = 0;
  std::string output;
  SchemaFlags schema;
  // backend overrides, only forwarded when set on the command line
  double radius_multiplier = 3.0;
  bool radius_multiplier_set = false;
  std::string extra_covariate;
  int n_trees = 0;
  bool n_trees_set = false;
  int min_leaf = 0;
  bool min_leaf_set = false;
  bool trim_all = false;
};

std::map<std::string, std::string> estimator_options(const EstimateArgs& args) {
  std::map<std::string, std::string> options;
  if (args.radius_multiplier_set)
    options["radius_multiplier"] = format_double(args.radius_multiplier);
  if (!args.extra_covariate.empty()) options["extra_covariate"] = args.extra_covariate;
  if (args.n_trees_set) options["n_trees"] = std::to_string(args.n_trees);
  if (args.min_leaf_set) options["min_leaf"] = std::to_string(args.min_leaf);
  if (args.trim_all) options["trim_all"] = "1";
  return options;
}

std::pair<double, double> interval_for(const std::string& ci, double theta,
                                       const BootstrapResult& boot) {
  if (ci == "percentile") return percentile_interval(boot.replicate_estimates);
  return confidence_interval(theta, boot.se);
}

int run_estimate(const EstimateArgs& args) {
  if (!(args.trim > 0.0 && args.trim <= 100.0))
    return usage_error("--trim must be in (0, 100]");
  if (args.bootstrap < 2 || args.bootstrap > 100000)
    return usage_error("--bootstrap must be in [2, 100000]");
  const bool run_all = args.estimator == "all";
  if (!run_all && !is_known_estimator(args.estimator)) {
    std::string msg = "unknown estimator '" + args.estimator + "'; valid names:";
    for (const auto& name : estimator_registry()) msg += "\n  " + name;
    return usage_error(msg);
  }

  const Dataset ds = load_csv(args.data, args.schema.schema());
  const std::map<std::string, std::string> options = estimator_options(args);

  if (!run_all) {
    const EstimatorSpec spec{args.estimator, args.trim, options};
    const LateEstimate est = estimate(spec, ds, args.seed);
    const BootstrapResult boot = bootstrap_se(spec, ds, args.bootstrap, args.seed);
    const auto [lo, hi] = interval_for(args.ci, est.theta, boot);

    std::string text;
    auto line = [&text](const std::string& label, const std::string& value) {
      text += label + std::string(label.size() < 12 ? 12 - label.size() : 1, ' ') + value + "\n";
    };
    line("estimator", args.estimator);
    line("theta", six(est.theta));
    line("se", six(boot.se) + "  (bootstrap B=" + std::to_string(boot.B) + ", " +
                     std::to_string(boot.n_failed) + " failed)");
    line("ci 95%", "[" + six(lo) + ", " + six(hi) + "]  (" + args.ci + ")");
    line("first stage", six(est.first_stage));
    line("n used", std::to_string(est.n_used));
    line("n trimmed", std::to_string(est.n_trimmed));
    line("trim", six(args.trim));
    line("seed", std::to_string(args.seed));
    for (const auto& [key, value] : est.diagnostics) line("  " + key, six(value));
    emit(text, args.output);
    return 0;
  }

  // Whole registry: one CSV row per estimator; individual failures become a
  // nan row with the error name instead of aborting the sweep.
  CsvTable table;
  table.columns = {"estimator",   "theta",  "se",        "ci_lo",
                   "ci_hi",       "first_stage", "n_used", "n_trimmed",
                   "bootstrap_failures", "error"};
  const std::string nan = format_double(std::numeric_limits<double>::quiet_NaN());
  for (const auto& name : estimator_registry()) {
    const EstimatorSpec spec{name, args.trim, options};
    std::vector<std::string> row;
    try {
      const LateEstimate est = estimate(spec, ds, args.seed);
      const BootstrapResult boot = bootstrap_se(spec, ds, args.bootstrap, args.seed);
      const auto [lo, hi] = interval_for(args.ci, est.theta, boot);
      row = {name,
             format_double(est.theta),
             format_double(boot.se),
             format_double(lo),
             format_double(hi),
             format_double(est.first_stage),
             std::to_string(est.n_used),
             std::to_string(est.n_trimmed),
             std::to_string(boot.n_failed),
             ""};
    } catch (const Error& e) {
      row = {name, nan, nan, nan, nan, nan, "0", "0", "0", errc_name(e.code())};
    }
    table.rows.push_back(std::move(row));
  }
  const std::vector<std::string> comments = {
      "seed=" + std::to_string(args.seed), "trim=" + format_double(args.trim),
      "bootstrap=" + std::to_string(args.bootstrap), "ci=" + args.ci};
  emit(write_csv_string(table, comments), args.output);
  return 0;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  std::string config;
  int threads = 0;
  bool threads_set = false;
};

int run_simulate(const SimulateArgs& args) {
  SimConfig config = load_sim_config(args.config);
  if (args.threads_set) {
    if (args.threads < 1 || args.threads > 256)
      return usage_error("--threads must be in [1, 256]");
    config.threads = args.threads;
  }
  const std::vector<MetricsRow> rows = simulate_to_files(config);
  std::printf("wrote %s/metrics.csv: %zu dgps x %zu estimators, n_reps=%d, seed=%llu\n",
              config.output_dir.c_str(), config.dgps.size(), config.estimators.size(),
              config.n_reps, static_cast<unsigned long long>(config.seed));
  (void)rows;
  return 0;
}

// ---------------------------------------------------------------------------
// report

struct ReportArgs {
  std::string metrics;
  std::string group = "overall";
  std::string feature;
  std::string sort = "coverage";
  std::vector<std::string> columns;
  std::string format = "text";
  std::string output;
};

int run_report(const ReportArgs& args) {
  if (args.group == "feature" && args.feature.empty())
    return usage_error("--group feature requires --feature");
  if (args.group != "feature" && !args.feature.empty())
    return usage_error("--feature only applies with --group feature");

  TableSpec spec;
  spec.grouping = args.group == "dgp"       ? Grouping::by_dgp
                  : args.group == "feature" ? Grouping::by_feature
                                            : Grouping::overall;
  spec.feature = args.feature;
  spec.sort = args.sort == "rmse"   ? SortKey::rmse
              : args.sort == "bias" ? SortKey::bias
                                    : SortKey::coverage_gap;
  spec.columns = args.columns;

  const RenderedTable table = render_table(read_metrics_csv(args.metrics), spec);
  emit(args.format == "csv" ? table.csv : table.text, args.output);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Covariate-adjusted LATE estimation and simulation toolkit"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  DescribeArgs describe_args;
  CLI::App* describe = app.add_subcommand("describe", "Balance diagnostics for a CSV sample");
  describe->add_option("--data", describe_args.data, "Input CSV file")->required();
  describe_args.schema.attach(describe);

  EstimateArgs estimate_args;
  CLI::App* estimate = app.add_subcommand("estimate", "Estimate the LATE on a CSV sample");
  estimate->add_option("--data", estimate_args.data, "Input CSV file")->required();
  estimate
      ->add_option("--estimator", estimate_args.estimator,
                   "Estimator name, or 'all' for the whole registry (CSV output)")
      ->required();
  estimate->add_option("--trim", estimate_args.trim, "Weight-share trimming threshold, percent")
      ->capture_default_str();
  estimate->add_option("--bootstrap", estimate_args.bootstrap, "Bootstrap replicates")
      ->capture_default_str();
  estimate->add_option("--ci", estimate_args.ci, "Confidence interval type")
      ->check(CLI::IsMember({"normal", "percentile"}))
      ->capture_default_str();
  estimate->add_option("--seed", estimate_args.seed, "RNG seed")->capture_default_str();
  estimate->add_option("--output", estimate_args.output, "Write output here instead of stdout");
  CLI::Option* rm = estimate->add_option("--radius-multiplier", estimate_args.radius_multiplier,
                                         "Radius-matching caliper multiplier");
  CLI::Option* nt = estimate->add_option("--n-trees", estimate_args.n_trees,
                                         "Random-forest tree count");
  CLI::Option* ml = estimate->add_option("--min-leaf", estimate_args.min_leaf,
                                         "Random-forest minimum leaf size");
  estimate->add_option("--extra-covariate", estimate_args.extra_covariate,
                       "Covariate appended to the matching metric (radmatchx)");
  estimate->add_flag("--trim-all", estimate_args.trim_all,
                     "Apply trimming to every estimator, including means");
  estimate_args.schema.attach(estimate);

  SimulateArgs simulate_args;
  CLI::App* simulate = app.add_subcommand("simulate", "Run a config-driven simulation study");
  simulate->add_option("--config", simulate_args.config, "Key=value config file")->required();
  CLI::Option* th = simulate
                        ->add_option("--threads", simulate_args.threads,
                                     "Worker threads (overrides the config)")
                        ->envname("LATE_LAB_THREADS");

  ReportArgs report_args;
  CLI::App* report = app.add_subcommand("report", "Render metrics.csv as a comparison table");
  report->add_option("--metrics", report_args.metrics, "metrics.csv produced by simulate")
      ->required();
  report->add_option("--group", report_args.group, "Row grouping")
      ->check(CLI::IsMember({"overall", "feature", "dgp"}))
      ->capture_default_str();
  report->add_option("--feature", report_args.feature, "Design feature for --group feature")
      ->check(CLI::IsMember({"heterogeneity", "selection", "strength", "outcome", "size"}));
  report->add_option("--sort", report_args.sort, "Row ordering")
      ->check(CLI::IsMember({"coverage", "rmse", "bias"}))
      ->capture_default_str();
  report->add_option("--columns", report_args.columns, "Metric columns (comma separated)")
      ->delimiter(',');
  report->add_option("--format", report_args.format, "Output form")
      ->check(CLI::IsMember({"text", "csv"}))
      ->capture_default_str();
  report->add_option("--output", report_args.output, "Write output here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  estimate_args.radius_multiplier_set = rm->count() > 0;
  estimate_args.n_trees_set = nt->count() > 0;
  estimate_args.min_leaf_set = ml->count() > 0;
  simulate_args.threads_set = th->count() > 0;

  try {
    if (describe->parsed()) return run_describe(describe_args);
    if (estimate->parsed()) return run_estimate(estimate_args);
    if (simulate->parsed()) return run_simulate(simulate_args);
    if (report->parsed()) return run_report(report_args);
  } catch (const Error& e) {
    std::fprintf(stderr, "late-lab: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "late-lab: %s\n", e.what());
    return 2;
  }
  return 0;
}
