#include "latelab/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "latelab/errors.hpp"
#include "latelab/forest.hpp"
#include "latelab/matching.hpp"
#include "latelab/nonparam.hpp"
#include "latelab/numopt.hpp"
#include "latelab/propensity.hpp"
#include "latelab/rng.hpp"

namespace latelab {
namespace {

// A treatment contrast this small signals an undefined Wald ratio.
constexpr double kWeakDenominator = 1e-10;

// Leading tag for the per-forest seed derivation.
constexpr std::uint64_t kForestSeedTag = 0x65737446ULL;  // "estF"

const std::vector<std::string>& registry() {
  static const std::vector<std::string> names{
      "ipw^probit",       "ipw^cbps",       "ipw^lc",         "dr^probit",
      "dr^cbps",          "dr^lc",          "pairmatch^probit", "pairmatch^cbps",
      "pairmatch^lc",     "pairmatch^x",    "radmatch^probit",  "radmatch^cbps",
      "radmatch^lc",      "radmatchx^probit", "radmatchx^cbps", "radmatchx^lc",
      "reg",              "tsls",           "randforest",     "reg^kernel",
      "means"};
  return names;
}

std::string option_string(const EstimatorSpec& spec, const std::string& key,
                          const std::string& def) {
  const auto it = spec.options.find(key);
  return it == spec.options.end() ? def : it->second;
}

double option_double(const EstimatorSpec& spec, const std::string& key, double def) {
  const auto it = spec.options.find(key);
  if (it == spec.options.end()) return def;
  try {
    std::size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    fail(errc::bad_config, "option '" + key + "' is not a number: " + it->second);
  }
}

bool option_flag(const EstimatorSpec& spec, const std::string& key) {
  const auto it = spec.options.find(key);
  return it != spec.options.end() && it->second != "0" && it->second != "false";
}

// ---------------------------------------------------------------------------
// Column plumbing: intercept-carrying designs cannot hold constant covariate
// columns, so every model fit works on the columns that vary in its sample.

std::vector<Eigen::Index> varying_columns(const Eigen::MatrixXd& x) {
  std::vector<Eigen::Index> cols;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if (x.rows() > 0 && x.col(j).minCoeff() < x.col(j).maxCoeff()) cols.push_back(j);
  }
  return cols;
}

Eigen::MatrixXd take_columns(const Eigen::MatrixXd& x, const std::vector<Eigen::Index>& cols) {
  Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = x.col(cols[j]);
  return out;
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& x, const std::vector<Eigen::Index>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
  return out;
}

Eigen::VectorXd take_entries(const Eigen::VectorXd& v, const std::vector<Eigen::Index>& rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[rows[i]];
  return out;
}

std::vector<Eigen::Index> rows_with_z(const Dataset& data, double value) {
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    if (data.z()[i] == value) rows.push_back(i);
  }
  return rows;
}

// Dataset restricted to its own varying covariate columns; matching and its
// bias-correction regressions consume this.
Dataset reduce_to_varying(const Dataset& data) {
  const std::vector<Eigen::Index> cols = varying_columns(data.x());
  if (static_cast<Eigen::Index>(cols.size()) == data.k()) return data;
  std::vector<std::string> names;
  for (const Eigen::Index j : cols) names.push_back(data.column_names()[static_cast<std::size_t>(j)]);
  return Dataset::from_parts(data.y(), data.d(), data.z(), take_columns(data.x(), cols), names);
}

// ---------------------------------------------------------------------------
// Instrument scores for one backend on the current sample.  With no varying
// covariate the score collapses to the arm share, which cancels in every
// normalized ratio.

PsMethod backend_from(const std::string& suffix) {
  if (suffix == "probit") return PsMethod::probit;
  if (suffix == "cbps") return PsMethod::cbps;
  if (suffix == "lc") return PsMethod::local_constant;
  fail(errc::unknown_estimator, "unknown score backend '" + suffix + "'");
}

Eigen::VectorXd backend_scores(PsMethod method, const Dataset& data,
                               std::map<std::string, double>& diag) {
  const std::vector<Eigen::Index> cols = varying_columns(data.x());
  if (cols.empty()) {
    diag["ps_converged"] = 1.0;
    return clamp_scores(Eigen::VectorXd::Constant(data.n(), data.z().mean()));
  }
  const PropensityFit fit = fit_propensity(method, take_columns(data.x(), cols), data.z());
  diag["ps_converged"] = fit.converged ? 1.0 : 0.0;
  diag["ps_evaluations"] = static_cast<double>(fit.evaluations);
  return fit.scores;
}

// ---------------------------------------------------------------------------
// Arm-specific conditional means evaluated at every row: column z of the
// result holds muhat_z(x_i).  Parametric version: OLS for non-binary targets,
// probit for binary ones; a target constant within an arm short-circuits to
// that constant (probit would diverge).

Eigen::MatrixXd parametric_arm_means(const Dataset& data, const Eigen::VectorXd& target) {
  const bool binary = is_binary01(target);
  Eigen::MatrixXd mhat(data.n(), 2);
  for (int arm = 0; arm < 2; ++arm) {
    const std::vector<Eigen::Index> rows = rows_with_z(data, static_cast<double>(arm));
    const Eigen::VectorXd tvec = take_entries(target, rows);
    if (tvec.size() == 0) fail(errc::empty_instrument_arm, "empty instrument arm");
    if (tvec.minCoeff() == tvec.maxCoeff()) {
      mhat.col(arm).setConstant(tvec[0]);
      continue;
    }
    const Eigen::MatrixXd arm_x = take_rows(data.x(), rows);
    const std::vector<Eigen::Index> cols = varying_columns(arm_x);
    const Eigen::MatrixXd design_arm = with_intercept(take_columns(arm_x, cols));
    const Eigen::MatrixXd design_all = with_intercept(take_columns(data.x(), cols));
    if (binary) {
      const GlmFit fit = fit_binary_glm(design_arm, tvec, LinkFunction::probit);
      mhat.col(arm) = link_cdf(LinkFunction::probit, design_all * fit.coefficients);
    } else {
      mhat.col(arm) = design_all * fit_ols(design_arm, tvec);
    }
  }
  return mhat;
}

// Kernel version: local constant for binary targets, local linear otherwise,
// bandwidths chosen per arm by leave-one-out least squares.
Eigen::MatrixXd kernel_arm_means(const Dataset& data, const Eigen::VectorXd& target,
                                 long* fallbacks) {
  const bool binary = is_binary01(target);
  const KernelMode mode = binary ? KernelMode::local_constant : KernelMode::local_linear;
  Eigen::MatrixXd mhat(data.n(), 2);
  for (int arm = 0; arm < 2; ++arm) {
    const std::vector<Eigen::Index> rows = rows_with_z(data, static_cast<double>(arm));
    const Eigen::VectorXd tvec = take_entries(target, rows);
    if (tvec.size() == 0) fail(errc::empty_instrument_arm, "empty instrument arm");
    if (tvec.minCoeff() == tvec.maxCoeff()) {
      mhat.col(arm).setConstant(tvec[0]);
      continue;
    }
    const Eigen::MatrixXd arm_x = take_rows(data.x(), rows);
    const std::vector<Eigen::Index> cols = varying_columns(arm_x);
    if (cols.empty()) {
      mhat.col(arm).setConstant(tvec.mean());
      continue;
    }
    const Eigen::MatrixXd arm_xv = take_columns(arm_x, cols);
    const Eigen::VectorXd bw = lscv_bandwidth(arm_xv, tvec, mode, default_bandwidth_grid());
    const KernelRegression model = KernelRegression::fit(arm_xv, tvec, bw, mode);
    const Eigen::MatrixXd queries = take_columns(data.x(), cols);
    for (Eigen::Index i = 0; i < data.n(); ++i) {
      mhat(i, arm) = kr_predict_robust(model, queries.row(i), fallbacks);
    }
  }
  return mhat;
}

// ---------------------------------------------------------------------------
// Ratio assembly.

void finish_ratio(LateEstimate& out, double num, double den) {
  if (!std::isfinite(den) || std::abs(den) < kWeakDenominator) {
    fail(errc::weak_first_stage, "treatment contrast too small for a Wald ratio");
  }
  out.first_stage = den;
  out.theta = num / den;
  if (!std::isfinite(out.theta)) fail(errc::non_finite_value, "estimate is not finite");
}

double mean_difference(const Dataset& data, const Eigen::VectorXd& target) {
  double s1 = 0.0, s0 = 0.0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    (data.z()[i] == 1.0 ? s1 : s0) += target[i];
  }
  return s1 / static_cast<double>(data.n1()) - s0 / static_cast<double>(data.n0());
}

// Normalized inverse-probability contrast: the per-arm weights in braces sum
// to one by construction of the denominators.
double ipw_contrast(const Dataset& data, const Eigen::VectorXd& scores,
                    const Eigen::VectorXd& target) {
  double sum1 = 0.0, sum0 = 0.0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    if (data.z()[i] == 1.0) {
      sum1 += 1.0 / scores[i];
    } else {
      sum0 += 1.0 / (1.0 - scores[i]);
    }
  }
  double acc1 = 0.0, acc0 = 0.0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    if (data.z()[i] == 1.0) {
      acc1 += target[i] * (1.0 / scores[i]) / sum1;
    } else {
      acc0 += target[i] * (1.0 / (1.0 - scores[i])) / sum0;
    }
  }
  return acc1 - acc0;
}

// Augmented-regression contrast: muhat_1 + z(t - muhat_1)/p - muhat_0 -
// (1-z)(t - muhat_0)/(1-p), averaged over every observation.
double aipw_contrast(const Dataset& data, const Eigen::VectorXd& scores,
                     const Eigen::MatrixXd& mhat, const Eigen::VectorXd& target) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const double correction =
        data.z()[i] == 1.0 ? (target[i] - mhat(i, 1)) / scores[i]
                           : -(target[i] - mhat(i, 0)) / (1.0 - scores[i]);
    acc += mhat(i, 1) - mhat(i, 0) + correction;
  }
  return acc / static_cast<double>(data.n());
}

// Matched-sample contrast: each reference contributes its own value minus the
// weighted value of its matches, oriented so the z=1 side is always first.
double matched_contrast(const MatchPlan& plan, const Dataset& data,
                        const Eigen::VectorXd& target) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const MatchSet& set = plan.sets[static_cast<std::size_t>(i)];
    double matched = 0.0;
    for (std::size_t m = 0; m < set.indices.size(); ++m) {
      matched += set.weights[m] * target[set.indices[m]];
    }
    const double c = target[i] - matched;
    acc += data.z()[i] == 1.0 ? c : -c;
  }
  return acc / static_cast<double>(data.n());
}

// Same orientation applied to bias-corrected per-reference contrasts.
double corrected_contrast(const Eigen::VectorXd& contrasts, const Dataset& data) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    acc += data.z()[i] == 1.0 ? contrasts[i] : -contrasts[i];
  }
  return acc / static_cast<double>(data.n());
}

// ---------------------------------------------------------------------------
// Family handlers.

void run_means(const Dataset& data, LateEstimate& out) {
  finish_ratio(out, mean_difference(data, data.y()), mean_difference(data, data.d()));
}

void run_ipw(const Dataset& data, PsMethod method, LateEstimate& out) {
  const Eigen::VectorXd scores = backend_scores(method, data, out.diagnostics);
  finish_ratio(out, ipw_contrast(data, scores, data.y()),
               ipw_contrast(data, scores, data.d()));
}

void run_dr(const Dataset& data, PsMethod method, LateEstimate& out) {
  const Eigen::VectorXd scores = backend_scores(method, data, out.diagnostics);
  Eigen::MatrixXd mhat_y;
  Eigen::MatrixXd mhat_d;
  if (method == PsMethod::local_constant) {
    long fallbacks = 0;
    mhat_y = kernel_arm_means(data, data.y(), &fallbacks);
    mhat_d = kernel_arm_means(data, data.d(), &fallbacks);
    out.diagnostics["kernel_fallback_queries"] = static_cast<double>(fallbacks);
  } else {
    mhat_y = parametric_arm_means(data, data.y());
    mhat_d = parametric_arm_means(data, data.d());
  }
  finish_ratio(out, aipw_contrast(data, scores, mhat_y, data.y()),
               aipw_contrast(data, scores, mhat_d, data.d()));
}

void run_pairmatch(const Dataset& data, const std::string& suffix, LateEstimate& out) {
  MatchPlan plan;
  if (suffix == "x") {
    const Dataset reduced = reduce_to_varying(data);
    if (reduced.k() == 0)
      fail(errc::zero_variance_covariate, "no varying covariate to match on");
    plan = pair_match(reduced, MatchMetric::normalized_euclidean);
    out.diagnostics["max_pair_distance"] = plan.max_pair_distance;
    finish_ratio(out, matched_contrast(plan, reduced, reduced.y()),
                 matched_contrast(plan, reduced, reduced.d()));
    return;
  }
  const Eigen::VectorXd scores = backend_scores(backend_from(suffix), data, out.diagnostics);
  plan = pair_match(data, MatchMetric::propensity_gap, &scores);
  out.diagnostics["max_pair_distance"] = plan.max_pair_distance;
  finish_ratio(out, matched_contrast(plan, data, data.y()),
               matched_contrast(plan, data, data.d()));
}

void run_radmatch(const Dataset& data, const std::string& suffix, bool with_extra,
                  const EstimatorSpec& spec, LateEstimate& out) {
  const Eigen::VectorXd scores = backend_scores(backend_from(suffix), data, out.diagnostics);
  const double multiplier = option_double(spec, "radius_multiplier", 3.0);
  const Dataset reduced = reduce_to_varying(data);

  std::string extra;
  if (with_extra) {
    extra = option_string(spec, "extra_covariate",
                          data.column_names().empty() ? "" : data.column_names().front());
    bool present = false;
    for (const std::string& name : reduced.column_names()) present |= (name == extra);
    if (!present) {
      fail(errc::zero_variance_covariate,
           "extra matching covariate '" + extra + "' is missing or constant");
    }
  }

  const MatchPlan plan = radius_match(reduced, scores, multiplier, extra);
  out.diagnostics["max_pair_distance"] = plan.max_pair_distance;
  out.diagnostics["radius"] = plan.radius;
  const Eigen::VectorXd cy = bias_correct(plan, reduced, reduced.y());
  const Eigen::VectorXd cd = bias_correct(plan, reduced, reduced.d());
  finish_ratio(out, corrected_contrast(cy, reduced), corrected_contrast(cd, reduced));
}

void run_reg(const Dataset& data, LateEstimate& out) {
  const Eigen::MatrixXd mhat_y = parametric_arm_means(data, data.y());
  const Eigen::MatrixXd mhat_d = parametric_arm_means(data, data.d());
  finish_ratio(out, (mhat_y.col(1) - mhat_y.col(0)).mean(),
               (mhat_d.col(1) - mhat_d.col(0)).mean());
}

void run_reg_kernel(const Dataset& data, LateEstimate& out) {
  long fallbacks = 0;
  const Eigen::MatrixXd mhat_y = kernel_arm_means(data, data.y(), &fallbacks);
  const Eigen::MatrixXd mhat_d = kernel_arm_means(data, data.d(), &fallbacks);
  out.diagnostics["kernel_fallback_queries"] = static_cast<double>(fallbacks);
  finish_ratio(out, (mhat_y.col(1) - mhat_y.col(0)).mean(),
               (mhat_d.col(1) - mhat_d.col(0)).mean());
}

// Instrumental-variable coefficient on the treatment: second-stage design
// (1, x, d), instruments (1, x, z), solved through the sandwich
// [X'Z (Z'Z)^-1 Z'X]^-1 X'Z (Z'Z)^-1 Z'y.  In this just-identified setting it
// equals (Z'X)^-1 Z'y; the sandwich form is kept because it is the shape the
// estimator is defined in.
void run_tsls(const Dataset& data, LateEstimate& out) {
  const std::vector<Eigen::Index> cols = varying_columns(data.x());
  const Eigen::MatrixXd xv = take_columns(data.x(), cols);
  const Eigen::Index n = data.n();
  const Eigen::Index p = xv.cols() + 2;

  Eigen::MatrixXd design(n, p);   // (1, x, d)
  Eigen::MatrixXd instr(n, p);    // (1, x, z)
  design.col(0).setOnes();
  instr.col(0).setOnes();
  design.middleCols(1, xv.cols()) = xv;
  instr.middleCols(1, xv.cols()) = xv;
  design.col(p - 1) = data.d();
  instr.col(p - 1) = data.z();

  // First-stage slope on the instrument, reported as the denominator.
  const Eigen::VectorXd first = fit_ols(instr, data.d());
  const double fs = first[p - 1];

  const double dn = static_cast<double>(n);
  const Eigen::MatrixXd xz = design.transpose() * instr / dn;
  const Eigen::MatrixXd zz = instr.transpose() * instr / dn;
  const Eigen::VectorXd zy = instr.transpose() * data.y() / dn;

  const Eigen::LDLT<Eigen::MatrixXd> zz_ldlt(zz);
  const Eigen::MatrixXd bread = xz * zz_ldlt.solve(xz.transpose());
  const Eigen::VectorXd moment = xz * zz_ldlt.solve(zy);
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(bread);
  if (!lu.isInvertible()) {
    if (std::abs(fs) < kWeakDenominator)
      fail(errc::weak_first_stage, "instrument has no first-stage power");
    fail(errc::rank_deficient_design, "instrumented design is rank deficient");
  }
  const Eigen::VectorXd beta = lu.solve(moment);

  if (!std::isfinite(fs) || std::abs(fs) < kWeakDenominator)
    fail(errc::weak_first_stage, "instrument has no first-stage power");
  out.first_stage = fs;
  out.theta = beta[p - 1];
  if (!std::isfinite(out.theta)) fail(errc::non_finite_value, "estimate is not finite");
}

void run_randforest(const Dataset& data, const EstimatorSpec& spec, std::uint64_t seed,
                    LateEstimate& out) {
  ForestParams params;
  params.n_trees = static_cast<int>(option_double(spec, "n_trees", 500.0));
  params.min_leaf = static_cast<int>(option_double(spec, "min_leaf", 5.0));

  // Four honest forests: (target, arm).  Each gets its own derived seed so
  // tree streams never overlap across forests.
  Eigen::MatrixXd mhat_y(data.n(), 2);
  Eigen::MatrixXd mhat_d(data.n(), 2);
  int which = 0;
  for (const bool for_outcome : {true, false}) {
    const Eigen::VectorXd& target = for_outcome ? data.y() : data.d();
    Eigen::MatrixXd& mhat = for_outcome ? mhat_y : mhat_d;
    for (int arm = 0; arm < 2; ++arm, ++which) {
      const std::vector<Eigen::Index> rows = rows_with_z(data, static_cast<double>(arm));
      const Eigen::VectorXd tvec = take_entries(target, rows);
      if (tvec.size() == 0) fail(errc::empty_instrument_arm, "empty instrument arm");
      if (data.k() == 0 || tvec.minCoeff() == tvec.maxCoeff()) {
        mhat.col(arm).setConstant(tvec.mean());
        continue;
      }
      const std::uint64_t forest_seed =
          RngStream(seed, {kForestSeedTag, static_cast<std::uint64_t>(which)}).next_u64();
      const HonestForest forest =
          HonestForest::fit(take_rows(data.x(), rows), tvec, params, forest_seed);
      mhat.col(arm) = forest.predict(data.x());
    }
  }
  finish_ratio(out, (mhat_y.col(1) - mhat_y.col(0)).mean(),
               (mhat_d.col(1) - mhat_d.col(0)).mean());
}

}  // namespace

const std::vector<std::string>& estimator_registry() { return registry(); }

bool is_known_estimator(const std::string& name) {
  const auto& names = registry();
  return std::find(names.begin(), names.end(), name) != names.end();
}

std::vector<bool> trim_mask_from_scores(const Eigen::VectorXd& scores, const Eigen::VectorXd& z,
                                        double t) {
  if (!(t > 0.0 && t <= 100.0)) fail(errc::bad_config, "trim threshold must lie in (0, 100]");
  if (scores.size() != z.size()) fail(errc::bad_argument, "scores and instrument sizes differ");

  double sum1 = 0.0, sum0 = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (z[i] == 1.0) {
      sum1 += 1.0 / scores[i];
    } else {
      sum0 += 1.0 / (1.0 - scores[i]);
    }
  }

  std::vector<bool> keep(static_cast<std::size_t>(z.size()));
  bool arm1 = false, arm0 = false;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double share =
        z[i] == 1.0 ? (1.0 / scores[i]) / sum1 : (1.0 / (1.0 - scores[i])) / sum0;
    const bool kept = share <= t / 100.0;
    keep[static_cast<std::size_t>(i)] = kept;
    if (kept) (z[i] == 1.0 ? arm1 : arm0) = true;
  }
  if (!arm1 || !arm0) fail(errc::all_trimmed, "trimming emptied an instrument arm");
  return keep;
}

std::vector<bool> compute_trim_mask(const Dataset& data, double t) {
  if (!(t > 0.0 && t <= 100.0)) fail(errc::bad_config, "trim threshold must lie in (0, 100]");

  // The rule is defined on the kernel-regression instrument score regardless
  // of which estimator runs afterwards.
  const std::vector<Eigen::Index> cols = varying_columns(data.x());
  const Eigen::VectorXd scores =
      cols.empty() ? clamp_scores(Eigen::VectorXd::Constant(data.n(), data.z().mean()))
                   : fit_kernel_ps(take_columns(data.x(), cols), data.z()).scores;
  return trim_mask_from_scores(scores, data.z(), t);
}

LateEstimate estimate(const EstimatorSpec& spec, const Dataset& data, std::uint64_t seed) {
  if (!is_known_estimator(spec.name)) {
    std::string msg = "unknown estimator '" + spec.name + "'; known estimators:";
    for (const std::string& name : registry()) msg += " " + name;
    fail(errc::unknown_estimator, msg);
  }
  if (!(spec.trim_threshold > 0.0 && spec.trim_threshold <= 100.0))
    fail(errc::bad_config, "trim threshold must lie in (0, 100]");

  LateEstimate out;
  const bool skip_trim = spec.name == "means" && !option_flag(spec, "trim_all");
  Dataset working = data;
  if (!skip_trim) {
    const std::vector<bool> keep = compute_trim_mask(data, spec.trim_threshold);
    working = data.select_rows(keep);
  }
  out.n_used = working.n();
  out.n_trimmed = data.n() - working.n();
  out.diagnostics["n1"] = static_cast<double>(working.n1());
  out.diagnostics["n0"] = static_cast<double>(working.n0());

  const std::size_t caret = spec.name.find('^');
  const std::string family = spec.name.substr(0, caret);
  const std::string suffix =
      caret == std::string::npos ? std::string() : spec.name.substr(caret + 1);

  if (family == "means") {
    run_means(working, out);
  } else if (family == "ipw") {
    run_ipw(working, backend_from(suffix), out);
  } else if (family == "dr") {
    run_dr(working, backend_from(suffix), out);
  } else if (family == "pairmatch") {
    run_pairmatch(working, suffix, out);
  } else if (family == "radmatch") {
    run_radmatch(working, suffix, false, spec, out);
  } else if (family == "radmatchx") {
    run_radmatch(working, suffix, true, spec, out);
  } else if (family == "reg" && suffix.empty()) {
    run_reg(working, out);
  } else if (family == "reg" && suffix == "kernel") {
    run_reg_kernel(working, out);
  } else if (family == "tsls") {
    run_tsls(working, out);
  } else {  // randforest
    run_randforest(working, spec, seed, out);
  }
  return out;
}

}  // namespace latelab
