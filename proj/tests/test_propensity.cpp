#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "doctest.h"
#include "latelab/errors.hpp"
#include "latelab/propensity.hpp"
#include "latelab/rng.hpp"
#include "latelab/stats.hpp"

using namespace latelab;

namespace {

// Instrument with a confounded assignment: Pr(z=1) rises in both covariates.
struct PsFixture {
  Eigen::MatrixXd x;
  Eigen::VectorXd z;
};

PsFixture make_fixture(Eigen::Index n, std::uint64_t seed) {
  RngStream rng(seed, {72, 1});
  PsFixture f;
  f.x.resize(n, 2);
  f.z.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    f.x(i, 0) = rng.normal();
    f.x(i, 1) = rng.uniform01() < 0.4 ? 1.0 : 0.0;
    const double index = -0.3 + 0.8 * f.x(i, 0) + 0.6 * f.x(i, 1);
    f.z[i] = rng.uniform01() < norm_cdf(index) ? 1.0 : 0.0;
  }
  return f;
}

// Test-side moment matrix for the balancing criterion, built row by row the
// way the definition reads.
Eigen::MatrixXd oracle_cbps_moments(const Eigen::MatrixXd& design, const Eigen::VectorXd& z,
                                    const Eigen::VectorXd& beta) {
  const Eigen::Index n = design.rows();
  const Eigen::Index p = design.cols();
  Eigen::MatrixXd g(n, 2 * p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double pi = logistic_cdf(design.row(i).dot(beta));
    const double a = z[i] - pi;
    const double b = a / (pi * (1.0 - pi));
    for (Eigen::Index j = 0; j < p; ++j) {
      g(i, j) = design(i, j) * a;
      g(i, p + j) = design(i, j) * b;
    }
  }
  return g;
}

// First-principles balancing criterion: each moment block weighted by the
// inverse of its own model-implied variance, built with explicit per-row
// loops and solved by full-pivot LU.
double oracle_cbps_objective(const Eigen::MatrixXd& design, const Eigen::VectorXd& z,
                             const Eigen::VectorXd& beta, double ridge) {
  const Eigen::Index n = design.rows();
  const Eigen::Index p = design.cols();
  Eigen::VectorXd sbar = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd bbar = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd cov_s = Eigen::MatrixXd::Zero(p, p);
  Eigen::MatrixXd cov_b = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double pi = logistic_cdf(design.row(i).dot(beta));
    const double w = pi * (1.0 - pi);
    const double a = z[i] - pi;
    const Eigen::VectorXd xt = design.row(i).transpose();
    const Eigen::MatrixXd outer = xt * xt.transpose();
    sbar += a * xt;
    bbar += (a / w) * xt;
    cov_s += w * outer;
    cov_b += outer / w;
  }
  sbar /= static_cast<double>(n);
  bbar /= static_cast<double>(n);
  cov_s /= static_cast<double>(n);
  cov_b /= static_cast<double>(n);
  cov_s += ridge * Eigen::MatrixXd::Identity(p, p);
  cov_b += ridge * Eigen::MatrixXd::Identity(p, p);
  return sbar.dot(cov_s.fullPivLu().solve(sbar)) + bbar.dot(cov_b.fullPivLu().solve(bbar));
}

// Worst-case standardized difference of inverse-probability-weighted
// covariate means between the two instrument arms, in the same 100*|gap|/
// sqrt(s1^2+s0^2) units as the unweighted diagnostic.
double weighted_balance(const Eigen::MatrixXd& x, const Eigen::VectorXd& z,
                        const Eigen::VectorXd& scores) {
  double worst = 0.0;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    double m1 = 0.0, w1 = 0.0, m0 = 0.0, w0 = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      if (z[i] == 1.0) {
        m1 += x(i, j) / scores[i];
        w1 += 1.0 / scores[i];
      } else {
        m0 += x(i, j) / (1.0 - scores[i]);
        w0 += 1.0 / (1.0 - scores[i]);
      }
    }
    m1 /= w1;
    m0 /= w0;
    double v1 = 0.0, v0 = 0.0;
    Eigen::Index n1 = 0, n0 = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      if (z[i] == 1.0) {
        v1 += (x(i, j) - m1) * (x(i, j) - m1);
        ++n1;
      } else {
        v0 += (x(i, j) - m0) * (x(i, j) - m0);
        ++n0;
      }
    }
    v1 /= static_cast<double>(n1 - 1);
    v0 /= static_cast<double>(n0 - 1);
    worst = std::max(worst, 100.0 * std::abs(m1 - m0) / std::sqrt(v1 + v0));
  }
  return worst;
}

// L2 norm of the full stacked moment sample means (score block + balancing
// block) at a candidate coefficient vector.
double stacked_moment_norm(const Eigen::MatrixXd& design, const Eigen::VectorXd& z,
                           const Eigen::VectorXd& beta) {
  const Eigen::MatrixXd g = oracle_cbps_moments(design, z, beta);
  return g.colwise().mean().norm();
}

errc code_of_call(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& err) {
    return err.code();
  }
  return errc::bad_argument;
}

}  // namespace

TEST_SUITE("propensity") {

TEST_CASE("probit scores are the link applied to the fitted index, clamped") {
  const PsFixture f = make_fixture(120, 31001);
  const PropensityFit fit = fit_probit_ps(f.x, f.z);
  REQUIRE(fit.converged);
  REQUIRE(!fit.separation);
  CHECK(fit.method == PsMethod::probit);
  CHECK(fit.coefficients.size() == 3);

  const Eigen::MatrixXd design = with_intercept(f.x);
  for (Eigen::Index i = 0; i < f.z.size(); ++i) {
    const double p = norm_cdf(design.row(i).dot(fit.coefficients));
    const double clamped = std::min(std::max(p, kScoreClamp), 1.0 - kScoreClamp);
    CHECK(fit.scores[i] == doctest::Approx(clamped).epsilon(1e-14));
  }

  // First-order condition of the likelihood at the reported coefficients.
  const Eigen::VectorXd score =
      glm_score(design, f.z, LinkFunction::probit, fit.coefficients);
  CHECK(score.lpNorm<Eigen::Infinity>() <= 1e-5);
}

TEST_CASE("an extreme covariate pins the score to the clamp boundary") {
  // One far-out row pushes Phi(index) below 1e-6 without breaking the fit.
  Eigen::MatrixXd x(40, 1);
  Eigen::VectorXd z(40);
  for (Eigen::Index i = 0; i < 40; ++i) {
    x(i, 0) = -1.0 + 2.0 * static_cast<double>(i) / 39.0;
    z[i] = (i % 2 == 0 && x(i, 0) > -0.5) ? 1.0 : 0.0;
  }
  x(0, 0) = -40.0;  // index around -40 * slope: far beyond the clamp
  z[0] = 0.0;
  const PropensityFit fit = fit_probit_ps(x, z);
  CHECK(fit.scores.minCoeff() >= kScoreClamp);
  CHECK(fit.scores.maxCoeff() <= 1.0 - kScoreClamp);
  CHECK(fit.scores[0] == kScoreClamp);
}

TEST_CASE("independent instrument: scores hug the assignment share") {
  RngStream rng(5150, {72, 2});
  const Eigen::Index n = 600;
  Eigen::MatrixXd x(n, 2);
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = rng.normal();
    x(i, 1) = rng.normal();
    z[i] = rng.uniform01() < 0.35 ? 1.0 : 0.0;
  }
  const double share = z.mean();
  for (PsMethod method : {PsMethod::probit, PsMethod::cbps, PsMethod::local_constant}) {
    const PropensityFit fit = fit_propensity(method, x, z);
    CHECK(sample_sd(std::vector<double>(fit.scores.data(), fit.scores.data() + n)) <= 0.05);
    CHECK(std::abs(fit.scores.mean() - share) <= 0.05);
  }
}

TEST_CASE("no covariates: every method reduces to the assignment share") {
  Eigen::VectorXd z(10);
  z << 1, 0, 0, 1, 0, 0, 0, 1, 0, 0;  // share 0.3
  const Eigen::MatrixXd x(10, 0);
  for (PsMethod method : {PsMethod::probit, PsMethod::cbps, PsMethod::local_constant}) {
    const PropensityFit fit = fit_propensity(method, x, z);
    for (Eigen::Index i = 0; i < 10; ++i) {
      CHECK(fit.scores[i] == doctest::Approx(0.3).epsilon(1e-7));
    }
  }
}

TEST_CASE("constant covariate column is rejected as rank deficient") {
  PsFixture f = make_fixture(60, 31002);
  f.x.col(1).setConstant(2.5);
  CHECK(code_of_call([&] { fit_probit_ps(f.x, f.z); }) == errc::rank_deficient_design);
  CHECK(code_of_call([&] { fit_cbps_ps(f.x, f.z); }) == errc::rank_deficient_design);
}

TEST_CASE("shape and coding validation") {
  PsFixture f = make_fixture(30, 31003);
  CHECK(code_of_call([&] { fit_probit_ps(f.x.topRows(20), f.z); }) == errc::bad_argument);
  Eigen::VectorXd bad = f.z;
  bad[4] = 0.5;
  CHECK(code_of_call([&] { fit_kernel_ps(f.x, bad); }) == errc::non_binary_indicator);
}

TEST_CASE("fast balancing objective equals the first-principles criterion") {
  const PsFixture f = make_fixture(80, 31004);
  const Eigen::MatrixXd design = with_intercept(f.x);
  const CbpsObjective objective(design, f.z);

  RngStream rng(88, {72, 3});
  for (int rep = 0; rep < 6; ++rep) {
    Eigen::VectorXd beta(3);
    for (int j = 0; j < 3; ++j) beta[j] = rng.normal(0.0, 0.7);
    const double fast = objective(beta);
    const double generic = oracle_cbps_objective(design, f.z, beta, 1e-8);
    CHECK(std::abs(fast - generic) <= 1e-10 * (1.0 + std::abs(generic)));
  }

  // Scores so extreme that the balancing moment overflows: NaN, not a throw.
  Eigen::VectorXd wild(3);
  wild << 0.0, 900.0, 0.0;
  CHECK(std::isnan(objective(wild)));
}

TEST_CASE("saturated design: balancing solution coincides with the likelihood fit") {
  // x in {-1, +1} with an intercept spans both cells, so the likelihood fit
  // already balances exactly and the criterion has a zero at it.
  Eigen::MatrixXd x(40, 1);
  Eigen::VectorXd z(40);
  for (Eigen::Index i = 0; i < 40; ++i) {
    x(i, 0) = i < 20 ? -1.0 : 1.0;
    z[i] = (i < 20) ? (i % 4 == 0 ? 1.0 : 0.0)    // cell share 5/20
                    : (i % 2 == 0 ? 1.0 : 0.0);   // cell share 10/20
  }
  const Eigen::MatrixXd design = with_intercept(x);
  const GlmFit mle = fit_binary_glm(design, z, LinkFunction::logit);
  REQUIRE(mle.converged);
  const PropensityFit fit = fit_cbps_ps(x, z);
  CHECK(fit.converged);
  CHECK(fit.gmm_objective <= 1e-10);
  CHECK((fit.coefficients - mle.coefficients).lpNorm<Eigen::Infinity>() <= 1e-4);
}

TEST_CASE("misspecified model: balancing scores improve weighted covariate balance") {
  // Assignment depends on an asymmetric quadratic, so a logit fit on x alone
  // mis-weights the tails and leaves the weighted arm means apart.  The
  // balancing moments are built to close exactly that gap.
  RngStream rng(2718, {72, 4});
  const Eigen::Index n = 100;
  Eigen::MatrixXd x(n, 1);
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = rng.normal();
    const double p = logistic_cdf(-0.8 + 1.1 * x(i, 0) + 0.9 * x(i, 0) * x(i, 0));
    z[i] = rng.uniform01() < p ? 1.0 : 0.0;
  }
  const Eigen::MatrixXd design = with_intercept(x);
  const GlmFit mle = fit_binary_glm(design, z, LinkFunction::logit);
  const Eigen::VectorXd mle_scores =
      clamp_scores(link_cdf(LinkFunction::logit, design * mle.coefficients));
  const PropensityFit cbps = fit_cbps_ps(x, z);

  CHECK(weighted_balance(x, z, cbps.scores) < weighted_balance(x, z, mle_scores));

  // The stacked moment means cannot drift out: their norm at the solution is
  // no larger than at the likelihood init.
  CHECK(stacked_moment_norm(design, z, cbps.coefficients) <=
        stacked_moment_norm(design, z, mle.coefficients) + 1e-12);
}

TEST_CASE("stacked moment norm never exceeds its value at the likelihood init") {
  for (std::uint64_t seed : {401ULL, 402ULL, 403ULL}) {
    RngStream rng(seed, {72, 9});
    const Eigen::Index n = 250;
    Eigen::MatrixXd x(n, 2);
    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      x(i, 0) = rng.normal();
      x(i, 1) = rng.uniform01() < 0.3 ? 1.0 : 0.0;
      const double p =
          logistic_cdf(-0.6 + 0.9 * x(i, 0) + 0.5 * x(i, 1) + 0.6 * x(i, 0) * x(i, 0));
      z[i] = rng.uniform01() < p ? 1.0 : 0.0;
    }
    const Eigen::MatrixXd design = with_intercept(x);
    const GlmFit mle = fit_binary_glm(design, z, LinkFunction::logit);
    REQUIRE(mle.converged);
    const PropensityFit cbps = fit_cbps_ps(x, z);
    CHECK(stacked_moment_norm(design, z, cbps.coefficients) <=
          stacked_moment_norm(design, z, mle.coefficients) + 1e-12);
  }
}

TEST_CASE("balancing fit is bitwise deterministic across calls") {
  const PsFixture f = make_fixture(90, 31005);
  const PropensityFit a = fit_cbps_ps(f.x, f.z);
  const PropensityFit b = fit_cbps_ps(f.x, f.z);
  REQUIRE(a.scores.size() == b.scores.size());
  for (Eigen::Index i = 0; i < a.scores.size(); ++i) {
    CHECK(a.scores[i] == b.scores[i]);
  }
  CHECK(a.gmm_objective == b.gmm_objective);
}

TEST_CASE("probit scores are invariant to covariate column order") {
  const PsFixture f = make_fixture(100, 31006);
  Eigen::MatrixXd swapped(f.x.rows(), 2);
  swapped.col(0) = f.x.col(1);
  swapped.col(1) = f.x.col(0);
  const PropensityFit a = fit_probit_ps(f.x, f.z);
  const PropensityFit b = fit_probit_ps(swapped, f.z);
  for (Eigen::Index i = 0; i < a.scores.size(); ++i) {
    CHECK(a.scores[i] == doctest::Approx(b.scores[i]).epsilon(1e-6));
  }
}

TEST_CASE("kernel scores: grouped binary covariate reproduces group shares") {
  // Group shares far apart (0.95 vs 0.05): mixing the groups costs far more
  // squared error than the within-group variance saved, so cross-validation
  // must reject the only window wide enough to span both support points.
  Eigen::MatrixXd x(40, 1);
  Eigen::VectorXd z(40);
  for (Eigen::Index i = 0; i < 40; ++i) {
    x(i, 0) = i < 20 ? 0.0 : 1.0;
    z[i] = i < 20 ? (i == 0 ? 0.0 : 1.0)   // share 19/20 in group 0
                  : (i == 20 ? 1.0 : 0.0); // share 1/20 in group 1
  }
  const PropensityFit fit = fit_kernel_ps(x, z);
  REQUIRE(fit.bandwidth.size() == 1);
  REQUIRE(fit.bandwidth[0] < 1.0);
  for (Eigen::Index i = 0; i < 40; ++i) {
    CHECK(fit.scores[i] == doctest::Approx(i < 20 ? 0.95 : 0.05).epsilon(1e-12));
  }
}

TEST_CASE("kernel scores: ten-point hand-computed weighted means") {
  // With the returned bandwidth, every score must equal the plain weighted
  // mean computed with explicit loops.
  Eigen::MatrixXd x(10, 1);
  Eigen::VectorXd z(10);
  for (Eigen::Index i = 0; i < 10; ++i) {
    x(i, 0) = 0.3 * static_cast<double>(i);
    z[i] = (i % 3 == 0) ? 1.0 : 0.0;
  }
  const PropensityFit fit = fit_kernel_ps(x, z);
  REQUIRE(fit.bandwidth.size() == 1);
  const double h = fit.bandwidth[0];
  for (Eigen::Index i = 0; i < 10; ++i) {
    double num = 0.0, den = 0.0;
    for (Eigen::Index j = 0; j < 10; ++j) {
      const double u = (x(j, 0) - x(i, 0)) / h;
      const double w = u * u < 1.0 ? 0.75 * (1.0 - u * u) : 0.0;
      num += w * z[j];
      den += w;
    }
    const double expected = std::min(std::max(num / den, kScoreClamp), 1.0 - kScoreClamp);
    CHECK(fit.scores[i] == doctest::Approx(expected).epsilon(1e-13));
  }
}

TEST_CASE("independent instrument with a forced huge bandwidth gives the share") {
  RngStream rng(660, {72, 5});
  const Eigen::Index n = 100;
  Eigen::MatrixXd x(n, 1);
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = rng.normal();
    z[i] = i % 2 == 0 ? 1.0 : 0.0;  // share exactly 0.5
  }
  const PropensityFit fit = fit_kernel_ps(x, z, {1e9});
  for (Eigen::Index i = 0; i < n; ++i) {
    CHECK(std::abs(fit.scores[i] - 0.5) <= 1e-6);
  }
}

TEST_CASE("kernel scores stay inside the clamp even for pure groups") {
  Eigen::MatrixXd x(30, 1);
  Eigen::VectorXd z(30);
  for (Eigen::Index i = 0; i < 30; ++i) {
    x(i, 0) = i < 15 ? 0.0 : 1.0;
    z[i] = i < 15 ? 0.0 : 1.0;  // group shares 0 and 1 exactly
  }
  const PropensityFit fit = fit_kernel_ps(x, z);
  REQUIRE(fit.bandwidth[0] < 1.0);
  for (Eigen::Index i = 0; i < 30; ++i) {
    CHECK(fit.scores[i] == (i < 15 ? kScoreClamp : 1.0 - kScoreClamp));
  }
}

TEST_CASE("separation is reported, not thrown, and scores remain usable") {
  // Margins so thin that the slope must blow past the divergence bound while
  // the likelihood still improves.
  const Eigen::Index n = 40;
  Eigen::MatrixXd x(n, 1);
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double m = 0.002 * (1.0 + static_cast<double>(i % 10));
    x(i, 0) = (i % 2 == 0) ? m : -m;
    z[i] = (i % 2 == 0) ? 1.0 : 0.0;
  }
  const PropensityFit fit = fit_probit_ps(x, z);
  CHECK(fit.separation);
  CHECK(!fit.converged);
  CHECK(fit.scores.minCoeff() >= kScoreClamp);
  CHECK(fit.scores.maxCoeff() <= 1.0 - kScoreClamp);
}

}  // TEST_SUITE
