#include "latelab/propensity.hpp"

#include <cmath>
#include <limits>
#include <utility>

#include "latelab/dataset.hpp"
#include "latelab/errors.hpp"
#include "latelab/stats.hpp"

namespace latelab {

const char* ps_method_name(PsMethod method) {
  switch (method) {
    case PsMethod::probit: return "probit";
    case PsMethod::cbps: return "cbps";
    case PsMethod::local_constant: return "lc";
  }
  return "unknown";
}

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd design(x.rows(), x.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(x.cols()) = x;
  return design;
}

Eigen::VectorXd clamp_scores(Eigen::VectorXd scores) {
  return scores.cwiseMax(kScoreClamp).cwiseMin(1.0 - kScoreClamp);
}

namespace {

void check_ps_inputs(const Eigen::MatrixXd& x, const Eigen::VectorXd& z) {
  if (x.rows() != z.size()) fail(errc::bad_argument, "covariate rows mismatch instrument length");
  if (!is_binary01(z)) fail(errc::non_binary_indicator, "instrument must be 0/1");
}

}  // namespace

CbpsObjective::CbpsObjective(Eigen::MatrixXd design, Eigen::VectorXd response, double ridge)
    : design_(std::move(design)), z_(std::move(response)), ridge_(ridge) {
  const Eigen::Index n = design_.rows();
  const Eigen::Index p = design_.cols();
  if (n != z_.size()) fail(errc::bad_argument, "design rows mismatch response length");
  prods_.resize(n, p * (p + 1) / 2);
  Eigen::Index idx = 0;
  for (Eigen::Index j = 0; j < p; ++j) {
    for (Eigen::Index k = j; k < p; ++k) {
      prods_.col(idx++) = design_.col(j).cwiseProduct(design_.col(k));
    }
  }
}

double CbpsObjective::operator()(const Eigen::VectorXd& beta) const {
  const Eigen::Index n = design_.rows();
  const Eigen::Index p = design_.cols();
  const double nn = static_cast<double>(n);
  if (beta.size() != p) fail(errc::bad_argument, "coefficient length mismatch");

  const Eigen::VectorXd eta = design_ * beta;
  Eigen::VectorXd a(n), b(n), w(n), winv(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double pi = logistic_cdf(eta[i]);
    const double wi = pi * (1.0 - pi);
    a[i] = z_[i] - pi;
    b[i] = a[i] / wi;
    w[i] = wi;
    winv[i] = 1.0 / wi;
  }
  if (!a.allFinite() || !b.allFinite() || !winv.allFinite()) {
    return std::numeric_limits<double>::quiet_NaN();
  }

  Eigen::VectorXd sbar = design_.transpose() * a / nn;
  Eigen::VectorXd bbar = design_.transpose() * b / nn;

  // Model-implied variances of the two moment blocks as weighted sums of the
  // precomputed pair products. The cross-covariance is dropped: per
  // observation the balancing moment is exactly the score moment divided by
  // w, so the full stacked covariance is singular by construction and its
  // inverse discounts the balancing block as redundant. Weighting each block
  // by its own variance keeps both moment sets active.
  const Eigen::VectorXd us = prods_.transpose() * w / nn;
  const Eigen::VectorXd ub = prods_.transpose() * winv / nn;

  Eigen::MatrixXd cov_s(p, p), cov_b(p, p);
  Eigen::Index idx = 0;
  for (Eigen::Index j = 0; j < p; ++j) {
    for (Eigen::Index k = j; k < p; ++k, ++idx) {
      cov_s(j, k) = cov_s(k, j) = us[idx];
      cov_b(j, k) = cov_b(k, j) = ub[idx];
    }
  }
  cov_s.diagonal().array() += ridge_;
  cov_b.diagonal().array() += ridge_;
  if (!cov_s.allFinite() || !cov_b.allFinite() || !sbar.allFinite() || !bbar.allFinite()) {
    return std::numeric_limits<double>::quiet_NaN();
  }

  const Eigen::LDLT<Eigen::MatrixXd> ldlt_s(cov_s);
  const Eigen::LDLT<Eigen::MatrixXd> ldlt_b(cov_b);
  if (ldlt_s.info() != Eigen::Success || ldlt_b.info() != Eigen::Success) {
    fail(errc::singular_weighting, "moment covariance not factorizable even with ridge");
  }
  return sbar.dot(ldlt_s.solve(sbar)) + bbar.dot(ldlt_b.solve(bbar));
}

PropensityFit fit_probit_ps(const Eigen::MatrixXd& x, const Eigen::VectorXd& z) {
  check_ps_inputs(x, z);
  const Eigen::MatrixXd design = with_intercept(x);
  const GlmFit glm = fit_binary_glm(design, z, LinkFunction::probit);

  PropensityFit out;
  out.method = PsMethod::probit;
  out.coefficients = glm.coefficients;
  out.loglik = glm.loglik;
  out.converged = glm.converged;
  out.separation = glm.separation;
  out.evaluations = glm.iterations;
  out.scores = clamp_scores(link_cdf(LinkFunction::probit, design * glm.coefficients));
  return out;
}

PropensityFit fit_cbps_ps(const Eigen::MatrixXd& x, const Eigen::VectorXd& z) {
  check_ps_inputs(x, z);
  const Eigen::MatrixXd design = with_intercept(x);
  const GlmFit init = fit_binary_glm(design, z, LinkFunction::logit);

  const CbpsObjective objective(design, z);
  Eigen::VectorXd start = init.coefficients;
  // A diverging likelihood fit (separation) can push the balancing moments out
  // of floating-point range; restart from the origin, where they are bounded.
  if (!std::isfinite(objective(start))) start.setZero();

  const NelderMeadResult nm =
      nelder_mead([&](const Eigen::VectorXd& b) { return objective(b); }, start);

  PropensityFit out;
  out.method = PsMethod::cbps;
  out.coefficients = nm.x;
  out.gmm_objective = nm.value;
  out.converged = nm.converged;
  out.separation = init.separation;
  out.evaluations = nm.evaluations;
  out.loglik = glm_log_likelihood(design, z, LinkFunction::logit, nm.x);
  out.scores = clamp_scores(link_cdf(LinkFunction::logit, design * nm.x));
  return out;
}

PropensityFit fit_kernel_ps(const Eigen::MatrixXd& x, const Eigen::VectorXd& z,
                            const std::vector<double>& grid_factors) {
  check_ps_inputs(x, z);
  const Eigen::VectorXd h = lscv_bandwidth(x, z, KernelMode::local_constant, grid_factors);
  const KernelRegression model = KernelRegression::fit(x, z, h, KernelMode::local_constant);

  PropensityFit out;
  out.method = PsMethod::local_constant;
  out.bandwidth = h;
  out.converged = true;
  out.scores = clamp_scores(kr_fitted_at_training(model));
  return out;
}

PropensityFit fit_propensity(PsMethod method, const Eigen::MatrixXd& x,
                             const Eigen::VectorXd& z) {
  switch (method) {
    case PsMethod::probit: return fit_probit_ps(x, z);
    case PsMethod::cbps: return fit_cbps_ps(x, z);
    case PsMethod::local_constant: return fit_kernel_ps(x, z);
  }
  fail(errc::bad_argument, "unknown propensity method");
}

}  // namespace latelab
