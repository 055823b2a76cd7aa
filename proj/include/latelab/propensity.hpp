#pragma once

#include <Eigen/Dense>
#include <vector>

#include "latelab/nonparam.hpp"
#include "latelab/numopt.hpp"

namespace latelab {

// Fitted instrument-assignment scores are kept strictly inside (0, 1) so that
// inverse-probability weights and odds stay finite.
inline constexpr double kScoreClamp = 1e-6;

enum class PsMethod { probit, cbps, local_constant };

const char* ps_method_name(PsMethod method);

struct PropensityFit {
  PsMethod method = PsMethod::probit;
  Eigen::VectorXd scores;        // one fitted score per training row, clamped
  Eigen::VectorXd coefficients;  // empty for the kernel method
  double loglik = 0.0;           // binary log-likelihood at the coefficients
  double gmm_objective = 0.0;    // balancing criterion value (cbps only)
  Eigen::VectorXd bandwidth;     // kernel method only
  bool converged = false;
  bool separation = false;       // parametric fits: coefficient divergence
  int evaluations = 0;           // iterations (glm) or objective calls (cbps)
};

// [1 X] design; every parametric score model carries its own intercept.
Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& x);

Eigen::VectorXd clamp_scores(Eigen::VectorXd scores);

// Covariate-balancing objective: the logit score moments x~*(z - pi) stacked
// with the balancing moments x~*(z - pi)/(pi*(1-pi)), each block weighted by
// the inverse of its own model-implied variance and summed:
//   Q = sbar' A(beta)^{-1} sbar + bbar' B(beta)^{-1} bbar,
//   A = (1/n) sum w x~x~',  B = (1/n) sum x~x~'/w,  w = pi(1-pi).
// The cross-covariance between the blocks is deliberately dropped. Per
// observation the balancing moment equals the score moment divided by w, so
// the full stacked covariance x~x~' kron [w, 1; 1, 1/w] is singular by
// construction; inverting it (with a ridge) makes the criterion treat the
// balancing block as redundant given the score, and the minimizer then drifts
// away from balance. The block-diagonal weighting keeps both moment sets
// active: descending from the likelihood solution (where the score block is
// zero) must shed balancing-block mass, which is the documented behavior.
// The 1/w growth of B also keeps boundary scores unattractive. Per-pair
// covariate products are precomputed once so each evaluation reduces to a few
// weighted column sums, which is what makes the bootstrap affordable.
class CbpsObjective {
 public:
  CbpsObjective(Eigen::MatrixXd design, Eigen::VectorXd response, double ridge = 1e-8);

  // NaN when any moment or weight is non-finite (treated as +inf by the
  // minimizer).
  double operator()(const Eigen::VectorXd& beta) const;

  Eigen::Index dim() const { return design_.cols(); }

 private:
  Eigen::MatrixXd design_;  // n x p, intercept included
  Eigen::VectorXd z_;
  double ridge_;
  Eigen::MatrixXd prods_;  // n x p(p+1)/2 pairwise products of design columns
};

PropensityFit fit_probit_ps(const Eigen::MatrixXd& x, const Eigen::VectorXd& z);
PropensityFit fit_cbps_ps(const Eigen::MatrixXd& x, const Eigen::VectorXd& z);
PropensityFit fit_kernel_ps(const Eigen::MatrixXd& x, const Eigen::VectorXd& z,
                            const std::vector<double>& grid_factors = default_bandwidth_grid());

PropensityFit fit_propensity(PsMethod method, const Eigen::MatrixXd& x,
                             const Eigen::VectorXd& z);

}  // namespace latelab
