#pragma once

#include <Eigen/Dense>
#include <functional>

namespace latelab {

enum class LinkFunction { probit, logit };

// Binary-link regression fit.  `separation` marks coefficient divergence
// (|beta| beyond 1e3 while the likelihood is still improving); such fits are
// returned with converged=false rather than thrown, so callers can decide how
// much to trust the scores.
struct GlmFit {
  Eigen::VectorXd coefficients;
  double loglik = 0.0;
  bool converged = false;
  int iterations = 0;
  LinkFunction link = LinkFunction::probit;
  bool separation = false;
};

struct GlmOptions {
  double gradient_tol = 1e-8;
  int max_iterations = 100;
  int max_step_halvings = 30;
  double separation_bound = 1e3;
};

// Newton–Raphson (Fisher scoring) with step-halving.  The design must carry
// its own intercept column.  Throws RankDeficientDesign if the design is not
// full column rank.
GlmFit fit_binary_glm(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                      LinkFunction link, const GlmOptions& opts = {});

// Exposed pieces of the likelihood so property tests can cross-check the
// analytic score against finite differences and probe concavity.
double glm_log_likelihood(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                          LinkFunction link, const Eigen::VectorXd& beta);
Eigen::VectorXd glm_score(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                          LinkFunction link, const Eigen::VectorXd& beta);
Eigen::VectorXd link_cdf(LinkFunction link, const Eigen::VectorXd& index);

// Least squares with a rank check (RankDeficientDesign on short rank).
Eigen::VectorXd fit_ols(const Eigen::MatrixXd& design, const Eigen::VectorXd& response);

// ---------------------------------------------------------------------------
// Derivative-free minimisation.

struct NelderMeadOptions {
  double diameter_tol = 1e-7;   // stop when the simplex diameter shrinks below this
  int max_iters_per_dim = 500;  // per run; the search restarts once from the best vertex
  double objective_floor = 1e-15;  // early exit for criteria with an exact zero minimum
  double init_step = 0.1;          // per-coordinate simplex edge: step*(1+|init_j|)
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double value = 0.0;
  bool converged = false;
  int evaluations = 0;
};

// Reflection/expansion/contraction simplex descent, restarted once from the
// best vertex.  Non-finite objective values during the search are treated as
// +inf (the vertex is rejected); a non-finite value at the initial point
// throws NonFiniteObjective.
NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& fn,
                             const Eigen::VectorXd& init, const NelderMeadOptions& opts = {});

// ---------------------------------------------------------------------------
// Continuously-updated GMM.

struct GmmFit {
  Eigen::VectorXd coefficients;
  double objective = 0.0;
  bool converged = false;
  int evaluations = 0;
};

struct GmmOptions {
  NelderMeadOptions simplex;
  double ridge = 1e-8;
};

// Per-observation moments for a candidate beta: n rows, m >= dim(beta) columns.
using MomentFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

// CUE criterion for a realized moment matrix: gbar' (Cov + ridge I)^{-1} gbar,
// with Cov the centered sample covariance of the moment rows.
double cue_objective(const Eigen::MatrixXd& moments, double ridge);

// argmin over beta of cue_objective(moment_fn(beta)).  The returned objective
// never exceeds the value at init.
GmmFit minimize_cue_gmm(const MomentFn& moment_fn, const Eigen::VectorXd& init,
                        const GmmOptions& opts = {});

}  // namespace latelab
