#include "latelab/numopt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "latelab/errors.hpp"
#include "latelab/stats.hpp"

namespace latelab {

namespace {

// Indices are clamped before any cdf/pdf evaluation: beyond ±37 the normal
// tail is below 1e-300 and the score ratios would hit denormals.
constexpr double kIndexCap = 37.0;

double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

void check_full_rank(const Eigen::MatrixXd& design, const char* who) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < design.cols()) {
    fail(errc::rank_deficient_design,
         std::string(who) + ": design rank " + std::to_string(qr.rank()) + " < " +
             std::to_string(design.cols()) + " columns");
  }
}

}  // namespace

Eigen::VectorXd link_cdf(LinkFunction link, const Eigen::VectorXd& index) {
  Eigen::VectorXd p(index.size());
  for (Eigen::Index i = 0; i < index.size(); ++i) {
    const double eta = std::clamp(index[i], -kIndexCap, kIndexCap);
    p[i] = (link == LinkFunction::probit) ? norm_cdf(eta) : logistic_cdf(eta);
  }
  return p;
}

double glm_log_likelihood(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                          LinkFunction link, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = design * beta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double e = std::clamp(eta[i], -kIndexCap, kIndexCap);
    if (link == LinkFunction::logit) {
      ll += response[i] * e - softplus(e);
    } else {
      // log Phi on whichever side the response selects; both stay accurate
      // through erfc for |e| <= 37.
      const double logp = response[i] == 1.0 ? std::log(norm_cdf(e)) : std::log(norm_cdf(-e));
      ll += logp;
    }
  }
  return ll;
}

Eigen::VectorXd glm_score(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                          LinkFunction link, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = design * beta;
  Eigen::VectorXd s(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double e = std::clamp(eta[i], -kIndexCap, kIndexCap);
    if (link == LinkFunction::logit) {
      s[i] = response[i] - logistic_cdf(e);
    } else {
      const double phi = norm_pdf(e);
      // Using Phi(-e) for the upper tail avoids the 1-Phi cancellation.
      s[i] = (response[i] == 1.0) ? phi / norm_cdf(e) : -phi / norm_cdf(-e);
    }
  }
  return design.transpose() * s;
}

GlmFit fit_binary_glm(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                      LinkFunction link, const GlmOptions& opts) {
  if (design.rows() != response.size()) {
    fail(errc::bad_argument, "glm design rows do not match response length");
  }
  for (Eigen::Index i = 0; i < response.size(); ++i) {
    if (response[i] != 0.0 && response[i] != 1.0) {
      fail(errc::non_binary_indicator, "glm response is not 0/1 at row " + std::to_string(i));
    }
  }
  check_full_rank(design, "fit_binary_glm");

  const Eigen::Index p = design.cols();
  GlmFit fit;
  fit.link = link;
  fit.coefficients = Eigen::VectorXd::Zero(p);
  fit.loglik = glm_log_likelihood(design, response, link, fit.coefficients);

  for (int iter = 1; iter <= opts.max_iterations; ++iter) {
    fit.iterations = iter;
    const Eigen::VectorXd eta = design * fit.coefficients;

    // Score and Fisher weights in one pass.
    Eigen::VectorXd s(eta.size());
    Eigen::VectorXd w(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      const double e = std::clamp(eta[i], -kIndexCap, kIndexCap);
      if (link == LinkFunction::logit) {
        const double pi = logistic_cdf(e);
        s[i] = response[i] - pi;
        w[i] = pi * (1.0 - pi);
      } else {
        const double phi = norm_pdf(e);
        const double lo = norm_cdf(e);
        const double hi = norm_cdf(-e);
        s[i] = (response[i] == 1.0) ? phi / lo : -phi / hi;
        w[i] = phi * phi / std::max(lo * hi, 1e-300);
      }
    }
    const Eigen::VectorXd grad = design.transpose() * s;
    if (grad.lpNorm<Eigen::Infinity>() < opts.gradient_tol) {
      fit.converged = true;
      break;
    }

    const Eigen::MatrixXd info =
        design.transpose() * w.asDiagonal() * design +
        1e-12 * Eigen::MatrixXd::Identity(p, p);
    const Eigen::VectorXd step = info.ldlt().solve(grad);
    if (!step.allFinite()) break;

    // Step-halving: back off while the likelihood would decrease.  The slack
    // absorbs summation roundoff near the optimum, where true improvements
    // drop below the representable resolution of the log-likelihood.
    const double slack = 1e-10 * (1.0 + std::fabs(fit.loglik));
    double t = 1.0;
    bool accepted = false;
    for (int h = 0; h <= opts.max_step_halvings; ++h) {
      const Eigen::VectorXd cand = fit.coefficients + t * step;
      const double ll = glm_log_likelihood(design, response, link, cand);
      if (std::isfinite(ll) && ll >= fit.loglik - slack) {
        fit.coefficients = cand;
        fit.loglik = ll;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;

    if (fit.coefficients.lpNorm<Eigen::Infinity>() > opts.separation_bound) {
      fit.separation = true;
      break;
    }
  }
  return fit;
}

Eigen::VectorXd fit_ols(const Eigen::MatrixXd& design, const Eigen::VectorXd& response) {
  if (design.rows() != response.size()) {
    fail(errc::bad_argument, "ols design rows do not match response length");
  }
  if (design.rows() < design.cols()) {
    fail(errc::rank_deficient_design, "fit_ols: fewer rows than columns");
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < design.cols()) {
    fail(errc::rank_deficient_design,
         "fit_ols: design rank " + std::to_string(qr.rank()) + " < " +
             std::to_string(design.cols()) + " columns");
  }
  return qr.solve(response);
}

// ---------------------------------------------------------------------------

NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& fn,
                             const Eigen::VectorXd& init, const NelderMeadOptions& opts) {
  const Eigen::Index p = init.size();
  if (p == 0) fail(errc::bad_argument, "nelder_mead needs at least one parameter");
  constexpr double kInf = std::numeric_limits<double>::infinity();

  NelderMeadResult result;
  result.evaluations = 0;

  auto eval = [&](const Eigen::VectorXd& x, bool at_init) {
    const double v = fn(x);
    ++result.evaluations;
    if (!std::isfinite(v)) {
      if (at_init) fail(errc::non_finite_objective, "objective not finite at the start point");
      return kInf;
    }
    return v;
  };

  std::vector<Eigen::VectorXd> vx(static_cast<std::size_t>(p) + 1);
  std::vector<double> vf(static_cast<std::size_t>(p) + 1);

  auto build_simplex = [&](const Eigen::VectorXd& center, bool first) {
    vx[0] = center;
    vf[0] = eval(center, first);
    for (Eigen::Index j = 0; j < p; ++j) {
      Eigen::VectorXd v = center;
      v[j] += opts.init_step * (1.0 + std::fabs(center[j]));
      vx[static_cast<std::size_t>(j) + 1] = v;
      vf[static_cast<std::size_t>(j) + 1] = eval(v, false);
    }
  };

  auto order = [&]() {
    std::vector<std::size_t> idx(vx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return vf[a] < vf[b];
    });
    std::vector<Eigen::VectorXd> nx(vx.size());
    std::vector<double> nf(vf.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      nx[i] = vx[idx[i]];
      nf[i] = vf[idx[i]];
    }
    vx.swap(nx);
    vf.swap(nf);
  };

  auto diameter = [&]() {
    double dia = 0.0;
    for (std::size_t a = 0; a < vx.size(); ++a) {
      for (std::size_t b = a + 1; b < vx.size(); ++b) {
        dia = std::max(dia, (vx[a] - vx[b]).norm());
      }
    }
    return dia;
  };

  const int max_iters = opts.max_iters_per_dim * static_cast<int>(p);
  bool converged = false;

  for (int run = 0; run < 2 && !converged; ++run) {
    build_simplex(run == 0 ? init : vx[0], run == 0);
    for (int iter = 0; iter < max_iters; ++iter) {
      order();
      if (vf[0] <= opts.objective_floor || diameter() < opts.diameter_tol) {
        converged = true;
        break;
      }

      const std::size_t worst = vx.size() - 1;
      Eigen::VectorXd centroid = Eigen::VectorXd::Zero(p);
      for (std::size_t i = 0; i < worst; ++i) centroid += vx[i];
      centroid /= static_cast<double>(worst);

      const Eigen::VectorXd xr = centroid + (centroid - vx[worst]);
      const double fr = eval(xr, false);
      if (fr < vf[0]) {
        const Eigen::VectorXd xe = centroid + 2.0 * (centroid - vx[worst]);
        const double fe = eval(xe, false);
        if (fe < fr) {
          vx[worst] = xe;
          vf[worst] = fe;
        } else {
          vx[worst] = xr;
          vf[worst] = fr;
        }
        continue;
      }
      if (fr < vf[worst - 1]) {
        vx[worst] = xr;
        vf[worst] = fr;
        continue;
      }
      // Contraction: outside when the reflection at least beat the worst
      // vertex, inside otherwise.
      const bool outside = fr < vf[worst];
      Eigen::VectorXd xc;
      if (outside) {
        xc = centroid + 0.5 * (centroid - vx[worst]);
      } else {
        xc = centroid - 0.5 * (centroid - vx[worst]);
      }
      const double fc = eval(xc, false);
      if (fc < std::min(fr, vf[worst])) {
        vx[worst] = xc;
        vf[worst] = fc;
        continue;
      }
      // Shrink toward the best vertex.
      for (std::size_t i = 1; i < vx.size(); ++i) {
        vx[i] = vx[0] + 0.5 * (vx[i] - vx[0]);
        vf[i] = eval(vx[i], false);
      }
    }
    order();
  }

  result.x = vx[0];
  result.value = vf[0];
  result.converged = converged;
  return result;
}

double cue_objective(const Eigen::MatrixXd& moments, double ridge) {
  const Eigen::Index n = moments.rows();
  const Eigen::Index m = moments.cols();
  if (n < 2) fail(errc::insufficient_data, "cue_objective needs at least 2 observations");
  const Eigen::VectorXd gbar = moments.colwise().mean();
  Eigen::MatrixXd cov = (moments.transpose() * moments) / static_cast<double>(n) -
                        gbar * gbar.transpose();
  cov += ridge * Eigen::MatrixXd::Identity(m, m);
  if (!cov.allFinite()) return std::numeric_limits<double>::quiet_NaN();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
  if (ldlt.info() != Eigen::Success) {
    fail(errc::singular_weighting, "moment covariance not factorizable even with ridge");
  }
  const Eigen::VectorXd sol = ldlt.solve(gbar);
  return gbar.dot(sol);
}

GmmFit minimize_cue_gmm(const MomentFn& moment_fn, const Eigen::VectorXd& init,
                        const GmmOptions& opts) {
  auto objective = [&](const Eigen::VectorXd& beta) {
    const Eigen::MatrixXd g = moment_fn(beta);
    if (g.cols() < init.size()) {
      fail(errc::bad_argument, "moment count below parameter count");
    }
    if (!g.allFinite()) return std::numeric_limits<double>::quiet_NaN();
    return cue_objective(g, opts.ridge);
  };
  const NelderMeadResult nm = nelder_mead(objective, init, opts.simplex);
  GmmFit fit;
  fit.coefficients = nm.x;
  fit.objective = nm.value;
  fit.converged = nm.converged;
  fit.evaluations = nm.evaluations;
  return fit;
}

}  // namespace latelab
