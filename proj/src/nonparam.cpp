#include "latelab/nonparam.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "latelab/errors.hpp"

namespace latelab {

double epanechnikov(double u) {
  const double u2 = u * u;
  return u2 >= 1.0 ? 0.0 : 0.75 * (1.0 - u2);
}

KernelRegression KernelRegression::fit(Eigen::MatrixXd x, Eigen::VectorXd y,
                                       Eigen::VectorXd bandwidth, KernelMode mode) {
  if (x.rows() != y.size()) fail(errc::bad_argument, "kernel training rows mismatch responses");
  if (x.rows() < 2) fail(errc::insufficient_data, "kernel regression needs >= 2 training rows");
  if (bandwidth.size() != x.cols()) {
    fail(errc::bad_argument, "bandwidth length does not match covariate count");
  }
  for (Eigen::Index j = 0; j < bandwidth.size(); ++j) {
    if (!(bandwidth[j] > 0.0)) fail(errc::bad_argument, "bandwidth components must be > 0");
  }
  KernelRegression m;
  m.x_ = std::move(x);
  m.y_ = std::move(y);
  m.bandwidth_ = std::move(bandwidth);
  m.mode_ = mode;
  m.scan_order_.resize(static_cast<std::size_t>(m.x_.cols()));
  std::iota(m.scan_order_.begin(), m.scan_order_.end(), Eigen::Index{0});
  std::stable_sort(m.scan_order_.begin(), m.scan_order_.end(),
                   [&](Eigen::Index a, Eigen::Index b) {
                     return m.bandwidth_[a] < m.bandwidth_[b];
                   });
  return m;
}

namespace {

// Product kernel weight of training row `row` against query `q` under
// bandwidth h, visiting dimensions in `order` so tight dimensions reject
// first.  Returns 0 as soon as one dimension falls out of the window.
inline double product_weight(const double* row, const double* q, const Eigen::VectorXd& h,
                             const std::vector<Eigen::Index>& order) {
  double w = 1.0;
  for (Eigen::Index j : order) {
    const double u = (row[j] - q[j]) / h[j];
    const double u2 = u * u;
    if (u2 >= 1.0) return 0.0;
    w *= 0.75 * (1.0 - u2);
  }
  return w;
}

struct LocalFit {
  double value = 0.0;
  bool any_weight = false;
};

// Local-constant / local-linear evaluation at query q with bandwidth h,
// optionally skipping one training row (LOO).  For local linear the weighted
// normal equations are solved on the centered design (1, x - q); degenerate
// windows (too few points, collinear within the window) fall back to the
// kernel-weighted mean.
LocalFit evaluate_local(const KernelRegression& m, const double* q, const Eigen::VectorXd& h,
                        Eigen::Index skip) {
  const Eigen::Index n = m.n();
  const Eigen::Index k = m.k();
  LocalFit out;

  if (m.mode() == KernelMode::local_constant) {
    double num = 0.0, den = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i == skip) continue;
      const double w = product_weight(m.x().row(i).data(), q, h, m.scan_order());
      if (w == 0.0) continue;
      num += w * m.y()[i];
      den += w;
    }
    if (den == 0.0) return out;
    out.value = num / den;
    out.any_weight = true;
    return out;
  }

  const Eigen::Index p = k + 1;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd xt(p);
  double wsum = 0.0, wy = 0.0;
  Eigen::Index in_window = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i == skip) continue;
    const double* row = m.x().row(i).data();
    const double w = product_weight(row, q, h, m.scan_order());
    if (w == 0.0) continue;
    xt[0] = 1.0;
    for (Eigen::Index j = 0; j < k; ++j) xt[j + 1] = row[j] - q[j];
    a.selfadjointView<Eigen::Lower>().rankUpdate(xt, w);
    b += (w * m.y()[i]) * xt;
    wsum += w;
    wy += w * m.y()[i];
    ++in_window;
  }
  if (wsum == 0.0) return out;
  out.any_weight = true;
  if (in_window >= p) {
    const Eigen::MatrixXd afull = a.selfadjointView<Eigen::Lower>();
    const Eigen::VectorXd sol = afull.ldlt().solve(b);
    if (sol.allFinite()) {
      const double resid = (afull * sol - b).lpNorm<Eigen::Infinity>();
      if (resid <= 1e-8 * (b.lpNorm<Eigen::Infinity>() + 1.0)) {
        out.value = sol[0];
        return out;
      }
    }
  }
  out.value = wy / wsum;  // degenerate window: weighted mean
  return out;
}

// Rows grouped by their joint pattern on binary (0/1) training columns.  For
// the product Epanechnikov, a pair differing in a binary column contributes
// the constant factor K(1/h_j) — zero whenever h_j <= 1 — so whole blocks of
// pairs can be folded into one factor or skipped outright.  With survey-style
// dummy covariates this turns the O(n^2·K) pair scans into near
// O(n^2/#patterns·K_cont) work while computing the same sums (only the FP
// accumulation order changes).
struct BinaryBlocks {
  bool usable = false;
  std::vector<Eigen::Index> binary_cols;
  std::vector<Eigen::Index> continuous_order;      // scan order minus binary dims
  std::vector<std::uint64_t> patterns;             // one bit per binary col
  std::vector<std::vector<Eigen::Index>> rows;     // ascending row ids per block
  std::vector<std::size_t> block_of;               // row -> block index
};

BinaryBlocks build_binary_blocks(const KernelRegression& m) {
  BinaryBlocks b;
  const Eigen::Index n = m.n();
  const Eigen::Index k = m.k();
  for (Eigen::Index j = 0; j < k; ++j) {
    bool bin = true;
    for (Eigen::Index i = 0; i < n && bin; ++i) {
      const double v = m.x()(i, j);
      bin = v == 0.0 || v == 1.0;
    }
    if (bin) b.binary_cols.push_back(j);
  }
  if (b.binary_cols.empty() || b.binary_cols.size() > 63) return b;
  for (Eigen::Index j : m.scan_order()) {
    if (std::find(b.binary_cols.begin(), b.binary_cols.end(), j) == b.binary_cols.end()) {
      b.continuous_order.push_back(j);
    }
  }
  std::map<std::uint64_t, std::vector<Eigen::Index>> groups;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::uint64_t pat = 0;
    for (std::size_t bit = 0; bit < b.binary_cols.size(); ++bit) {
      if (m.x()(i, b.binary_cols[bit]) == 1.0) pat |= (std::uint64_t{1} << bit);
    }
    groups[pat].push_back(i);
  }
  if (static_cast<Eigen::Index>(groups.size()) * 2 > n) return b;  // no grouping to exploit
  b.block_of.resize(static_cast<std::size_t>(n));
  for (auto& [pat, ids] : groups) {
    for (const Eigen::Index i : ids) b.block_of[static_cast<std::size_t>(i)] = b.patterns.size();
    b.patterns.push_back(pat);
    b.rows.push_back(std::move(ids));
  }
  b.usable = true;
  return b;
}

// Adds every unordered pair's local-constant contribution to num/den (both
// endpoints), equivalent to the plain i<j double loop.  Self weights are the
// caller's business.
void accumulate_lc_pairs(const KernelRegression& m, const BinaryBlocks& blocks,
                         const Eigen::VectorXd& h, Eigen::VectorXd& num, Eigen::VectorXd& den) {
  const Eigen::Index n = m.n();
  if (!blocks.usable) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double* ri = m.x().row(i).data();
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double w = product_weight(m.x().row(j).data(), ri, h, m.scan_order());
        if (w == 0.0) continue;
        num[i] += w * m.y()[j];
        den[i] += w;
        num[j] += w * m.y()[i];
        den[j] += w;
      }
    }
    return;
  }

  // Per binary column: kernel value of a one-step difference under h.
  std::vector<double> one_step(blocks.binary_cols.size());
  for (std::size_t bit = 0; bit < blocks.binary_cols.size(); ++bit) {
    one_step[bit] = epanechnikov(1.0 / h[blocks.binary_cols[bit]]);
  }
  const std::size_t nb = blocks.rows.size();
  for (std::size_t a = 0; a < nb; ++a) {
    for (std::size_t b2 = a; b2 < nb; ++b2) {
      double factor = 1.0;
      std::uint64_t diff = blocks.patterns[a] ^ blocks.patterns[b2];
      for (std::size_t bit = 0; diff != 0 && factor != 0.0; ++bit, diff >>= 1) {
        if (diff & 1) factor *= one_step[bit];
      }
      if (factor == 0.0) continue;
      for (std::size_t bit = 0; bit < blocks.binary_cols.size(); ++bit) {
        if (((blocks.patterns[a] ^ blocks.patterns[b2]) >> bit & 1) == 0) factor *= 0.75;
      }
      const auto& ra = blocks.rows[a];
      const auto& rb = blocks.rows[b2];
      for (std::size_t ia = 0; ia < ra.size(); ++ia) {
        const Eigen::Index i = ra[ia];
        const double* ri = m.x().row(i).data();
        const std::size_t jb0 = (a == b2) ? ia + 1 : 0;
        for (std::size_t jb = jb0; jb < rb.size(); ++jb) {
          const Eigen::Index j = rb[jb];
          const double* rj = m.x().row(j).data();
          double w = factor;
          for (Eigen::Index c : blocks.continuous_order) {
            const double u = (rj[c] - ri[c]) / h[c];
            const double u2 = u * u;
            if (u2 >= 1.0) {
              w = 0.0;
              break;
            }
            w *= 0.75 * (1.0 - u2);
          }
          if (w == 0.0) continue;
          num[i] += w * m.y()[j];
          den[i] += w;
          num[j] += w * m.y()[i];
          den[j] += w;
        }
      }
    }
  }
}

// Single-query local-constant evaluation under the block decomposition; the
// query is a training row, so its binary pattern is known.  Same result as
// evaluate_local in LC mode, summed block by block.
LocalFit lc_query_blocked(const KernelRegression& m, const BinaryBlocks& blocks,
                          const double* q, std::uint64_t q_pat, const Eigen::VectorXd& h,
                          Eigen::Index skip) {
  LocalFit out;
  const std::size_t nbits = blocks.binary_cols.size();
  std::vector<double> one_step(nbits);
  for (std::size_t bit = 0; bit < nbits; ++bit) {
    one_step[bit] = epanechnikov(1.0 / h[blocks.binary_cols[bit]]);
  }
  double num = 0.0, den = 0.0;
  for (std::size_t b = 0; b < blocks.rows.size(); ++b) {
    double factor = 1.0;
    const std::uint64_t diff = blocks.patterns[b] ^ q_pat;
    for (std::size_t bit = 0; bit < nbits && factor != 0.0; ++bit) {
      factor *= (diff >> bit & 1) ? one_step[bit] : 0.75;
    }
    if (factor == 0.0) continue;
    for (const Eigen::Index j : blocks.rows[b]) {
      if (j == skip) continue;
      const double* rj = m.x().row(j).data();
      double w = factor;
      for (Eigen::Index c : blocks.continuous_order) {
        const double u = (rj[c] - q[c]) / h[c];
        const double u2 = u * u;
        if (u2 >= 1.0) {
          w = 0.0;
          break;
        }
        w *= 0.75 * (1.0 - u2);
      }
      if (w == 0.0) continue;
      num += w * m.y()[j];
      den += w;
    }
  }
  if (den == 0.0) return out;
  out.value = num / den;
  out.any_weight = true;
  return out;
}

double global_mean_excluding(const Eigen::VectorXd& y, Eigen::Index skip) {
  double s = 0.0;
  Eigen::Index cnt = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (i == skip) continue;
    s += y[i];
    ++cnt;
  }
  return s / static_cast<double>(cnt);
}

// Fallback ladder shared by robust prediction and the LOO criterion: double
// the bandwidth up to 10 times, then use the global (training) mean.
double predict_with_ladder(const KernelRegression& m, const double* q, Eigen::Index skip,
                           bool* used_fallback) {
  LocalFit fit = evaluate_local(m, q, m.bandwidth(), skip);
  if (fit.any_weight) return fit.value;
  if (used_fallback) *used_fallback = true;
  Eigen::VectorXd h = m.bandwidth();
  for (int attempt = 0; attempt < 10; ++attempt) {
    h *= 2.0;
    fit = evaluate_local(m, q, h, skip);
    if (fit.any_weight) return fit.value;
  }
  return global_mean_excluding(m.y(), skip);
}

}  // namespace

double kr_predict(const KernelRegression& model, const Eigen::RowVectorXd& x0) {
  if (x0.size() != model.k()) fail(errc::bad_argument, "query dimension mismatch");
  const LocalFit fit = evaluate_local(model, x0.data(), model.bandwidth(), -1);
  if (!fit.any_weight) {
    fail(errc::empty_neighborhood, "no training point has positive kernel weight at the query");
  }
  return fit.value;
}

double kr_predict_robust(const KernelRegression& model, const Eigen::RowVectorXd& x0,
                         long* fallbacks) {
  if (x0.size() != model.k()) fail(errc::bad_argument, "query dimension mismatch");
  bool used = false;
  const double v = predict_with_ladder(model, x0.data(), -1, &used);
  if (used && fallbacks) ++(*fallbacks);
  return v;
}

Eigen::VectorXd kr_fitted_at_training(const KernelRegression& model) {
  const Eigen::Index n = model.n();
  Eigen::VectorXd out(n);
  if (model.mode() == KernelMode::local_constant) {
    // Symmetric accumulation: w_ij = w_ji, so each unordered pair is computed
    // once.  The self weight 0.75^K is always positive, hence no fallback.
    Eigen::VectorXd num = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd den = Eigen::VectorXd::Zero(n);
    const double self_w = std::pow(0.75, static_cast<double>(model.k()));
    for (Eigen::Index i = 0; i < n; ++i) {
      num[i] += self_w * model.y()[i];
      den[i] += self_w;
    }
    accumulate_lc_pairs(model, build_binary_blocks(model), model.bandwidth(), num, den);
    for (Eigen::Index i = 0; i < n; ++i) out[i] = num[i] / den[i];
    return out;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    out[i] = predict_with_ladder(model, model.x().row(i).data(), -1, nullptr);
  }
  return out;
}

Eigen::VectorXd silverman_baseline(const Eigen::MatrixXd& x) {
  const Eigen::Index n = x.rows();
  if (n < 2) fail(errc::insufficient_data, "silverman baseline needs >= 2 rows");
  const double scale = 1.06 * std::pow(static_cast<double>(n), -0.2);
  Eigen::VectorXd h(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double m = x.col(j).mean();
    const double var = (x.col(j).array() - m).square().sum() / static_cast<double>(n - 1);
    const double sd = std::sqrt(var);
    h[j] = sd > 0.0 ? scale * sd : 1.0;
  }
  return h;
}

double lscv_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, KernelMode mode,
                      const Eigen::VectorXd& bandwidth) {
  const KernelRegression m = KernelRegression::fit(x, y, bandwidth, mode);
  const Eigen::Index n = m.n();

  if (mode == KernelMode::local_constant) {
    Eigen::VectorXd num = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd den = Eigen::VectorXd::Zero(n);
    const BinaryBlocks blocks = build_binary_blocks(m);
    accumulate_lc_pairs(m, blocks, m.bandwidth(), num, den);
    double score = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double pred;
      if (den[i] > 0.0) {
        pred = num[i] / den[i];
      } else if (blocks.usable) {
        // Same ladder as predict_with_ladder, evaluated block-wise.
        Eigen::VectorXd h = m.bandwidth();
        LocalFit fit;
        for (int attempt = 0; attempt < 10 && !fit.any_weight; ++attempt) {
          h *= 2.0;
          fit = lc_query_blocked(m, blocks, m.x().row(i).data(),
                                 blocks.patterns[blocks.block_of[static_cast<std::size_t>(i)]], h, i);
        }
        pred = fit.any_weight ? fit.value : global_mean_excluding(m.y(), i);
      } else {
        bool used = false;
        pred = predict_with_ladder(m, m.x().row(i).data(), i, &used);
      }
      const double e = y[i] - pred;
      score += e * e;
    }
    return score;
  }

  double score = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    bool used = false;
    const double pred = predict_with_ladder(m, m.x().row(i).data(), i, &used);
    const double e = y[i] - pred;
    score += e * e;
  }
  return score;
}

Eigen::VectorXd lscv_bandwidth(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                               KernelMode mode, const std::vector<double>& grid_factors) {
  if (grid_factors.empty()) fail(errc::bad_argument, "bandwidth grid is empty");
  for (double f : grid_factors) {
    if (!(f > 0.0)) fail(errc::bad_argument, "bandwidth grid factors must be > 0");
  }
  std::vector<double> grid = grid_factors;
  std::sort(grid.begin(), grid.end());

  const Eigen::VectorXd base = silverman_baseline(x);
  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_h;
  bool found = false;
  for (double f : grid) {
    const Eigen::VectorXd h = f * base;
    const double score = lscv_objective(x, y, mode, h);
    if (std::isfinite(score) && score < best) {
      best = score;
      best_h = h;
      found = true;
    }
  }
  if (!found) {
    fail(errc::all_candidates_degenerate, "every bandwidth candidate produced a non-finite CV score");
  }
  return best_h;
}

}  // namespace latelab
