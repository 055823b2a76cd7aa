#include "latelab/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "latelab/errors.hpp"
#include "latelab/numopt.hpp"

namespace latelab {

namespace {

constexpr double kDistanceEps = 1e-12;  // keeps inverse-distance weights finite

double column_variance(const Eigen::VectorXd& v) {
  if (v.size() < 2) return 0.0;
  const double m = v.mean();
  return (v.array() - m).square().sum() / static_cast<double>(v.size() - 1);
}

std::vector<Eigen::Index> arm_rows(const Eigen::VectorXd& z, double value) {
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (z[i] == value) rows.push_back(i);
  }
  return rows;
}

// One coordinate per row; 1-D for score matching, 2-D when an extra
// standardized covariate participates.  Distances are plain Euclidean here —
// any column scaling happened when the coordinates were built.
struct Coordinates {
  Eigen::MatrixXd pts;  // n x dims

  double distance(Eigen::Index i, Eigen::Index k) const {
    if (pts.cols() == 1) return std::abs(pts(i, 0) - pts(k, 0));
    return (pts.row(i) - pts.row(k)).norm();
  }
};

Coordinates score_coordinates(const Eigen::VectorXd& scores) {
  Coordinates c;
  c.pts = scores;
  return c;
}

// Covariates scaled by 1/sd so squared gaps are weighed by inverse variances.
Coordinates covariate_coordinates(const Eigen::MatrixXd& x) {
  Coordinates c;
  c.pts.resize(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double var = column_variance(x.col(j));
    if (!(var > 0.0)) {
      fail(errc::zero_variance_covariate,
           "covariate column " + std::to_string(j) + " is constant; normalized distance undefined");
    }
    c.pts.col(j) = x.col(j) / std::sqrt(var);
  }
  return c;
}

Coordinates score_plus_covariate_coordinates(const Eigen::VectorXd& scores,
                                             const Eigen::VectorXd& extra) {
  const double var = column_variance(extra);
  if (!(var > 0.0)) {
    fail(errc::zero_variance_covariate, "extra matching covariate is constant");
  }
  Coordinates c;
  c.pts.resize(scores.size(), 2);
  c.pts.col(0) = scores;
  c.pts.col(1) = extra / std::sqrt(var);
  return c;
}

// Nearest opposite-arm row by exhaustive ascending scan; strict < keeps the
// lowest index on ties.  This is the reference semantics every fast path must
// reproduce bit for bit.
std::pair<Eigen::Index, double> nearest_in(const Coordinates& coords, Eigen::Index ref,
                                           const std::vector<Eigen::Index>& pool) {
  Eigen::Index best = pool.front();
  double best_dist = coords.distance(ref, pool.front());
  for (std::size_t t = 1; t < pool.size(); ++t) {
    const double d = coords.distance(ref, pool[t]);
    if (d < best_dist) {
      best_dist = d;
      best = pool[t];
    }
  }
  return {best, best_dist};
}

// Sorted-score nearest neighbour for the 1-D metric.  `order` holds pool
// positions sorted by (score, row index); only the runs adjacent to the
// insertion point can host the minimum, and within a run the first entry has
// the lowest row index.
struct SortedArm {
  std::vector<Eigen::Index> rows;    // pool rows sorted by (score, row)
  std::vector<double> scores;        // matching scores, ascending

  static SortedArm build(const Eigen::VectorXd& s, const std::vector<Eigen::Index>& pool) {
    SortedArm arm;
    arm.rows = pool;
    std::sort(arm.rows.begin(), arm.rows.end(), [&](Eigen::Index a, Eigen::Index b) {
      if (s[a] != s[b]) return s[a] < s[b];
      return a < b;
    });
    arm.scores.reserve(arm.rows.size());
    for (Eigen::Index r : arm.rows) arm.scores.push_back(s[r]);
    return arm;
  }

  std::pair<Eigen::Index, double> nearest(double q) const {
    const auto lo = std::lower_bound(scores.begin(), scores.end(), q);
    const std::ptrdiff_t at = lo - scores.begin();
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(scores.size());

    // Candidate runs: the one starting at `at` (scores >= q) and the one
    // ending at `at-1` (scores < q).
    double best_dist = std::numeric_limits<double>::infinity();
    Eigen::Index best = -1;
    auto consider_run_from = [&](std::ptrdiff_t pos) {
      // first element of the equal-score run containing pos
      std::ptrdiff_t start = pos;
      while (start > 0 && scores[start - 1] == scores[pos]) --start;
      const double d = std::abs(scores[pos] - q);
      if (d < best_dist || (d == best_dist && rows[start] < best)) {
        best_dist = d;
        best = rows[start];
      }
    };
    if (at < n) consider_run_from(at);
    if (at > 0) consider_run_from(at - 1);
    return {best, best_dist};
  }
};

MatchPlan pair_match_on(const Coordinates& coords, const Dataset& data) {
  const Eigen::VectorXd& z = data.z();
  const std::vector<Eigen::Index> pool1 = arm_rows(z, 1.0);
  const std::vector<Eigen::Index> pool0 = arm_rows(z, 0.0);

  MatchPlan plan;
  plan.sets.resize(data.n());
  plan.max_pair_distance = 0.0;

  const bool one_dim = coords.pts.cols() == 1;
  SortedArm sorted1, sorted0;
  if (one_dim) {
    sorted1 = SortedArm::build(coords.pts.col(0), pool1);
    sorted0 = SortedArm::build(coords.pts.col(0), pool0);
  }

  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const bool in_arm1 = z[i] == 1.0;
    std::pair<Eigen::Index, double> hit;
    if (one_dim) {
      hit = (in_arm1 ? sorted0 : sorted1).nearest(coords.pts(i, 0));
    } else {
      hit = nearest_in(coords, i, in_arm1 ? pool0 : pool1);
    }
    plan.sets[i].indices.assign(1, hit.first);
    plan.sets[i].weights.assign(1, 1.0);
    plan.max_pair_distance = std::max(plan.max_pair_distance, hit.second);
  }
  return plan;
}

Coordinates radius_coordinates(const Dataset& data, const Eigen::VectorXd& scores,
                               const std::string& extra_covariate) {
  if (extra_covariate.empty()) return score_coordinates(scores);
  const Eigen::Index col = data.covariate_index(extra_covariate);
  return score_plus_covariate_coordinates(scores, data.x().col(col));
}

}  // namespace

MatchPlan pair_match(const Dataset& data, MatchMetric metric, const Eigen::VectorXd* scores) {
  Coordinates coords;
  if (metric == MatchMetric::propensity_gap) {
    if (scores == nullptr || scores->size() != data.n()) {
      fail(errc::bad_argument, "propensity-gap matching needs one score per row");
    }
    coords = score_coordinates(*scores);
  } else {
    coords = covariate_coordinates(data.x());
  }
  MatchPlan plan = pair_match_on(coords, data);
  plan.metric = metric;
  return plan;
}

MatchPlan radius_match(const Dataset& data, const Eigen::VectorXd& scores,
                       double radius_multiplier, const std::string& extra_covariate) {
  if (scores.size() != data.n()) {
    fail(errc::bad_argument, "radius matching needs one score per row");
  }
  if (!(radius_multiplier > 0.0)) {
    fail(errc::bad_argument, "radius multiplier must be positive");
  }
  const Coordinates coords = radius_coordinates(data, scores, extra_covariate);
  MatchPlan plan = pair_match_on(coords, data);
  plan.metric = MatchMetric::propensity_gap;
  plan.radius = radius_multiplier * plan.max_pair_distance;

  const Eigen::VectorXd& z = data.z();
  const std::vector<Eigen::Index> pool1 = arm_rows(z, 1.0);
  const std::vector<Eigen::Index> pool0 = arm_rows(z, 0.0);

  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const std::vector<Eigen::Index>& pool = z[i] == 1.0 ? pool0 : pool1;
    std::vector<Eigen::Index> inside;
    std::vector<double> weights;
    double total = 0.0;
    for (Eigen::Index k : pool) {
      const double d = coords.distance(i, k);
      if (d <= plan.radius) {
        inside.push_back(k);
        const double w = 1.0 / (d + kDistanceEps);
        weights.push_back(w);
        total += w;
      }
    }
    if (inside.empty()) continue;  // keep the pair match from the first stage
    for (double& w : weights) w /= total;
    plan.sets[i].indices = std::move(inside);
    plan.sets[i].weights = std::move(weights);
  }
  return plan;
}

Eigen::VectorXd bias_correct(const MatchPlan& plan, const Dataset& data,
                             const Eigen::VectorXd& target) {
  if (target.size() != data.n()) {
    fail(errc::bad_argument, "bias-correction target length mismatch");
  }
  if (plan.sets.size() != static_cast<std::size_t>(data.n())) {
    fail(errc::bad_argument, "match plan does not cover the dataset");
  }

  // Arm-specific conditional-mean fits, evaluated at every row's covariates.
  // Column a holds the fit trained on arm a.
  Eigen::MatrixXd mhat(data.n(), 2);
  const Eigen::MatrixXd design = [&] {
    Eigen::MatrixXd d(data.n(), data.k() + 1);
    d.col(0).setOnes();
    d.rightCols(data.k()) = data.x();
    return d;
  }();
  const bool binary = is_binary01(target);

  for (int arm = 0; arm < 2; ++arm) {
    const std::vector<Eigen::Index> rows = arm_rows(data.z(), static_cast<double>(arm));
    Eigen::MatrixXd darm(rows.size(), design.cols());
    Eigen::VectorXd tarm(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      darm.row(r) = design.row(rows[r]);
      tarm[r] = target[rows[r]];
    }
    if (tarm.minCoeff() == tarm.maxCoeff()) {
      // Constant within the arm: the conditional mean is that constant, and
      // a probit fit would only diverge trying to say so.
      mhat.col(arm).setConstant(tarm[0]);
      continue;
    }
    if (binary) {
      const GlmFit fit = fit_binary_glm(darm, tarm, LinkFunction::probit);
      mhat.col(arm) = link_cdf(LinkFunction::probit, design * fit.coefficients);
    } else {
      const Eigen::VectorXd beta = fit_ols(darm, tarm);
      mhat.col(arm) = design * beta;
    }
  }

  Eigen::VectorXd contrasts(data.n());
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const int matched_arm = data.z()[i] == 1.0 ? 0 : 1;
    const MatchSet& set = plan.sets[i];
    double t_match = 0.0, m_ref = mhat(i, matched_arm), m_match = 0.0;
    for (std::size_t t = 0; t < set.indices.size(); ++t) {
      t_match += set.weights[t] * target[set.indices[t]];
      m_match += set.weights[t] * mhat(set.indices[t], matched_arm);
    }
    contrasts[i] = (target[i] - t_match) - (m_ref - m_match);
  }
  return contrasts;
}

}  // namespace latelab
