#include "latelab/emcs.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <thread>
#include <utility>

#include "latelab/csv.hpp"
#include "latelab/errors.hpp"
#include "latelab/inference.hpp"
#include "latelab/numopt.hpp"
#include "latelab/rng.hpp"
#include "latelab/stats.hpp"

namespace latelab {

namespace {

constexpr std::uint64_t kBaseTag = 0x62617365;    // base synthesis
constexpr std::uint64_t kDesignTag = 0x64736e67;  // population design
constexpr std::uint64_t kRepTag = 0x72657073;     // replication loop

constexpr double kPointCap = 1e10;    // |theta| beyond this is an estimation blow-up
constexpr double kSeCapFactor = 150;  // reported se vs Monte Carlo sd sanity bound

const double kNaN = std::numeric_limits<double>::quiet_NaN();

// Column layout of the base covariates.  The fourth birth quarter is the
// omitted category, otherwise the dummies would sum to a constant.
const std::vector<std::string>& base_covariate_names() {
  static const std::vector<std::string> names = {"age",      "agefirst", "afram",   "otherrace",
                                                 "quarter1", "quarter2", "quarter3"};
  return names;
}

Eigen::VectorXd subset(const Eigen::VectorXd& v, const std::vector<Eigen::Index>& rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = v[rows[static_cast<std::size_t>(i)]];
  return out;
}

Eigen::MatrixXd subset_rows(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (Eigen::Index i = 0; i < out.rows(); ++i) out.row(i) = m.row(rows[static_cast<std::size_t>(i)]);
  return out;
}

// Flexible design for the heterogeneous-effect models: the base columns plus
// squares and cubes of the two age variables and their interactions with the
// African-American indicator.  No intercept; callers prepend one.
Eigen::MatrixXd het_design(const Eigen::MatrixXd& x) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd h(n, x.cols() + 6);
  h.leftCols(x.cols()) = x;
  const auto age = x.col(0).array();
  const auto afb = x.col(1).array();
  const auto black = x.col(2).array();
  Eigen::Index c = x.cols();
  h.col(c++) = age.square();
  h.col(c++) = age.cube();
  h.col(c++) = afb.square();
  h.col(c++) = afb.cube();
  h.col(c++) = (age * black).matrix();
  h.col(c++) = (afb * black).matrix();
  return h;
}

Eigen::MatrixXd with_intercept_col(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd d(x.rows(), x.cols() + 1);
  d.col(0).setOnes();
  d.rightCols(x.cols()) = x;
  return d;
}

// The selective designs can push an entire dummy category into one instrument
// arm, leaving columns of the flexible design constant in the fitting
// subsample.  Such columns are unidentifiable there: drop them for the fit
// and give them a zero coefficient (column 0, the intercept, always stays).
struct SparseFit {
  std::vector<Eigen::Index> kept;
  Eigen::MatrixXd design;

  SparseFit(const Eigen::MatrixXd& full, const std::vector<Eigen::Index>& rows) {
    for (Eigen::Index c = 0; c < full.cols(); ++c) {
      if (c > 0) {
        double lo = full(rows.front(), c), hi = lo;
        for (const Eigen::Index r : rows) {
          lo = std::min(lo, full(r, c));
          hi = std::max(hi, full(r, c));
        }
        if (lo == hi) continue;
      }
      kept.push_back(c);
    }
    design.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(kept.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < kept.size(); ++j)
        design(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            full(rows[i], kept[j]);
  }

  Eigen::VectorXd expand(const Eigen::VectorXd& beta, Eigen::Index full_cols) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(full_cols);
    for (std::size_t j = 0; j < kept.size(); ++j) out[kept[j]] = beta[static_cast<Eigen::Index>(j)];
    return out;
  }
};

// Rank rows by `key` ascending: best gets 1, ties share the average position,
// non-finite keys get NaN.
void assign_ranks(std::vector<MetricsRow>& rows, double (*key)(const MetricsRow&),
                  double MetricsRow::* slot) {
  std::vector<std::pair<double, std::size_t>> order;
  order.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double k = key(rows[i]);
    if (std::isfinite(k)) order.emplace_back(k, i);
    else rows[i].*slot = kNaN;
  }
  std::sort(order.begin(), order.end());
  std::size_t pos = 0;
  while (pos < order.size()) {
    std::size_t end = pos;
    while (end + 1 < order.size() && order[end + 1].first == order[pos].first) ++end;
    const double avg = 0.5 * static_cast<double>(pos + end) + 1.0;  // 1-based
    for (std::size_t j = pos; j <= end; ++j) rows[order[j].second].*slot = avg;
    pos = end + 1;
  }
}

// --- config parsing helpers -------------------------------------------------

std::string trim_ws(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

long long parse_ll(const std::string& key, const std::string& value) {
  long long out = 0;
  const char* begin = value.data();
  const char* end = begin + value.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  if (ec != std::errc() || ptr != end)
    fail(errc::bad_config, "config key '" + key + "' needs an integer, got '" + value + "'");
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const char* begin = value.data();
  const char* end = begin + value.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  if (ec != std::errc() || ptr != end)
    fail(errc::bad_config, "config key '" + key + "' needs a non-negative integer, got '" + value + "'");
  return out;
}

double parse_dbl(const std::string& key, const std::string& value) {
  try {
    return parse_double(value);
  } catch (const Error&) {
    fail(errc::bad_config, "config key '" + key + "' needs a number, got '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true") return true;
  if (value == "0" || value == "false") return false;
  fail(errc::bad_config, "config key '" + key + "' needs 0/1/true/false, got '" + value + "'");
}

std::vector<std::string> split_csv_list(const std::string& value) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, ',')) {
    item = trim_ws(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string sanitize_for_filename(std::string name) {
  for (char& c : name)
    if (c == '^') c = '-';
  return name;
}

}  // namespace

// ---------------------------------------------------------------------------
// Synthetic base population.

BaseSample synth_base_population(Eigen::Index size, std::uint64_t seed) {
  if (size < 10000) fail(errc::bad_argument, "base population needs at least 10000 rows");

  RngStream rng(seed, {kBaseTag});
  BaseSample base;
  base.covariate_names = base_covariate_names();
  base.x.resize(size, 7);
  base.weeks.resize(size);
  base.workpay.resize(size);
  base.d.resize(size);
  base.z.resize(size);

  for (Eigen::Index i = 0; i < size; ++i) {
    // Age in decades, truncated to the 21-35 window the designs target, and
    // age at first birth below it by construction.
    const double age = 3.0 + 0.35 * rng.normal_truncated((2.1 - 3.0) / 0.35, (3.5 - 3.0) / 0.35);
    const double afb_hi = std::min(3.2, age - 0.1);
    const double afb = 2.0 + 0.29 * rng.normal_truncated((1.5 - 2.0) / 0.29, (afb_hi - 2.0) / 0.29);
    const double race_u = rng.uniform01();
    const double afram = race_u < 0.12 ? 1.0 : 0.0;
    const double other = (!afram && race_u < 0.30) ? 1.0 : 0.0;
    const double qu = rng.uniform01();
    const double q1 = qu < 0.24 ? 1.0 : 0.0;
    const double q2 = (qu >= 0.24 && qu < 0.48) ? 1.0 : 0.0;
    const double q3 = (qu >= 0.48 && qu < 0.75) ? 1.0 : 0.0;
    base.x.row(i) << age, afb, afram, other, q1, q2, q3;

    // Labor supply: a latent index shared (with different signs) by the
    // treatment assignment below, so treatment is confounded with both
    // outcomes through the covariates.
    const double work_index = 0.176 - 0.35 * (age - 3.0) + 0.8 * (afb - 2.0) -
                              0.3 * (afram - 0.12) + 0.1 * (other - 0.18) + 0.05 * (q1 - 0.24);
    const bool employed = work_index + rng.normal() > 0.0;
    double weeks = 0.0;
    if (employed) {
      // Right-skewed positive part, capped at a full-year ceiling.
      weeks = std::min(5.2, 0.4 + 0.8 * std::max(0.0, work_index + 1.1) + rng.gamma(1.4, 1.2));
    }
    base.weeks[i] = weeks;
    base.workpay[i] = employed ? 1.0 : 0.0;

    const double treat_index = -0.25 + 0.5 * (age - 3.0) - 0.9 * (afb - 2.0) +
                               0.25 * (afram - 0.12) + 0.02 * (other - 0.18);
    double d = treat_index + rng.normal() > 0.0 ? 1.0 : 0.0;

    // Rare, nearly random instrument; instrument-positive rows are always
    // treated (a twin at the second birth mechanically implies a third child).
    const double inst_index = -2.38 + 0.05 * (age - 3.0) + 0.08 * (afb - 2.0) +
                              0.06 * (afram - 0.12) + 0.03 * (other - 0.18);
    const double z = inst_index + rng.normal() > 0.0 ? 1.0 : 0.0;
    if (z > 0.5) d = 1.0;
    base.d[i] = d;
    base.z[i] = z;
  }
  return base;
}

// ---------------------------------------------------------------------------
// Design grid.

const std::vector<DgpSpec>& dgp_table() {
  static const std::vector<DgpSpec> table = [] {
    // (heterogeneity, strong selection, observed strength) for ids 1-8; ids
    // 9-16 repeat them with a binary outcome, 17-32 repeat 1-16 at n=2000.
    constexpr bool flags[8][3] = {
        {false, false, true},  {true, false, false}, {false, true, true},  {false, false, false},
        {true, true, false},   {true, false, true},  {false, true, false}, {true, true, true},
    };
    std::vector<DgpSpec> t;
    t.reserve(32);
    for (int id = 1; id <= 32; ++id) {
      const int block = (id - 1) % 8;
      DgpSpec s;
      s.dgp_id = id;
      s.heterogeneity = flags[block][0];
      s.strong_selection = flags[block][1];
      s.observed_strength = flags[block][2];
      s.binary_outcome = ((id - 1) / 8) % 2 == 1;
      s.sample_size = id > 16 ? 2000 : 1000;
      t.push_back(s);
    }
    return t;
  }();
  return table;
}

DgpSpec dgp_from_id(int dgp_id) {
  if (dgp_id < 1 || dgp_id > 32)
    fail(errc::bad_argument, "dgp id must be in 1..32, got " + std::to_string(dgp_id));
  return dgp_table()[static_cast<std::size_t>(dgp_id - 1)];
}

// ---------------------------------------------------------------------------
// Matching without replacement.

std::vector<std::vector<Eigen::Index>> matching_without_replacement(
    const Eigen::MatrixXd& references, const Eigen::MatrixXd& donors, int m) {
  if (m < 1) fail(errc::bad_argument, "match quota must be at least 1");
  if (references.cols() != donors.cols())
    fail(errc::bad_argument, "references and donors need the same columns");
  const Eigen::Index n_ref = references.rows();
  const Eigen::Index n_don = donors.rows();
  if (n_don < static_cast<Eigen::Index>(m) * n_ref)
    fail(errc::insufficient_donors,
         "need " + std::to_string(static_cast<long long>(m) * n_ref) + " donors, have " +
             std::to_string(n_don));

  const Eigen::Index k = references.cols();
  std::vector<bool> claimed(static_cast<std::size_t>(n_don), false);
  std::vector<std::vector<Eigen::Index>> sets(static_cast<std::size_t>(n_ref));
  std::vector<std::pair<double, Eigen::Index>> cand;
  cand.reserve(static_cast<std::size_t>(n_don));

  for (Eigen::Index r = 0; r < n_ref; ++r) {
    cand.clear();
    for (Eigen::Index j = 0; j < n_don; ++j) {
      if (claimed[static_cast<std::size_t>(j)]) continue;
      double d2 = 0.0;
      for (Eigen::Index c = 0; c < k; ++c) {
        const double diff = donors(j, c) - references(r, c);
        d2 += diff * diff;
      }
      cand.emplace_back(d2, j);
    }
    // (distance, index) ordering: ties go to the lower donor index.
    auto mid = cand.begin() + m;
    std::nth_element(cand.begin(), mid - 1, cand.end());
    std::sort(cand.begin(), mid);
    auto& out = sets[static_cast<std::size_t>(r)];
    out.reserve(static_cast<std::size_t>(m));
    for (auto it = cand.begin(); it != mid; ++it) {
      out.push_back(it->second);
      claimed[static_cast<std::size_t>(it->second)] = true;
    }
  }
  return sets;
}

int rescale_match_quota(Eigen::Index n_references, Eigen::Index n_donors, int discard_per_ref) {
  if (n_references < 1) fail(errc::bad_argument, "quota rescaling needs at least one reference");
  if (discard_per_ref < 0) fail(errc::bad_argument, "discard quota cannot be negative");
  const double r = static_cast<double>(n_references);
  const double d = static_cast<double>(n_donors);
  for (int m = 1;; ++m) {
    const double assigned = static_cast<double>(m) * r;
    const double population = d - discard_per_ref * assigned;
    if (assigned > d || population <= assigned) break;  // donor pool exhausted
    const double share = assigned / population;
    if (share > 0.55) break;  // the share grid jumped over the window
    if (share >= 0.45) return m;
  }
  fail(errc::insufficient_donors, "no match quota reaches an instrument share in [0.45, 0.55]");
}

// ---------------------------------------------------------------------------
// Population construction.

namespace {

// Columns scaled to unit sample sd (computed over all rows handed in), so the
// matching metric weighs each covariate equally.
Eigen::MatrixXd sd_scaled(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out = x;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double m = x.col(c).mean();
    const double var = (x.col(c).array() - m).square().sum() / static_cast<double>(x.rows() - 1);
    if (var > 0.0) out.col(c) /= std::sqrt(var);
  }
  return out;
}

}  // namespace

Population build_population(const BaseSample& base, const DgpSpec& spec, std::uint64_t seed,
                            const DesignConfig& config) {
  const Eigen::Index n_base = base.n();
  std::vector<Eigen::Index> ref_rows, donor_rows;
  for (Eigen::Index i = 0; i < n_base; ++i)
    (base.z[i] > 0.5 ? ref_rows : donor_rows).push_back(i);
  if (ref_rows.empty()) fail(errc::bad_argument, "base has no instrument-positive rows");
  if (donor_rows.empty()) fail(errc::bad_argument, "base has no instrument-negative rows");

  Population pop;
  pop.spec = spec;
  pop.seed = seed;
  pop.covariate_names = base.covariate_names;

  // Rows of `base` forming the final population, with the planted instrument.
  std::vector<Eigen::Index> final_rows;
  std::vector<double> z_final;

  if (!spec.strong_selection) {
    // Nearly random assignment: every instrument-positive row pulls its M
    // nearest covariate neighbours (unit-sd metric) from the donor pool and
    // passes the instrument on to them; the references themselves drop out.
    const Eigen::MatrixXd scaled = sd_scaled(base.x);
    const int quota =
        rescale_match_quota(static_cast<Eigen::Index>(ref_rows.size()),
                            static_cast<Eigen::Index>(donor_rows.size()), 0);
    const auto sets = matching_without_replacement(subset_rows(scaled, ref_rows),
                                                   subset_rows(scaled, donor_rows), quota);
    std::vector<double> z_new(donor_rows.size(), 0.0);
    for (const auto& set : sets)
      for (Eigen::Index j : set) z_new[static_cast<std::size_t>(j)] = 1.0;
    final_rows = donor_rows;
    z_final = std::move(z_new);
    pop.match_quota = quota;
  } else {
    // Selection on observables: fit the instrument propensity, amplify its
    // covariate signal, and hand the instrument to the donors closest in the
    // amplified score.  A second matching pass then discards the donors
    // closest to the planted instrument rows in the refitted score, which is
    // what skews the two arms apart.
    const Eigen::MatrixXd design_all = with_intercept_col(base.x);
    const GlmFit fit = fit_binary_glm(design_all, base.z, LinkFunction::probit);
    Eigen::VectorXd index = Eigen::VectorXd::Constant(n_base, fit.coefficients[0]);
    index += config.selection_amplifier * (base.x * fit.coefficients.tail(base.x.cols()));
    Eigen::VectorXd score(n_base);
    for (Eigen::Index i = 0; i < n_base; ++i) score[i] = norm_cdf(index[i]);

    const int quota =
        rescale_match_quota(static_cast<Eigen::Index>(ref_rows.size()),
                            static_cast<Eigen::Index>(donor_rows.size()), config.discard_quota);
    const auto sets = matching_without_replacement(
        subset(score, ref_rows), subset(score, donor_rows), quota);
    std::vector<double> z_stage(donor_rows.size(), 0.0);
    for (const auto& set : sets)
      for (Eigen::Index j : set) z_stage[static_cast<std::size_t>(j)] = 1.0;

    // Refit on the donor population with the planted instrument.
    Eigen::MatrixXd donor_x = subset_rows(base.x, donor_rows);
    Eigen::VectorXd z_vec(static_cast<Eigen::Index>(z_stage.size()));
    for (Eigen::Index i = 0; i < z_vec.size(); ++i) z_vec[i] = z_stage[static_cast<std::size_t>(i)];
    const GlmFit refit = fit_binary_glm(with_intercept_col(donor_x), z_vec, LinkFunction::probit);
    const Eigen::VectorXd index2 =
        (with_intercept_col(donor_x) * refit.coefficients).unaryExpr([](double t) { return norm_cdf(t); });

    std::vector<Eigen::Index> arm1, arm0;
    for (Eigen::Index i = 0; i < z_vec.size(); ++i) (z_vec[i] > 0.5 ? arm1 : arm0).push_back(i);
    const auto discard_sets = matching_without_replacement(
        subset(index2, arm1), subset(index2, arm0), config.discard_quota);
    std::vector<bool> discarded(z_stage.size(), false);
    for (const auto& set : discard_sets)
      for (Eigen::Index j : set) discarded[static_cast<std::size_t>(arm0[static_cast<std::size_t>(j)])] = true;

    for (std::size_t i = 0; i < donor_rows.size(); ++i) {
      if (discarded[i]) continue;
      final_rows.push_back(donor_rows[i]);
      z_final.push_back(z_stage[i]);
    }
    pop.match_quota = quota;
  }

  const Eigen::Index n = static_cast<Eigen::Index>(final_rows.size());
  pop.x = subset_rows(base.x, final_rows);
  pop.z.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) pop.z[i] = z_final[static_cast<std::size_t>(i)];

  // One latent triple per population row, drawn once so every replication sees
  // the same potentials: u switches weak compliers on, v drives the outcome
  // models, w the treatment model.
  RngStream rng(seed, {kDesignTag, static_cast<std::uint64_t>(spec.dgp_id)});
  Eigen::VectorXd lat_u(n), lat_v(n), lat_w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    lat_u[i] = rng.normal();
    lat_v[i] = rng.normal();
    lat_w[i] = rng.normal();
  }

  // Every population row came from the instrument-negative part of the base,
  // so its observed treatment is already the no-instrument potential.
  const Eigen::VectorXd d_base = subset(base.d, final_rows);
  pop.d0.resize(n);
  pop.d1.resize(n);
  std::vector<Eigen::Index> rows0, rows1;
  for (Eigen::Index i = 0; i < n; ++i) (pop.z[i] > 0.5 ? rows1 : rows0).push_back(i);
  if (rows0.empty() || rows1.empty())
    fail(errc::bad_argument, "design produced a single-arm population");

  const Eigen::MatrixXd xh = with_intercept_col(het_design(pop.x));
  if (spec.heterogeneity) {
    // Treatment model estimated where the instrument is off, then applied to
    // everyone with a fresh latent, mirroring the outcome construction below.
    const SparseFit sf(xh, rows0);
    const GlmFit tfit = fit_binary_glm(sf.design, subset(d_base, rows0), LinkFunction::probit);
    const Eigen::VectorXd tindex = xh * sf.expand(tfit.coefficients, xh.cols());
    for (Eigen::Index i = 0; i < n; ++i) pop.d0[i] = tindex[i] + lat_w[i] > 0.0 ? 1.0 : 0.0;
  } else {
    pop.d0 = d_base;
  }
  if (spec.observed_strength) {
    pop.d1.setOnes();
  } else {
    // Weak first stage: only rows whose latent clears the cutoff comply.
    for (Eigen::Index i = 0; i < n; ++i)
      pop.d1[i] = std::max(pop.d0[i], lat_u[i] > config.weak_compliance_cutoff ? 1.0 : 0.0);
  }
  for (Eigen::Index i = 0; i < n; ++i)
    if (pop.d1[i] < pop.d0[i]) fail(errc::bad_argument, "potential treatments violate monotonicity");

  const Eigen::VectorXd outcome =
      spec.binary_outcome ? subset(base.workpay, final_rows) : subset(base.weeks, final_rows);
  pop.y0.resize(n);
  pop.y1.resize(n);
  if (!spec.heterogeneity) {
    // Both potential outcomes equal the observed one: the true effect is
    // exactly zero for every row, compliers included.
    pop.y0 = outcome;
    pop.y1 = outcome;
  } else {
    for (int arm = 0; arm <= 1; ++arm) {
      const auto& rows = arm == 0 ? rows0 : rows1;
      const SparseFit sf(xh, rows);
      const Eigen::VectorXd ya = subset(outcome, rows);
      Eigen::VectorXd fitted(n);
      if (spec.binary_outcome) {
        const GlmFit ofit = fit_binary_glm(sf.design, ya, LinkFunction::probit);
        const Eigen::VectorXd oindex = xh * sf.expand(ofit.coefficients, xh.cols());
        for (Eigen::Index i = 0; i < n; ++i) fitted[i] = oindex[i] + lat_v[i] > 0.0 ? 1.0 : 0.0;
      } else {
        const Eigen::VectorXd beta = fit_ols(sf.design, ya);
        const Eigen::VectorXd resid = ya - sf.design * beta;
        const double dof = static_cast<double>(sf.design.rows() - sf.design.cols());
        const double sigma = std::sqrt(resid.squaredNorm() / dof);
        fitted = xh * sf.expand(beta, xh.cols()) + sigma * lat_v;
      }
      (arm == 0 ? pop.y0 : pop.y1) = fitted;
    }
  }

  pop.instrument_share = pop.z.mean();
  pop.first_stage = (pop.d1 - pop.d0).mean();
  pop.true_late = true_late_of(pop);
  return pop;
}

double true_late_of(const Population& pop) {
  double sum = 0.0;
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < pop.n(); ++i) {
    if (pop.d1[i] - pop.d0[i] > 0.5) {
      sum += pop.y1[i] - pop.y0[i];
      ++count;
    }
  }
  if (count == 0) fail(errc::no_compliers, "population has no compliers");
  return sum / static_cast<double>(count);
}

Dataset reveal_sample(const Population& pop, const std::vector<Eigen::Index>& rows) {
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  Eigen::VectorXd y(n), d(n), z(n);
  Eigen::MatrixXd x(n, pop.x.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index r = rows[static_cast<std::size_t>(i)];
    if (r < 0 || r >= pop.n()) fail(errc::bad_argument, "population row out of range");
    const bool on = pop.z[r] > 0.5;
    y[i] = on ? pop.y1[r] : pop.y0[r];
    d[i] = on ? pop.d1[r] : pop.d0[r];
    z[i] = pop.z[r];
    x.row(i) = pop.x.row(r);
  }
  return Dataset::from_parts(std::move(y), std::move(d), std::move(z), std::move(x),
                             pop.covariate_names);
}

// ---------------------------------------------------------------------------
// Replication loop.

namespace {

std::vector<ReplicationRecord> run_one_rep(const Population& pop,
                                           const std::vector<std::string>& estimators,
                                           const SimulationOptions& opts, std::uint64_t seed,
                                           int rep, Eigen::Index draw_n) {
  RngStream stream(seed, {kRepTag, static_cast<std::uint64_t>(pop.spec.dgp_id),
                          static_cast<std::uint64_t>(rep)});
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(draw_n));
  for (auto& r : rows)
    r = static_cast<Eigen::Index>(stream.uniform_int(static_cast<std::uint64_t>(pop.n())));
  const std::uint64_t est_seed = stream.next_u64();

  std::optional<Dataset> data;
  std::string data_error;
  try {
    data.emplace(reveal_sample(pop, rows));
  } catch (const Error& e) {
    data_error = errc_name(e.code());
  }

  std::vector<ReplicationRecord> out;
  out.reserve(estimators.size());
  for (const auto& name : estimators) {
    ReplicationRecord rec;
    rec.rep = rep;
    rec.estimator = name;
    rec.theta = rec.se = rec.ci_lo = rec.ci_hi = kNaN;
    if (!data) {
      rec.error = data_error;
      out.push_back(std::move(rec));
      continue;
    }
    EstimatorSpec spec{name, opts.trim, opts.estimator_options};
    try {
      const LateEstimate est = estimate(spec, *data, est_seed);
      rec.theta = est.theta;
      rec.n_used = est.n_used;
      rec.n_trimmed = est.n_trimmed;
      rec.point_ok = true;
      try {
        const BootstrapResult boot = bootstrap_se(spec, *data, opts.bootstrap, est_seed);
        rec.se = boot.se;
        rec.bootstrap_failures = boot.n_failed;
        const auto ci = opts.ci == "percentile"
                            ? percentile_interval(boot.replicate_estimates)
                            : confidence_interval(rec.theta, rec.se);
        rec.ci_lo = ci.first;
        rec.ci_hi = ci.second;
        rec.se_ok = true;
      } catch (const Error& e) {
        rec.error = errc_name(e.code());
      }
    } catch (const Error& e) {
      rec.error = errc_name(e.code());
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace

std::vector<MetricsRow> aggregate_metrics(int dgp_id, double theta0, long n_reps,
                                          const std::vector<std::string>& estimators,
                                          const std::vector<ReplicationRecord>& records) {
  std::vector<MetricsRow> rows;
  rows.reserve(estimators.size());
  for (const auto& name : estimators) {
    MetricsRow m;
    m.dgp_id = dgp_id;
    m.estimator = name;
    m.n_reps = n_reps;
    m.true_late = theta0;

    std::vector<const ReplicationRecord*> point;
    for (const auto& rec : records)
      if (rec.estimator == name && rec.point_ok && std::abs(rec.theta) < kPointCap)
        point.push_back(&rec);
    m.nsimp = static_cast<long>(point.size());

    if (point.empty()) {
      m.coverage = m.interval_length = m.abs_bias = m.sd = m.rmse = m.se_bias = kNaN;
      rows.push_back(std::move(m));
      continue;
    }
    std::vector<double> thetas;
    thetas.reserve(point.size());
    for (const auto* rec : point) thetas.push_back(rec->theta);
    const double bias = mean(thetas) - theta0;
    m.abs_bias = std::abs(bias);
    m.sd = thetas.size() >= 2 ? sample_sd(thetas) : 0.0;
    m.rmse = std::sqrt(bias * bias + m.sd * m.sd);

    // Interval metrics additionally need a sane reported se.  The magnitude
    // screen is skipped when the Monte Carlo sd is exactly zero (degenerate
    // but legitimate, e.g. a constant estimator), where it would reject
    // every replication.
    std::vector<const ReplicationRecord*> kept;
    for (const auto* rec : point)
      if (rec->se_ok && (m.sd == 0.0 || rec->se < kSeCapFactor * m.sd)) kept.push_back(rec);
    m.nsimse = static_cast<long>(kept.size());
    if (kept.empty()) {
      m.coverage = m.interval_length = m.se_bias = kNaN;
    } else {
      long covered = 0;
      double len = 0.0;
      std::vector<double> ses;
      ses.reserve(kept.size());
      for (const auto* rec : kept) {
        if (rec->ci_lo <= theta0 && theta0 <= rec->ci_hi) ++covered;
        len += rec->ci_hi - rec->ci_lo;
        ses.push_back(rec->se);
      }
      m.coverage = 100.0 * static_cast<double>(covered) / static_cast<double>(kept.size());
      m.interval_length = len / static_cast<double>(kept.size());
      m.se_bias = median(std::move(ses)) - m.sd;
    }
    rows.push_back(std::move(m));
  }

  assign_ranks(rows, [](const MetricsRow& r) { return std::abs(r.coverage - 95.0); },
               &MetricsRow::rank_coverage);
  assign_ranks(rows, [](const MetricsRow& r) { return r.interval_length; },
               &MetricsRow::rank_interval);
  assign_ranks(rows, [](const MetricsRow& r) { return r.abs_bias; }, &MetricsRow::rank_bias);
  assign_ranks(rows, [](const MetricsRow& r) { return r.sd; }, &MetricsRow::rank_sd);
  assign_ranks(rows, [](const MetricsRow& r) { return r.rmse; }, &MetricsRow::rank_rmse);
  assign_ranks(rows, [](const MetricsRow& r) { return std::abs(r.se_bias); },
               &MetricsRow::rank_se_bias);
  return rows;
}

SimulationResult run_simulation(const Population& pop, const std::vector<std::string>& estimators,
                                const SimulationOptions& opts, std::uint64_t seed) {
  if (estimators.empty()) fail(errc::bad_argument, "simulation needs at least one estimator");
  for (const auto& name : estimators)
    if (!is_known_estimator(name)) fail(errc::unknown_estimator, name);
  if (opts.n_reps < 1) fail(errc::bad_argument, "simulation needs at least one replication");
  if (opts.ci != "normal" && opts.ci != "percentile")
    fail(errc::bad_argument, "ci must be 'normal' or 'percentile', got '" + opts.ci + "'");
  const Eigen::Index draw_n = opts.sample_size > 0 ? opts.sample_size : pop.spec.sample_size;
  if (draw_n < 2) fail(errc::bad_argument, "sample size must be at least 2");

  // Every replication is a pure function of (seed, dgp_id, rep), so carving
  // the loop across threads cannot change any result.
  std::vector<std::vector<ReplicationRecord>> per_rep(static_cast<std::size_t>(opts.n_reps));
  const int threads = std::clamp(opts.threads, 1, opts.n_reps);
  if (threads == 1) {
    for (int r = 0; r < opts.n_reps; ++r)
      per_rep[static_cast<std::size_t>(r)] = run_one_rep(pop, estimators, opts, seed, r, draw_n);
  } else {
    std::atomic<int> next{0};
    auto worker = [&] {
      for (int r = next.fetch_add(1); r < opts.n_reps; r = next.fetch_add(1))
        per_rep[static_cast<std::size_t>(r)] = run_one_rep(pop, estimators, opts, seed, r, draw_n);
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  SimulationResult result;
  result.spec = pop.spec;
  result.true_late = pop.true_late;
  result.replications.reserve(per_rep.size() * estimators.size());
  for (auto& reps : per_rep)
    for (auto& rec : reps) result.replications.push_back(std::move(rec));
  result.metrics = aggregate_metrics(pop.spec.dgp_id, pop.true_late, opts.n_reps, estimators,
                                     result.replications);
  return result;
}

SimulationResult run_simulation(const DgpSpec& spec, const std::vector<std::string>& estimators,
                                const SimulationOptions& opts, std::uint64_t seed) {
  const BaseSample base = synth_base_population(opts.base_size, seed);
  const Population pop = build_population(base, spec, seed);
  return run_simulation(pop, estimators, opts, seed);
}

// ---------------------------------------------------------------------------
// Config file.

SimConfig parse_sim_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim_ws(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(errc::bad_config, "config line is not 'key = value': '" + line + "'");
    const std::string key = trim_ws(line.substr(0, eq));
    const std::string value = trim_ws(line.substr(eq + 1));
    if (key.empty()) fail(errc::bad_config, "config line has an empty key: '" + line + "'");
    if (!kv.emplace(key, value).second) fail(errc::bad_config, "duplicate config key: " + key);
  }

  static const std::set<std::string> known = {
      "dgps",      "estimators",  "n_reps",          "seed",
      "output_dir", "bootstrap",  "trim",            "ci",
      "base_size", "sample_size", "threads",         "dump_population",
      "n_trees",   "min_leaf",    "radius_multiplier", "extra_covariate",
      "trim_all"};
  for (const auto& [key, value] : kv)
    if (!known.count(key)) fail(errc::bad_config, "unknown config key: " + key);
  for (const char* req : {"dgps", "estimators", "n_reps", "seed", "output_dir"})
    if (!kv.count(req)) fail(errc::bad_config, std::string("missing config key: ") + req);

  SimConfig cfg;

  if (kv["dgps"] == "all") {
    for (int id = 1; id <= 32; ++id) cfg.dgps.push_back(id);
  } else {
    for (const auto& item : split_csv_list(kv["dgps"])) {
      const long long id = parse_ll("dgps", item);
      if (id < 1 || id > 32)
        fail(errc::bad_config, "config key 'dgps' needs ids in 1..32, got " + item);
      if (std::find(cfg.dgps.begin(), cfg.dgps.end(), static_cast<int>(id)) != cfg.dgps.end())
        fail(errc::bad_config, "duplicate dgp id in config: " + item);
      cfg.dgps.push_back(static_cast<int>(id));
    }
    if (cfg.dgps.empty()) fail(errc::bad_config, "config key 'dgps' lists no ids");
  }

  if (kv["estimators"] == "all") {
    cfg.estimators = estimator_registry();
  } else {
    for (const auto& name : split_csv_list(kv["estimators"])) {
      if (!is_known_estimator(name))
        fail(errc::bad_config, "unknown estimator in config: " + name);
      if (std::find(cfg.estimators.begin(), cfg.estimators.end(), name) != cfg.estimators.end())
        fail(errc::bad_config, "duplicate estimator in config: " + name);
      cfg.estimators.push_back(name);
    }
    if (cfg.estimators.empty()) fail(errc::bad_config, "config key 'estimators' lists no names");
  }

  const long long n_reps = parse_ll("n_reps", kv["n_reps"]);
  if (n_reps < 1 || n_reps > 1000000) fail(errc::bad_config, "n_reps must be in 1..1000000");
  cfg.n_reps = static_cast<int>(n_reps);
  cfg.seed = parse_u64("seed", kv["seed"]);
  cfg.output_dir = kv["output_dir"];
  if (cfg.output_dir.empty()) fail(errc::bad_config, "output_dir must not be empty");

  if (kv.count("bootstrap")) {
    const long long b = parse_ll("bootstrap", kv["bootstrap"]);
    if (b < 2 || b > 100000) fail(errc::bad_config, "bootstrap must be in 2..100000");
    cfg.bootstrap = static_cast<int>(b);
  }
  if (kv.count("trim")) {
    cfg.trim = parse_dbl("trim", kv["trim"]);
    if (!(cfg.trim > 0.0) || cfg.trim > 100.0)
      fail(errc::bad_config, "trim must be in (0, 100]");
  }
  if (kv.count("ci")) {
    cfg.ci = kv["ci"];
    if (cfg.ci != "normal" && cfg.ci != "percentile")
      fail(errc::bad_config, "ci must be 'normal' or 'percentile', got '" + cfg.ci + "'");
  }
  if (kv.count("base_size")) {
    const long long b = parse_ll("base_size", kv["base_size"]);
    if (b < 10000 || b > 10000000) fail(errc::bad_config, "base_size must be in 10000..10000000");
    cfg.base_size = static_cast<Eigen::Index>(b);
  }
  if (kv.count("sample_size")) {
    const long long s = parse_ll("sample_size", kv["sample_size"]);
    if (s != 0 && (s < 50 || s > 1000000))
      fail(errc::bad_config, "sample_size must be 0 (per-design default) or in 50..1000000");
    cfg.sample_size = static_cast<Eigen::Index>(s);
  }
  if (kv.count("threads")) {
    const long long t = parse_ll("threads", kv["threads"]);
    if (t < 1 || t > 256) fail(errc::bad_config, "threads must be in 1..256");
    cfg.threads = static_cast<int>(t);
  }
  if (kv.count("dump_population")) cfg.dump_population = parse_bool("dump_population", kv["dump_population"]);
  for (const char* opt : {"n_trees", "min_leaf", "radius_multiplier", "extra_covariate", "trim_all"})
    if (kv.count(opt)) cfg.estimator_options[opt] = kv[opt];
  return cfg;
}

SimConfig load_sim_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::bad_config, "cannot read config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_sim_config(buf.str());
}

// ---------------------------------------------------------------------------
// File outputs.

namespace {

std::string fd(double x) { return format_double(x); }

void write_population_csv(const std::string& path, const Population& pop, std::uint64_t seed) {
  CsvTable t;
  t.columns = pop.covariate_names;
  for (const char* c : {"z", "d0", "d1", "y0", "y1"}) t.columns.emplace_back(c);
  t.rows.reserve(static_cast<std::size_t>(pop.n()));
  for (Eigen::Index i = 0; i < pop.n(); ++i) {
    std::vector<std::string> row;
    row.reserve(t.columns.size());
    for (Eigen::Index c = 0; c < pop.x.cols(); ++c) row.push_back(fd(pop.x(i, c)));
    row.push_back(fd(pop.z[i]));
    row.push_back(fd(pop.d0[i]));
    row.push_back(fd(pop.d1[i]));
    row.push_back(fd(pop.y0[i]));
    row.push_back(fd(pop.y1[i]));
    t.rows.push_back(std::move(row));
  }
  write_csv_file(path, t,
                 {"seed=" + std::to_string(seed), "dgp=" + std::to_string(pop.spec.dgp_id),
                  "true_late=" + fd(pop.true_late)});
}

void write_replications_csv(const std::string& path, int dgp_id, const std::string& estimator,
                            double true_late, std::uint64_t seed,
                            const std::vector<const ReplicationRecord*>& recs) {
  CsvTable t;
  t.columns = {"rep",    "theta",     "se",        "ci_lo",
               "ci_hi",  "point_ok",  "se_ok",     "n_used",
               "n_trimmed", "bootstrap_failures", "error"};
  t.rows.reserve(recs.size());
  for (const auto* rec : recs) {
    t.rows.push_back({std::to_string(rec->rep), rec->point_ok ? fd(rec->theta) : "nan",
                      rec->se_ok ? fd(rec->se) : "nan", rec->se_ok ? fd(rec->ci_lo) : "nan",
                      rec->se_ok ? fd(rec->ci_hi) : "nan", rec->point_ok ? "1" : "0",
                      rec->se_ok ? "1" : "0", std::to_string(rec->n_used),
                      std::to_string(rec->n_trimmed), std::to_string(rec->bootstrap_failures),
                      rec->error});
  }
  write_csv_file(path, t,
                 {"seed=" + std::to_string(seed), "dgp=" + std::to_string(dgp_id),
                  "estimator=" + estimator, "true_late=" + fd(true_late)});
}

}  // namespace

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows,
                       std::uint64_t seed) {
  CsvTable t;
  t.columns = {"dgp",        "estimator",     "coverage",  "interval_length",
               "abs_bias",   "sd",            "rmse",      "se_bias",
               "rank_coverage", "rank_interval", "rank_bias", "rank_sd",
               "rank_rmse",  "rank_se_bias",  "nsimp",     "nsimse",
               "n_reps",     "true_late"};
  t.rows.reserve(rows.size());
  for (const auto& m : rows) {
    t.rows.push_back({std::to_string(m.dgp_id), m.estimator, fd(m.coverage),
                      fd(m.interval_length), fd(m.abs_bias), fd(m.sd), fd(m.rmse), fd(m.se_bias),
                      fd(m.rank_coverage), fd(m.rank_interval), fd(m.rank_bias), fd(m.rank_sd),
                      fd(m.rank_rmse), fd(m.rank_se_bias), std::to_string(m.nsimp),
                      std::to_string(m.nsimse), std::to_string(m.n_reps), fd(m.true_late)});
  }
  write_csv_file(path, t, {"seed=" + std::to_string(seed)});
}

std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
  const CsvTable t = read_csv_file(path);
  const auto col = [&](const std::string& name) { return t.column_index(name); };
  const std::size_t c_dgp = col("dgp"), c_est = col("estimator"), c_cov = col("coverage"),
                    c_len = col("interval_length"), c_bias = col("abs_bias"), c_sd = col("sd"),
                    c_rmse = col("rmse"), c_seb = col("se_bias"), c_rc = col("rank_coverage"),
                    c_ri = col("rank_interval"), c_rb = col("rank_bias"), c_rs = col("rank_sd"),
                    c_rr = col("rank_rmse"), c_rsb = col("rank_se_bias"), c_np = col("nsimp"),
                    c_ns = col("nsimse"), c_nr = col("n_reps"), c_tl = col("true_late");
  std::vector<MetricsRow> rows;
  rows.reserve(t.rows.size());
  for (const auto& r : t.rows) {
    MetricsRow m;
    m.dgp_id = static_cast<int>(parse_ll("dgp", r[c_dgp]));
    m.estimator = r[c_est];
    m.coverage = parse_double(r[c_cov]);
    m.interval_length = parse_double(r[c_len]);
    m.abs_bias = parse_double(r[c_bias]);
    m.sd = parse_double(r[c_sd]);
    m.rmse = parse_double(r[c_rmse]);
    m.se_bias = parse_double(r[c_seb]);
    m.rank_coverage = parse_double(r[c_rc]);
    m.rank_interval = parse_double(r[c_ri]);
    m.rank_bias = parse_double(r[c_rb]);
    m.rank_sd = parse_double(r[c_rs]);
    m.rank_rmse = parse_double(r[c_rr]);
    m.rank_se_bias = parse_double(r[c_rsb]);
    m.nsimp = parse_ll("nsimp", r[c_np]);
    m.nsimse = parse_ll("nsimse", r[c_ns]);
    m.n_reps = parse_ll("n_reps", r[c_nr]);
    m.true_late = parse_double(r[c_tl]);
    rows.push_back(std::move(m));
  }
  return rows;
}

std::vector<MetricsRow> simulate_to_files(const SimConfig& config) {
  std::error_code ec;
  std::filesystem::create_directories(config.output_dir, ec);
  if (ec) fail(errc::bad_config, "cannot create output directory: " + config.output_dir);

  SimulationOptions opts;
  opts.n_reps = config.n_reps;
  opts.bootstrap = config.bootstrap;
  opts.trim = config.trim;
  opts.ci = config.ci;
  opts.sample_size = config.sample_size;
  opts.base_size = config.base_size;
  opts.threads = config.threads;
  opts.estimator_options = config.estimator_options;

  const BaseSample base = synth_base_population(config.base_size, config.seed);
  const std::filesystem::path dir(config.output_dir);
  std::vector<MetricsRow> all_metrics;
  for (const int dgp : config.dgps) {
    const DgpSpec spec = dgp_from_id(dgp);
    const Population pop = build_population(base, spec, config.seed);
    const SimulationResult result = run_simulation(pop, config.estimators, opts, config.seed);
    if (config.dump_population)
      write_population_csv((dir / ("population_" + std::to_string(dgp) + ".csv")).string(), pop,
                           config.seed);
    for (const auto& name : config.estimators) {
      std::vector<const ReplicationRecord*> recs;
      recs.reserve(static_cast<std::size_t>(config.n_reps));
      for (const auto& rec : result.replications)
        if (rec.estimator == name) recs.push_back(&rec);
      const std::string fname =
          "replications_" + std::to_string(dgp) + "_" + sanitize_for_filename(name) + ".csv";
      write_replications_csv((dir / fname).string(), dgp, name, result.true_late, config.seed,
                             recs);
    }
    all_metrics.insert(all_metrics.end(), result.metrics.begin(), result.metrics.end());
  }
  write_metrics_csv((dir / "metrics.csv").string(), all_metrics, config.seed);
  return all_metrics;
}

}  // namespace latelab
