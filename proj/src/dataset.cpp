#include "latelab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "latelab/csv.hpp"
#include "latelab/errors.hpp"

namespace latelab {

namespace {

void check_finite(const Eigen::VectorXd& v, const char* what) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      fail(errc::non_finite_value, std::string(what) + " has a non-finite value at row " +
                                       std::to_string(i));
    }
  }
}

void check_indicator(const Eigen::VectorXd& v, const char* what) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (v[i] != 0.0 && v[i] != 1.0) {
      fail(errc::non_binary_indicator, std::string(what) + " value " + std::to_string(v[i]) +
                                           " at row " + std::to_string(i) +
                                           " is outside {0,1}");
    }
  }
}

}  // namespace

bool is_binary01(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0 || x == 1.0; });
}

bool is_binary01(const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (v[i] != 0.0 && v[i] != 1.0) return false;
  }
  return true;
}

Dataset Dataset::from_parts(Eigen::VectorXd y, Eigen::VectorXd d, Eigen::VectorXd z,
                            Eigen::MatrixXd x, std::vector<std::string> column_names) {
  const Eigen::Index n = y.size();
  if (n < 2) fail(errc::insufficient_data, "dataset needs at least 2 rows");
  if (d.size() != n || z.size() != n || x.rows() != n) {
    fail(errc::bad_argument, "y, d, z, x row counts disagree");
  }
  if (static_cast<Eigen::Index>(column_names.size()) != x.cols()) {
    fail(errc::bad_argument, "covariate name count does not match matrix columns");
  }
  check_finite(y, "outcome");
  check_finite(d, "treatment");
  check_finite(z, "instrument");
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    check_finite(x.col(j), column_names[static_cast<std::size_t>(j)].c_str());
  }
  check_indicator(d, "treatment");
  check_indicator(z, "instrument");
  const Eigen::Index n1 = static_cast<Eigen::Index>(z.sum());
  if (n1 == 0 || n1 == n) {
    fail(errc::empty_instrument_arm,
         "instrument has " + std::to_string(n1) + " ones out of " + std::to_string(n));
  }
  Dataset ds;
  ds.y_ = std::move(y);
  ds.d_ = std::move(d);
  ds.z_ = std::move(z);
  ds.x_ = std::move(x);
  ds.names_ = std::move(column_names);
  ds.n1_ = n1;
  return ds;
}

Dataset Dataset::select_rows(const std::vector<Eigen::Index>& rows) const {
  const Eigen::Index m = static_cast<Eigen::Index>(rows.size());
  Eigen::VectorXd y(m), d(m), z(m);
  Eigen::MatrixXd x(m, x_.cols());
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Index r = rows[static_cast<std::size_t>(i)];
    if (r < 0 || r >= n()) fail(errc::bad_argument, "row index out of range");
    y[i] = y_[r];
    d[i] = d_[r];
    z[i] = z_[r];
    x.row(i) = x_.row(r);
  }
  return from_parts(std::move(y), std::move(d), std::move(z), std::move(x), names_);
}

Dataset Dataset::select_rows(const std::vector<bool>& keep) const {
  if (static_cast<Eigen::Index>(keep.size()) != n()) {
    fail(errc::bad_argument, "keep mask length does not match dataset rows");
  }
  std::vector<Eigen::Index> rows;
  rows.reserve(keep.size());
  for (Eigen::Index i = 0; i < n(); ++i) {
    if (keep[static_cast<std::size_t>(i)]) rows.push_back(i);
  }
  return select_rows(rows);
}

Eigen::Index Dataset::covariate_index(const std::string& name) const {
  for (std::size_t j = 0; j < names_.size(); ++j) {
    if (names_[j] == name) return static_cast<Eigen::Index>(j);
  }
  fail(errc::missing_column, "covariate '" + name + "' not found");
}

namespace {

Dataset dataset_from_table(const CsvTable& table, const CsvSchema& schema) {
  const std::size_t yj = table.column_index(schema.outcome);
  const std::size_t dj = table.column_index(schema.treatment);
  const std::size_t zj = table.column_index(schema.instrument);

  std::vector<std::size_t> cov_cols;
  std::vector<std::string> cov_names;
  if (!schema.covariates.empty()) {
    for (const auto& name : schema.covariates) {
      cov_cols.push_back(table.column_index(name));
      cov_names.push_back(name);
    }
  } else {
    std::unordered_set<std::string> excluded(schema.exclude.begin(), schema.exclude.end());
    for (std::size_t j = 0; j < table.columns.size(); ++j) {
      if (j == yj || j == dj || j == zj) continue;
      if (excluded.count(table.columns[j])) continue;
      cov_cols.push_back(j);
      cov_names.push_back(table.columns[j]);
    }
  }
  if (cov_cols.empty()) fail(errc::missing_column, "schema leaves no covariate columns");

  const Eigen::Index n = static_cast<Eigen::Index>(table.rows.size());
  Eigen::VectorXd y(n), d(n), z(n);
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(cov_cols.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = table.rows[static_cast<std::size_t>(i)];
    y[i] = parse_double(row[yj]);
    d[i] = parse_double(row[dj]);
    z[i] = parse_double(row[zj]);
    for (std::size_t c = 0; c < cov_cols.size(); ++c) {
      x(i, static_cast<Eigen::Index>(c)) = parse_double(row[cov_cols[c]]);
    }
  }
  return Dataset::from_parts(std::move(y), std::move(d), std::move(z), std::move(x),
                             std::move(cov_names));
}

CsvTable dataset_to_table(const Dataset& ds) {
  CsvTable table;
  table.columns = {"y", "d", "z"};
  for (const auto& name : ds.column_names()) table.columns.push_back(name);
  table.rows.reserve(static_cast<std::size_t>(ds.n()));
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    std::vector<std::string> row;
    row.reserve(table.columns.size());
    row.push_back(format_double(ds.y()[i]));
    row.push_back(format_double(ds.d()[i]));
    row.push_back(format_double(ds.z()[i]));
    for (Eigen::Index j = 0; j < ds.k(); ++j) row.push_back(format_double(ds.x()(i, j)));
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace

Dataset load_csv(const std::string& path, const CsvSchema& schema) {
  return dataset_from_table(read_csv_file(path), schema);
}

Dataset load_csv_string(const std::string& text, const CsvSchema& schema) {
  return dataset_from_table(read_csv_string(text), schema);
}

void save_csv(const std::string& path, const Dataset& ds,
              const std::vector<std::string>& comment_lines) {
  write_csv_file(path, dataset_to_table(ds), comment_lines);
}

std::string save_csv_string(const Dataset& ds, const std::vector<std::string>& comment_lines) {
  return write_csv_string(dataset_to_table(ds), comment_lines);
}

double standardized_difference(const std::vector<double>& group0,
                               const std::vector<double>& group1) {
  if (group0.empty() || group1.empty()) {
    fail(errc::insufficient_data, "standardized_difference needs both groups nonempty");
  }
  auto moments = [](const std::vector<double>& g, bool binary) {
    double m = 0.0;
    for (double x : g) m += x;
    m /= static_cast<double>(g.size());
    double var = 0.0;
    if (binary) {
      var = m * (1.0 - m);
    } else if (g.size() > 1) {
      for (double x : g) var += (x - m) * (x - m);
      var /= static_cast<double>(g.size() - 1);
    }
    return std::pair<double, double>(m, var);
  };
  const bool binary = is_binary01(group0) && is_binary01(group1);
  const auto [m0, v0] = moments(group0, binary);
  const auto [m1, v1] = moments(group1, binary);
  const double denom = std::sqrt(v0 + v1);
  if (denom == 0.0) {
    fail(errc::zero_variance_pair, "both groups are constant; difference is undefined");
  }
  return 100.0 * std::fabs(m1 - m0) / denom;
}

double nagelkerke_pseudo_r2(double loglik_null, double loglik_full, Eigen::Index n) {
  if (n < 1) fail(errc::bad_argument, "n must be positive");
  if (loglik_full < loglik_null) {
    fail(errc::bad_argument, "full-model log-likelihood below the null model's");
  }
  const double denom = 1.0 - std::exp(2.0 * loglik_null / static_cast<double>(n));
  if (denom == 0.0) fail(errc::degenerate_null, "null log-likelihood is exactly zero");
  const double cox_snell =
      1.0 - std::exp(-2.0 * (loglik_full - loglik_null) / static_cast<double>(n));
  return cox_snell / denom;
}

}  // namespace latelab
