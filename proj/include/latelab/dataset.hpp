#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace latelab {

// Observed-data model: outcome y (real, possibly 0/1), binary treatment d,
// binary instrument z, covariate matrix x.  Instances are validated on
// construction and immutable afterwards; every routine in the library relies
// on the invariants checked in from_parts (finite values, binary indicators,
// both instrument arms nonempty) and on row order being meaningful.
class Dataset {
 public:
  static Dataset from_parts(Eigen::VectorXd y, Eigen::VectorXd d, Eigen::VectorXd z,
                            Eigen::MatrixXd x, std::vector<std::string> column_names);

  const Eigen::VectorXd& y() const { return y_; }
  const Eigen::VectorXd& d() const { return d_; }
  const Eigen::VectorXd& z() const { return z_; }
  const Eigen::MatrixXd& x() const { return x_; }
  const std::vector<std::string>& column_names() const { return names_; }

  Eigen::Index n() const { return y_.size(); }
  Eigen::Index k() const { return x_.cols(); }
  Eigen::Index n1() const { return n1_; }
  Eigen::Index n0() const { return y_.size() - n1_; }

  // Row selection preserving order; used by trimming, arm splits and bootstrap
  // resampling (where indices may repeat).  Revalidates, so a degenerate
  // selection (e.g. a resample with every z identical) throws.
  Dataset select_rows(const std::vector<Eigen::Index>& rows) const;
  Dataset select_rows(const std::vector<bool>& keep) const;

  Eigen::Index covariate_index(const std::string& name) const;  // throws MissingColumn

 private:
  Dataset() = default;
  Eigen::VectorXd y_, d_, z_;
  Eigen::MatrixXd x_;
  std::vector<std::string> names_;
  Eigen::Index n1_ = 0;
};

// Column-role binding for CSV ingestion.  If covariates is empty, every column
// that is not a role column and not excluded becomes a covariate, in file
// order.
struct CsvSchema {
  std::string outcome = "y";
  std::string treatment = "d";
  std::string instrument = "z";
  std::vector<std::string> covariates;
  std::vector<std::string> exclude;
};

Dataset load_csv(const std::string& path, const CsvSchema& schema = {});
Dataset load_csv_string(const std::string& text, const CsvSchema& schema = {});

// Writes header y,d,z,<covariate names> with shortest round-trip decimals, so
// load_csv(save_csv(ds)) reproduces ds bit for bit (under the default schema).
void save_csv(const std::string& path, const Dataset& ds,
              const std::vector<std::string>& comment_lines = {});
std::string save_csv_string(const Dataset& ds,
                            const std::vector<std::string>& comment_lines = {});

// Balance statistic in percent: 100·|m1−m0| / sqrt(s1²+s0²).  Binary columns
// (every value 0 or 1 in both groups) use the population variance p(1−p);
// anything else uses the n−1 sample variance.
double standardized_difference(const std::vector<double>& group0,
                               const std::vector<double>& group1);

// (1 − exp(2(l0−l1)/n)) / (1 − exp(2·l0/n)); 0 when the full model adds
// nothing, approaching 1 for a saturated fit.
double nagelkerke_pseudo_r2(double loglik_null, double loglik_full, Eigen::Index n);

bool is_binary01(const std::vector<double>& v);
bool is_binary01(const Eigen::VectorXd& v);

}  // namespace latelab
