#pragma once

#include <Eigen/Dense>
#include <vector>

namespace latelab {

enum class KernelMode { local_constant, local_linear };

// Product-kernel regression over the training set.  The matrix is held
// row-major so the per-observation inner loops walk contiguous memory.
class KernelRegression {
 public:
  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  static KernelRegression fit(Eigen::MatrixXd x, Eigen::VectorXd y, Eigen::VectorXd bandwidth,
                              KernelMode mode);

  const RowMatrix& x() const { return x_; }
  const Eigen::VectorXd& y() const { return y_; }
  const Eigen::VectorXd& bandwidth() const { return bandwidth_; }
  KernelMode mode() const { return mode_; }
  Eigen::Index n() const { return x_.rows(); }
  Eigen::Index k() const { return x_.cols(); }

  // Dimensions ordered by ascending bandwidth: the tightest dimension rejects
  // out-of-window pairs earliest.
  const std::vector<Eigen::Index>& scan_order() const { return scan_order_; }

 private:
  RowMatrix x_;
  Eigen::VectorXd y_;
  Eigen::VectorXd bandwidth_;
  KernelMode mode_;
  std::vector<Eigen::Index> scan_order_;
};

double epanechnikov(double u);

// Prediction at one query row.  Throws EmptyNeighborhood when every training
// point has zero kernel weight at x0.
double kr_predict(const KernelRegression& model, const Eigen::RowVectorXd& x0);

// Prediction with the degraded-gracefully contract: on an empty neighborhood
// the bandwidth for this query is doubled up to 10 times, then the global
// training mean is used.  *fallbacks (if non-null) is incremented once per
// query that needed any fallback.
double kr_predict_robust(const KernelRegression& model, const Eigen::RowVectorXd& x0,
                         long* fallbacks = nullptr);

// Fitted values at every training row (the query point itself participates
// with full kernel weight, so the neighborhood is never empty).
Eigen::VectorXd kr_fitted_at_training(const KernelRegression& model);

// Per-dimension Silverman baseline 1.06*sd_j*n^(-1/5); constant columns get a
// neutral bandwidth of 1 (all differences are zero there anyway).
Eigen::VectorXd silverman_baseline(const Eigen::MatrixXd& x);

// Leave-one-out least-squares criterion sum_i (y_i - mhat_{-i}(x_i))^2 with
// the same fallback ladder as kr_predict_robust (doubling, then the global
// mean of the other n-1 responses).
double lscv_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, KernelMode mode,
                      const Eigen::VectorXd& bandwidth);

// Scales the Silverman baseline by each candidate factor and returns the
// bandwidth with the smallest LOO criterion; ties go to the smallest factor.
Eigen::VectorXd lscv_bandwidth(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                               KernelMode mode, const std::vector<double>& grid_factors);

inline const std::vector<double>& default_bandwidth_grid() {
  static const std::vector<double> grid{0.25, 0.5, 1.0, 2.0, 4.0};
  return grid;
}

}  // namespace latelab
