#pragma once

#include <cstddef>
#include <vector>

namespace latelab {

// Standard normal density, CDF and quantile.  The quantile uses the rational
// minimax approximation of Wichura (algorithm PPND16), accurate to roughly
// 1e-15 over the full open unit interval; the CDF goes through erfc so the
// lower tail keeps full relative precision.
double norm_pdf(double x);
double norm_cdf(double x);
double norm_ppf(double p);

double logistic_cdf(double x);

// Descriptive helpers used across the estimators and the simulation metrics.
// sample_sd uses the n-1 denominator; median averages the two middle order
// statistics for even n; quantile interpolates linearly between order
// statistics (the common "type 7" rule), q in [0,1].
double mean(const std::vector<double>& v);
double sample_sd(const std::vector<double>& v);
double median(std::vector<double> v);
double quantile(std::vector<double> v, double q);

}  // namespace latelab
