#pragma once

#include <string>
#include <vector>

#include "latelab/emcs.hpp"

// Comparison tables over simulation metrics: estimators against the best
// performer, grouped by design feature or shown per design, with per-metric
// ranks carried over from the metric rows.

namespace latelab {

enum class Grouping {
  overall,     // one row per estimator, averaged over every design present
  by_feature,  // split the designs on one design flag (TableSpec::feature)
  by_dgp,      // one block per design id
};

enum class SortKey {
  coverage_gap,  // |coverage - 95|, ties broken by interval length
  rmse,
  bias,
};

// Valid `feature` values for Grouping::by_feature: "heterogeneity",
// "selection", "strength", "outcome", "size".
struct TableSpec {
  Grouping grouping = Grouping::overall;
  std::string feature;
  SortKey sort = SortKey::coverage_gap;
  // Metric columns, in display order; empty means all six.  Valid names:
  // coverage, interval_length, abs_bias, sd, rmse, se_bias.
  std::vector<std::string> columns;
};

// One table row: the group label, the estimator, and per selected metric the
// group-averaged value, its difference to the group's best performer, and the
// group-averaged rank.
struct DisplayRow {
  std::string group;
  std::string estimator;
  std::vector<double> values;
  std::vector<double> diffs;
  std::vector<double> ranks;
};

struct RenderedTable {
  std::vector<std::string> metric_columns;  // resolved column selection
  std::vector<DisplayRow> rows;             // grouped, sorted within group
  std::string csv;                          // full-precision fields
  std::string text;                         // aligned, 6 significant digits
};

// Differences to the best performer are computed on full-precision values:
// coverage as the gap |coverage - 95| minus the group's smallest gap (in
// percentage points), se_bias on magnitudes and the rest as percent above the
// smallest value (100 * (value / best - 1); if the best is exactly zero the
// difference is 0 for ties with it and infinity otherwise).  The best row of
// each metric is exactly 0.  NaN metrics yield NaN differences and are never
// the best.
RenderedTable render_table(const std::vector<MetricsRow>& metrics, const TableSpec& spec);

}  // namespace latelab
