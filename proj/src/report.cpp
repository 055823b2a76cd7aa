#include "latelab/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "latelab/csv.hpp"
#include "latelab/errors.hpp"

namespace latelab {

namespace {

const double kNaN = std::numeric_limits<double>::quiet_NaN();
const double kInf = std::numeric_limits<double>::infinity();

const std::vector<std::string>& all_metric_columns() {
  static const std::vector<std::string> cols = {"coverage", "interval_length", "abs_bias",
                                                "sd",       "rmse",            "se_bias"};
  return cols;
}

double metric_value(const MetricsRow& m, const std::string& name) {
  if (name == "coverage") return m.coverage;
  if (name == "interval_length") return m.interval_length;
  if (name == "abs_bias") return m.abs_bias;
  if (name == "sd") return m.sd;
  if (name == "rmse") return m.rmse;
  if (name == "se_bias") return m.se_bias;
  fail(errc::bad_argument, "unknown metric column: " + name);
}

double metric_rank(const MetricsRow& m, const std::string& name) {
  if (name == "coverage") return m.rank_coverage;
  if (name == "interval_length") return m.rank_interval;
  if (name == "abs_bias") return m.rank_bias;
  if (name == "sd") return m.rank_sd;
  if (name == "rmse") return m.rank_rmse;
  if (name == "se_bias") return m.rank_se_bias;
  fail(errc::bad_argument, "unknown metric column: " + name);
}

// Group label for one design, under the requested grouping.
std::string group_label(const Grouping grouping, const std::string& feature, int dgp_id) {
  if (grouping == Grouping::overall) return "all";
  if (grouping == Grouping::by_dgp) return "dgp " + std::to_string(dgp_id);
  const DgpSpec spec = dgp_from_id(dgp_id);
  if (feature == "heterogeneity") return spec.heterogeneity ? "heterogeneous" : "homogeneous";
  if (feature == "selection") return spec.strong_selection ? "selective" : "random";
  if (feature == "strength") return spec.observed_strength ? "observed" : "weak";
  if (feature == "outcome") return spec.binary_outcome ? "binary" : "continuous";
  if (feature == "size") return "n=" + std::to_string(spec.sample_size);
  fail(errc::bad_argument, "unknown grouping feature: " + feature);
}

double nan_mean(const std::vector<double>& v) {
  double sum = 0.0;
  long n = 0;
  for (const double x : v)
    if (std::isfinite(x)) {
      sum += x;
      ++n;
    }
  return n > 0 ? sum / static_cast<double>(n) : kNaN;
}

// 6 significant digits for the aligned text table; full precision lives in
// the csv form.
std::string short_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", x);
  return buf;
}

}  // namespace

RenderedTable render_table(const std::vector<MetricsRow>& metrics, const TableSpec& spec) {
  if (metrics.empty()) fail(errc::bad_argument, "report needs at least one metric row");
  if (spec.grouping == Grouping::by_feature) {
    static const std::set<std::string> features = {"heterogeneity", "selection", "strength",
                                                   "outcome", "size"};
    if (!features.count(spec.feature))
      fail(errc::bad_argument, "unknown grouping feature: " + spec.feature);
  } else if (!spec.feature.empty()) {
    fail(errc::bad_argument, "feature is only meaningful with by-feature grouping");
  }

  RenderedTable out;
  out.metric_columns = spec.columns.empty() ? all_metric_columns() : spec.columns;
  for (const auto& c : out.metric_columns) metric_value(MetricsRow{}, c);  // validates names

  // ---- bucket rows by (group, estimator), preserving first-seen order ------
  std::vector<std::string> group_order;
  std::map<std::string, std::vector<std::string>> estimator_order;
  std::map<std::pair<std::string, std::string>, std::vector<const MetricsRow*>> buckets;
  for (const auto& m : metrics) {
    const std::string g = group_label(spec.grouping, spec.feature, m.dgp_id);
    if (std::find(group_order.begin(), group_order.end(), g) == group_order.end())
      group_order.push_back(g);
    auto& order = estimator_order[g];
    if (std::find(order.begin(), order.end(), m.estimator) == order.end())
      order.push_back(m.estimator);
    buckets[{g, m.estimator}].push_back(&m);
  }

  // ---- aggregate, diff and sort within each group ---------------------------
  for (const auto& g : group_order) {
    std::vector<DisplayRow> rows;
    for (const auto& est : estimator_order[g]) {
      const auto& members = buckets[{g, est}];
      DisplayRow row;
      row.group = g;
      row.estimator = est;
      for (const auto& col : out.metric_columns) {
        std::vector<double> vals, ranks;
        for (const auto* m : members) {
          vals.push_back(metric_value(*m, col));
          ranks.push_back(metric_rank(*m, col));
        }
        row.values.push_back(nan_mean(vals));
        row.ranks.push_back(nan_mean(ranks));
      }
      row.diffs.assign(out.metric_columns.size(), kNaN);
      rows.push_back(std::move(row));
    }

    // difference to the group's best performer, per metric
    for (std::size_t c = 0; c < out.metric_columns.size(); ++c) {
      const std::string& col = out.metric_columns[c];
      const auto comparable = [&](const DisplayRow& r) {
        const double v = r.values[c];
        if (!std::isfinite(v)) return kNaN;
        if (col == "coverage") return std::abs(v - 95.0);
        if (col == "se_bias") return std::abs(v);
        return v;
      };
      double best = kNaN;
      for (const auto& r : rows) {
        const double v = comparable(r);
        if (std::isfinite(v) && (std::isnan(best) || v < best)) best = v;
      }
      if (std::isnan(best)) continue;  // no usable row for this metric
      for (auto& r : rows) {
        const double v = comparable(r);
        if (!std::isfinite(v)) continue;
        if (col == "coverage") {
          r.diffs[c] = v - best;  // percentage points off the smallest gap
        } else if (best == 0.0) {
          r.diffs[c] = v == 0.0 ? 0.0 : kInf;
        } else {
          r.diffs[c] = 100.0 * (v / best - 1.0);
        }
      }
    }

    // sort key on the aggregated values; stable so equal keys keep input order
    const auto col_pos = [&](const char* name) {
      const auto it = std::find(out.metric_columns.begin(), out.metric_columns.end(), name);
      return it == out.metric_columns.end()
                 ? std::string::npos
                 : static_cast<std::size_t>(it - out.metric_columns.begin());
    };
    const auto key = [&](const DisplayRow& r) -> std::pair<double, double> {
      const auto at = [&](std::size_t pos) {
        return pos == std::string::npos || std::isnan(r.values[pos]) ? kInf : r.values[pos];
      };
      switch (spec.sort) {
        case SortKey::coverage_gap: {
          const std::size_t cov = col_pos("coverage");
          const double gap = cov == std::string::npos || std::isnan(r.values[cov])
                                 ? kInf
                                 : std::abs(r.values[cov] - 95.0);
          return {gap, at(col_pos("interval_length"))};
        }
        case SortKey::rmse:
          return {at(col_pos("rmse")), 0.0};
        case SortKey::bias:
          return {at(col_pos("abs_bias")), 0.0};
      }
      return {kInf, kInf};
    };
    std::stable_sort(rows.begin(), rows.end(),
                     [&](const DisplayRow& a, const DisplayRow& b) { return key(a) < key(b); });
    for (auto& r : rows) out.rows.push_back(std::move(r));
  }

  // ---- render ----------------------------------------------------------------
  CsvTable csv;
  csv.columns = {"group", "estimator"};
  for (const auto& col : out.metric_columns) {
    csv.columns.push_back(col);
    csv.columns.push_back(col + "_diff");
    csv.columns.push_back(col + "_rank");
  }
  for (const auto& r : out.rows) {
    std::vector<std::string> line = {r.group, r.estimator};
    for (std::size_t c = 0; c < out.metric_columns.size(); ++c) {
      line.push_back(format_double(r.values[c]));
      line.push_back(format_double(r.diffs[c]));
      line.push_back(format_double(r.ranks[c]));
    }
    csv.rows.push_back(std::move(line));
  }
  out.csv = write_csv_string(csv);

  std::vector<std::vector<std::string>> cells;
  cells.push_back(csv.columns);
  for (const auto& r : out.rows) {
    std::vector<std::string> line = {r.group, r.estimator};
    for (std::size_t c = 0; c < out.metric_columns.size(); ++c) {
      line.push_back(short_double(r.values[c]));
      line.push_back(short_double(r.diffs[c]));
      line.push_back(short_double(r.ranks[c]));
    }
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(cells[0].size(), 0);
  for (const auto& line : cells)
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
  std::string text;
  for (const auto& line : cells) {
    std::string built;
    for (std::size_t c = 0; c < line.size(); ++c) {
      if (c > 0) built += "  ";
      const std::string pad(width[c] - line[c].size(), ' ');
      // labels left-aligned, numbers right-aligned
      if (c < 2) {
        built += line[c] + pad;
      } else {
        built += pad + line[c];
      }
    }
    built.erase(built.find_last_not_of(' ') + 1);
    text += built + '\n';
  }
  out.text = std::move(text);
  return out;
}

}  // namespace latelab
