#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "doctest.h"
#include "latelab/csv.hpp"
#include "latelab/errors.hpp"
#include "latelab/report.hpp"

using namespace latelab;

namespace {

MetricsRow make_row(int dgp, const std::string& est, double coverage, double interval,
                    double abs_bias, double sd, double rmse, double se_bias) {
  MetricsRow m;
  m.dgp_id = dgp;
  m.estimator = est;
  m.coverage = coverage;
  m.interval_length = interval;
  m.abs_bias = abs_bias;
  m.sd = sd;
  m.rmse = rmse;
  m.se_bias = se_bias;
  m.nsimp = m.nsimse = m.n_reps = 100;
  return m;
}

const DisplayRow& find_row(const RenderedTable& table, const std::string& group,
                           const std::string& est) {
  for (const auto& r : table.rows)
    if (r.group == group && r.estimator == est) return r;
  REQUIRE(false);
  return table.rows.front();  // unreachable
}

std::size_t col_of(const RenderedTable& table, const std::string& name) {
  for (std::size_t c = 0; c < table.metric_columns.size(); ++c)
    if (table.metric_columns[c] == name) return c;
  REQUIRE(false);
  return 0;
}

}  // namespace

TEST_SUITE_BEGIN("report");

TEST_CASE("coverage differences are gaps to 95 net of the best gap") {
  // One estimator hits 95 exactly, so the others' differences equal their own
  // gaps: 95.5 -> 0.5 and 90.5 -> 4.5.
  const std::vector<MetricsRow> metrics = {
      make_row(1, "a", 95.0, 2.0, 0.1, 1.0, 1.1, 0.01),
      make_row(1, "b", 95.5, 2.1, 0.2, 1.1, 1.2, 0.02),
      make_row(1, "c", 90.5, 2.2, 0.3, 1.2, 1.3, 0.03),
  };
  const RenderedTable t = render_table(metrics, TableSpec{});
  const std::size_t cov = col_of(t, "coverage");
  CHECK(find_row(t, "all", "a").diffs[cov] == 0.0);
  CHECK(find_row(t, "all", "b").diffs[cov] == 0.5);
  CHECK(find_row(t, "all", "c").diffs[cov] == 4.5);
}

TEST_CASE("value metrics diff as percent above the best, on full precision") {
  const std::vector<MetricsRow> metrics = {
      make_row(1, "a", 95, 2, 0.1, 1.0, 211.8, 0.01),
      make_row(1, "b", 94, 2, 0.2, 1.1, 228.8, 0.02),
  };
  const RenderedTable t = render_table(metrics, TableSpec{});
  const std::size_t rmse = col_of(t, "rmse");
  CHECK(find_row(t, "all", "a").diffs[rmse] == 0.0);
  CHECK(find_row(t, "all", "b").diffs[rmse] ==
        doctest::Approx(100.0 * (228.8 / 211.8 - 1.0)).epsilon(1e-14));
  // displayed to one decimal this is the familiar 8.0 percent
  CHECK(find_row(t, "all", "b").diffs[rmse] == doctest::Approx(8.0).epsilon(0.01));
}

TEST_CASE("the best row is exactly zero and everything else nonnegative") {
  std::vector<MetricsRow> metrics;
  for (int i = 0; i < 5; ++i)
    metrics.push_back(make_row(1, "e" + std::to_string(i), 90.0 + i, 2.0 + i, 0.1 * (i + 1),
                               1.0 + i, 1.5 + i, 0.01 * (i + 1)));
  const RenderedTable t = render_table(metrics, TableSpec{});
  for (std::size_t c = 0; c < t.metric_columns.size(); ++c) {
    bool saw_zero = false;
    for (const auto& r : t.rows) {
      CHECK(r.diffs[c] >= 0.0);
      if (r.diffs[c] == 0.0) saw_zero = true;
    }
    CHECK(saw_zero);
  }
}

TEST_CASE("a zero best value yields zero for ties and infinity otherwise") {
  const std::vector<MetricsRow> metrics = {
      make_row(1, "a", 95, 2, 0.0, 1, 1, 0.01),
      make_row(1, "b", 95, 2, 0.0, 1, 1, 0.01),
      make_row(1, "c", 95, 2, 0.3, 1, 1, 0.01),
  };
  const RenderedTable t = render_table(metrics, TableSpec{});
  const std::size_t bias = col_of(t, "abs_bias");
  CHECK(find_row(t, "all", "a").diffs[bias] == 0.0);
  CHECK(find_row(t, "all", "b").diffs[bias] == 0.0);
  CHECK(std::isinf(find_row(t, "all", "c").diffs[bias]));
}

TEST_CASE("se bias competes on magnitude") {
  const std::vector<MetricsRow> metrics = {
      make_row(1, "under", 95, 2, 0.1, 1, 1, -0.1),
      make_row(1, "over", 95, 2, 0.1, 1, 1, 0.2),
  };
  const RenderedTable t = render_table(metrics, TableSpec{});
  const std::size_t seb = col_of(t, "se_bias");
  CHECK(find_row(t, "all", "under").diffs[seb] == 0.0);  // |−0.1| beats |0.2|
  CHECK(find_row(t, "all", "over").diffs[seb] == doctest::Approx(100.0).epsilon(1e-12));
}

TEST_CASE("a single estimator is trivially best everywhere") {
  const RenderedTable t =
      render_table({make_row(1, "only", 93.0, 2.5, 0.4, 1.2, 1.7, -0.05)}, TableSpec{});
  REQUIRE(t.rows.size() == 1);
  for (const double d : t.rows[0].diffs) CHECK(d == 0.0);
}

TEST_CASE("overall grouping averages values and ranks across designs") {
  MetricsRow r1 = make_row(1, "e", 94.0, 2.0, 0.1, 1.0, 1.2, 0.05);
  r1.rank_rmse = 1.0;
  MetricsRow r2 = make_row(2, "e", 96.0, 3.0, 0.3, 2.0, 1.8, 0.15);
  r2.rank_rmse = 2.0;
  const RenderedTable t = render_table({r1, r2}, TableSpec{});
  REQUIRE(t.rows.size() == 1);
  const DisplayRow& row = t.rows[0];
  CHECK(row.group == "all");
  CHECK(row.values[col_of(t, "coverage")] == 95.0);
  CHECK(row.values[col_of(t, "rmse")] == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(row.ranks[col_of(t, "rmse")] == 1.5);
}

TEST_CASE("per-design grouping keeps stored values and ranks") {
  MetricsRow r1 = make_row(4, "e", 94.0, 2.0, 0.1, 1.0, 1.2, 0.05);
  r1.rank_coverage = 3.0;
  MetricsRow r2 = make_row(9, "e", 96.0, 3.0, 0.3, 2.0, 1.8, 0.15);
  r2.rank_coverage = 1.0;
  TableSpec spec;
  spec.grouping = Grouping::by_dgp;
  const RenderedTable t = render_table({r1, r2}, spec);
  REQUIRE(t.rows.size() == 2);
  CHECK(find_row(t, "dgp 4", "e").values[col_of(t, "coverage")] == 94.0);
  CHECK(find_row(t, "dgp 4", "e").ranks[col_of(t, "coverage")] == 3.0);
  CHECK(find_row(t, "dgp 9", "e").values[col_of(t, "coverage")] == 96.0);
  CHECK(find_row(t, "dgp 9", "e").ranks[col_of(t, "coverage")] == 1.0);
}

TEST_CASE("feature grouping splits designs on the requested flag") {
  const std::vector<MetricsRow> metrics = {
      make_row(1, "e", 94, 2, 0.1, 1, 1.2, 0.05),   // n=1000, continuous, random
      make_row(17, "e", 96, 3, 0.3, 2, 1.8, 0.15),  // n=2000 twin of dgp 1
      make_row(9, "e", 92, 1, 0.2, 1, 1.4, 0.02),   // binary twin of dgp 1
      make_row(3, "e", 91, 1, 0.2, 1, 1.4, 0.02),   // selective
  };
  TableSpec spec;
  spec.grouping = Grouping::by_feature;
  spec.feature = "size";
  RenderedTable t = render_table(metrics, spec);
  CHECK(find_row(t, "n=1000", "e").values[col_of(t, "coverage")] ==
        doctest::Approx((94.0 + 92.0 + 91.0) / 3.0).epsilon(1e-15));
  CHECK(find_row(t, "n=2000", "e").values[col_of(t, "coverage")] == 96.0);

  spec.feature = "outcome";
  t = render_table(metrics, spec);
  CHECK(find_row(t, "binary", "e").values[col_of(t, "coverage")] == 92.0);
  CHECK(find_row(t, "continuous", "e").values[col_of(t, "coverage")] ==
        doctest::Approx((94.0 + 96.0 + 91.0) / 3.0).epsilon(1e-15));

  spec.feature = "selection";
  t = render_table(metrics, spec);
  CHECK(find_row(t, "selective", "e").values[col_of(t, "coverage")] == 91.0);

  spec.feature = "heterogeneity";
  t = render_table(metrics, spec);
  CHECK(find_row(t, "homogeneous", "e").values[col_of(t, "coverage")] ==
        doctest::Approx((94.0 + 96.0 + 92.0 + 91.0) / 4.0).epsilon(1e-15));

  spec.feature = "strength";
  t = render_table(metrics, spec);
  CHECK(find_row(t, "observed", "e").values[col_of(t, "coverage")] ==
        doctest::Approx((94.0 + 96.0 + 92.0 + 91.0) / 4.0).epsilon(1e-15));
}

TEST_CASE("coverage-gap sort puts the best coverage first and breaks ties by length") {
  const std::vector<MetricsRow> metrics = {
      make_row(1, "far", 90.5, 2.0, 0.1, 1, 1, 0.01),
      make_row(1, "close_wide", 94.0, 3.0, 0.1, 1, 1, 0.01),
      make_row(1, "exact", 95.0, 2.5, 0.1, 1, 1, 0.01),
      make_row(1, "close_narrow", 96.0, 1.5, 0.1, 1, 1, 0.01),  // same gap as close_wide
  };
  const RenderedTable t = render_table(metrics, TableSpec{});
  REQUIRE(t.rows.size() == 4);
  CHECK(t.rows[0].estimator == "exact");
  CHECK(t.rows[1].estimator == "close_narrow");
  CHECK(t.rows[2].estimator == "close_wide");
  CHECK(t.rows[3].estimator == "far");
}

TEST_CASE("alternative sort keys order by rmse or bias") {
  const std::vector<MetricsRow> metrics = {
      make_row(1, "a", 95, 2, 0.3, 1, 2.0, 0.01),
      make_row(1, "b", 90, 2, 0.1, 1, 1.0, 0.01),
  };
  TableSpec spec;
  spec.sort = SortKey::rmse;
  CHECK(render_table(metrics, spec).rows[0].estimator == "b");
  spec.sort = SortKey::bias;
  CHECK(render_table(metrics, spec).rows[0].estimator == "b");
  spec.sort = SortKey::coverage_gap;
  CHECK(render_table(metrics, spec).rows[0].estimator == "a");
}

TEST_CASE("nan metrics sort last, never win, and keep nan diffs") {
  MetricsRow broken = make_row(1, "broken", 0, 0, 0, 0, 0, 0);
  broken.coverage = broken.interval_length = broken.abs_bias = broken.sd = broken.rmse =
      broken.se_bias = std::numeric_limits<double>::quiet_NaN();
  const std::vector<MetricsRow> metrics = {broken, make_row(1, "fine", 94, 2, 0.1, 1, 1, 0.01)};
  const RenderedTable t = render_table(metrics, TableSpec{});
  CHECK(t.rows[0].estimator == "fine");
  CHECK(t.rows[1].estimator == "broken");
  CHECK(find_row(t, "all", "fine").diffs[col_of(t, "rmse")] == 0.0);
  CHECK(std::isnan(find_row(t, "all", "broken").diffs[col_of(t, "rmse")]));
}

TEST_CASE("csv form reloads to the full-precision table") {
  const std::vector<MetricsRow> metrics = {
      make_row(1, "a", 94.123456789, 2.000000001, 0.1, 1, 1.23456789012345, 0.01),
      make_row(1, "b", 96.2, 2.5, 0.2, 1.1, 1.9, 0.02),
  };
  const RenderedTable t = render_table(metrics, TableSpec{});
  const CsvTable parsed = read_csv_string(t.csv);
  REQUIRE(parsed.rows.size() == t.rows.size());
  CHECK(parsed.columns.size() == 2 + 3 * t.metric_columns.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    CHECK(parsed.rows[i][0] == t.rows[i].group);
    CHECK(parsed.rows[i][1] == t.rows[i].estimator);
    for (std::size_t c = 0; c < t.metric_columns.size(); ++c) {
      CHECK(parse_double(parsed.rows[i][2 + 3 * c]) == t.rows[i].values[c]);
      CHECK(parse_double(parsed.rows[i][4 + 3 * c]) == t.rows[i].ranks[c]);
    }
  }
}

TEST_CASE("text form is aligned and rounds to six significant digits") {
  const std::vector<MetricsRow> metrics = {
      make_row(1, "longname", 94.1234567, 2, 0.1, 1, 1.23456789, 0.01),
      make_row(1, "b", 96.0, 2, 0.2, 1, 1.9, 0.02),
  };
  TableSpec spec;
  spec.columns = {"coverage", "rmse"};
  const RenderedTable t = render_table(metrics, spec);
  CHECK(t.text.find("94.1235") != std::string::npos);  // %.6g of 94.1234567
  CHECK(t.text.find("1.23457") != std::string::npos);
  CHECK(t.text.find("94.1234567") == std::string::npos);
  // header + one line per row, all equally wide once padded
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < t.text.size()) {
    const auto end = t.text.find('\n', start);
    lines.push_back(t.text.substr(start, end - start));
    start = end + 1;
  }
  REQUIRE(lines.size() == 3);
  CHECK(lines[0].find("coverage") != std::string::npos);
  CHECK(lines[0].find("rmse_rank") != std::string::npos);
}

TEST_CASE("column selection restricts and orders the metric columns") {
  const std::vector<MetricsRow> metrics = {make_row(1, "a", 94, 2, 0.1, 1, 1, 0.01)};
  TableSpec spec;
  spec.columns = {"rmse", "coverage"};
  const RenderedTable t = render_table(metrics, spec);
  CHECK(t.metric_columns == std::vector<std::string>{"rmse", "coverage"});
  const CsvTable parsed = read_csv_string(t.csv);
  CHECK(parsed.columns == std::vector<std::string>{"group", "estimator", "rmse", "rmse_diff",
                                                   "rmse_rank", "coverage", "coverage_diff",
                                                   "coverage_rank"});
}

TEST_CASE("report input validation") {
  CHECK_THROWS_AS(render_table({}, TableSpec{}), Error);
  const std::vector<MetricsRow> metrics = {make_row(1, "a", 94, 2, 0.1, 1, 1, 0.01)};
  TableSpec spec;
  spec.grouping = Grouping::by_feature;
  spec.feature = "age";
  CHECK_THROWS_AS(render_table(metrics, spec), Error);
  spec.grouping = Grouping::overall;
  spec.feature = "size";  // feature without by-feature grouping
  CHECK_THROWS_AS(render_table(metrics, spec), Error);
  spec.feature.clear();
  spec.columns = {"rmse", "banana"};
  CHECK_THROWS_AS(render_table(metrics, spec), Error);
}

TEST_SUITE_END();
