#include <doctest.h>

#include <cmath>
#include <vector>

#include "latelab/dataset.hpp"
#include "latelab/errors.hpp"
#include "latelab/rng.hpp"

using namespace latelab;

namespace {

// Two points {m - s/sqrt(2), m + s/sqrt(2)} have sample mean m and sample
// (n-1) standard deviation exactly s — used to pin the published balance
// statistics from their reported means/sds.
std::vector<double> two_point_group(double mean, double sd) {
  const double delta = sd / std::sqrt(2.0);
  return {mean - delta, mean + delta};
}

Dataset demo_dataset() {
  const std::string csv =
      "y,d,z,x1,x2\n"
      "1.5,0,0,0.25,1\n"
      "2.5,1,1,-0.5,0\n"
      "0.75,0,1,0.125,1\n"
      "3.25,1,0,2.0,0\n";
  return load_csv_string(csv);
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("well-formed csv loads with preserved order") {
  Dataset ds = load_csv_string("y,d,z,x1\n1,0,0,0.5\n2,1,1,1.5\n3,0,1,2.5\n0,1,0,3.5\n");
  CHECK(ds.n() == 4);
  CHECK(ds.k() == 1);
  CHECK(ds.n1() == 2);
  CHECK(ds.n0() == 2);
  CHECK(ds.y()[2] == 3.0);
  CHECK(ds.x()(3, 0) == 3.5);
  CHECK(ds.column_names()[0] == "x1");
}

TEST_CASE("schema binds roles by name and excludes columns") {
  const std::string csv = "idx,out,treat,inst,a,b\n9,1,0,0,1,2\n8,2,1,1,3,4\n";
  CsvSchema schema;
  schema.outcome = "out";
  schema.treatment = "treat";
  schema.instrument = "inst";
  schema.exclude = {"idx"};
  Dataset ds = load_csv_string(csv, schema);
  CHECK(ds.k() == 2);
  CHECK(ds.column_names() == std::vector<std::string>{"a", "b"});
  CHECK(ds.y()[1] == 2.0);

  CsvSchema explicit_cov = schema;
  explicit_cov.covariates = {"b"};
  Dataset ds2 = load_csv_string(csv, explicit_cov);
  CHECK(ds2.k() == 1);
  CHECK(ds2.x()(0, 0) == 2.0);
}

TEST_CASE("contract violations are reported with the right code") {
  auto code_of = [](const std::string& csv) {
    try {
      (void)load_csv_string(csv);
    } catch (const Error& e) {
      return e.code();
    }
    return errc::bad_argument;
  };
  CHECK(code_of("y,d,z,x\n1,2,0,1\n2,0,1,1\n") == errc::non_binary_indicator);
  CHECK(code_of("y,d,z,x\n1,0,0,1\n2,0,0,1\n") == errc::empty_instrument_arm);
  CHECK(code_of("y,d,z,x\n1,0,1,1\n2,0,1,1\n") == errc::empty_instrument_arm);
  CHECK(code_of("y,d,x\n1,0,1\n2,0,1\n") == errc::missing_column);
  CHECK(code_of("y,d,z,x\nnan,0,1,1\n2,0,0,1\n") == errc::non_finite_value);
  CHECK(code_of("y,d,z\n1,0,1\n2,0,0\n") == errc::missing_column);  // no covariate left
  CHECK(code_of("y,d,z,x\n1,0,1,1\n") == errc::insufficient_data);
}

TEST_CASE("save then load reproduces the dataset bitwise") {
  // Awkward values: shortest-round-trip formatting must survive a full cycle.
  RngStream r(77, {1});
  const Eigen::Index n = 64;
  Eigen::VectorXd y(n), d(n), z(n);
  Eigen::MatrixXd x(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    y[i] = r.normal() * 1e3;
    d[i] = (r.uniform01() < 0.4) ? 1.0 : 0.0;
    z[i] = (i % 3 == 0) ? 1.0 : 0.0;
    x(i, 0) = r.uniform01() / 3.0;
    x(i, 1) = r.normal() * 1e-7;
    x(i, 2) = r.gamma(2.2, 1.67);
  }
  Dataset ds = Dataset::from_parts(y, d, z, x, {"c1", "c2", "c3"});
  const std::string text = save_csv_string(ds, {"seed=77"});
  Dataset back = load_csv_string(text);
  REQUIRE(back.n() == ds.n());
  CHECK(back.y() == ds.y());
  CHECK(back.d() == ds.d());
  CHECK(back.z() == ds.z());
  CHECK(back.x() == ds.x());
  CHECK(back.column_names() == ds.column_names());
  // And the textual form is a fixed point too.
  CHECK(save_csv_string(back, {"seed=77"}) == text);
}

TEST_CASE("row selection preserves order and revalidates") {
  Dataset ds = demo_dataset();
  Dataset sub = ds.select_rows(std::vector<Eigen::Index>{3, 1, 1});
  CHECK(sub.n() == 3);
  CHECK(sub.y()[0] == 3.25);
  CHECK(sub.y()[1] == 2.5);
  CHECK(sub.y()[2] == 2.5);

  std::vector<bool> keep{true, false, true, true};
  Dataset masked = ds.select_rows(keep);
  CHECK(masked.n() == 3);
  CHECK(masked.y()[1] == 0.75);

  // A resample that lands entirely in one instrument arm is invalid.
  CHECK_THROWS_AS(ds.select_rows(std::vector<Eigen::Index>{0, 3, 0}), Error);
}

TEST_CASE("standardized difference reproduces published magnitudes") {
  // Continuous variable reported as means 2.32/1.73 with sds 2.26/2.13.
  const double v = standardized_difference(two_point_group(1.73, 2.13),
                                           two_point_group(2.32, 2.26));
  CHECK(v == doctest::Approx(18.998186772092236).epsilon(1e-12));
  CHECK(std::lround(v) == 19);

  // Binary variable: one arm 39.8% ones, the other all ones; the population
  // p(1-p) variance convention is what yields 123 after rounding.
  std::vector<double> g0(1000, 0.0);
  for (int i = 0; i < 398; ++i) g0[static_cast<std::size_t>(i)] = 1.0;
  std::vector<double> g1(100, 1.0);
  const double b = standardized_difference(g0, g1);
  CHECK(b == doctest::Approx(122.98629249108826).epsilon(1e-12));
  CHECK(std::lround(b) == 123);
}

TEST_CASE("standardized difference invariances") {
  std::vector<double> a{1.0, 2.0, 5.5, -0.25};
  std::vector<double> b{0.5, 3.5, 2.0};
  const double base = standardized_difference(a, b);
  CHECK(standardized_difference(b, a) == doctest::Approx(base).epsilon(1e-14));

  auto shift = [](std::vector<double> v, double c) {
    for (auto& x : v) x += c;
    return v;
  };
  CHECK(standardized_difference(shift(a, 3.5), shift(b, 3.5)) ==
        doctest::Approx(base).epsilon(1e-12));

  auto scale = [](std::vector<double> v, double c) {
    for (auto& x : v) x *= c;
    return v;
  };
  CHECK(standardized_difference(scale(a, 7.25), scale(b, 7.25)) ==
        doctest::Approx(base).epsilon(1e-12));

  CHECK(standardized_difference(a, a) == doctest::Approx(0.0));
  CHECK_THROWS_AS(standardized_difference({2.0, 2.0}, {2.0, 2.0}), Error);
}

TEST_CASE("nagelkerke pseudo r2 formula") {
  CHECK(nagelkerke_pseudo_r2(-100.0, -100.0, 200) == doctest::Approx(0.0));
  // Direct evaluation of the definition (independently computed):
  // (1 - exp(-2*93.147/1000)) / (1 - exp(-2*693.147/1000)) = 0.22662732004754144
  CHECK(nagelkerke_pseudo_r2(-693.147, -600.0, 1000) ==
        doctest::Approx(0.22662732004754144).epsilon(1e-14));
  CHECK_THROWS_AS(nagelkerke_pseudo_r2(0.0, 0.0, 100), Error);
  CHECK_THROWS_AS(nagelkerke_pseudo_r2(-10.0, -20.0, 100), Error);
}

}  // TEST_SUITE
