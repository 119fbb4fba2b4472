#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "helpers.hpp"
#include "mmfc/error.hpp"
#include "mmfc/mi.hpp"

using namespace mmfc;
using mmfc::test::small_config;
using mmfc::test::small_schema;

TEST_CASE("Rubin's rules on a hand example") {
  const std::vector<double> q{0.2, 0.3, 0.4};
  const std::vector<double> u{0.01, 0.01, 0.01};
  const auto e = pool_estimates(q, u);
  CHECK(e.m == 3);
  CHECK(e.q_bar == doctest::Approx(0.3));
  CHECK(e.b == doctest::Approx(0.01));
  CHECK(e.u_bar == doctest::Approx(0.01));
  CHECK(e.t == doctest::Approx(0.01 + 4.0 / 3.0 * 0.01));
  CHECK(e.nu == doctest::Approx(6.125));
  CHECK(!e.normal_reference);
  const auto [lo, hi] = mi_interval(e, 0.95);
  const double half = 2.4348578231783353 * std::sqrt(e.t);
  CHECK(lo == doctest::Approx(0.3 - half).epsilon(1e-10));
  CHECK(hi == doctest::Approx(0.3 + half).epsilon(1e-10));
}

TEST_CASE("identical estimates switch to the normal reference") {
  const std::vector<double> q{0.25, 0.25, 0.25, 0.25, 0.25};
  const std::vector<double> u{0.002, 0.002, 0.002, 0.002, 0.002};
  const auto e = pool_estimates(q, u);
  CHECK(e.b == 0.0);
  CHECK(e.normal_reference);
  CHECK(std::isinf(e.nu));
  const auto [lo, hi] = mi_interval(e, 0.95);
  CHECK(hi - 0.25 == doctest::Approx(1.959963984540054 * std::sqrt(0.002)).epsilon(1e-10));
  CHECK(0.25 - lo == doctest::Approx(hi - 0.25));
}

TEST_CASE("zero total variance gives a degenerate interval") {
  const std::vector<double> q{0.0, 0.0};
  const std::vector<double> u{0.0, 0.0};
  const auto e = pool_estimates(q, u);
  CHECK(e.t == 0.0);
  const auto [lo, hi] = mi_interval(e, 0.95);
  CHECK(lo == 0.0);
  CHECK(hi == 0.0);
}

TEST_CASE("pooling input errors") {
  const std::vector<double> one{0.1};
  CHECK_THROWS_AS(pool_estimates(one, one), ValidationError);
  const std::vector<double> q{0.1, 0.2};
  const std::vector<double> u3{0.1, 0.2, 0.3};
  CHECK_THROWS_AS(pool_estimates(q, u3), ValidationError);
  const std::vector<double> neg{0.1, -0.01};
  CHECK_THROWS_AS(pool_estimates(q, neg), ValidationError);
  const auto e = pool_estimates(q, q);
  CHECK_THROWS_AS(mi_interval(e, 1.0), ValidationError);
}

TEST_CASE("pooling is invariant to the order of imputations") {
  Rng rng(1);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> q(5), u(5);
    for (std::size_t l = 0; l < 5; ++l) {
      q[l] = rng.uniform();
      u[l] = 0.01 * rng.uniform();
    }
    const auto a = pool_estimates(q, u);
    std::vector<std::size_t> idx{4, 2, 0, 3, 1};
    std::vector<double> qp, up;
    for (auto k : idx) {
      qp.push_back(q[k]);
      up.push_back(u[k]);
    }
    const auto b = pool_estimates(qp, up);
    CHECK(a.q_bar == doctest::Approx(b.q_bar).epsilon(1e-14));
    CHECK(a.t == doctest::Approx(b.t).epsilon(1e-12));
    CHECK(a.nu == doctest::Approx(b.nu).epsilon(1e-10));
    CHECK(a.t >= a.u_bar);
    CHECK(a.nu >= 4.0 - 1e-12);  // nu >= m - 1
  }
}

TEST_CASE("cell estimates from completed datasets") {
  const Schema schema = small_schema();
  const Dataset d1(schema, {1, 1, 1, 1, 2, 1, 1, 1, 1, 2, 1, 1, 3, 2, 2, 2}, 4);
  const Dataset d2(schema, {1, 1, 1, 1, 1, 1, 1, 1, 1, 2, 1, 1, 3, 2, 2, 2}, 4);
  const std::vector<Cell> cells{{{0}, {1}}, {{1}, {2}}, {{0, 1}, {1, 2}}};
  const auto est = cell_estimates({d1, d2}, cells);
  REQUIRE(est.size() == 3);
  // Y1 = 1: 2/4 and 3/4
  CHECK(est[0].q_bar == doctest::Approx(0.625));
  CHECK(est[0].b == doctest::Approx(0.03125));
  CHECK(est[0].u_bar == doctest::Approx((0.5 * 0.5 + 0.75 * 0.25) / 4.0 / 2.0));
  // X1 = 2 is identical in both
  CHECK(est[1].q_bar == doctest::Approx(0.5));
  CHECK(est[1].normal_reference);
  CHECK(est[2].q_bar == doctest::Approx(0.25));

  std::ostringstream out;
  write_pooled_csv(out, est, cells, schema);
  const std::string text = out.str();
  CHECK(text.rfind("cell,q_bar,T,nu,lower,upper\nY1=1,0.625,", 0) == 0);
  CHECK(text.find("\nX1=2,0.5,") != std::string::npos);
  CHECK(text.find(",inf,") != std::string::npos);
  CHECK(text.find("\nY1=1&X1=2,") != std::string::npos);
  CHECK(std::count(text.begin(), text.end(), '\n') == 4);
}

TEST_CASE("generate_imputations emits m complete datasets") {
  const Schema schema = small_schema();
  std::vector<int> values;
  for (int i = 0; i < 20; ++i) values.insert(values.end(), {1 + i % 3, i % 4 == 0 ? Dataset::kMissing : 1 + i % 2, 1, 2});
  const Dataset data(schema, values, 20);
  const Model model(schema, small_config(schema, 3));
  const auto out = generate_imputations(model, data, {.burn_in = 5, .thin = 2, .m = 4, .seed = 3});
  CHECK(out.size() == 4);
  for (const auto& d : out) CHECK(d.complete());
}

TEST_CASE("two-imputation hand example") {
  const std::vector<double> q{0.4, 0.5};
  const std::vector<double> u{0.01, 0.01};
  const auto e = pool_estimates(q, u);
  CHECK(e.q_bar == doctest::Approx(0.45).epsilon(1e-12));
  CHECK(e.b == doctest::Approx(0.005).epsilon(1e-12));
  CHECK(e.t == doctest::Approx(0.0175).epsilon(1e-12));
  CHECK(e.nu == doctest::Approx(49.0 / 9.0).epsilon(1e-12));
  const auto [lo, hi] = mi_interval(e, 0.95);
  CHECK(hi - e.q_bar == doctest::Approx(2.508729813802648 * std::sqrt(0.0175)).epsilon(1e-10));
  CHECK(e.q_bar - lo == doctest::Approx(hi - e.q_bar).epsilon(1e-12));
  double prev = 0.0;
  for (double level : {0.5, 0.8, 0.9, 0.95, 0.99}) {
    const auto [l, h] = mi_interval(e, level);
    CHECK(h - l > prev);
    prev = h - l;
  }
}

TEST_CASE("zero within-variance gives nu = m - 1") {
  const std::vector<double> q{0.1, 0.3, 0.2, 0.4};
  const std::vector<double> u{0.0, 0.0, 0.0, 0.0};
  const auto e = pool_estimates(q, u);
  CHECK(e.t == doctest::Approx(1.25 * e.b).epsilon(1e-14));
  CHECK(e.nu == doctest::Approx(3.0).epsilon(1e-14));
}

TEST_CASE("cell estimates for never-seen cells and one differing row") {
  const Schema schema = small_schema();
  std::vector<int> values;
  for (int i = 0; i < 100; ++i) values.insert(values.end(), {1, i < 50 ? 1 : 2, 1, 1});
  const Dataset a(schema, values, 100);
  values[4 * 50 + 1] = 1;  // row 50 flips X1 from 2 to 1
  const Dataset b(schema, values, 100);
  const std::vector<Cell> cells{{{1}, {1}}, {{0}, {3}}};
  const auto est = cell_estimates({a, b}, cells);
  CHECK(est[0].q_bar == doctest::Approx(0.505).epsilon(1e-12));
  CHECK(est[0].b == doctest::Approx(0.00005).epsilon(1e-12));
  CHECK(est[0].u_bar == doctest::Approx((0.25 + 0.51 * 0.49) / 200.0).epsilon(1e-12));
  CHECK(est[1].q_bar == 0.0);
  CHECK(est[1].t == 0.0);

  const auto same = cell_estimates({a, a, a}, cells);
  for (const auto& e : same) CHECK(e.b == 0.0);
  const Dataset shorter(schema, std::vector<int>(values.begin(), values.begin() + 8), 2);
  CHECK_THROWS_AS(cell_estimates({a, shorter}, cells), ValidationError);
}
