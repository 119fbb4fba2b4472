#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "mmfc/rng.hpp"

using namespace mmfc;

namespace {

struct Moments {
  double mean = 0.0;
  double var = 0.0;
};

template <class F>
Moments moments(int n, F draw) {
  double s = 0.0;
  double ss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = draw();
    s += x;
    ss += x * x;
  }
  const double mean = s / n;
  return {mean, ss / n - mean * mean};
}

}  // namespace

TEST_CASE("same seed gives the same stream") {
  Rng a(42);
  Rng b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());
}

TEST_CASE("substreams depend on the seed and key only") {
  Rng a(7);
  Rng b(7);
  for (int i = 0; i < 50; ++i) a.uniform();
  Rng sa = a.substream("chain", {1, 2});
  Rng sb = b.substream("chain", {1, 2});
  for (int i = 0; i < 20; ++i) CHECK(sa.uniform() == sb.uniform());

  Rng c = b.substream("chain", {2, 1});
  Rng d = b.substream("data", {1, 2});
  Rng e = b.substream("chain", {1, 2});
  const double x = e.uniform();
  CHECK(c.uniform() != x);
  CHECK(d.uniform() != x);
}

TEST_CASE("uniform draws stay inside the open unit interval") {
  Rng rng(1);
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
  }
}

TEST_CASE("gamma and beta moments") {
  Rng rng(2);
  const int n = 200000;
  // gamma(shape, rate): mean a/b, var a/b^2
  for (double shape : {0.05, 0.5, 1.0, 3.5}) {
    const double rate = 2.0;
    const auto m = moments(n, [&] { return rng.gamma(shape, rate); });
    const double mean = shape / rate;
    const double var = shape / (rate * rate);
    CHECK(m.mean == doctest::Approx(mean).epsilon(4.0 * std::sqrt(var / n) / mean));
  }
  const auto b = moments(n, [&] { return rng.beta(2.0, 5.0); });
  CHECK(b.mean == doctest::Approx(2.0 / 7.0).epsilon(0.01));
  CHECK(b.var == doctest::Approx(10.0 / (49.0 * 8.0)).epsilon(0.03));

  // tiny shapes must not underflow to exactly zero in log space
  for (int i = 0; i < 1000; ++i) CHECK(std::isfinite(rng.log_gamma_variate(1e-3)));
}

TEST_CASE("beta with tiny second parameter stays in [0, 1]") {
  Rng rng(3);
  for (int i = 0; i < 10000; ++i) {
    const double v = rng.beta(1.0, 1e-4);
    REQUIRE(v >= 0.0);
    REQUIRE(v <= 1.0);
  }
}

TEST_CASE("dirichlet draws are simplexes with the right mean") {
  Rng rng(4);
  const Eigen::Vector3d conc(1.0, 2.0, 3.0);
  Eigen::Vector3d acc = Eigen::Vector3d::Zero();
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd d = rng.dirichlet(conc);
    REQUIRE(d.sum() == doctest::Approx(1.0).epsilon(1e-12));
    REQUIRE(d.minCoeff() >= 0.0);
    acc += d;
  }
  acc /= n;
  CHECK(acc(0) == doctest::Approx(1.0 / 6.0).epsilon(0.02));
  CHECK(acc(2) == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("categorical respects weights, including zeros") {
  Rng rng(5);
  const std::vector<double> w{0.0, 1.0, 3.0, 0.0};
  std::vector<int> counts(4, 0);
  for (int i = 0; i < 40000; ++i) ++counts[rng.categorical(w)];
  CHECK(counts[0] == 0);
  CHECK(counts[3] == 0);
  CHECK(counts[2] / 40000.0 == doctest::Approx(0.75).epsilon(0.02));

  const std::vector<double> lw{-1000.0, -1000.0 + std::log(3.0)};
  int second = 0;
  for (int i = 0; i < 40000; ++i) second += static_cast<int>(rng.categorical_log(lw));
  CHECK(second / 40000.0 == doctest::Approx(0.75).epsilon(0.02));
}

TEST_CASE("truncated normal matches reference moments") {
  // reference moments frozen from an independent implementation
  struct Case {
    double lower, upper, mean, var;
  };
  const double inf = std::numeric_limits<double>::infinity();
  const Case cases[] = {
      {5.0, inf, 5.1865039671258515, 0.03269643461706184},
      {-1.0, 0.5, -0.20663121806153306, 0.1727732590864931},
      {-inf, -8.0, -8.12136811223618, 0.014324883442787484},
  };
  Rng rng(6);
  const int n = 200000;
  for (const auto& c : cases) {
    double lo = inf;
    double hi = -inf;
    const auto m = moments(n, [&] {
      const double x = rng.truncated_normal(0.0, 1.0, c.lower, c.upper);
      lo = std::min(lo, x);
      hi = std::max(hi, x);
      return x;
    });
    CHECK(lo > c.lower);
    CHECK(hi <= c.upper);
    CHECK(std::abs(m.mean - c.mean) < 4.0 * std::sqrt(c.var / n));
    CHECK(m.var == doctest::Approx(c.var).epsilon(0.03));
  }
  // location-scale
  const auto m = moments(n, [&] { return rng.truncated_normal(2.0, 3.0, 2.0 + 3.0 * 5.0, inf); });
  CHECK(m.mean == doctest::Approx(2.0 + 3.0 * 5.1865039671258515).epsilon(1e-3));
}

TEST_CASE("normal and t quantiles") {
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(student_t_quantile(5.0, 0.975) == doctest::Approx(2.570581835636314).epsilon(1e-12));
  CHECK(student_t_quantile(49.0 / 9.0, 0.975) == doctest::Approx(2.508729813802648).epsilon(1e-12));
  CHECK(student_t_quantile(std::numeric_limits<double>::infinity(), 0.975) ==
        doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(normal_cdf(0.0) == doctest::Approx(0.5));
  CHECK(normal_cdf(-37.0) > 0.0);
  for (double p : {1e-10, 0.01, 0.3, 0.5, 0.9}) CHECK(normal_cdf(normal_quantile(p)) == doctest::Approx(p).epsilon(1e-10));
}

TEST_CASE("wishart and inverse wishart means") {
  Rng rng(8);
  Eigen::Matrix2d scale;
  scale << 2.0, 0.5, 0.5, 1.0;
  const int n = 40000;
  Eigen::Matrix2d w = Eigen::Matrix2d::Zero();
  Eigen::Matrix2d iw = Eigen::Matrix2d::Zero();
  for (int i = 0; i < n; ++i) {
    w += sample_wishart(rng, 5.0, scale);
    const Eigen::MatrixXd s = sample_inverse_wishart(rng, 8.0, scale);
    REQUIRE((s - s.transpose()).norm() < 1e-12);
    iw += s;
  }
  w /= n;
  iw /= n;
  CHECK(w(0, 0) == doctest::Approx(10.0).epsilon(0.02));
  CHECK(w(0, 1) == doctest::Approx(2.5).epsilon(0.04));
  // mean scale / (df - p - 1) = scale / 5
  CHECK(iw(0, 0) == doctest::Approx(0.4).epsilon(0.03));
  CHECK(iw(1, 1) == doctest::Approx(0.2).epsilon(0.03));
}

TEST_CASE("multivariate normal covariance") {
  Rng rng(9);
  Eigen::Matrix2d cov;
  cov << 1.0, 0.6, 0.6, 2.0;
  const Eigen::MatrixXd chol = cov.llt().matrixL();
  Eigen::Vector2d mean(1.0, -1.0);
  Eigen::Matrix2d acc = Eigen::Matrix2d::Zero();
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd z = sample_mvn(rng, mean, chol) - mean;
    acc += z * z.transpose();
  }
  acc /= n;
  CHECK(acc(0, 1) == doctest::Approx(0.6).epsilon(0.03));
  CHECK(acc(1, 1) == doctest::Approx(2.0).epsilon(0.02));
}
