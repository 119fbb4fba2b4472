#include "mmfc/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "mmfc/error.hpp"

namespace mmfc {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

Rng Rng::substream(std::string_view name, std::initializer_list<std::uint64_t> indices) const {
  std::uint64_t h = splitmix64(seed_ ^ 0xA0761D6478BD642FULL);
  for (unsigned char c : name) h = splitmix64(h ^ c);
  h = splitmix64(h ^ 0xE7037ED1A0B428DBULL);
  for (std::uint64_t idx : indices) h = splitmix64(h ^ idx);
  return Rng(h);
}

double Rng::uniform() {
  // 53 random bits, shifted by half an ulp so 0 and 1 are excluded.
  return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::normal() { return normal_(engine_); }

double Rng::exponential(double rate) { return -std::log(uniform()) / rate; }

double Rng::gamma(double shape, double rate) {
  if (!(shape > 0.0) || !(rate > 0.0)) {
    throw NumericalError("gamma draw with non-positive shape or rate");
  }
  if (shape < 1.0) return std::exp(log_gamma_variate(shape)) / rate;
  std::gamma_distribution<double> dist(shape, 1.0);
  return dist(engine_) / rate;
}

double Rng::log_gamma_variate(double shape) {
  if (!(shape > 0.0)) throw NumericalError("gamma draw with non-positive shape");
  if (shape >= 1.0) {
    std::gamma_distribution<double> dist(shape, 1.0);
    return std::log(dist(engine_));
  }
  // Gamma(a) = Gamma(a + 1) * U^(1/a)
  std::gamma_distribution<double> dist(shape + 1.0, 1.0);
  return std::log(dist(engine_)) + std::log(uniform()) / shape;
}

double Rng::beta(double a, double b) {
  const double lx = log_gamma_variate(a);
  const double ly = log_gamma_variate(b);
  return 1.0 / (1.0 + std::exp(ly - lx));
}

std::size_t Rng::categorical(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw NumericalError("categorical draw with zero or non-finite total weight");
  }
  double u = uniform() * total;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    u -= weights[k];
    if (u < 0.0) return k;
  }
  // Rounding can leave u marginally positive; return the last positive weight.
  for (std::size_t k = weights.size(); k-- > 0;) {
    if (weights[k] > 0.0) return k;
  }
  return weights.size() - 1;
}

std::size_t Rng::categorical_log(std::span<const double> log_weights) {
  double mx = -kInf;
  for (double lw : log_weights) mx = std::max(mx, lw);
  if (!(mx > -kInf) || std::isnan(mx)) {
    throw NumericalError("categorical draw with all log weights -inf");
  }
  thread_local std::vector<double> w;
  w.resize(log_weights.size());
  for (std::size_t k = 0; k < log_weights.size(); ++k) w[k] = std::exp(log_weights[k] - mx);
  return categorical(w);
}

void Rng::dirichlet(std::span<const double> concentration, std::span<double> out) {
  double mx = -kInf;
  for (std::size_t k = 0; k < concentration.size(); ++k) {
    out[k] = log_gamma_variate(concentration[k]);
    mx = std::max(mx, out[k]);
  }
  double total = 0.0;
  for (std::size_t k = 0; k < concentration.size(); ++k) {
    out[k] = std::exp(out[k] - mx);
    total += out[k];
  }
  for (std::size_t k = 0; k < concentration.size(); ++k) out[k] /= total;
}

Eigen::VectorXd Rng::dirichlet(const Eigen::VectorXd& concentration) {
  Eigen::VectorXd out(concentration.size());
  dirichlet(std::span<const double>(concentration.data(), concentration.size()),
            std::span<double>(out.data(), out.size()));
  return out;
}

double Rng::truncated_normal(double mean, double sd, double lower, double upper) {
  if (!(lower < upper)) throw NumericalError("truncated normal with empty interval");
  const double a = (lower - mean) / sd;
  const double b = (upper - mean) / sd;
  return mean + sd * truncated_standard_normal(a, b);
}

double Rng::truncated_standard_normal(double a, double b) {
  if (a == -kInf && b == kInf) return normal();
  if (a >= 0.0) return truncated_standard_normal_tail(a, b);
  if (b <= 0.0) return -truncated_standard_normal_tail(-b, -a);
  // Interval straddles zero.
  if (b - a < 2.5066282746310002) {  // sqrt(2 pi)
    while (true) {
      const double x = a + (b - a) * uniform();
      if (uniform() <= std::exp(-0.5 * x * x)) return x;
    }
  }
  while (true) {
    const double x = normal();
    if (x > a && x <= b) return x;
  }
}

// Robert (1995) sampler for [a, b] with a >= 0.
double Rng::truncated_standard_normal_tail(double a, double b) {
  const double root = std::sqrt(a * a + 4.0);
  const double lambda = 0.5 * (a + root);
  const double uniform_threshold =
      2.0 * std::sqrt(std::exp(1.0)) / (a + root) * std::exp(0.25 * (a * a - a * root));
  if (b - a <= uniform_threshold) {
    while (true) {
      const double x = a + (b - a) * uniform();
      if (uniform() <= std::exp(0.5 * (a * a - x * x))) return x;
    }
  }
  while (true) {
    const double x = a + exponential(lambda);
    if (x > b) continue;
    const double d = x - lambda;
    if (uniform() <= std::exp(-0.5 * d * d)) return x;
  }
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double student_t_quantile(double df, double p) {
  if (std::isinf(df)) return normal_quantile(p);
  return boost::math::quantile(boost::math::students_t_distribution<double>(df), p);
}

Eigen::MatrixXd sample_wishart(Rng& rng, double df, const Eigen::MatrixXd& scale) {
  const Eigen::Index p = scale.rows();
  Eigen::LLT<Eigen::MatrixXd> llt(scale);
  if (llt.info() != Eigen::Success) throw NumericalError("Wishart scale is not SPD");
  Eigen::MatrixXd bartlett = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    bartlett(i, i) = std::sqrt(rng.chi_squared(df - static_cast<double>(i)));
    for (Eigen::Index j = 0; j < i; ++j) bartlett(i, j) = rng.normal();
  }
  const Eigen::MatrixXd la = llt.matrixL() * bartlett;
  return la * la.transpose();
}

Eigen::MatrixXd sample_inverse_wishart(Rng& rng, double df, const Eigen::MatrixXd& scale) {
  const Eigen::Index p = scale.rows();
  const Eigen::MatrixXd scale_inv =
      scale.llt().solve(Eigen::MatrixXd::Identity(p, p));
  const Eigen::MatrixXd w = sample_wishart(rng, df, 0.5 * (scale_inv + scale_inv.transpose()));
  Eigen::MatrixXd sigma = w.llt().solve(Eigen::MatrixXd::Identity(p, p));
  return 0.5 * (sigma + sigma.transpose());
}

Eigen::VectorXd sample_mvn(Rng& rng, const Eigen::VectorXd& mean,
                           const Eigen::MatrixXd& cov_lower_chol) {
  Eigen::VectorXd eps(mean.size());
  for (Eigen::Index k = 0; k < eps.size(); ++k) eps(k) = rng.normal();
  return mean + cov_lower_chol.triangularView<Eigen::Lower>() * eps;
}

}  // namespace mmfc
