#pragma once

/// Random number generation for the samplers.
///
/// Every stream in the library descends from one 64-bit seed. Named
/// substreams are derived from the seed alone (not from the current engine
/// state), so a substream's draws do not depend on how much of the parent
/// stream has been consumed.

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string_view>

#include <Eigen/Dense>

namespace mmfc {

class Rng {
 public:
  using engine_type = std::mt19937_64;

  explicit Rng(std::uint64_t seed);

  /// Independent stream keyed by (seed, name, indices).
  [[nodiscard]] Rng substream(std::string_view name,
                              std::initializer_list<std::uint64_t> indices = {}) const;

  [[nodiscard]] std::uint64_t seed() const { return seed_; }

  /// Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }
  double exponential(double rate);
  /// Gamma with shape/rate parameterization.
  double gamma(double shape, double rate);
  /// log of a Gamma(shape, 1) draw; stays finite for tiny shapes.
  double log_gamma_variate(double shape);
  double beta(double a, double b);
  double chi_squared(double df) { return gamma(0.5 * df, 0.5); }

  /// Index drawn with probability proportional to `weights` (non-negative).
  std::size_t categorical(std::span<const double> weights);
  /// Index drawn with probability proportional to exp(log_weights).
  std::size_t categorical_log(std::span<const double> log_weights);

  void dirichlet(std::span<const double> concentration, std::span<double> out);
  Eigen::VectorXd dirichlet(const Eigen::VectorXd& concentration);

  /// N(mean, sd^2) restricted to (lower, upper]; bounds may be infinite.
  double truncated_normal(double mean, double sd, double lower, double upper);

  engine_type& engine() { return engine_; }

 private:
  double truncated_standard_normal(double lower, double upper);
  double truncated_standard_normal_tail(double lower, double upper);

  std::uint64_t seed_;
  engine_type engine_;
  std::normal_distribution<double> normal_;
};

/// Standard normal CDF, accurate in the lower tail.
double normal_cdf(double x);
double normal_quantile(double p);
/// Student-t quantile; df may be +infinity (normal reference).
double student_t_quantile(double df, double p);

/// Wishart(df, scale) via the Bartlett decomposition.
Eigen::MatrixXd sample_wishart(Rng& rng, double df, const Eigen::MatrixXd& scale);
/// Inverse-Wishart(df, scale): mean scale / (df - p - 1).
Eigen::MatrixXd sample_inverse_wishart(Rng& rng, double df, const Eigen::MatrixXd& scale);
/// Draw from N(mean, cov) given the lower Cholesky factor of cov.
Eigen::VectorXd sample_mvn(Rng& rng, const Eigen::VectorXd& mean,
                           const Eigen::MatrixXd& cov_lower_chol);

}  // namespace mmfc
