#pragma once

/// Model configuration, parameter containers, and the generative process.

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mmfc/dataset.hpp"
#include "mmfc/rng.hpp"

namespace mmfc {

/// Truncation levels of the four stick-breaking systems.
struct Truncation {
  int top = 10;  // N
  int za = 20;   // N^(ZA)
  int xa = 20;   // N^(XA)
  int b = 20;    // N^(B)
};

struct DesignTerm {
  enum class Kind { intercept, main, interaction };
  Kind kind = Kind::intercept;
  std::vector<std::string> variables;

  static DesignTerm intercept() { return {Kind::intercept, {}}; }
  static DesignTerm main(std::string var) { return {Kind::main, {std::move(var)}}; }
  static DesignTerm interaction(std::string a, std::string b) {
    return {Kind::interaction, {std::move(a), std::move(b)}};
  }
};

void to_json(nlohmann::json& j, const DesignTerm& t);
void from_json(const nlohmann::json& j, DesignTerm& t);

/// Terms of D(X). The intercept is always present, whether listed or not.
struct DesignSpec {
  std::vector<DesignTerm> terms;

  static DesignSpec intercept_only() { return {}; }
  /// Main effects of every covariate column (nominal focus and remainder).
  static DesignSpec main_effects(const Schema& schema, const PartitionedView& view);
};

/// DesignSpec compiled against a schema. Dummy coding with level 1 as the
/// reference; interactions are products of the constituent dummies.
class DesignBuilder {
 public:
  DesignBuilder() = default;
  /// Throws ValidationError when a term names an unknown variable or one
  /// outside X.
  DesignBuilder(const DesignSpec& spec, const Schema& schema, const PartitionedView& view);

  [[nodiscard]] std::size_t d() const { return d_; }
  /// `row` holds codes for every dataset column (ordinal focus entries ignored).
  void fill(std::span<const int> row, std::span<double> out) const;
  [[nodiscard]] Eigen::RowVectorXd build(std::span<const int> row) const;
  /// True when D(x) changes with column `col`.
  [[nodiscard]] bool uses_column(std::size_t col) const;

 private:
  struct Block {
    std::vector<std::size_t> columns;
    std::vector<int> levels;
    std::size_t offset = 0;
  };
  std::vector<Block> blocks_;
  std::vector<bool> used_;
  std::size_t d_ = 1;
};

/// build_design_vector over X alone: `x_row` has one code per variable of
/// `x_schema`, in order.
Eigen::RowVectorXd build_design_vector(std::span<const int> x_row, const DesignSpec& spec,
                                       const Schema& x_schema);

struct PriorConfig {
  Eigen::MatrixXd b0;    // d x p_ordinal
  Eigen::VectorXd tau2;  // p_ordinal
  double nu = 0.0;
  Eigen::MatrixXd s;     // p_ordinal x p_ordinal
  /// Dirichlet concentrations, indexed by dataset column; empty for columns
  /// in the latent normal block.
  std::vector<Eigen::VectorXd> dirichlet;
  double a_alpha = 1.0;
  double b_alpha = 1.0;

  /// Conjugate updates of B_0 and tau^2 (off by default).
  bool hierarchical = false;
  double b0_prior_var = 10.0;
  double tau2_shape = 3.0;
  double tau2_rate = 8.0;
};

struct ModelConfig {
  ModelKind kind = ModelKind::mmfc;
  Truncation truncation;
  /// Cutoffs per ordinal focus variable, in PartitionedView order.
  std::vector<Eigen::VectorXd> cutoffs;
  DesignSpec design;
  PriorConfig prior;
};

/// gamma_k = k - L/2 for k = 1..L-1.
Eigen::VectorXd default_cutoffs(int levels);

/// Defaults: main-effects design, unit-spaced cutoffs, B_0 = 0, tau^2 = 4,
/// nu = p_ordinal + 2, S = I, Dirichlet(1, ..., 1), alpha ~ gamma(1, 1).
ModelConfig default_config(const Schema& schema, ModelKind kind);

/// Starts from default_config and applies any fields present in `j`.
ModelConfig config_from_json(const nlohmann::json& j, const Schema& schema, ModelKind kind);
nlohmann::json config_to_json(const ModelConfig& config, const Schema& schema);

/// Immutable bundle of schema, configuration and derived layout.
class Model {
 public:
  Model(Schema schema, ModelConfig config);

  [[nodiscard]] const Schema& schema() const { return schema_; }
  [[nodiscard]] const ModelConfig& config() const { return config_; }
  [[nodiscard]] const PartitionedView& view() const { return view_; }
  [[nodiscard]] const DesignBuilder& design() const { return design_; }
  [[nodiscard]] ModelKind kind() const { return config_.kind; }

  [[nodiscard]] std::size_t p() const { return schema_.size(); }
  [[nodiscard]] std::size_t p_ordinal() const { return view_.p_ordinal(); }
  [[nodiscard]] std::size_t d() const { return design_.d(); }
  [[nodiscard]] bool has_remainder() const { return !view_.remainder.empty(); }

  [[nodiscard]] int n_top() const { return config_.truncation.top; }
  [[nodiscard]] int n_za() const { return config_.truncation.za; }
  [[nodiscard]] int n_xa() const { return config_.truncation.xa; }
  /// 1 when the remainder block is absent (MM-Mix).
  [[nodiscard]] int n_b() const { return has_remainder() ? config_.truncation.b : 1; }

  [[nodiscard]] int levels(std::size_t col) const { return schema_[col].levels; }
  /// (gamma_{y-1}, gamma_y] for ordinal focus variable k.
  [[nodiscard]] std::pair<double, double> cutoff_interval(std::size_t k, int code) const;
  /// Category whose interval contains z.
  [[nodiscard]] int code_from_latent(std::size_t k, double z) const;

 private:
  Schema schema_;
  ModelConfig config_;
  PartitionedView view_;
  DesignBuilder design_;
};

/// Stick-breaking weights pi_k = v_k prod_{j<k} (1 - v_j). Throws
/// ValidationError when an entry is outside [0,1] or the last entry is not 1.
std::vector<double> stick_break(std::span<const double> sticks);

struct MixtureWeights {
  Eigen::VectorXd v_top;  // N
  Eigen::MatrixXd v_za;   // N_ZA x N, one stick vector per column h
  Eigen::MatrixXd v_xa;   // N_XA x N
  Eigen::MatrixXd v_b;    // N_B x N
  double alpha = 1.0;
  double alpha_za = 1.0;
  double alpha_xa = 1.0;
  double alpha_b = 1.0;

  Eigen::VectorXd pi_top;
  Eigen::MatrixXd pi_za;
  Eigen::MatrixXd pi_xa;
  Eigen::MatrixXd pi_b;

  /// Recompute the pi's from the sticks.
  void update_derived();
};

/// Pr(H_ZA = r, H_XA = l, H_B = s) after marginalizing H.
struct AllocationTensor {
  int n_za = 0, n_xa = 0, n_b = 0;
  std::vector<double> probs;  // r-major

  [[nodiscard]] double operator()(int r, int l, int s) const {
    return probs[(static_cast<std::size_t>(r) * n_xa + l) * n_b + s];
  }
};

AllocationTensor marginal_allocation_probs(const MixtureWeights& weights);

/// Everything the posterior is over except latent data and allocations.
struct ModelParams {
  MixtureWeights weights;
  std::vector<Eigen::MatrixXd> beta;   // N_ZA matrices, d x p_ordinal
  std::vector<Eigen::MatrixXd> sigma;  // N_ZA SPD matrices
  /// psi[k][l]: simplex over the levels of nominal focus variable k.
  std::vector<std::vector<Eigen::VectorXd>> psi;
  /// phi[k][s]: simplex over the levels of remainder variable k.
  std::vector<std::vector<Eigen::VectorXd>> phi;
  Eigen::MatrixXd b0;
  Eigen::VectorXd tau2;
};

/// One chain's full state. Allocation labels are 0-based.
struct SamplerState {
  ModelParams params;
  Eigen::MatrixXd z;  // n x p_ordinal
  std::vector<int> h, h_za, h_xa, h_b;
  /// Completed codes, row-major n x p: observed values plus current imputations.
  std::vector<int> values;
  /// Cached D(X_i) rows for the completed values.
  Eigen::MatrixXd design;

  [[nodiscard]] std::size_t n() const { return h.size(); }
  [[nodiscard]] std::span<const int> row(std::size_t i, std::size_t p) const {
    return {values.data() + i * p, p};
  }
};

/// Draw every parameter from its prior (sticks, alphas, base distributions).
ModelParams draw_prior_params(const Model& model, Rng& rng);

SamplerState init_state(const Model& model, const Dataset& data, Rng& rng);

/// Human-readable violations of the SamplerState invariants; empty when valid.
std::vector<std::string> check_state(const Model& model, const Dataset& data,
                                     const SamplerState& state);

/// Recompute the cached design rows from state.values.
void refresh_design(const Model& model, SamplerState& state);

/// Draw X, then Z and Y, for every row given the allocations in `state`.
/// Overwrites state.values, state.z and state.design.
void simulate_given_allocations(const Model& model, SamplerState& state, Rng& rng);

/// Fresh dataset of n rows from the generative process under `params`.
Dataset simulate_dataset(const Model& model, const ModelParams& params, std::size_t n, Rng& rng);

}  // namespace mmfc
