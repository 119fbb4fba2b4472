#pragma once

/// Blocked Gibbs sampler for the truncated mixture, with within-chain
/// imputation of missing cells.

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmfc/dataset.hpp"
#include "mmfc/model.hpp"
#include "mmfc/rng.hpp"

namespace mmfc {

struct ChainOptions {
  int burn_in = 0;
  int thin = 1;
  int m = 1;
  std::uint64_t seed = 0;
  /// Parameter snapshots to retain for posterior predictive checks (0 = none).
  int snapshots = 0;
  /// Keep one SweepDiagnostics entry per sweep.
  bool trace = true;
};

/// Throws ValidationError unless burn_in >= 0, thin >= 1, m >= 1, snapshots >= 0.
void validate(const ChainOptions& options);

struct SweepDiagnostics {
  int sweep = 0;
  /// Occupied labels for H, H_ZA, H_XA, H_B.
  std::array<int, 4> occupied{};
  /// alpha, alpha_ZA, alpha_XA, alpha_B.
  std::array<double, 4> alpha{};
};

struct ChainRecord {
  ChainOptions options;
  std::vector<CompletedDataset> completed;
  std::vector<int> emission_sweeps;
  std::vector<ModelParams> snapshots;
  std::vector<int> snapshot_sweeps;
  std::vector<SweepDiagnostics> diagnostics;
  /// One entry per family whose top truncation index was occupied after burn-in.
  std::vector<std::string> warnings;
};

struct ChainCallbacks {
  std::function<void(int sweep, const SamplerState& state)> after_sweep;
};

/// Coordinate-wise truncated-normal refresh of Z.
void update_latent_z(SamplerState& state, const Model& model, const Dataset& data, Rng& rng);
/// H, then H_ZA, H_XA, H_B given the new H.
void update_allocations(SamplerState& state, const Model& model, Rng& rng);
/// beta_r and Sigma_r, psi, phi (and B_0, tau^2 when hierarchical).
void update_component_params(SamplerState& state, const Model& model, Rng& rng);
/// Sticks, then the four concentration parameters.
void update_weights(SamplerState& state, const Model& model, Rng& rng);
/// Refresh every masked cell, one column at a time.
void impute_missing(SamplerState& state, const Model& model, const Dataset& data, Rng& rng);

/// Z -> allocations -> component parameters -> weights -> imputation.
void gibbs_sweep(SamplerState& state, const Model& model, const Dataset& data, Rng& rng);

SweepDiagnostics sweep_diagnostics(const Model& model, const SamplerState& state, int sweep);

/// Sweeps at which completed datasets are emitted: burn_in + k * thin, k = 1..m.
std::vector<int> emission_sweeps(const ChainOptions& options);
/// Emission sweeps plus evenly spaced extra sweeps, enough for `snapshots`.
std::vector<int> snapshot_sweeps(const ChainOptions& options);

ChainRecord run_chain(const Model& model, const Dataset& data, const ChainOptions& options,
                      const ChainCallbacks& callbacks = {});

nlohmann::json chain_diagnostics_json(const ChainRecord& record);

}  // namespace mmfc
