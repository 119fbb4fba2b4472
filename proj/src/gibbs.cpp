#include "mmfc/gibbs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "mmfc/error.hpp"

namespace mmfc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kStickCeiling = 1.0 - 1e-12;

double safe_log(double x) { return x > 0.0 ? std::log(x) : kNegInf; }

Eigen::MatrixXd log_matrix(const Eigen::MatrixXd& m) {
  return m.unaryExpr([](double x) { return safe_log(x); });
}

struct ComponentFactor {
  Eigen::MatrixXd chol;  // lower Cholesky factor of Sigma_r
  double half_log_det = 0.0;
};

std::vector<ComponentFactor> factor_sigmas(const ModelParams& params) {
  std::vector<ComponentFactor> out;
  out.reserve(params.sigma.size());
  for (std::size_t r = 0; r < params.sigma.size(); ++r) {
    Eigen::LLT<Eigen::MatrixXd> llt(params.sigma[r]);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("Sigma_" + std::to_string(r + 1) + " is not positive definite");
    }
    ComponentFactor f;
    f.chol = llt.matrixL();
    f.half_log_det = f.chol.diagonal().array().log().sum();
    out.push_back(std::move(f));
  }
  return out;
}

/// log N(z; mean, Sigma) up to the -q/2 log(2 pi) constant.
double log_normal_kernel(const Eigen::RowVectorXd& z, const Eigen::RowVectorXd& mean,
                         const ComponentFactor& f) {
  const Eigen::VectorXd diff = (z - mean).transpose();
  const Eigen::VectorXd u = f.chol.triangularView<Eigen::Lower>().solve(diff);
  return -0.5 * u.squaredNorm() - f.half_log_det;
}

std::size_t draw_log(Rng& rng, const std::vector<double>& logw) {
  return rng.categorical_log(std::span<const double>(logw.data(), logw.size()));
}

int count_distinct(const std::vector<int>& labels) {
  return static_cast<int>(std::set<int>(labels.begin(), labels.end()).size());
}

}  // namespace

void validate(const ChainOptions& options) {
  if (options.burn_in < 0) throw ValidationError("burn_in must be >= 0");
  if (options.thin < 1) throw ValidationError("thin must be >= 1");
  if (options.m < 1) throw ValidationError("m must be >= 1");
  if (options.snapshots < 0) throw ValidationError("snapshots must be >= 0");
}

void update_latent_z(SamplerState& state, const Model& model, const Dataset& data, Rng& rng) {
  const auto& params = state.params;
  const auto q = static_cast<Eigen::Index>(model.p_ordinal());
  std::vector<Eigen::MatrixXd> precision;
  precision.reserve(params.sigma.size());
  for (const auto& s : params.sigma) {
    Eigen::LLT<Eigen::MatrixXd> llt(s);
    if (llt.info() != Eigen::Success) throw NumericalError("Sigma is not positive definite in Z update");
    precision.push_back(llt.solve(Eigen::MatrixXd::Identity(q, q)));
  }
  const auto& ordinal_cols = model.view().ordinal_focus;
  for (std::size_t i = 0; i < state.n(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const auto r = static_cast<std::size_t>(state.h_za[i]);
    const Eigen::RowVectorXd mean = state.design.row(ii) * params.beta[r];
    const auto& omega = precision[r];
    for (Eigen::Index k = 0; k < q; ++k) {
      double shift = 0.0;
      for (Eigen::Index m = 0; m < q; ++m) {
        if (m != k) shift += omega(k, m) * (state.z(ii, m) - mean(m));
      }
      const double var = 1.0 / omega(k, k);
      const double cond_mean = mean(k) - var * shift;
      const double sd = std::sqrt(var);
      const std::size_t col = ordinal_cols[static_cast<std::size_t>(k)];
      if (data.missing(i, col)) {
        state.z(ii, k) = rng.normal(cond_mean, sd);
      } else {
        const auto [lo, hi] = model.cutoff_interval(static_cast<std::size_t>(k), data.value(i, col));
        state.z(ii, k) = rng.truncated_normal(cond_mean, sd, lo, hi);
      }
    }
  }
}

void update_allocations(SamplerState& state, const Model& model, Rng& rng) {
  const auto& params = state.params;
  const auto& w = params.weights;
  const std::size_t n = state.n();
  const std::size_t p = model.p();
  const int n_top = model.n_top();
  const int n_za = model.n_za();
  const int n_xa = model.n_xa();
  const int n_b = model.n_b();

  const Eigen::VectorXd log_pi = w.pi_top.unaryExpr([](double x) { return safe_log(x); });
  const Eigen::MatrixXd log_za = log_matrix(w.pi_za);
  const Eigen::MatrixXd log_xa = log_matrix(w.pi_xa);
  const Eigen::MatrixXd log_b = log_matrix(w.pi_b);

  std::vector<double> logw;
  logw.resize(static_cast<std::size_t>(n_top));
  for (std::size_t i = 0; i < n; ++i) {
    for (int h = 0; h < n_top; ++h) {
      logw[static_cast<std::size_t>(h)] =
          log_pi(h) + log_za(state.h_za[i], h) + log_xa(state.h_xa[i], h) + log_b(state.h_b[i], h);
    }
    state.h[i] = static_cast<int>(draw_log(rng, logw));
  }

  // Normal log kernels for every (i, r).
  const auto factors = factor_sigmas(params);
  Eigen::MatrixXd log_kernel(static_cast<Eigen::Index>(n), n_za);
  for (int r = 0; r < n_za; ++r) {
    const Eigen::MatrixXd resid = state.z - state.design * params.beta[static_cast<std::size_t>(r)];
    const Eigen::MatrixXd u = factors[static_cast<std::size_t>(r)]
                                  .chol.triangularView<Eigen::Lower>()
                                  .solve(resid.transpose());
    log_kernel.col(r) = -0.5 * u.colwise().squaredNorm().transpose().array() -
                        factors[static_cast<std::size_t>(r)].half_log_det;
  }
  logw.resize(static_cast<std::size_t>(n_za));
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    for (int r = 0; r < n_za; ++r) logw[static_cast<std::size_t>(r)] = log_za(r, state.h[i]) + log_kernel(ii, r);
    state.h_za[i] = static_cast<int>(draw_log(rng, logw));
  }

  auto categorical_block = [&](const std::vector<std::size_t>& cols,
                               const std::vector<std::vector<Eigen::VectorXd>>& probs,
                               const Eigen::MatrixXd& log_cond, int k_count, std::vector<int>& labels) {
    std::vector<std::vector<Eigen::VectorXd>> log_probs(probs.size());
    for (std::size_t k = 0; k < probs.size(); ++k) {
      for (const auto& v : probs[k]) log_probs[k].push_back(v.unaryExpr([](double x) { return safe_log(x); }));
    }
    logw.resize(static_cast<std::size_t>(k_count));
    for (std::size_t i = 0; i < n; ++i) {
      for (int c = 0; c < k_count; ++c) {
        double lw = log_cond(c, state.h[i]);
        for (std::size_t k = 0; k < cols.size(); ++k) {
          lw += log_probs[k][static_cast<std::size_t>(c)](state.values[i * p + cols[k]] - 1);
        }
        logw[static_cast<std::size_t>(c)] = lw;
      }
      labels[i] = static_cast<int>(draw_log(rng, logw));
    }
  };
  categorical_block(model.view().nominal_focus, params.psi, log_xa, n_xa, state.h_xa);
  categorical_block(model.view().remainder, params.phi, log_b, n_b, state.h_b);
}

void update_component_params(SamplerState& state, const Model& model, Rng& rng) {
  auto& params = state.params;
  const auto& pr = model.config().prior;
  const std::size_t n = state.n();
  const std::size_t p = model.p();
  const auto q = static_cast<Eigen::Index>(model.p_ordinal());
  const auto d = static_cast<Eigen::Index>(model.d());
  const int n_za = model.n_za();

  std::vector<std::vector<Eigen::Index>> members(static_cast<std::size_t>(n_za));
  for (std::size_t i = 0; i < n; ++i) {
    members[static_cast<std::size_t>(state.h_za[i])].push_back(static_cast<Eigen::Index>(i));
  }

  const Eigen::Index dq = d * q;
  for (int r = 0; r < n_za; ++r) {
    const auto& idx = members[static_cast<std::size_t>(r)];
    const auto nr = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd dr(nr, d);
    Eigen::MatrixXd zr(nr, q);
    for (Eigen::Index m = 0; m < nr; ++m) {
      dr.row(m) = state.design.row(idx[static_cast<std::size_t>(m)]);
      zr.row(m) = state.z.row(idx[static_cast<std::size_t>(m)]);
    }
    const Eigen::MatrixXd gram = dr.transpose() * dr;
    const Eigen::MatrixXd cross = dr.transpose() * zr;

    auto& sigma = params.sigma[static_cast<std::size_t>(r)];
    const Eigen::MatrixXd omega = sigma.llt().solve(Eigen::MatrixXd::Identity(q, q));

    // vec(beta) stacks columns; precision = diag(1/tau^2) (x) I_d + Omega (x) D'D.
    Eigen::MatrixXd lambda(dq, dq);
    Eigen::VectorXd rhs(dq);
    const Eigen::MatrixXd cross_omega = cross * omega;
    for (Eigen::Index j = 0; j < q; ++j) {
      for (Eigen::Index k = 0; k < q; ++k) {
        lambda.block(j * d, k * d, d, d) = omega(j, k) * gram;
      }
      lambda.block(j * d, j * d, d, d).diagonal().array() += 1.0 / params.tau2(j);
      rhs.segment(j * d, d) = params.b0.col(j) / params.tau2(j) + cross_omega.col(j);
    }
    Eigen::LLT<Eigen::MatrixXd> llt(lambda);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("Cholesky failure on the posterior precision of beta_" + std::to_string(r + 1));
    }
    const Eigen::VectorXd mean = llt.solve(rhs);
    Eigen::VectorXd eps(dq);
    for (Eigen::Index k = 0; k < dq; ++k) eps(k) = rng.normal();
    const Eigen::VectorXd draw = mean + llt.matrixU().solve(eps);
    auto& beta = params.beta[static_cast<std::size_t>(r)];
    for (Eigen::Index j = 0; j < q; ++j) beta.col(j) = draw.segment(j * d, d);

    const Eigen::MatrixXd resid = zr - dr * beta;
    const Eigen::MatrixXd scale = pr.s + resid.transpose() * resid;
    sigma = sample_inverse_wishart(rng, pr.nu + static_cast<double>(nr), scale);
  }

  if (pr.hierarchical) {
    for (Eigen::Index j = 0; j < q; ++j) {
      for (Eigen::Index k = 0; k < d; ++k) {
        double sum = 0.0;
        for (const auto& beta : params.beta) sum += beta(k, j);
        const double prec = 1.0 / pr.b0_prior_var + n_za / params.tau2(j);
        params.b0(k, j) = rng.normal(sum / params.tau2(j) / prec, std::sqrt(1.0 / prec));
      }
      double ss = 0.0;
      for (const auto& beta : params.beta) ss += (beta.col(j) - params.b0.col(j)).squaredNorm();
      const double shape = pr.tau2_shape + 0.5 * static_cast<double>(n_za * d);
      params.tau2(j) = 1.0 / rng.gamma(shape, pr.tau2_rate + 0.5 * ss);
    }
  }

  auto dirichlet_block = [&](const std::vector<std::size_t>& cols, std::vector<std::vector<Eigen::VectorXd>>& probs,
                             const std::vector<int>& labels) {
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const std::size_t col = cols[k];
      std::vector<Eigen::VectorXd> counts(probs[k].size(),
                                          Eigen::VectorXd::Zero(model.levels(col)));
      for (std::size_t i = 0; i < n; ++i) {
        counts[static_cast<std::size_t>(labels[i])](state.values[i * p + col] - 1) += 1.0;
      }
      for (std::size_t c = 0; c < probs[k].size(); ++c) {
        probs[k][c] = rng.dirichlet(pr.dirichlet[col] + counts[c]);
      }
    }
  };
  dirichlet_block(model.view().nominal_focus, params.psi, state.h_xa);
  dirichlet_block(model.view().remainder, params.phi, state.h_b);
}

void update_weights(SamplerState& state, const Model& model, Rng& rng) {
  auto& w = state.params.weights;
  const auto& pr = model.config().prior;
  const int n_top = model.n_top();

  auto draw_sticks = [&](const std::vector<double>& counts, double alpha, auto&& assign) {
    const int k_count = static_cast<int>(counts.size());
    double tail = 0.0;
    for (double c : counts) tail += c;
    double log_remaining = 0.0;
    for (int k = 0; k < k_count; ++k) {
      tail -= counts[static_cast<std::size_t>(k)];
      double v = 1.0;
      if (k + 1 < k_count) {
        // V = G_a / (G_a + G_b) on the log scale: the alpha update needs
        // log(1 - V) even where V itself rounds to the ceiling.
        const double lx = rng.log_gamma_variate(1.0 + counts[static_cast<std::size_t>(k)]);
        const double ly = rng.log_gamma_variate(alpha + tail);
        const double lse = std::max(lx, ly) + std::log1p(std::exp(-std::abs(lx - ly)));
        v = std::min(std::exp(lx - lse), kStickCeiling);
        log_remaining += ly - lse;
      }
      assign(k, v);
    }
    return log_remaining;
  };

  std::vector<double> counts(static_cast<std::size_t>(n_top), 0.0);
  for (int h : state.h) counts[static_cast<std::size_t>(h)] += 1.0;
  const double log_rem_top = draw_sticks(counts, w.alpha, [&](int k, double v) { w.v_top(k) = v; });
  w.alpha = n_top > 1 ? rng.gamma(pr.a_alpha + (n_top - 1), pr.b_alpha - log_rem_top)
                      : rng.gamma(pr.a_alpha, pr.b_alpha);

  auto conditional_family = [&](Eigen::MatrixXd& v, const std::vector<int>& labels, double& alpha) {
    const auto k_count = static_cast<int>(v.rows());
    std::vector<std::vector<double>> table(static_cast<std::size_t>(n_top),
                                           std::vector<double>(static_cast<std::size_t>(k_count), 0.0));
    for (std::size_t i = 0; i < labels.size(); ++i) {
      table[static_cast<std::size_t>(state.h[i])][static_cast<std::size_t>(labels[i])] += 1.0;
    }
    double log_rem = 0.0;
    for (int h = 0; h < n_top; ++h) {
      log_rem += draw_sticks(table[static_cast<std::size_t>(h)], alpha, [&](int k, double x) { v(k, h) = x; });
    }
    alpha = k_count > 1 ? rng.gamma(pr.a_alpha + static_cast<double>(n_top) * (k_count - 1), pr.b_alpha - log_rem)
                        : rng.gamma(pr.a_alpha, pr.b_alpha);
  };
  conditional_family(w.v_za, state.h_za, w.alpha_za);
  conditional_family(w.v_xa, state.h_xa, w.alpha_xa);
  conditional_family(w.v_b, state.h_b, w.alpha_b);
  w.update_derived();
}

void impute_missing(SamplerState& state, const Model& model, const Dataset& data, Rng& rng) {
  if (data.complete()) return;
  const auto& params = state.params;
  const auto& view = model.view();
  const std::size_t n = state.n();
  const std::size_t p = model.p();
  const auto factors = factor_sigmas(params);

  std::vector<int> ordinal_index(p, -1), nominal_index(p, -1), remainder_index(p, -1);
  for (std::size_t k = 0; k < view.ordinal_focus.size(); ++k) ordinal_index[view.ordinal_focus[k]] = static_cast<int>(k);
  for (std::size_t k = 0; k < view.nominal_focus.size(); ++k) nominal_index[view.nominal_focus[k]] = static_cast<int>(k);
  for (std::size_t k = 0; k < view.remainder.size(); ++k) remainder_index[view.remainder[k]] = static_cast<int>(k);

  std::vector<double> logw;
  std::vector<int> row(p);
  Eigen::RowVectorXd drow(model.d());
  for (std::size_t j = 0; j < p; ++j) {
    const bool in_design = model.design().uses_column(j);
    const int levels = model.levels(j);
    for (std::size_t i = 0; i < n; ++i) {
      if (!data.missing(i, j)) continue;
      const auto ii = static_cast<Eigen::Index>(i);
      if (ordinal_index[j] >= 0) {
        const auto k = static_cast<std::size_t>(ordinal_index[j]);
        state.values[i * p + j] = model.code_from_latent(k, state.z(ii, static_cast<Eigen::Index>(k)));
        continue;
      }
      const Eigen::VectorXd* probs = nullptr;
      if (nominal_index[j] >= 0) {
        probs = &params.psi[static_cast<std::size_t>(nominal_index[j])][static_cast<std::size_t>(state.h_xa[i])];
      } else {
        probs = &params.phi[static_cast<std::size_t>(remainder_index[j])][static_cast<std::size_t>(state.h_b[i])];
      }
      logw.assign(static_cast<std::size_t>(levels), 0.0);
      const auto r = static_cast<std::size_t>(state.h_za[i]);
      std::copy_n(state.values.begin() + static_cast<std::ptrdiff_t>(i * p), p, row.begin());
      for (int v = 1; v <= levels; ++v) {
        double lw = safe_log((*probs)(v - 1));
        if (in_design) {
          row[j] = v;
          model.design().fill(row, std::span<double>(drow.data(), model.d()));
          lw += log_normal_kernel(state.z.row(ii), drow * params.beta[r], factors[r]);
        }
        logw[static_cast<std::size_t>(v - 1)] = lw;
      }
      const int code = 1 + static_cast<int>(draw_log(rng, logw));
      state.values[i * p + j] = code;
      if (in_design) {
        row[j] = code;
        model.design().fill(row, std::span<double>(drow.data(), model.d()));
        state.design.row(ii) = drow;
      }
    }
  }
}

void gibbs_sweep(SamplerState& state, const Model& model, const Dataset& data, Rng& rng) {
  update_latent_z(state, model, data, rng);
  update_allocations(state, model, rng);
  update_component_params(state, model, rng);
  update_weights(state, model, rng);
  impute_missing(state, model, data, rng);
}

SweepDiagnostics sweep_diagnostics(const Model& /*model*/, const SamplerState& state, int sweep) {
  SweepDiagnostics d;
  d.sweep = sweep;
  d.occupied = {count_distinct(state.h), count_distinct(state.h_za), count_distinct(state.h_xa),
                count_distinct(state.h_b)};
  const auto& w = state.params.weights;
  d.alpha = {w.alpha, w.alpha_za, w.alpha_xa, w.alpha_b};
  return d;
}

std::vector<int> emission_sweeps(const ChainOptions& options) {
  std::vector<int> out;
  for (int k = 1; k <= options.m; ++k) out.push_back(options.burn_in + k * options.thin);
  return out;
}

std::vector<int> snapshot_sweeps(const ChainOptions& options) {
  if (options.snapshots == 0) return {};
  std::set<int> sweeps;
  for (int s : emission_sweeps(options)) sweeps.insert(s);
  const long long span = static_cast<long long>(options.m) * options.thin;
  for (int j = 1; j <= options.snapshots; ++j) {
    const long long offset = (j * span + options.snapshots - 1) / options.snapshots;
    sweeps.insert(options.burn_in + static_cast<int>(std::max(1LL, offset)));
  }
  return {sweeps.begin(), sweeps.end()};
}

ChainRecord run_chain(const Model& model, const Dataset& data, const ChainOptions& options,
                      const ChainCallbacks& callbacks) {
  validate(options);
  ChainRecord record;
  record.options = options;
  const Rng root(options.seed);
  Rng init_rng = root.substream("init");
  Rng rng = root.substream("sweep");
  SamplerState state = init_state(model, data, init_rng);

  const auto emissions = emission_sweeps(options);
  const auto snapshots = snapshot_sweeps(options);
  const int total = options.burn_in + options.m * options.thin;
  const std::array<int, 4> top = {model.n_top(), model.n_za(), model.n_xa(), model.n_b()};
  const std::array<const char*, 4> names = {"H", "H_ZA", "H_XA", "H_B"};
  std::array<bool, 4> warned{};
  std::size_t next_emission = 0;
  std::size_t next_snapshot = 0;

  for (int sweep = 1; sweep <= total; ++sweep) {
    try {
      gibbs_sweep(state, model, data, rng);
    } catch (const std::exception& e) {
      throw ChainError(sweep, e.what());
    }
    const std::array<const std::vector<int>*, 4> labels = {&state.h, &state.h_za, &state.h_xa, &state.h_b};
    for (std::size_t f = 0; f < 4; ++f) {
      if (warned[f] || top[f] < 2 || sweep <= options.burn_in) continue;
      const auto& lab = *labels[f];
      if (std::find(lab.begin(), lab.end(), top[f] - 1) != lab.end()) {
        warned[f] = true;
        record.warnings.push_back(std::string("top truncation index of ") + names[f] + " occupied at sweep " +
                                  std::to_string(sweep) + "; consider a larger truncation level");
      }
    }
    if (options.trace) record.diagnostics.push_back(sweep_diagnostics(model, state, sweep));
    if (next_emission < emissions.size() && emissions[next_emission] == sweep) {
      record.completed.push_back(data.with_values(state.values));
      record.emission_sweeps.push_back(sweep);
      ++next_emission;
    }
    if (next_snapshot < snapshots.size() && snapshots[next_snapshot] == sweep) {
      record.snapshots.push_back(state.params);
      record.snapshot_sweeps.push_back(sweep);
      ++next_snapshot;
    }
    if (callbacks.after_sweep) callbacks.after_sweep(sweep, state);
  }
  return record;
}

nlohmann::json chain_diagnostics_json(const ChainRecord& record) {
  nlohmann::json j;
  j["seed"] = record.options.seed;
  j["options"] = {{"burn_in", record.options.burn_in},
                  {"thin", record.options.thin},
                  {"m", record.options.m},
                  {"snapshots", record.options.snapshots}};
  j["emission_sweeps"] = record.emission_sweeps;
  j["snapshot_sweeps"] = record.snapshot_sweeps;
  j["warnings"] = record.warnings;
  auto occupied = nlohmann::json::array();
  auto alpha = nlohmann::json::array();
  for (const auto& d : record.diagnostics) {
    occupied.push_back(d.occupied);
    alpha.push_back(d.alpha);
  }
  j["occupied"] = {{"columns", {"H", "H_ZA", "H_XA", "H_B"}}, {"trace", occupied}};
  j["alpha"] = {{"columns", {"alpha", "alpha_ZA", "alpha_XA", "alpha_B"}}, {"trace", alpha}};
  return j;
}

}  // namespace mmfc
