#include "mmfc/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "mmfc/error.hpp"

namespace mmfc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kStickCeiling = 1.0 - 1e-12;

std::size_t find_column(const Schema& schema, const std::string& name) {
  for (std::size_t j = 0; j < schema.size(); ++j) {
    if (schema[j].name == name) return j;
  }
  throw ValidationError("design references unknown variable '" + name + "'");
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.size();
  const auto cols = rows ? j.at(0).size() : 0;
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (j.at(r).size() != cols) throw ValidationError("ragged matrix in config");
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = j.at(r).at(c).get<double>();
  }
  return m;
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  auto j = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    j.push_back(row);
  }
  return j;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  Eigen::VectorXd v(j.size());
  for (std::size_t k = 0; k < j.size(); ++k) v(k) = j.at(k).get<double>();
  return v;
}

nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

double draw_stick(Rng& rng, double a, double b) {
  return std::min(rng.beta(a, b), kStickCeiling);
}

void validate_config(const Schema& schema, const PartitionedView& view, std::size_t d,
                     const ModelConfig& config) {
  const auto& t = config.truncation;
  if (t.top < 1 || t.za < 1 || t.xa < 1 || t.b < 1) {
    throw ValidationError("truncation levels must be positive");
  }
  const std::size_t q = view.p_ordinal();
  if (config.cutoffs.size() != q) throw ValidationError("cutoffs needed for every ordinal focus variable");
  for (std::size_t k = 0; k < q; ++k) {
    const auto& v = schema[view.ordinal_focus[k]];
    const auto& c = config.cutoffs[k];
    if (c.size() != v.levels - 1) {
      throw ValidationError("variable '" + v.name + "': expected " + std::to_string(v.levels - 1) +
                            " cutoffs");
    }
    for (Eigen::Index m = 0; m < c.size(); ++m) {
      if (!std::isfinite(c(m)) || (m > 0 && !(c(m) > c(m - 1)))) {
        throw ValidationError("variable '" + v.name + "': cutoffs must be finite and strictly increasing");
      }
    }
  }
  const auto& pr = config.prior;
  if (pr.b0.rows() != static_cast<Eigen::Index>(d) || pr.b0.cols() != static_cast<Eigen::Index>(q)) {
    throw ValidationError("B0 must be " + std::to_string(d) + " x " + std::to_string(q));
  }
  if (pr.tau2.size() != static_cast<Eigen::Index>(q) || (pr.tau2.array() <= 0.0).any()) {
    throw ValidationError("tau2 must hold one positive value per ordinal focus variable");
  }
  if (!(pr.nu > static_cast<double>(q) - 1.0)) {
    throw ValidationError("inverse-Wishart degrees of freedom must exceed p_ordinal - 1");
  }
  if (pr.s.rows() != static_cast<Eigen::Index>(q) || pr.s.cols() != static_cast<Eigen::Index>(q) ||
      !pr.s.isApprox(pr.s.transpose()) || pr.s.llt().info() != Eigen::Success) {
    throw ValidationError("S must be a symmetric positive definite p_ordinal x p_ordinal matrix");
  }
  if (pr.dirichlet.size() != schema.size()) throw ValidationError("Dirichlet concentrations per column");
  for (std::size_t col : view.covariate_columns()) {
    const auto& a = pr.dirichlet[col];
    if (a.size() != schema[col].levels || (a.array() <= 0.0).any()) {
      throw ValidationError("variable '" + schema[col].name +
                            "': Dirichlet concentration needs one positive value per level");
    }
  }
  if (!(pr.a_alpha > 0.0) || !(pr.b_alpha > 0.0)) throw ValidationError("alpha hyperparameters must be positive");
  if (pr.hierarchical &&
      (!(pr.b0_prior_var > 0.0) || !(pr.tau2_shape > 0.0) || !(pr.tau2_rate > 0.0))) {
    throw ValidationError("hierarchical hyperparameters must be positive");
  }
}

}  // namespace

void to_json(nlohmann::json& j, const DesignTerm& t) {
  switch (t.kind) {
    case DesignTerm::Kind::intercept:
      j = nlohmann::json{{"intercept", true}};
      break;
    case DesignTerm::Kind::main:
      j = nlohmann::json{{"main", t.variables.at(0)}};
      break;
    case DesignTerm::Kind::interaction:
      j = nlohmann::json{{"interaction", t.variables}};
      break;
  }
}

void from_json(const nlohmann::json& j, DesignTerm& t) {
  if (j.contains("main")) {
    t = DesignTerm::main(j.at("main").get<std::string>());
  } else if (j.contains("interaction")) {
    const auto vars = j.at("interaction").get<std::vector<std::string>>();
    if (vars.size() != 2) throw ValidationError("interaction terms take exactly two variables");
    t = DesignTerm::interaction(vars[0], vars[1]);
  } else if (j.contains("intercept")) {
    t = DesignTerm::intercept();
  } else {
    throw ValidationError("design term must be {\"main\": ...} or {\"interaction\": [...]}");
  }
}

DesignSpec DesignSpec::main_effects(const Schema& schema, const PartitionedView& view) {
  DesignSpec spec;
  for (std::size_t col : view.covariate_columns()) spec.terms.push_back(DesignTerm::main(schema[col].name));
  return spec;
}

DesignBuilder::DesignBuilder(const DesignSpec& spec, const Schema& schema,
                             const PartitionedView& view)
    : used_(schema.size(), false) {
  std::vector<bool> covariate(schema.size(), false);
  for (std::size_t col : view.covariate_columns()) covariate[col] = true;
  std::size_t offset = 1;
  for (const auto& term : spec.terms) {
    if (term.kind == DesignTerm::Kind::intercept) continue;
    Block block;
    block.offset = offset;
    std::size_t width = 1;
    for (const auto& name : term.variables) {
      const std::size_t col = find_column(schema, name);
      if (!covariate[col]) {
        throw ValidationError("design variable '" + name + "' is not a nominal focus or remainder variable");
      }
      block.columns.push_back(col);
      block.levels.push_back(schema[col].levels);
      used_[col] = true;
      width *= static_cast<std::size_t>(schema[col].levels - 1);
    }
    offset += width;
    blocks_.push_back(std::move(block));
  }
  d_ = offset;
}

void DesignBuilder::fill(std::span<const int> row, std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  out[0] = 1.0;
  for (const auto& block : blocks_) {
    std::size_t index = 0;
    bool active = true;
    for (std::size_t m = 0; m < block.columns.size(); ++m) {
      const int code = row[block.columns[m]];
      if (code < 2) {
        active = false;
        break;
      }
      index = index * static_cast<std::size_t>(block.levels[m] - 1) + static_cast<std::size_t>(code - 2);
    }
    if (active) out[block.offset + index] = 1.0;
  }
}

Eigen::RowVectorXd DesignBuilder::build(std::span<const int> row) const {
  Eigen::RowVectorXd out(static_cast<Eigen::Index>(d_));
  fill(row, std::span<double>(out.data(), d_));
  return out;
}

bool DesignBuilder::uses_column(std::size_t col) const { return col < used_.size() && used_[col]; }

Eigen::RowVectorXd build_design_vector(std::span<const int> x_row, const DesignSpec& spec,
                                       const Schema& x_schema) {
  if (x_row.size() != x_schema.size()) throw ValidationError("x_row length does not match schema");
  PartitionedView view;
  for (std::size_t j = 0; j < x_schema.size(); ++j) view.remainder.push_back(j);
  for (std::size_t j = 0; j < x_schema.size(); ++j) {
    if (x_row[j] < 1 || x_row[j] > x_schema[j].levels) {
      throw ValidationError("code out of range for '" + x_schema[j].name + "'");
    }
  }
  return DesignBuilder(spec, x_schema, view).build(x_row);
}

Eigen::VectorXd default_cutoffs(int levels) {
  if (levels < 2) throw ValidationError("ordinal variable needs at least 2 levels");
  Eigen::VectorXd c(levels - 1);
  for (int k = 1; k < levels; ++k) c(k - 1) = static_cast<double>(k) - 0.5 * levels;
  return c;
}

ModelConfig default_config(const Schema& schema_in, ModelKind kind) {
  const Schema schema = canonical_schema(schema_in);
  validate_schema(schema);
  const auto view = partition(schema, kind);
  ModelConfig config;
  config.kind = kind;
  for (std::size_t col : view.ordinal_focus) config.cutoffs.push_back(default_cutoffs(schema[col].levels));
  config.design = DesignSpec::main_effects(schema, view);
  const DesignBuilder builder(config.design, schema, view);
  const auto q = static_cast<Eigen::Index>(view.p_ordinal());
  auto& pr = config.prior;
  pr.b0 = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(builder.d()), q);
  pr.tau2 = Eigen::VectorXd::Constant(q, 4.0);
  pr.nu = static_cast<double>(q) + 2.0;
  pr.s = Eigen::MatrixXd::Identity(q, q);
  pr.dirichlet.resize(schema.size());
  for (std::size_t col : view.covariate_columns()) {
    pr.dirichlet[col] = Eigen::VectorXd::Ones(schema[col].levels);
  }
  return config;
}

ModelConfig config_from_json(const nlohmann::json& j, const Schema& schema_in, ModelKind kind) {
  const Schema schema = canonical_schema(schema_in);
  ModelConfig config = default_config(schema, kind);
  const auto view = partition(schema, kind);
  try {
    if (j.contains("truncation")) {
      const auto& t = j.at("truncation");
      config.truncation.top = t.value("N", config.truncation.top);
      config.truncation.za = t.value("N_ZA", config.truncation.za);
      config.truncation.xa = t.value("N_XA", config.truncation.xa);
      config.truncation.b = t.value("N_B", config.truncation.b);
    }
    if (j.contains("cutoffs")) {
      for (const auto& [name, values] : j.at("cutoffs").items()) {
        const std::size_t col = find_column(schema, name);
        const auto it = std::find(view.ordinal_focus.begin(), view.ordinal_focus.end(), col);
        if (it == view.ordinal_focus.end()) {
          throw ValidationError("cutoffs given for '" + name + "', which is not an ordinal focus variable");
        }
        config.cutoffs[static_cast<std::size_t>(it - view.ordinal_focus.begin())] = vector_from_json(values);
      }
    }
    if (j.contains("design")) {
      config.design.terms = j.at("design").get<std::vector<DesignTerm>>();
      const DesignBuilder builder(config.design, schema, view);
      config.prior.b0 = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(builder.d()),
                                              static_cast<Eigen::Index>(view.p_ordinal()));
    }
    if (j.contains("prior")) {
      const auto& p = j.at("prior");
      auto& pr = config.prior;
      if (p.contains("B0")) pr.b0 = matrix_from_json(p.at("B0"));
      if (p.contains("tau2")) pr.tau2 = vector_from_json(p.at("tau2"));
      if (p.contains("nu")) pr.nu = p.at("nu").get<double>();
      if (p.contains("S")) pr.s = matrix_from_json(p.at("S"));
      if (p.contains("dirichlet")) {
        for (const auto& [name, values] : p.at("dirichlet").items()) {
          pr.dirichlet[find_column(schema, name)] = vector_from_json(values);
        }
      }
      pr.a_alpha = p.value("a_alpha", pr.a_alpha);
      pr.b_alpha = p.value("b_alpha", pr.b_alpha);
      pr.hierarchical = p.value("hierarchical", pr.hierarchical);
      pr.b0_prior_var = p.value("b0_prior_var", pr.b0_prior_var);
      pr.tau2_shape = p.value("tau2_shape", pr.tau2_shape);
      pr.tau2_rate = p.value("tau2_rate", pr.tau2_rate);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  const DesignBuilder builder(config.design, schema, view);
  validate_config(schema, view, builder.d(), config);
  return config;
}

nlohmann::json config_to_json(const ModelConfig& config, const Schema& schema_in) {
  const Schema schema = canonical_schema(schema_in);
  const auto view = partition(schema, config.kind);
  nlohmann::json j;
  j["model"] = to_string(config.kind);
  j["truncation"] = {{"N", config.truncation.top},
                     {"N_ZA", config.truncation.za},
                     {"N_XA", config.truncation.xa},
                     {"N_B", config.truncation.b}};
  nlohmann::json cutoffs = nlohmann::json::object();
  for (std::size_t k = 0; k < view.ordinal_focus.size(); ++k) {
    cutoffs[schema[view.ordinal_focus[k]].name] = vector_to_json(config.cutoffs[k]);
  }
  j["cutoffs"] = cutoffs;
  j["design"] = config.design.terms;
  const auto& pr = config.prior;
  nlohmann::json dirichlet = nlohmann::json::object();
  for (std::size_t col : view.covariate_columns()) dirichlet[schema[col].name] = vector_to_json(pr.dirichlet[col]);
  j["prior"] = {{"B0", matrix_to_json(pr.b0)},
                {"tau2", vector_to_json(pr.tau2)},
                {"nu", pr.nu},
                {"S", matrix_to_json(pr.s)},
                {"dirichlet", dirichlet},
                {"a_alpha", pr.a_alpha},
                {"b_alpha", pr.b_alpha},
                {"hierarchical", pr.hierarchical},
                {"b0_prior_var", pr.b0_prior_var},
                {"tau2_shape", pr.tau2_shape},
                {"tau2_rate", pr.tau2_rate}};
  return j;
}

Model::Model(Schema schema, ModelConfig config)
    : schema_(canonical_schema(schema)), config_(std::move(config)) {
  validate_schema(schema_);
  view_ = partition(schema_, config_.kind);
  design_ = DesignBuilder(config_.design, schema_, view_);
  validate_config(schema_, view_, design_.d(), config_);
}

std::pair<double, double> Model::cutoff_interval(std::size_t k, int code) const {
  const auto& c = config_.cutoffs[k];
  const double lo = code <= 1 ? -kInf : c(code - 2);
  const double hi = code >= c.size() + 1 ? kInf : c(code - 1);
  return {lo, hi};
}

int Model::code_from_latent(std::size_t k, double z) const {
  const auto& c = config_.cutoffs[k];
  int code = 1;
  while (code <= c.size() && z > c(code - 1)) ++code;
  return code;
}

std::vector<double> stick_break(std::span<const double> sticks) {
  if (sticks.empty()) throw ValidationError("stick vector is empty");
  for (double v : sticks) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("stick outside [0,1]");
  }
  if (sticks.back() != 1.0) throw ValidationError("terminal stick must equal 1");
  std::vector<double> pi(sticks.size());
  double remaining = 1.0;
  for (std::size_t k = 0; k < sticks.size(); ++k) {
    pi[k] = sticks[k] * remaining;
    remaining *= 1.0 - sticks[k];
  }
  return pi;
}

namespace {

void break_columns(const Eigen::MatrixXd& v, Eigen::MatrixXd& pi) {
  pi.resize(v.rows(), v.cols());
  for (Eigen::Index h = 0; h < v.cols(); ++h) {
    const auto weights = stick_break(std::span<const double>(v.col(h).data(), v.rows()));
    for (Eigen::Index r = 0; r < v.rows(); ++r) pi(r, h) = weights[r];
  }
}

}  // namespace

void MixtureWeights::update_derived() {
  const auto top = stick_break(std::span<const double>(v_top.data(), v_top.size()));
  pi_top = Eigen::Map<const Eigen::VectorXd>(top.data(), static_cast<Eigen::Index>(top.size()));
  break_columns(v_za, pi_za);
  break_columns(v_xa, pi_xa);
  break_columns(v_b, pi_b);
}

AllocationTensor marginal_allocation_probs(const MixtureWeights& w) {
  AllocationTensor t;
  t.n_za = static_cast<int>(w.pi_za.rows());
  t.n_xa = static_cast<int>(w.pi_xa.rows());
  t.n_b = static_cast<int>(w.pi_b.rows());
  t.probs.assign(static_cast<std::size_t>(t.n_za) * t.n_xa * t.n_b, 0.0);
  for (Eigen::Index h = 0; h < w.pi_top.size(); ++h) {
    for (int r = 0; r < t.n_za; ++r) {
      const double a = w.pi_top(h) * w.pi_za(r, h);
      for (int l = 0; l < t.n_xa; ++l) {
        const double b = a * w.pi_xa(l, h);
        for (int s = 0; s < t.n_b; ++s) {
          t.probs[(static_cast<std::size_t>(r) * t.n_xa + l) * t.n_b + s] += b * w.pi_b(s, h);
        }
      }
    }
  }
  return t;
}

ModelParams draw_prior_params(const Model& model, Rng& rng) {
  const auto& pr = model.config().prior;
  ModelParams params;
  auto& w = params.weights;
  w.alpha = rng.gamma(pr.a_alpha, pr.b_alpha);
  w.alpha_za = rng.gamma(pr.a_alpha, pr.b_alpha);
  w.alpha_xa = rng.gamma(pr.a_alpha, pr.b_alpha);
  w.alpha_b = rng.gamma(pr.a_alpha, pr.b_alpha);

  const int n_top = model.n_top();
  w.v_top.resize(n_top);
  for (int h = 0; h < n_top; ++h) w.v_top(h) = h + 1 < n_top ? draw_stick(rng, 1.0, w.alpha) : 1.0;
  auto draw_family = [&](Eigen::MatrixXd& v, int k, double alpha) {
    v.resize(k, n_top);
    for (int h = 0; h < n_top; ++h) {
      for (int r = 0; r < k; ++r) v(r, h) = r + 1 < k ? draw_stick(rng, 1.0, alpha) : 1.0;
    }
  };
  draw_family(w.v_za, model.n_za(), w.alpha_za);
  draw_family(w.v_xa, model.n_xa(), w.alpha_xa);
  draw_family(w.v_b, model.n_b(), w.alpha_b);
  w.update_derived();

  params.b0 = pr.b0;
  params.tau2 = pr.tau2;
  const auto q = static_cast<Eigen::Index>(model.p_ordinal());
  const auto d = static_cast<Eigen::Index>(model.d());
  for (int r = 0; r < model.n_za(); ++r) {
    Eigen::MatrixXd beta(d, q);
    for (Eigen::Index j = 0; j < q; ++j) {
      const double sd = std::sqrt(params.tau2(j));
      for (Eigen::Index k = 0; k < d; ++k) beta(k, j) = params.b0(k, j) + sd * rng.normal();
    }
    params.beta.push_back(std::move(beta));
    params.sigma.push_back(sample_inverse_wishart(rng, pr.nu, pr.s));
  }
  for (std::size_t col : model.view().nominal_focus) {
    std::vector<Eigen::VectorXd> comps;
    for (int l = 0; l < model.n_xa(); ++l) comps.push_back(rng.dirichlet(pr.dirichlet[col]));
    params.psi.push_back(std::move(comps));
  }
  for (std::size_t col : model.view().remainder) {
    std::vector<Eigen::VectorXd> comps;
    for (int s = 0; s < model.n_b(); ++s) comps.push_back(rng.dirichlet(pr.dirichlet[col]));
    params.phi.push_back(std::move(comps));
  }
  return params;
}

void refresh_design(const Model& model, SamplerState& state) {
  const std::size_t n = state.n();
  const std::size_t p = model.p();
  state.design.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(model.d()));
  Eigen::RowVectorXd row(model.d());
  for (std::size_t i = 0; i < n; ++i) {
    model.design().fill(state.row(i, p), std::span<double>(row.data(), model.d()));
    state.design.row(static_cast<Eigen::Index>(i)) = row;
  }
}

SamplerState init_state(const Model& model, const Dataset& data, Rng& rng) {
  if (data.schema() != model.schema()) throw ValidationError("dataset schema does not match the model");
  SamplerState state;
  state.params = draw_prior_params(model, rng);
  const std::size_t n = data.n();
  const std::size_t p = data.p();
  state.values = data.values();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      if (data.missing(i, j)) {
        state.values[i * p + j] = 1 + static_cast<int>(rng.uniform() * data.variable(j).levels);
      }
    }
  }
  auto uniform_label = [&](int k) { return static_cast<int>(rng.uniform() * k); };
  state.h.resize(n);
  state.h_za.resize(n);
  state.h_xa.resize(n);
  state.h_b.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    state.h[i] = uniform_label(model.n_top());
    state.h_za[i] = uniform_label(model.n_za());
    state.h_xa[i] = uniform_label(model.n_xa());
    state.h_b[i] = uniform_label(model.n_b());
  }
  refresh_design(model, state);

  const std::size_t q = model.p_ordinal();
  state.z.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(q));
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(state.h_za[i]);
    const Eigen::RowVectorXd mean = state.design.row(static_cast<Eigen::Index>(i)) * state.params.beta[r];
    for (std::size_t k = 0; k < q; ++k) {
      const std::size_t col = model.view().ordinal_focus[k];
      const double sd = std::sqrt(state.params.sigma[r](k, k));
      double z = 0.0;
      if (data.missing(i, col)) {
        z = rng.normal(mean(k), sd);
        state.values[i * p + col] = model.code_from_latent(k, z);
      } else {
        const auto [lo, hi] = model.cutoff_interval(k, data.value(i, col));
        z = rng.truncated_normal(mean(k), sd, lo, hi);
      }
      state.z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = z;
    }
  }
  return state;
}

std::vector<std::string> check_state(const Model& model, const Dataset& data,
                                     const SamplerState& state) {
  std::vector<std::string> problems;
  const std::size_t n = data.n();
  const std::size_t p = data.p();
  const auto& w = state.params.weights;
  auto simplex_ok = [](const Eigen::VectorXd& v) {
    return (v.array() >= 0.0).all() && std::abs(v.sum() - 1.0) <= 1e-12;
  };
  if (w.v_top(w.v_top.size() - 1) != 1.0) problems.emplace_back("terminal top-level stick != 1");
  if (!simplex_ok(w.pi_top)) problems.emplace_back("pi is not a simplex");
  for (const auto* pi : {&w.pi_za, &w.pi_xa, &w.pi_b}) {
    for (Eigen::Index h = 0; h < pi->cols(); ++h) {
      if (!simplex_ok(pi->col(h))) problems.emplace_back("conditional weights column is not a simplex");
    }
  }
  for (const auto* v : {&w.v_za, &w.v_xa, &w.v_b}) {
    if (((v->row(v->rows() - 1).array()) != 1.0).any()) problems.emplace_back("terminal stick != 1");
  }
  for (std::size_t r = 0; r < state.params.sigma.size(); ++r) {
    const auto& s = state.params.sigma[r];
    if (!s.isApprox(s.transpose(), 1e-10) || s.llt().info() != Eigen::Success) {
      problems.push_back("Sigma_" + std::to_string(r) + " not SPD");
    }
  }
  for (const auto& comps : state.params.psi) {
    for (const auto& v : comps) {
      if (std::abs(v.sum() - 1.0) > 1e-10) problems.emplace_back("psi not a simplex");
    }
  }
  for (const auto& comps : state.params.phi) {
    for (const auto& v : comps) {
      if (std::abs(v.sum() - 1.0) > 1e-10) problems.emplace_back("phi not a simplex");
    }
  }
  auto in_range = [](const std::vector<int>& labels, int k) {
    return std::all_of(labels.begin(), labels.end(), [k](int x) { return x >= 0 && x < k; });
  };
  if (!in_range(state.h, model.n_top()) || !in_range(state.h_za, model.n_za()) ||
      !in_range(state.h_xa, model.n_xa()) || !in_range(state.h_b, model.n_b())) {
    problems.emplace_back("allocation label out of range");
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      const int v = state.values[i * p + j];
      if (v < 1 || v > data.variable(j).levels) {
        problems.push_back("completed value out of range at row " + std::to_string(i + 1));
      } else if (!data.missing(i, j) && v != data.value(i, j)) {
        problems.push_back("observed value altered at row " + std::to_string(i + 1));
      }
    }
    for (std::size_t k = 0; k < model.p_ordinal(); ++k) {
      const std::size_t col = model.view().ordinal_focus[k];
      const auto [lo, hi] = model.cutoff_interval(k, state.values[i * p + col]);
      const double z = state.z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
      if (!(z > lo && z <= hi)) {
        problems.push_back("Z outside cutoff interval at row " + std::to_string(i + 1));
      }
    }
  }
  return problems;
}

namespace {

void simulate_row(const Model& model, const ModelParams& params, int r, int l, int s,
                  std::span<int> row, Eigen::RowVectorXd& z_out,
                  Eigen::RowVectorXd& design_out, Rng& rng,
                  const std::vector<Eigen::MatrixXd>& sigma_chol) {
  const auto& view = model.view();
  for (std::size_t k = 0; k < view.nominal_focus.size(); ++k) {
    const auto& psi = params.psi[k][static_cast<std::size_t>(l)];
    row[view.nominal_focus[k]] = 1 + static_cast<int>(rng.categorical(std::span<const double>(psi.data(), psi.size())));
  }
  for (std::size_t k = 0; k < view.remainder.size(); ++k) {
    const auto& phi = params.phi[k][static_cast<std::size_t>(s)];
    row[view.remainder[k]] = 1 + static_cast<int>(rng.categorical(std::span<const double>(phi.data(), phi.size())));
  }
  model.design().fill(row, std::span<double>(design_out.data(), model.d()));
  const Eigen::VectorXd mean = (design_out * params.beta[static_cast<std::size_t>(r)]).transpose();
  const Eigen::VectorXd z = sample_mvn(rng, mean, sigma_chol[static_cast<std::size_t>(r)]);
  z_out = z.transpose();
  for (std::size_t k = 0; k < view.ordinal_focus.size(); ++k) {
    row[view.ordinal_focus[k]] = model.code_from_latent(k, z(static_cast<Eigen::Index>(k)));
  }
}

std::vector<Eigen::MatrixXd> sigma_cholesky(const ModelParams& params) {
  std::vector<Eigen::MatrixXd> out;
  for (const auto& s : params.sigma) {
    Eigen::LLT<Eigen::MatrixXd> llt(s);
    if (llt.info() != Eigen::Success) throw NumericalError("Sigma is not SPD");
    out.emplace_back(llt.matrixL());
  }
  return out;
}

}  // namespace

void simulate_given_allocations(const Model& model, SamplerState& state, Rng& rng) {
  const std::size_t n = state.n();
  const std::size_t p = model.p();
  const auto chol = sigma_cholesky(state.params);
  state.values.resize(n * p);
  state.z.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(model.p_ordinal()));
  state.design.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(model.d()));
  Eigen::RowVectorXd z(model.p_ordinal());
  Eigen::RowVectorXd design(model.d());
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    simulate_row(model, state.params, state.h_za[i], state.h_xa[i], state.h_b[i],
                 std::span<int>(state.values.data() + i * p, p), z, design, rng, chol);
    state.z.row(ii) = z;
    state.design.row(ii) = design;
  }
}

Dataset simulate_dataset(const Model& model, const ModelParams& params, std::size_t n, Rng& rng) {
  const std::size_t p = model.p();
  const auto chol = sigma_cholesky(params);
  const auto& w = params.weights;
  std::vector<int> values(n * p, Dataset::kMissing);
  Eigen::RowVectorXd z(model.p_ordinal());
  Eigen::RowVectorXd design(model.d());
  auto draw_col = [&](const Eigen::MatrixXd& pi, int h) {
    return static_cast<int>(rng.categorical(std::span<const double>(pi.col(h).data(), pi.rows())));
  };
  for (std::size_t i = 0; i < n; ++i) {
    const int h = static_cast<int>(rng.categorical(std::span<const double>(w.pi_top.data(), w.pi_top.size())));
    const int r = draw_col(w.pi_za, h);
    const int l = draw_col(w.pi_xa, h);
    const int s = draw_col(w.pi_b, h);
    simulate_row(model, params, r, l, s, std::span<int>(values.data() + i * p, p), z, design, rng, chol);
  }
  return Dataset(model.schema(), std::move(values), n);
}

}  // namespace mmfc
