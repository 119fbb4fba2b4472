#include "mmfc/density.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <unordered_map>

#include "mmfc/error.hpp"
#include "mmfc/rng.hpp"

namespace mmfc {

namespace {

/// a_h = pi_h (sum_l pi^XA_lh prod psi)(sum_s pi^B_sh prod phi) for each h.
Eigen::VectorXd top_level_factors(const Model& model, const ModelParams& params,
                                  std::span<const int> row) {
  const auto& w = params.weights;
  const auto& view = model.view();
  Eigen::VectorXd xa_kernel = Eigen::VectorXd::Ones(model.n_xa());
  for (std::size_t k = 0; k < view.nominal_focus.size(); ++k) {
    const int code = row[view.nominal_focus[k]];
    for (int l = 0; l < model.n_xa(); ++l) xa_kernel(l) *= params.psi[k][static_cast<std::size_t>(l)](code - 1);
  }
  Eigen::VectorXd b_kernel = Eigen::VectorXd::Ones(model.n_b());
  for (std::size_t k = 0; k < view.remainder.size(); ++k) {
    const int code = row[view.remainder[k]];
    for (int s = 0; s < model.n_b(); ++s) b_kernel(s) *= params.phi[k][static_cast<std::size_t>(s)](code - 1);
  }
  const Eigen::VectorXd xa = w.pi_xa.transpose() * xa_kernel;
  const Eigen::VectorXd b = w.pi_b.transpose() * b_kernel;
  return w.pi_top.cwiseProduct(xa).cwiseProduct(b);
}

/// Unnormalized w_r(x); their sum is P(X = x).
Eigen::VectorXd component_weights(const Model& model, const ModelParams& params, std::span<const int> row) {
  return params.weights.pi_za * top_level_factors(model, params, row);
}

double interval_prob(double lo, double hi) {
  if (lo >= 0.0) return normal_cdf(-lo) - normal_cdf(-hi);
  return normal_cdf(hi) - normal_cdf(lo);
}

bool is_diagonal(const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (i != j && m(i, j) != 0.0) return false;
    }
  }
  return true;
}

}  // namespace

double nominal_joint_pmf(const Model& model, const ModelParams& params, std::span<const int> row) {
  return top_level_factors(model, params, row).sum();
}

double nominal_joint_pmf(const Model& model, const ModelParams& params,
                         std::span<const int> x_focus, std::span<const int> x_remainder) {
  const auto& view = model.view();
  if (x_focus.size() != view.nominal_focus.size() || x_remainder.size() != view.remainder.size()) {
    throw ValidationError("nominal_joint_pmf: code vectors do not match the model blocks");
  }
  std::vector<int> row(model.p(), 1);
  for (std::size_t k = 0; k < x_focus.size(); ++k) row[view.nominal_focus[k]] = x_focus[k];
  for (std::size_t k = 0; k < x_remainder.size(); ++k) row[view.remainder[k]] = x_remainder[k];
  return nominal_joint_pmf(model, params, row);
}

ZMixture conditional_z_mixture(const Model& model, const ModelParams& params, std::span<const int> row) {
  ZMixture mix;
  mix.weights = component_weights(model, params, row);
  const double total = mix.weights.sum();
  if (!(total > 0.0)) throw NumericalError("conditional_z_mixture: P(X = x) is zero");
  mix.weights /= total;
  const Eigen::RowVectorXd design = model.design().build(row);
  for (int r = 0; r < model.n_za(); ++r) {
    mix.means.push_back(design * params.beta[static_cast<std::size_t>(r)]);
    mix.covariances.push_back(params.sigma[static_cast<std::size_t>(r)]);
  }
  return mix;
}

CellEstimate joint_cell_probability(const Model& model, const ModelParams& params,
                                    std::span<const int> row, int mc_draws, std::uint64_t seed) {
  if (mc_draws < 1) throw ValidationError("mc_draws must be at least 1");
  const std::size_t q = model.p_ordinal();
  const auto& ordinal = model.view().ordinal_focus;
  std::vector<std::pair<double, double>> box(q);
  for (std::size_t k = 0; k < q; ++k) box[k] = model.cutoff_interval(k, row[ordinal[k]]);

  const Eigen::VectorXd weights = component_weights(model, params, row);
  const Eigen::RowVectorXd design = model.design().build(row);
  const bool exact = q == 1 || std::all_of(params.sigma.begin(), params.sigma.end(), is_diagonal);

  CellEstimate est;
  double variance = 0.0;
  Rng rng(seed);
  for (int r = 0; r < model.n_za(); ++r) {
    const double w = weights(r);
    if (w == 0.0) continue;
    const auto& sigma = params.sigma[static_cast<std::size_t>(r)];
    const Eigen::RowVectorXd mean = design * params.beta[static_cast<std::size_t>(r)];
    if (exact) {
      double prob = 1.0;
      for (std::size_t k = 0; k < q; ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        const double sd = std::sqrt(sigma(kk, kk));
        prob *= interval_prob((box[k].first - mean(kk)) / sd, (box[k].second - mean(kk)) / sd);
      }
      est.value += w * prob;
      continue;
    }
    const Eigen::MatrixXd chol = sigma.llt().matrixL();
    const int pairs = (mc_draws + 1) / 2;
    double sum = 0.0;
    double sum_sq = 0.0;
    Eigen::VectorXd eps(static_cast<Eigen::Index>(q));
    auto inside = [&](const Eigen::VectorXd& z) {
      for (std::size_t k = 0; k < q; ++k) {
        const double v = z(static_cast<Eigen::Index>(k));
        if (!(v > box[k].first && v <= box[k].second)) return 0.0;
      }
      return 1.0;
    };
    for (int t = 0; t < pairs; ++t) {
      for (Eigen::Index k = 0; k < eps.size(); ++k) eps(k) = rng.normal();
      const Eigen::VectorXd shift = chol * eps;
      const double y = 0.5 * (inside(mean.transpose() + shift) + inside(mean.transpose() - shift));
      sum += y;
      sum_sq += y * y;
    }
    const double avg = sum / pairs;
    const double var = pairs > 1 ? std::max(0.0, (sum_sq - pairs * avg * avg) / (pairs - 1)) / pairs : 0.0;
    est.value += w * avg;
    variance += w * w * var;
  }
  est.std_error = std::sqrt(variance);
  return est;
}

std::vector<std::vector<double>> model_marginal_probs(const Model& model, const ModelParams& params) {
  const auto& schema = model.schema();
  const auto covariates = model.view().covariate_columns();
  double space = 1.0;
  for (std::size_t col : covariates) space *= schema[col].levels;
  if (space > 5e6) throw ValidationError("covariate space too large to enumerate");

  std::vector<std::vector<double>> out(schema.size());
  for (std::size_t j = 0; j < schema.size(); ++j) out[j].assign(static_cast<std::size_t>(schema[j].levels), 0.0);

  const std::size_t q = model.p_ordinal();
  std::vector<Eigen::VectorXd> sd(params.sigma.size());
  for (std::size_t r = 0; r < params.sigma.size(); ++r) sd[r] = params.sigma[r].diagonal().cwiseSqrt();

  std::vector<int> row(schema.size(), 1);
  while (true) {
    const Eigen::VectorXd w = component_weights(model, params, row);
    const double px = w.sum();
    if (px > 0.0) {
      for (std::size_t col : covariates) out[col][static_cast<std::size_t>(row[col] - 1)] += px;
      const Eigen::RowVectorXd design = model.design().build(row);
      for (int r = 0; r < model.n_za(); ++r) {
        if (w(r) == 0.0) continue;
        const Eigen::RowVectorXd mean = design * params.beta[static_cast<std::size_t>(r)];
        for (std::size_t k = 0; k < q; ++k) {
          const auto kk = static_cast<Eigen::Index>(k);
          const std::size_t col = model.view().ordinal_focus[k];
          for (int y = 1; y <= schema[col].levels; ++y) {
            const auto [lo, hi] = model.cutoff_interval(k, y);
            const double s = sd[static_cast<std::size_t>(r)](kk);
            out[col][static_cast<std::size_t>(y - 1)] += w(r) * interval_prob((lo - mean(kk)) / s, (hi - mean(kk)) / s);
          }
        }
      }
    }
    std::size_t m = 0;
    for (; m < covariates.size(); ++m) {
      const std::size_t col = covariates[m];
      if (row[col] < schema[col].levels) {
        ++row[col];
        break;
      }
      row[col] = 1;
    }
    if (m == covariates.size()) break;
  }
  return out;
}

CellTable::CellTable(std::vector<std::size_t> columns, std::vector<int> levels)
    : columns_(std::move(columns)), levels_(std::move(levels)) {
  if (columns_.size() != levels_.size()) throw ValidationError("CellTable: columns and levels differ in length");
  double space = 1.0;
  for (int l : levels_) space *= l;
  if (space > 1.8e19) throw ValidationError("CellTable: cell space exceeds 64-bit keys");
}

std::uint64_t CellTable::key(std::span<const int> codes) const {
  std::uint64_t k = 0;
  for (std::size_t m = 0; m < levels_.size(); ++m) {
    k = k * static_cast<std::uint64_t>(levels_[m]) + static_cast<std::uint64_t>(codes[m] - 1);
  }
  return k;
}

std::uint64_t CellTable::key_from_row(std::span<const int> row) const {
  std::uint64_t k = 0;
  for (std::size_t m = 0; m < levels_.size(); ++m) {
    k = k * static_cast<std::uint64_t>(levels_[m]) + static_cast<std::uint64_t>(row[columns_[m]] - 1);
  }
  return k;
}

std::vector<int> CellTable::decode(std::uint64_t key) const {
  std::vector<int> codes(levels_.size());
  for (std::size_t m = levels_.size(); m-- > 0;) {
    codes[m] = 1 + static_cast<int>(key % static_cast<std::uint64_t>(levels_[m]));
    key /= static_cast<std::uint64_t>(levels_[m]);
  }
  return codes;
}

void CellTable::add(std::uint64_t key, double mass) {
  entries_.emplace_back(key, mass);
  sorted_ = false;
}

void CellTable::finalize() {
  if (sorted_) return;
  std::stable_sort(entries_.begin(), entries_.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::pair<std::uint64_t, double>> merged;
  for (const auto& e : entries_) {
    if (!merged.empty() && merged.back().first == e.first) {
      merged.back().second += e.second;
    } else {
      merged.push_back(e);
    }
  }
  entries_ = std::move(merged);
  sorted_ = true;
}

void CellTable::normalize() {
  finalize();
  const double t = total();
  if (!(t > 0.0)) throw NumericalError("CellTable: cannot normalize zero mass");
  for (auto& e : entries_) e.second /= t;
}

double CellTable::get(std::uint64_t key) const {
  if (!sorted_) throw std::logic_error("CellTable::get before finalize");
  const auto it = std::lower_bound(entries_.begin(), entries_.end(), key,
                                   [](const auto& e, std::uint64_t k) { return e.first < k; });
  return it != entries_.end() && it->first == key ? it->second : 0.0;
}

double CellTable::total() const {
  double t = 0.0;
  for (const auto& e : entries_) t += e.second;
  return t;
}

CellTable empirical_table(const Dataset& data, const std::vector<std::size_t>& columns) {
  std::vector<int> levels;
  for (std::size_t col : columns) levels.push_back(data.variable(col).levels);
  CellTable table(columns, levels);
  std::unordered_map<std::uint64_t, double> counts;
  for (std::size_t i = 0; i < data.n(); ++i) {
    for (std::size_t col : columns) {
      if (data.missing(i, col)) throw ValidationError("empirical table over a dataset with masked cells");
    }
    counts[table.key_from_row(data.row(i))] += 1.0;
  }
  const double n = static_cast<double>(data.n());
  for (const auto& [k, c] : counts) table.add(k, c / n);
  table.finalize();
  return table;
}

double hellinger(const CellTable& truth, const CellTable& estimate, double threshold) {
  if (!(threshold >= 0.0)) throw ValidationError("hellinger threshold must be non-negative");
  if (truth.levels() != estimate.levels()) throw ValidationError("hellinger: tables over different cells");
  double p_mass = 0.0;
  double q_mass = 0.0;
  double cross = 0.0;
  std::size_t kept = 0;
  for (const auto& [key, p] : truth.entries()) {
    if (p < threshold || p <= 0.0) continue;
    const double q = estimate.get(key);
    ++kept;
    p_mass += p;
    q_mass += q;
    cross += std::sqrt(p * q);
  }
  if (kept == 0) throw ValidationError("hellinger: no cells left after thresholding");
  if (q_mass <= 0.0) return 1.0;
  const double bc = cross / std::sqrt(p_mass * q_mass);
  return std::sqrt(std::max(0.0, 1.0 - bc));
}

void write_cell_table(std::ostream& out, const CellTable& table, const Schema& schema) {
  for (std::size_t col : table.columns()) out << schema[col].name << ',';
  out << "probability\n";
  out.precision(17);
  for (const auto& [key, prob] : table.entries()) {
    for (int code : table.decode(key)) out << code << ',';
    out << prob << '\n';
  }
}

std::vector<Cell> marginal_and_bivariate_cells(const Schema& schema, std::vector<std::size_t> columns) {
  if (columns.empty()) {
    for (std::size_t j = 0; j < schema.size(); ++j) columns.push_back(j);
  }
  std::vector<Cell> cells;
  for (std::size_t a : columns) {
    for (int v = 1; v <= schema[a].levels; ++v) cells.push_back({{a}, {v}});
  }
  for (std::size_t x = 0; x < columns.size(); ++x) {
    for (std::size_t y = x + 1; y < columns.size(); ++y) {
      const std::size_t a = columns[x];
      const std::size_t b = columns[y];
      for (int u = 1; u <= schema[a].levels; ++u) {
        for (int v = 1; v <= schema[b].levels; ++v) cells.push_back({{a, b}, {u, v}});
      }
    }
  }
  return cells;
}

std::string cell_label(const Cell& cell, const Schema& schema) {
  std::string label;
  for (std::size_t m = 0; m < cell.columns.size(); ++m) {
    if (m) label += '&';
    label += schema[cell.columns[m]].name + '=' + std::to_string(cell.levels[m]);
  }
  return label;
}

std::vector<double> empirical_cell_probs(const Dataset& data, const std::vector<Cell>& cells) {
  if (!data.complete()) throw ValidationError("empirical_cell_probs: dataset has masked cells");
  std::vector<double> out;
  out.reserve(cells.size());
  const double n = static_cast<double>(data.n());
  for (const auto& cell : cells) {
    std::size_t count = 0;
    for (std::size_t i = 0; i < data.n(); ++i) {
      bool match = true;
      for (std::size_t m = 0; m < cell.columns.size() && match; ++m) {
        match = data.value(i, cell.columns[m]) == cell.levels[m];
      }
      count += match ? 1 : 0;
    }
    out.push_back(static_cast<double>(count) / n);
  }
  return out;
}

}  // namespace mmfc
