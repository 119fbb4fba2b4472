#include "mmfc/mi.hpp"

#include <cmath>
#include <limits>
#include <ostream>

#include "mmfc/error.hpp"
#include "mmfc/rng.hpp"

namespace mmfc {

std::vector<CompletedDataset> generate_imputations(const Model& model, const Dataset& data,
                                                   const ChainOptions& options) {
  ChainOptions opts = options;
  opts.trace = false;
  return run_chain(model, data, opts).completed;
}

MIEstimate pool_estimates(std::span<const double> q, std::span<const double> u) {
  if (q.size() != u.size()) throw ValidationError("pool_estimates: q and u differ in length");
  if (q.size() < 2) throw ValidationError("pool_estimates: need at least two imputations");
  MIEstimate est;
  est.m = static_cast<int>(q.size());
  const double m = static_cast<double>(q.size());
  for (std::size_t l = 0; l < q.size(); ++l) {
    if (!(u[l] >= 0.0)) throw ValidationError("pool_estimates: within variance must be non-negative");
    est.q_bar += q[l];
    est.u_bar += u[l];
  }
  est.q_bar /= m;
  est.u_bar /= m;
  for (double v : q) est.b += (v - est.q_bar) * (v - est.q_bar);
  est.b /= m - 1.0;
  const double inflated = (1.0 + 1.0 / m) * est.b;
  est.t = inflated + est.u_bar;
  if (est.b == 0.0) {
    est.normal_reference = true;
    est.nu = std::numeric_limits<double>::infinity();
  } else {
    const double r = 1.0 + est.u_bar / inflated;
    est.nu = (m - 1.0) * r * r;
  }
  return est;
}

std::pair<double, double> mi_interval(const MIEstimate& est, double level) {
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("interval level must lie in (0, 1)");
  if (est.t == 0.0) return {est.q_bar, est.q_bar};
  const double p = 0.5 * (1.0 + level);
  const double quantile = est.normal_reference ? normal_quantile(p) : student_t_quantile(est.nu, p);
  const double half = quantile * std::sqrt(est.t);
  return {est.q_bar - half, est.q_bar + half};
}

std::vector<MIEstimate> cell_estimates(const std::vector<CompletedDataset>& completed,
                                       const std::vector<Cell>& cells) {
  if (completed.empty()) throw ValidationError("cell_estimates: no completed datasets");
  const auto& first = completed.front();
  for (const auto& d : completed) {
    if (d.n() != first.n() || d.schema() != first.schema()) {
      throw ValidationError("cell_estimates: completed datasets differ in size or schema");
    }
  }
  const double n = static_cast<double>(first.n());
  std::vector<std::vector<double>> q;
  for (const auto& d : completed) q.push_back(empirical_cell_probs(d, cells));
  std::vector<MIEstimate> out;
  out.reserve(cells.size());
  std::vector<double> qs(completed.size());
  std::vector<double> us(completed.size());
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (std::size_t l = 0; l < completed.size(); ++l) {
      qs[l] = q[l][c];
      us[l] = qs[l] * (1.0 - qs[l]) / n;
    }
    out.push_back(pool_estimates(qs, us));
  }
  return out;
}

void write_pooled_csv(std::ostream& out, const std::vector<MIEstimate>& estimates,
                      const std::vector<Cell>& cells, const Schema& schema, double level) {
  if (estimates.size() != cells.size()) throw ValidationError("write_pooled_csv: estimate/cell count mismatch");
  out << "cell,q_bar,T,nu,lower,upper\n";
  out.precision(17);
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const auto [lo, hi] = mi_interval(estimates[c], level);
    out << cell_label(cells[c], schema) << ',' << estimates[c].q_bar << ',' << estimates[c].t << ',';
    if (estimates[c].normal_reference) {
      out << "inf";
    } else {
      out << estimates[c].nu;
    }
    out << ',' << lo << ',' << hi << '\n';
  }
}

}  // namespace mmfc
