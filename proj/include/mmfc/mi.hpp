#pragma once

/// Multiple-imputation orchestration and Rubin's-rules pooling.

#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "mmfc/density.hpp"
#include "mmfc/gibbs.hpp"

namespace mmfc {

struct MIEstimate {
  double q_bar = 0.0;
  double b = 0.0;      // between-imputation variance
  double u_bar = 0.0;  // mean within-imputation variance
  double t = 0.0;      // total variance
  double nu = 0.0;     // degrees of freedom; +inf under the normal reference
  int m = 0;
  /// Set when b == 0: nu is infinite and intervals use the normal quantile.
  bool normal_reference = false;
};

/// Runs one chain and returns its m completed datasets in emission order.
std::vector<CompletedDataset> generate_imputations(const Model& model, const Dataset& data,
                                                   const ChainOptions& options);

/// Throws ValidationError when m < 2, the lengths differ, or some u < 0.
MIEstimate pool_estimates(std::span<const double> q, std::span<const double> u);

/// q_bar -/+ t_{nu,(1+level)/2} sqrt(T).
std::pair<double, double> mi_interval(const MIEstimate& est, double level);

/// Per-cell pooled proportions with u = q(1-q)/n.
std::vector<MIEstimate> cell_estimates(const std::vector<CompletedDataset>& completed,
                                       const std::vector<Cell>& cells);

/// CSV: cell,q_bar,T,nu,lower,upper.
void write_pooled_csv(std::ostream& out, const std::vector<MIEstimate>& estimates,
                      const std::vector<Cell>& cells, const Schema& schema, double level = 0.95);

}  // namespace mmfc
