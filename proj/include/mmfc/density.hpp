#pragma once

/// Closed-form and Monte Carlo evaluation of the model's distributions, cell
/// tables, and the Hellinger distance between them.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mmfc/dataset.hpp"
#include "mmfc/model.hpp"

namespace mmfc {

/// P(X^(A) = x_A, X^(B) = x_B): a mixture of products of multinomials.
/// `row` holds codes for every column; ordinal focus entries are ignored.
double nominal_joint_pmf(const Model& model, const ModelParams& params, std::span<const int> row);
/// Same, with the nominal focus and remainder codes given separately in
/// PartitionedView order.
double nominal_joint_pmf(const Model& model, const ModelParams& params,
                         std::span<const int> x_focus, std::span<const int> x_remainder);

/// f(Z | X = x) as a mixture of normal linear regressions.
struct ZMixture {
  Eigen::VectorXd weights;  // normalized
  std::vector<Eigen::RowVectorXd> means;
  std::vector<Eigen::MatrixXd> covariances;
};

ZMixture conditional_z_mixture(const Model& model, const ModelParams& params, std::span<const int> row);

struct CellEstimate {
  double value = 0.0;
  double std_error = 0.0;  // 0 on the exact path
};

/// P(Y^(A) = y, X = x) for the full row. Exact (products of normal CDFs) when
/// p_ordinal == 1 or every Sigma_r is diagonal; otherwise Monte Carlo with
/// antithetic pairs, `mc_draws` per component, seeded by `seed`.
CellEstimate joint_cell_probability(const Model& model, const ModelParams& params,
                                    std::span<const int> row, int mc_draws, std::uint64_t seed = 0);

/// Model-implied P(column = level) for every column and level, by enumeration
/// of the covariate space. Result indexed [column][level - 1].
std::vector<std::vector<double>> model_marginal_probs(const Model& model, const ModelParams& params);

/// Sparse probability table over the joint levels of a set of columns.
/// Keys are mixed-radix encodings of (code - 1); entries are kept sorted.
class CellTable {
 public:
  CellTable() = default;
  CellTable(std::vector<std::size_t> columns, std::vector<int> levels);

  [[nodiscard]] const std::vector<std::size_t>& columns() const { return columns_; }
  [[nodiscard]] const std::vector<int>& levels() const { return levels_; }

  /// `codes` are 1-based, one per table column.
  [[nodiscard]] std::uint64_t key(std::span<const int> codes) const;
  /// Key for the table's columns read out of a full data row.
  [[nodiscard]] std::uint64_t key_from_row(std::span<const int> row) const;
  [[nodiscard]] std::vector<int> decode(std::uint64_t key) const;

  /// Accumulate mass; call finalize() before lookups.
  void add(std::uint64_t key, double mass);
  void finalize();
  void normalize();

  [[nodiscard]] double get(std::uint64_t key) const;
  [[nodiscard]] double total() const;
  [[nodiscard]] const std::vector<std::pair<std::uint64_t, double>>& entries() const { return entries_; }

 private:
  std::vector<std::size_t> columns_;
  std::vector<int> levels_;
  std::vector<std::pair<std::uint64_t, double>> entries_;
  bool sorted_ = true;
};

/// Relative frequencies of the joint levels of `columns`. Throws on masked cells.
CellTable empirical_table(const Dataset& data, const std::vector<std::size_t>& columns);

/// sqrt(1 - sum_c sqrt(p'_c q'_c)) over cells with truth probability at least
/// `threshold`, after renormalizing both tables on that cell set.
double hellinger(const CellTable& truth, const CellTable& estimate, double threshold);

/// CSV: one column per table variable, then `probability`.
void write_cell_table(std::ostream& out, const CellTable& table, const Schema& schema);

/// A conjunction of (column == level) conditions.
struct Cell {
  std::vector<std::size_t> columns;
  std::vector<int> levels;

  bool operator==(const Cell&) const = default;
};

/// Every marginal cell, then every bivariate cell, over `columns` (all
/// columns when empty), in column order.
std::vector<Cell> marginal_and_bivariate_cells(const Schema& schema,
                                               std::vector<std::size_t> columns = {});
std::string cell_label(const Cell& cell, const Schema& schema);

/// Relative frequency of each cell. Throws ValidationError on masked cells.
std::vector<double> empirical_cell_probs(const Dataset& data, const std::vector<Cell>& cells);

}  // namespace mmfc
