#pragma once

/// Posterior predictive checks: replicated datasets from retained parameter
/// draws, and imputed-vs-observed comparisons.

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmfc/density.hpp"
#include "mmfc/gibbs.hpp"

namespace mmfc {

/// Draws `count` datasets of `n` rows, one per evenly spaced retained
/// snapshot. Throws ValidationError when the record holds fewer snapshots.
std::vector<Dataset> replicate_datasets(const Model& model, const ChainRecord& record, std::size_t n,
                                        int count, Rng& rng);

/// P(event | given); `given` is empty for marginal and bivariate statistics.
struct PpcStatistic {
  std::string label;
  std::vector<std::size_t> columns;
  std::vector<int> levels;
  std::vector<std::size_t> given_columns;
  std::vector<int> given_levels;
};

/// Parses "Y1=2", "Y1=2&X1=1" or "Y1=2|X1=1&X2=3" against `schema`.
PpcStatistic parse_statistic(const std::string& text, const Schema& schema);
/// Every marginal and bivariate cell over `columns` (all when empty).
std::vector<PpcStatistic> default_statistics(const Schema& schema, std::vector<std::size_t> columns = {});
/// Every level of `target` conditional on each joint level of `given`.
std::vector<PpcStatistic> conditional_statistics(const Schema& schema, const std::string& target,
                                                 const std::vector<std::string>& given);

/// Value of the statistic on one dataset; 0 when the conditioning event is empty.
double evaluate_statistic(const PpcStatistic& stat, const Dataset& data);

struct PpcEntry {
  std::string label;
  std::vector<double> replicates;
  double estimate = 0.0;
  /// Fraction of replicates below the estimate, ties counted half.
  double tail = 0.0;
};

struct PpcReport {
  int replicate_count = 0;
  std::vector<PpcEntry> entries;
};

/// Tail position of `estimate` among `replicates` (midrank convention).
double tail_position(const std::vector<double>& replicates, double estimate);

/// Statistics on every replicate, and the mean over the completed datasets.
PpcReport ppc_statistics(const std::vector<Dataset>& replicated, const std::vector<CompletedDataset>& completed,
                         const std::vector<PpcStatistic>& stats);

/// Fraction of entries whose tail position is exactly 0 or 1.
double extreme_tail_fraction(const PpcReport& report);

struct LevelComparison {
  std::string variable;
  std::vector<std::size_t> observed_counts;
  std::vector<std::size_t> imputed_counts;  // pooled over completed datasets
  std::vector<double> observed_freq;
  std::vector<double> imputed_freq;  // empty when nothing was imputed
};

std::vector<LevelComparison> imputed_vs_observed(const Dataset& data, const std::vector<CompletedDataset>& completed);

nlohmann::json ppc_report_json(const PpcReport& report);
nlohmann::json comparison_json(const std::vector<LevelComparison>& rows);
/// Replicate-by-statistic matrix: one row per replicate, one column per statistic.
void write_replicate_matrix(std::ostream& out, const PpcReport& report);

}  // namespace mmfc
