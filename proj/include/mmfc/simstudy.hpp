#pragma once

/// Synthetic data generation, MCAR masking, the scenario factorial and its
/// evaluation metrics.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mmfc/density.hpp"
#include "mmfc/mi.hpp"

namespace mmfc {

/// One additive term of an ordered-logit linear predictor: coef times the
/// product of the indicator conditions, times a latent factor when set.
struct GeneratorTerm {
  double coef = 0.0;
  std::vector<std::pair<std::size_t, int>> indicators;  // (generator index, level)
  int factor = -1;
};

struct GeneratorVariable {
  VariableSchema schema;
  /// multinomial logit (nominal): eta_c = intercepts[c] + loadings[c] . F
  std::vector<double> intercepts;
  std::vector<std::vector<double>> loadings;
  /// ordered logit (ordinal): P(Y <= k) = logistic(cutpoints[k] - eta)
  std::vector<double> cutpoints;
  std::vector<GeneratorTerm> terms;
};

struct Generator {
  std::string name;
  int version = 0;
  int factors = 2;
  std::size_t truth_draws = 1000000;
  std::uint64_t truth_seed = 0;
  std::vector<GeneratorVariable> variables;

  /// Schema in generator order.
  [[nodiscard]] Schema schema() const;
};

Generator generator_from_json(const nlohmann::json& j);
nlohmann::json generator_to_json(const Generator& g);
Generator load_generator(const std::filesystem::path& path);
/// The versioned generator files compiled into the library ("few", "more").
Generator builtin_generator(const std::string& name);
/// Copy with every interaction term (two or more indicators, or an
/// indicator together with a factor) set to zero.
Generator without_interactions(Generator g);

/// n units in canonical column order, no missing cells.
Dataset generate_dataset(const Generator& g, std::size_t n, Rng& rng);

enum class FocusSize { few, more };

struct Scenario {
  std::string name;  // e.g. "high/few/small"
  double missing_rate_a = 0.30;
  double missing_rate_b = 0.05;
  FocusSize focus = FocusSize::few;
  std::size_t n = 500;
};

/// Parses "<high|low>/<few|more>/<small|large>".
Scenario parse_scenario(const std::string& name);
/// The eight scenarios in a fixed order.
std::vector<Scenario> factorial_scenarios();
std::string generator_name(FocusSize focus);

struct TruthTable {
  std::string generator;
  int generator_version = 0;
  std::string provenance = "monte-carlo";
  std::size_t draws = 0;
  std::uint64_t seed = 0;
  Schema schema;  // canonical order
  std::vector<Cell> cells;
  std::vector<double> prob;
  std::vector<double> std_error;
  CellTable joint_a;
  CellTable joint_b;
  CellTable joint_ab;
};

/// Large-sample Monte Carlo truth from `draws` generator units.
TruthTable compute_truth(const Generator& g, std::size_t draws, std::uint64_t seed);
/// compute_truth at the generator's own draw count and seed, memoized per
/// (name, version) for the life of the process.
std::shared_ptr<const TruthTable> cached_truth(const Generator& g);

struct Population {
  Dataset data;
  std::shared_ptr<const TruthTable> truth;
};

Population generate_population(const Scenario& scenario, Rng& rng);

/// Masks focus cells with probability missing_rate_a and remainder cells with
/// missing_rate_b, independently, scanning rows then columns.
Dataset inject_mcar(const Dataset& data, const Scenario& scenario, Rng& rng);

/// "A", "B", "AA-oo", "AA-on", "AA-nn", "AB-oo", "AB-on", "AB-no", "AB-nn", "BB".
std::string estimand_class(const Cell& cell, const Schema& schema);

struct RunMetrics {
  std::vector<double> abs_error;
  std::vector<int> covered;
  std::vector<double> width;
  double hellinger_a = 0.0;
  double hellinger_b = 0.0;
  double hellinger_ab = 0.0;
};

constexpr double kHellingerThreshold = 8e-6;

RunMetrics evaluate_run(const TruthTable& truth, const std::vector<MIEstimate>& pooled,
                        const std::vector<CompletedDataset>& completed,
                        double threshold = kHellingerThreshold, double level = 0.95);

struct StudyOptions {
  std::vector<Scenario> scenarios;
  std::vector<ModelKind> models{ModelKind::mmfc, ModelKind::mmmix};
  int reps = 10;
  int m = 5;
  int burn_in = 2000;
  int thin = 200;
  std::uint64_t seed = 0;
  int threads = 0;  // 0: hardware concurrency
  Truncation truncation;
  /// Per-run results are written here and reused on a rerun.
  std::optional<std::filesystem::path> resume_dir;
};

nlohmann::json study_options_json(const StudyOptions& options);

struct RunResult {
  std::string scenario;
  int rep = 0;
  ModelKind model = ModelKind::mmfc;
  bool ok = false;
  std::string error;
  double missing_fraction_a = 0.0;
  double missing_fraction_b = 0.0;
  double complete_case_fraction = 0.0;
  std::vector<std::string> warnings;
  RunMetrics metrics;
};

nlohmann::json run_result_json(const RunResult& r);
RunResult run_result_from_json(const nlohmann::json& j);

struct ClassSummary {
  std::string estimand_class;
  std::size_t estimands = 0;
  double mean_abs_error = 0.0;
  double coverage = 0.0;
  double mean_width = 0.0;
};

struct ScenarioSummary {
  std::string scenario;
  ModelKind model = ModelKind::mmfc;
  int runs_ok = 0;
  int runs_failed = 0;
  std::vector<ClassSummary> classes;
  /// Per estimand, averaged over successful runs.
  std::vector<double> estimand_abs_error;
  std::vector<double> estimand_coverage;
  double hellinger_a = 0.0;
  double hellinger_b = 0.0;
  double hellinger_ab = 0.0;
};

struct StudyReport {
  StudyOptions options;
  std::vector<RunResult> runs;  // scenario, rep, model order
  std::vector<ScenarioSummary> summaries;
};

/// Runs every (scenario, rep, model) and aggregates. A failed chain is
/// recorded in its RunResult and does not stop the study.
StudyReport run_factorial(const StudyOptions& options);

/// Summary for one scenario and model; throws if absent.
const ScenarioSummary& find_summary(const StudyReport& report, const std::string& scenario, ModelKind model);
const ClassSummary& find_class(const ScenarioSummary& summary, const std::string& estimand_class);
/// (MM-FC, MM-Mix) Hellinger distances for P(A) per replicate; reps where
/// either fit failed are skipped.
std::vector<std::pair<double, double>> paired_hellinger_a(const StudyReport& report, const std::string& scenario);

nlohmann::json study_report_json(const StudyReport& report);
/// report.json, runs.csv and estimands.csv into `dir`.
void write_study_report(const std::filesystem::path& dir, const StudyReport& report);

}  // namespace mmfc
