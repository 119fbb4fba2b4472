#pragma once

/// Categorical datasets: variable schema, missingness mask, CSV/JSON I/O.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace mmfc {

enum class VariableKind { ordinal, nominal };
enum class VariableGroup { focus, remainder };

/// Which model the data are partitioned for. MM-Mix places every variable in
/// the focus block (ordinals in the latent normal part, nominals in the
/// nominal focus part) and has no remainder block.
enum class ModelKind { mmfc, mmmix };

struct VariableSchema {
  std::string name;
  VariableKind kind = VariableKind::nominal;
  int levels = 2;
  VariableGroup group = VariableGroup::remainder;

  bool operator==(const VariableSchema&) const = default;
};

using Schema = std::vector<VariableSchema>;

void to_json(nlohmann::json& j, const VariableSchema& v);
void from_json(const nlohmann::json& j, VariableSchema& v);

/// Throws ValidationError on duplicate names or levels < 2.
void validate_schema(const Schema& schema);
/// Stable reorder into (ordinal focus, nominal focus, remainder).
Schema canonical_schema(const Schema& schema);
Schema load_schema(const std::filesystem::path& path);
void save_schema(const std::filesystem::path& path, const Schema& schema);

std::string to_string(VariableKind kind);
std::string to_string(VariableGroup group);
std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& s);

/// Rectangular table of 1-based category codes with a missingness mask.
///
/// Columns are stored in canonical order (ordinal focus, nominal focus,
/// remainder), stable within each block. `original_order()` keeps the names
/// in the order they were supplied so reports can map back.
class Dataset {
 public:
  /// Internal sentinel stored in masked cells; never a valid code.
  static constexpr int kMissing = 0;

  Dataset() = default;
  /// `values` is row-major n x p in the order of `schema`; kMissing marks a
  /// masked cell. Columns are reordered canonically.
  Dataset(Schema schema, std::vector<int> values, std::size_t n_rows);

  [[nodiscard]] std::size_t n() const { return n_; }
  [[nodiscard]] std::size_t p() const { return schema_.size(); }
  [[nodiscard]] const Schema& schema() const { return schema_; }
  [[nodiscard]] const VariableSchema& variable(std::size_t j) const { return schema_[j]; }
  [[nodiscard]] const std::vector<std::string>& original_order() const { return original_order_; }

  [[nodiscard]] bool missing(std::size_t i, std::size_t j) const {
    return values_[i * p() + j] == kMissing;
  }
  /// Raw code; kMissing for masked cells.
  [[nodiscard]] int value(std::size_t i, std::size_t j) const { return values_[i * p() + j]; }
  [[nodiscard]] std::span<const int> row(std::size_t i) const {
    return {values_.data() + i * p(), p()};
  }
  [[nodiscard]] const std::vector<int>& values() const { return values_; }

  [[nodiscard]] std::size_t missing_count() const;
  [[nodiscard]] bool complete() const { return missing_count() == 0; }
  /// Column index by name; throws ValidationError when unknown.
  [[nodiscard]] std::size_t column(const std::string& name) const;

  /// Same schema and shape, new cell values (validated).
  [[nodiscard]] Dataset with_values(std::vector<int> values) const;

  bool operator==(const Dataset& other) const {
    return n_ == other.n_ && schema_ == other.schema_ && values_ == other.values_;
  }

 private:
  Schema schema_;
  std::vector<std::string> original_order_;
  std::vector<int> values_;
  std::size_t n_ = 0;
};

/// A Dataset whose mask is all false. Produced by imputation and replication.
using CompletedDataset = Dataset;

/// Column index sets of the three model blocks.
struct PartitionedView {
  std::vector<std::size_t> ordinal_focus;
  std::vector<std::size_t> nominal_focus;
  std::vector<std::size_t> remainder;

  [[nodiscard]] std::size_t p_ordinal() const { return ordinal_focus.size(); }
  [[nodiscard]] std::size_t p_focus() const { return ordinal_focus.size() + nominal_focus.size(); }
  [[nodiscard]] std::size_t p() const { return p_focus() + remainder.size(); }
  /// Columns that make up X = (X^(A), X^(B)).
  [[nodiscard]] std::vector<std::size_t> covariate_columns() const;
};

/// Block assignment for `kind`. Throws ValidationError when there is no
/// focus variable or no ordinal focus variable.
PartitionedView partition(const Schema& schema, ModelKind kind = ModelKind::mmfc);
PartitionedView partition(const Dataset& data, ModelKind kind = ModelKind::mmfc);

/// CSV with a header naming every schema variable; "" or "NA" is missing.
Dataset load_dataset(const std::filesystem::path& path, const Schema& schema);
Dataset read_dataset(std::istream& in, const Schema& schema);
/// Header in stored (canonical) order; masked cells written as NA.
void write_dataset(std::ostream& out, const Dataset& data);
void write_dataset(const std::filesystem::path& path, const Dataset& data);

}  // namespace mmfc
