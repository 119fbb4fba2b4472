#include "mmfc/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "mmfc/error.hpp"

namespace mmfc {

std::string to_string(VariableKind kind) {
  return kind == VariableKind::ordinal ? "ordinal" : "nominal";
}

std::string to_string(VariableGroup group) {
  return group == VariableGroup::focus ? "focus" : "remainder";
}

std::string to_string(ModelKind kind) { return kind == ModelKind::mmfc ? "mmfc" : "mmmix"; }

ModelKind parse_model_kind(const std::string& s) {
  if (s == "mmfc" || s == "MM-FC") return ModelKind::mmfc;
  if (s == "mmmix" || s == "MM-Mix") return ModelKind::mmmix;
  throw ValidationError("unknown model '" + s + "' (expected mmfc or mmmix)");
}

void to_json(nlohmann::json& j, const VariableSchema& v) {
  j = nlohmann::json{{"name", v.name},
                     {"kind", to_string(v.kind)},
                     {"levels", v.levels},
                     {"group", to_string(v.group)}};
}

void from_json(const nlohmann::json& j, VariableSchema& v) {
  v.name = j.at("name").get<std::string>();
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "ordinal") {
    v.kind = VariableKind::ordinal;
  } else if (kind == "nominal") {
    v.kind = VariableKind::nominal;
  } else {
    throw ValidationError("variable '" + v.name + "': unknown kind '" + kind + "'");
  }
  v.levels = j.at("levels").get<int>();
  const auto group = j.at("group").get<std::string>();
  if (group == "focus" || group == "A") {
    v.group = VariableGroup::focus;
  } else if (group == "remainder" || group == "B") {
    v.group = VariableGroup::remainder;
  } else {
    throw ValidationError("variable '" + v.name + "': unknown group '" + group + "'");
  }
}

void validate_schema(const Schema& schema) {
  if (schema.empty()) throw ValidationError("schema has no variables");
  std::set<std::string> seen;
  for (const auto& v : schema) {
    if (v.name.empty()) throw ValidationError("schema variable with empty name");
    if (!seen.insert(v.name).second) throw ValidationError("duplicate variable '" + v.name + "'");
    if (v.levels < 2) {
      throw ValidationError("variable '" + v.name + "' has " + std::to_string(v.levels) +
                            " levels (need at least 2)");
    }
  }
}

Schema load_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open schema file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("schema " + path.string() + ": " + e.what());
  }
  const auto& vars = j.is_object() ? j.at("variables") : j;
  Schema schema;
  try {
    schema = vars.get<Schema>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("schema " + path.string() + ": " + e.what());
  }
  validate_schema(schema);
  return schema;
}

void save_schema(const std::filesystem::path& path, const Schema& schema) {
  std::ofstream out(path);
  out << nlohmann::json{{"variables", schema}}.dump(2) << '\n';
}

namespace {

int block_rank(const VariableSchema& v) {
  if (v.group == VariableGroup::remainder) return 2;
  return v.kind == VariableKind::ordinal ? 0 : 1;
}

}  // namespace

Schema canonical_schema(const Schema& schema) {
  Schema out = schema;
  std::stable_sort(out.begin(), out.end(), [](const VariableSchema& a, const VariableSchema& b) {
    return block_rank(a) < block_rank(b);
  });
  return out;
}

Dataset::Dataset(Schema schema, std::vector<int> values, std::size_t n_rows) : n_(n_rows) {
  validate_schema(schema);
  const std::size_t p = schema.size();
  if (n_rows == 0) throw ValidationError("dataset has no rows");
  if (values.size() != n_rows * p) throw ValidationError("dataset value count does not match n x p");

  std::vector<std::size_t> order(p);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return block_rank(schema[a]) < block_rank(schema[b]);
  });

  for (const auto& v : schema) original_order_.push_back(v.name);
  schema_.reserve(p);
  for (std::size_t j : order) schema_.push_back(schema[j]);
  values_.resize(values.size());
  for (std::size_t i = 0; i < n_rows; ++i) {
    for (std::size_t jj = 0; jj < p; ++jj) {
      const int code = values[i * p + order[jj]];
      if (code != kMissing && (code < 1 || code > schema_[jj].levels)) {
        throw ValidationError("row " + std::to_string(i + 1) + ", column '" + schema_[jj].name +
                              "': code " + std::to_string(code) + " outside 1.." +
                              std::to_string(schema_[jj].levels));
      }
      values_[i * p + jj] = code;
    }
  }
}

std::size_t Dataset::missing_count() const {
  return static_cast<std::size_t>(std::count(values_.begin(), values_.end(), kMissing));
}

std::size_t Dataset::column(const std::string& name) const {
  for (std::size_t j = 0; j < schema_.size(); ++j) {
    if (schema_[j].name == name) return j;
  }
  throw ValidationError("unknown variable '" + name + "'");
}

Dataset Dataset::with_values(std::vector<int> values) const {
  Dataset out = *this;
  if (values.size() != values_.size()) throw ValidationError("value count mismatch");
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = 0; j < p(); ++j) {
      const int code = values[i * p() + j];
      if (code != kMissing && (code < 1 || code > schema_[j].levels)) {
        throw ValidationError("row " + std::to_string(i + 1) + ", column '" + schema_[j].name +
                              "': code out of range");
      }
    }
  }
  out.values_ = std::move(values);
  return out;
}

std::vector<std::size_t> PartitionedView::covariate_columns() const {
  std::vector<std::size_t> cols = nominal_focus;
  cols.insert(cols.end(), remainder.begin(), remainder.end());
  return cols;
}

PartitionedView partition(const Schema& schema, ModelKind kind) {
  PartitionedView view;
  for (std::size_t j = 0; j < schema.size(); ++j) {
    const auto& v = schema[j];
    const bool focus = kind == ModelKind::mmmix || v.group == VariableGroup::focus;
    if (!focus) {
      view.remainder.push_back(j);
    } else if (v.kind == VariableKind::ordinal) {
      view.ordinal_focus.push_back(j);
    } else {
      view.nominal_focus.push_back(j);
    }
  }
  if (view.p_focus() == 0) throw ValidationError("no focus variables in schema");
  if (view.p_ordinal() == 0) {
    throw ValidationError("model needs at least one ordinal focus variable");
  }
  return view;
}

PartitionedView partition(const Dataset& data, ModelKind kind) {
  return partition(data.schema(), kind);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  out.push_back(cell);
  return out;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\"");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\"");
  return s.substr(first, last - first + 1);
}

}  // namespace

Dataset read_dataset(std::istream& in, const Schema& schema) {
  validate_schema(schema);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty data file");
  const auto header = split_csv_line(line);

  std::unordered_map<std::string, std::size_t> schema_index;
  for (std::size_t j = 0; j < schema.size(); ++j) schema_index[schema[j].name] = j;

  std::vector<std::size_t> file_to_schema(header.size());
  std::vector<bool> present(schema.size(), false);
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto name = trim(header[c]);
    const auto it = schema_index.find(name);
    if (it == schema_index.end()) throw ValidationError("unknown column '" + name + "'");
    if (present[it->second]) throw ValidationError("duplicate column '" + name + "'");
    present[it->second] = true;
    file_to_schema[c] = it->second;
  }
  for (std::size_t j = 0; j < schema.size(); ++j) {
    if (!present[j]) throw ValidationError("column '" + schema[j].name + "' missing from data");
  }

  const std::size_t p = schema.size();
  std::vector<int> values;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    const std::size_t row = n + 1;
    if (cells.size() != header.size()) {
      throw ValidationError("row " + std::to_string(row) + ": expected " +
                            std::to_string(header.size()) + " cells, found " +
                            std::to_string(cells.size()));
    }
    values.resize((n + 1) * p, Dataset::kMissing);
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto text = trim(cells[c]);
      const std::size_t j = file_to_schema[c];
      if (text.empty() || text == "NA") continue;
      int code = 0;
      const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), code);
      if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw ValidationError("row " + std::to_string(row) + ", column '" + schema[j].name +
                              "': non-integer value '" + text + "'");
      }
      if (code < 1 || code > schema[j].levels) {
        throw ValidationError("row " + std::to_string(row) + ", column '" + schema[j].name +
                              "': code " + text + " outside 1.." + std::to_string(schema[j].levels));
      }
      values[n * p + j] = code;
    }
    ++n;
  }
  if (n == 0) throw ValidationError("data file has no rows");
  return Dataset(schema, std::move(values), n);
}

Dataset load_dataset(const std::filesystem::path& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open data file " + path.string());
  return read_dataset(in, schema);
}

void write_dataset(std::ostream& out, const Dataset& data) {
  for (std::size_t j = 0; j < data.p(); ++j) {
    out << (j ? "," : "") << data.variable(j).name;
  }
  out << '\n';
  for (std::size_t i = 0; i < data.n(); ++i) {
    for (std::size_t j = 0; j < data.p(); ++j) {
      if (j) out << ',';
      if (data.missing(i, j)) {
        out << "NA";
      } else {
        out << data.value(i, j);
      }
    }
    out << '\n';
  }
}

void write_dataset(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_dataset(out, data);
}

}  // namespace mmfc
