#include "mmfc/ppc.hpp"

#include <ostream>
#include <sstream>

#include "mmfc/error.hpp"

namespace mmfc {

using nlohmann::json;

std::vector<Dataset> replicate_datasets(const Model& model, const ChainRecord& record, std::size_t n,
                                        int count, Rng& rng) {
  if (count < 1) throw ValidationError("replicate count must be positive");
  const std::size_t have = record.snapshots.size();
  if (have < static_cast<std::size_t>(count)) {
    throw ValidationError("chain kept " + std::to_string(have) + " parameter snapshots, " +
                          std::to_string(count) + " requested");
  }
  std::vector<Dataset> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    const std::size_t idx = static_cast<std::size_t>(k) * have / static_cast<std::size_t>(count);
    out.push_back(simulate_dataset(model, record.snapshots[idx], n, rng));
  }
  return out;
}

namespace {

void parse_conditions(const std::string& text, const Schema& schema, std::vector<std::size_t>& cols,
                      std::vector<int>& levels) {
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, '&');) {
    const auto eq = part.find('=');
    if (eq == std::string::npos) throw ValidationError("statistic term '" + part + "' is not name=level");
    const std::string name = part.substr(0, eq);
    std::size_t col = schema.size();
    for (std::size_t j = 0; j < schema.size(); ++j) {
      if (schema[j].name == name) col = j;
    }
    if (col == schema.size()) throw ValidationError("statistic refers to unknown variable '" + name + "'");
    int level = 0;
    try {
      std::size_t used = 0;
      level = std::stoi(part.substr(eq + 1), &used);
      if (used != part.size() - eq - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ValidationError("statistic term '" + part + "' has a non-integer level");
    }
    if (level < 1 || level > schema[col].levels) {
      throw ValidationError("level " + std::to_string(level) + " out of range for '" + name + "'");
    }
    cols.push_back(col);
    levels.push_back(level);
  }
  if (cols.empty()) throw ValidationError("empty statistic");
}

std::string conditions_label(const Schema& schema, const std::vector<std::size_t>& cols, const std::vector<int>& levels) {
  std::string s;
  for (std::size_t m = 0; m < cols.size(); ++m) {
    if (m) s += '&';
    s += schema[cols[m]].name + '=' + std::to_string(levels[m]);
  }
  return s;
}

}  // namespace

PpcStatistic parse_statistic(const std::string& text, const Schema& schema) {
  PpcStatistic stat;
  const auto bar = text.find('|');
  parse_conditions(text.substr(0, bar), schema, stat.columns, stat.levels);
  if (bar != std::string::npos) parse_conditions(text.substr(bar + 1), schema, stat.given_columns, stat.given_levels);
  stat.label = conditions_label(schema, stat.columns, stat.levels);
  if (!stat.given_columns.empty()) stat.label += '|' + conditions_label(schema, stat.given_columns, stat.given_levels);
  return stat;
}

std::vector<PpcStatistic> default_statistics(const Schema& schema, std::vector<std::size_t> columns) {
  std::vector<PpcStatistic> out;
  for (const auto& cell : marginal_and_bivariate_cells(schema, std::move(columns))) {
    PpcStatistic s;
    s.columns = cell.columns;
    s.levels = cell.levels;
    s.label = cell_label(cell, schema);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<PpcStatistic> conditional_statistics(const Schema& schema, const std::string& target,
                                                 const std::vector<std::string>& given) {
  auto find = [&](const std::string& name) {
    for (std::size_t j = 0; j < schema.size(); ++j) {
      if (schema[j].name == name) return j;
    }
    throw ValidationError("statistic refers to unknown variable '" + name + "'");
  };
  const std::size_t t = find(target);
  std::vector<std::size_t> gcols;
  for (const auto& g : given) gcols.push_back(find(g));
  std::vector<int> glevels(gcols.size(), 1);
  std::vector<PpcStatistic> out;
  while (true) {
    for (int y = 1; y <= schema[t].levels; ++y) {
      PpcStatistic s;
      s.columns = {t};
      s.levels = {y};
      s.given_columns = gcols;
      s.given_levels = glevels;
      s.label = conditions_label(schema, s.columns, s.levels);
      if (!gcols.empty()) s.label += '|' + conditions_label(schema, gcols, glevels);
      out.push_back(std::move(s));
    }
    std::size_t m = 0;
    for (; m < gcols.size(); ++m) {
      if (glevels[m] < schema[gcols[m]].levels) {
        ++glevels[m];
        break;
      }
      glevels[m] = 1;
    }
    if (m == gcols.size()) break;
  }
  return out;
}

double evaluate_statistic(const PpcStatistic& stat, const Dataset& data) {
  std::size_t given = 0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < data.n(); ++i) {
    bool ok = true;
    for (std::size_t m = 0; m < stat.given_columns.size() && ok; ++m) {
      ok = data.value(i, stat.given_columns[m]) == stat.given_levels[m];
    }
    if (!ok) continue;
    ++given;
    for (std::size_t m = 0; m < stat.columns.size() && ok; ++m) ok = data.value(i, stat.columns[m]) == stat.levels[m];
    hit += ok ? 1 : 0;
  }
  return given ? static_cast<double>(hit) / static_cast<double>(given) : 0.0;
}

double tail_position(const std::vector<double>& replicates, double estimate) {
  if (replicates.empty()) throw ValidationError("tail position needs at least one replicate");
  double below = 0.0;
  for (double r : replicates) {
    if (r < estimate) {
      below += 1.0;
    } else if (r == estimate) {
      below += 0.5;
    }
  }
  return below / static_cast<double>(replicates.size());
}

PpcReport ppc_statistics(const std::vector<Dataset>& replicated, const std::vector<CompletedDataset>& completed,
                         const std::vector<PpcStatistic>& stats) {
  if (replicated.empty() || completed.empty()) throw ValidationError("ppc needs replicated and completed datasets");
  for (const auto& d : replicated) {
    if (d.schema() != completed.front().schema()) throw ValidationError("replicated and completed schemas differ");
  }
  for (const auto& d : completed) {
    if (d.schema() != completed.front().schema()) throw ValidationError("completed datasets differ in schema");
  }
  const auto& schema = completed.front().schema();
  PpcReport report;
  report.replicate_count = static_cast<int>(replicated.size());
  for (const auto& stat : stats) {
    for (std::size_t c : stat.columns) {
      if (c >= schema.size()) throw ValidationError("statistic '" + stat.label + "' refers to an unknown column");
    }
    PpcEntry e;
    e.label = stat.label;
    for (const auto& d : replicated) e.replicates.push_back(evaluate_statistic(stat, d));
    for (const auto& d : completed) e.estimate += evaluate_statistic(stat, d);
    e.estimate /= static_cast<double>(completed.size());
    e.tail = tail_position(e.replicates, e.estimate);
    report.entries.push_back(std::move(e));
  }
  return report;
}

double extreme_tail_fraction(const PpcReport& report) {
  if (report.entries.empty()) return 0.0;
  std::size_t extreme = 0;
  for (const auto& e : report.entries) extreme += (e.tail == 0.0 || e.tail == 1.0) ? 1 : 0;
  return static_cast<double>(extreme) / static_cast<double>(report.entries.size());
}

std::vector<LevelComparison> imputed_vs_observed(const Dataset& data, const std::vector<CompletedDataset>& completed) {
  for (const auto& d : completed) {
    if (d.schema() != data.schema() || d.n() != data.n()) throw ValidationError("completed data do not match the input");
  }
  std::vector<LevelComparison> out;
  for (std::size_t j = 0; j < data.p(); ++j) {
    const auto levels = static_cast<std::size_t>(data.variable(j).levels);
    LevelComparison row;
    row.variable = data.variable(j).name;
    row.observed_counts.assign(levels, 0);
    row.imputed_counts.assign(levels, 0);
    for (std::size_t i = 0; i < data.n(); ++i) {
      if (!data.missing(i, j)) {
        ++row.observed_counts[static_cast<std::size_t>(data.value(i, j) - 1)];
        continue;
      }
      for (const auto& d : completed) ++row.imputed_counts[static_cast<std::size_t>(d.value(i, j) - 1)];
    }
    auto freq = [](const std::vector<std::size_t>& counts) {
      std::size_t total = 0;
      for (auto c : counts) total += c;
      std::vector<double> f;
      if (total == 0) return f;
      for (auto c : counts) f.push_back(static_cast<double>(c) / static_cast<double>(total));
      return f;
    };
    row.observed_freq = freq(row.observed_counts);
    row.imputed_freq = freq(row.imputed_counts);
    out.push_back(std::move(row));
  }
  return out;
}

json ppc_report_json(const PpcReport& report) {
  json entries = json::array();
  for (const auto& e : report.entries) {
    entries.push_back({{"statistic", e.label}, {"estimate", e.estimate}, {"tail", e.tail}, {"replicates", e.replicates}});
  }
  return {{"replicate_count", report.replicate_count},
          {"extreme_tail_fraction", extreme_tail_fraction(report)},
          {"statistics", entries}};
}

json comparison_json(const std::vector<LevelComparison>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    out.push_back({{"variable", r.variable},
                   {"observed_counts", r.observed_counts},
                   {"imputed_counts", r.imputed_counts},
                   {"observed_freq", r.observed_freq},
                   {"imputed_freq", r.imputed_freq}});
  }
  return out;
}

void write_replicate_matrix(std::ostream& out, const PpcReport& report) {
  out << "replicate";
  for (const auto& e : report.entries) out << ",\"" << e.label << '"';
  out << '\n';
  out.precision(17);
  for (int r = 0; r < report.replicate_count; ++r) {
    out << r + 1;
    for (const auto& e : report.entries) out << ',' << e.replicates[static_cast<std::size_t>(r)];
    out << '\n';
  }
}

}  // namespace mmfc
