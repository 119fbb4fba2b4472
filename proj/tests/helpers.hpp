#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mmfc/model.hpp"

namespace mmfc::test {

inline VariableSchema var(std::string name, VariableKind kind, int levels, VariableGroup group) {
  return {std::move(name), kind, levels, group};
}

/// Y1 ordinal focus, X1 nominal focus, B1/B2 nominal remainder.
inline Schema small_schema(int y_levels = 3, int x_levels = 2, int b1_levels = 2, int b2_levels = 2) {
  return {var("Y1", VariableKind::ordinal, y_levels, VariableGroup::focus),
          var("X1", VariableKind::nominal, x_levels, VariableGroup::focus),
          var("B1", VariableKind::nominal, b1_levels, VariableGroup::remainder),
          var("B2", VariableKind::nominal, b2_levels, VariableGroup::remainder)};
}

inline ModelConfig small_config(const Schema& schema, int trunc, ModelKind kind = ModelKind::mmfc) {
  ModelConfig c = default_config(schema, kind);
  c.truncation = {trunc, trunc, trunc, trunc};
  return c;
}

/// Every code tuple over `levels`, first entry fastest.
inline std::vector<std::vector<int>> all_tuples(const std::vector<int>& levels) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(levels.size(), 1);
  while (true) {
    out.push_back(cur);
    std::size_t m = 0;
    for (; m < levels.size(); ++m) {
      if (cur[m] < levels[m]) {
        ++cur[m];
        break;
      }
      cur[m] = 1;
    }
    if (m == levels.size()) return out;
  }
}

/// Mean and batch-means standard error of an autocorrelated trace.
struct TraceSummary {
  double mean = 0.0;
  double se = 0.0;
};

inline TraceSummary batch_means(const std::vector<double>& x, std::size_t batches = 50) {
  TraceSummary s;
  const std::size_t len = x.size() / batches;
  if (len == 0) return s;
  std::vector<double> means(batches, 0.0);
  for (std::size_t b = 0; b < batches; ++b) {
    for (std::size_t k = 0; k < len; ++k) means[b] += x[b * len + k];
    means[b] /= static_cast<double>(len);
    s.mean += means[b];
  }
  s.mean /= static_cast<double>(batches);
  double v = 0.0;
  for (double m : means) v += (m - s.mean) * (m - s.mean);
  s.se = std::sqrt(v / static_cast<double>(batches - 1) / static_cast<double>(batches));
  return s;
}

}  // namespace mmfc::test
