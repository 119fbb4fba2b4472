// Python bindings. Arrays cross the boundary as n x p int32 matrices of
// 1-based codes in the caller's schema order, with 0 marking a missing cell.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmfc/cli.hpp"
#include "mmfc/error.hpp"
#include "mmfc/mi.hpp"
#include "mmfc/simstudy.hpp"

namespace py = pybind11;
using namespace mmfc;

namespace {

using IntArray = py::array_t<int, py::array::c_style | py::array::forcecast>;

Schema parse_schema(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("schema: ") + e.what());
  }
  const auto& vars = j.is_object() ? j.at("variables") : j;
  Schema schema = vars.get<Schema>();
  validate_schema(schema);
  return schema;
}

std::string schema_text(const Schema& schema) { return nlohmann::json{{"variables", schema}}.dump(); }

Dataset to_dataset(const Schema& schema, const IntArray& values) {
  if (values.ndim() != 2 || static_cast<std::size_t>(values.shape(1)) != schema.size()) {
    throw ValidationError("expected an n x " + std::to_string(schema.size()) + " array");
  }
  const auto n = static_cast<std::size_t>(values.shape(0));
  std::vector<int> v(values.data(), values.data() + n * schema.size());
  return Dataset(schema, std::move(v), n);
}

/// Back to the column order of `schema`.
IntArray to_array(const Dataset& d, const Schema& schema) {
  std::vector<std::size_t> src;
  for (const auto& var : schema) src.push_back(d.column(var.name));
  IntArray out({d.n(), schema.size()});
  auto w = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < d.n(); ++i)
    for (std::size_t j = 0; j < schema.size(); ++j) w(i, j) = d.value(i, src[j]);
  return out;
}

py::dict estimate_dict(const MIEstimate& e, double level) {
  const auto [lo, hi] = mi_interval(e, level);
  py::dict d;
  d["q_bar"] = e.q_bar;
  d["b"] = e.b;
  d["u_bar"] = e.u_bar;
  d["t"] = e.t;
  d["nu"] = e.nu;
  d["m"] = e.m;
  d["normal_reference"] = e.normal_reference;
  d["lower"] = lo;
  d["upper"] = hi;
  return d;
}

py::dict pool(const std::vector<double>& q, const std::vector<double>& u, double level) {
  return estimate_dict(pool_estimates(q, u), level);
}

std::vector<IntArray> impute(const std::string& schema_json, const IntArray& values, int m, int burn_in, int thin,
                             std::uint64_t seed, const std::string& model, std::optional<std::vector<int>> truncation,
                             const std::string& config_json) {
  const Schema schema = parse_schema(schema_json);
  const Dataset data = to_dataset(schema, values);
  const ModelKind kind = parse_model_kind(model);
  ModelConfig config = config_json.empty() ? default_config(data.schema(), kind)
                                           : config_from_json(nlohmann::json::parse(config_json), data.schema(), kind);
  if (truncation) {
    if (truncation->size() != 4) throw ValidationError("truncation expects four integers N, N_ZA, N_XA, N_B");
    config.truncation = {(*truncation)[0], (*truncation)[1], (*truncation)[2], (*truncation)[3]};
  }
  const Model fitted(data.schema(), config);
  std::vector<CompletedDataset> completed;
  {
    py::gil_scoped_release release;
    completed = generate_imputations(fitted, data, {.burn_in = burn_in, .thin = thin, .m = m, .seed = seed});
  }
  std::vector<IntArray> out;
  for (const auto& d : completed) out.push_back(to_array(d, schema));
  return out;
}

py::list pool_cells(const std::string& schema_json, const std::vector<IntArray>& datasets, bool focus_only,
                    double level) {
  const Schema schema = parse_schema(schema_json);
  std::vector<CompletedDataset> completed;
  for (const auto& a : datasets) {
    completed.push_back(to_dataset(schema, a));
    if (!completed.back().complete()) throw ValidationError("completed datasets must not have missing cells");
  }
  if (completed.empty()) throw ValidationError("no datasets to pool");
  const Schema& canon = completed.front().schema();
  std::vector<std::size_t> columns;
  if (focus_only) {
    for (std::size_t j = 0; j < canon.size(); ++j)
      if (canon[j].group == VariableGroup::focus) columns.push_back(j);
  }
  const auto cells = marginal_and_bivariate_cells(canon, columns);
  const auto est = cell_estimates(completed, cells);
  py::list out;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    py::dict d = estimate_dict(est[k], level);
    d["cell"] = cell_label(cells[k], canon);
    out.append(d);
  }
  return out;
}

py::dict simulate(const std::string& scenario, std::uint64_t seed) {
  const Scenario sc = parse_scenario(scenario);
  Rng rng(seed);
  const auto pop = generate_population(sc, rng);
  const Dataset masked = inject_mcar(pop.data, sc, rng);
  const Schema& schema = pop.data.schema();
  py::dict d;
  d["schema"] = schema_text(schema);
  d["complete"] = to_array(pop.data, schema);
  d["masked"] = to_array(masked, schema);
  return d;
}

py::tuple run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  int code = 0;
  {
    py::gil_scoped_release release;
    code = run_command(args, out, err);
  }
  return py::make_tuple(code, out.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Mixed ordinal/nominal multiple imputation with focused clustering";
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<ChainError>(m, "ChainError", PyExc_RuntimeError);

  m.def("version", &version_string);
  m.def("pool", &pool, py::arg("q"), py::arg("u"), py::arg("level") = 0.95,
        "Rubin's rules for one estimand over m imputations.");
  m.def("impute", &impute, py::arg("schema"), py::arg("values"), py::arg("m") = 5, py::arg("burn_in") = 1000,
        py::arg("thin") = 100, py::arg("seed") = 0, py::arg("model") = "mmfc", py::arg("truncation") = py::none(),
        py::arg("config") = "",
        "Run one chain on `values` and return m completed arrays.");
  m.def("pool_cells", &pool_cells, py::arg("schema"), py::arg("datasets"), py::arg("focus_only") = false,
        py::arg("level") = 0.95, "Pooled marginal and bivariate cell probabilities.");
  m.def("simulate", &simulate, py::arg("scenario"), py::arg("seed"),
        "Synthetic population for a scenario such as 'high/few/small', before and after MCAR masking.");
  m.def("run_cli", &run_cli, py::arg("args"), "Run a command-line subcommand; returns (exit code, stdout, stderr).");
}
