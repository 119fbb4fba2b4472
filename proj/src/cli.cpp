#include "mmfc/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mmfc/error.hpp"
#include "mmfc/mi.hpp"
#include "mmfc/ppc.hpp"
#include "mmfc/simstudy.hpp"

namespace mmfc {

namespace fs = std::filesystem;
using nlohmann::json;

std::string version_string() { return "0.1.0"; }

namespace {

struct CommonFlags {
  std::string config;
  std::string data;
  std::vector<std::string> data_paths;
  std::string schema;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> m;
  std::optional<int> burn_in;
  std::optional<int> thin;
  std::optional<int> snapshots;
  int threads = 0;
  std::string model;
  std::string truncation;
  // simulate
  std::vector<std::string> scenarios;
  int reps = 10;
  // ppc
  int replicates = 25;
  std::vector<std::string> stats;
  double level = 0.95;
  std::string cells = "all";
};

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw ValidationError(std::string("missing required flag ") + flag);
}

void require_file(const std::string& path, const char* flag) {
  require(path, flag);
  if (!fs::exists(path)) throw ValidationError(std::string(flag) + " " + path + " does not exist");
}

std::uint64_t require_seed(const CommonFlags& f) {
  if (!f.seed) throw ValidationError("missing required flag --seed");
  return *f.seed;
}

Truncation parse_truncation(const std::string& text, Truncation t) {
  if (text.empty()) return t;
  std::vector<int> v;
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, ',');) {
    try {
      v.push_back(std::stoi(part));
    } catch (const std::exception&) {
      throw ValidationError("--truncation expects four integers N,N_ZA,N_XA,N_B");
    }
  }
  if (v.size() != 4) throw ValidationError("--truncation expects four integers N,N_ZA,N_XA,N_B");
  return {v[0], v[1], v[2], v[3]};
}

struct Resolved {
  Schema schema;
  json config_json = json::object();
  ModelKind kind = ModelKind::mmfc;
  ModelConfig config;
  ChainOptions chain;
};

Resolved resolve(const CommonFlags& f, bool need_seed) {
  Resolved r;
  require_file(f.schema, "--schema");
  r.schema = load_schema(f.schema);
  if (!f.config.empty()) r.config_json = read_json(f.config);
  if (!f.model.empty()) {
    r.kind = parse_model_kind(f.model);
  } else if (r.config_json.contains("model")) {
    r.kind = parse_model_kind(r.config_json.at("model").get<std::string>());
  }
  r.config = config_from_json(r.config_json, r.schema, r.kind);
  r.config.truncation = parse_truncation(f.truncation, r.config.truncation);
  const json chain = r.config_json.value("chain", json::object());
  r.chain.burn_in = f.burn_in.value_or(chain.value("burn_in", 1000));
  r.chain.thin = f.thin.value_or(chain.value("thin", 100));
  r.chain.m = f.m.value_or(chain.value("m", 5));
  r.chain.snapshots = f.snapshots.value_or(chain.value("snapshots", 0));
  r.chain.trace = true;
  if (need_seed) r.chain.seed = require_seed(f);
  validate(r.chain);
  return r;
}

json chain_json(const ChainOptions& c) {
  return {{"burn_in", c.burn_in}, {"thin", c.thin}, {"m", c.m}, {"snapshots", c.snapshots}, {"seed", c.seed}};
}

void write_manifest(const fs::path& dir, const std::string& command, const std::vector<std::string>& args,
                    json extra) {
  json manifest = {{"command", command}, {"args", args}, {"version", version_string()}};
  for (auto& [k, v] : extra.items()) manifest[k] = v;
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
}

int cmd_impute(const CommonFlags& f, const std::vector<std::string>& args, std::ostream& out) {
  Resolved r = resolve(f, true);
  require_file(f.data, "--data");
  require(f.out, "--out");
  const Dataset data = load_dataset(f.data, r.schema);
  const Model model(r.schema, r.config);
  const ChainRecord record = run_chain(model, data, r.chain);
  const fs::path dir(f.out);
  fs::create_directories(dir);
  for (std::size_t k = 0; k < record.completed.size(); ++k) {
    write_dataset(dir / ("imp_" + std::to_string(k + 1) + ".csv"), record.completed[k]);
  }
  std::ofstream(dir / "diagnostics.json") << chain_diagnostics_json(record).dump(2) << '\n';
  write_manifest(dir, "impute", args,
                 {{"seed", r.chain.seed},
                  {"schema", r.schema},
                  {"config", config_to_json(r.config, r.schema)},
                  {"chain", chain_json(r.chain)},
                  {"data", f.data}});
  for (const auto& w : record.warnings) out << "warning: " << w << '\n';
  out << "wrote " << record.completed.size() << " completed datasets to " << dir.string() << '\n';
  return kExitOk;
}

std::vector<fs::path> imputation_files(const std::vector<std::string>& paths) {
  std::vector<fs::path> files;
  if (paths.size() == 1 && fs::is_directory(paths[0])) {
    for (int k = 1;; ++k) {
      const fs::path p = fs::path(paths[0]) / ("imp_" + std::to_string(k) + ".csv");
      if (!fs::exists(p)) break;
      files.push_back(p);
    }
    if (files.empty()) throw ValidationError("no imp_<k>.csv files in " + paths[0]);
    return files;
  }
  for (const auto& p : paths) {
    if (!fs::exists(p)) throw ValidationError("--data " + p + " does not exist");
    files.emplace_back(p);
  }
  return files;
}

int cmd_pool(const CommonFlags& f, const std::vector<std::string>& args, std::ostream& out) {
  require_file(f.schema, "--schema");
  require(f.out, "--out");
  if (f.data_paths.empty()) throw ValidationError("missing required flag --data");
  const Schema schema = load_schema(f.schema);
  std::vector<CompletedDataset> completed;
  for (const auto& p : imputation_files(f.data_paths)) {
    completed.push_back(load_dataset(p, schema));
    if (!completed.back().complete()) throw ValidationError(p.string() + " has missing cells");
  }
  const Schema& canon = completed.front().schema();
  std::vector<std::size_t> columns;
  if (f.cells == "focus") {
    for (std::size_t j = 0; j < canon.size(); ++j) {
      if (canon[j].group == VariableGroup::focus) columns.push_back(j);
    }
  } else if (f.cells != "all") {
    throw ValidationError("--cells must be all or focus");
  }
  const auto cells = marginal_and_bivariate_cells(canon, columns);
  const auto est = cell_estimates(completed, cells);
  const fs::path dir(f.out);
  fs::create_directories(dir);
  std::ofstream csv(dir / "pooled.csv");
  write_pooled_csv(csv, est, cells, canon, f.level);
  std::vector<std::string> files;
  for (const auto& p : imputation_files(f.data_paths)) files.push_back(p.string());
  write_manifest(dir, "pool", args, {{"inputs", files}, {"cells", f.cells}, {"level", f.level}, {"schema", schema}});
  out << "pooled " << cells.size() << " cells over " << completed.size() << " imputations\n";
  return kExitOk;
}

int cmd_simulate(const CommonFlags& f, const std::vector<std::string>& args, std::ostream& out) {
  require(f.out, "--out");
  StudyOptions o;
  o.seed = require_seed(f);
  const auto names = f.scenarios.empty() ? std::vector<std::string>{"high/few/small"} : f.scenarios;
  for (const auto& s : names) {
    if (s == "all") {
      for (const auto& sc : factorial_scenarios()) o.scenarios.push_back(sc);
    } else {
      o.scenarios.push_back(parse_scenario(s));
    }
  }
  if (!f.model.empty()) o.models = {parse_model_kind(f.model)};
  o.reps = f.reps;
  o.m = f.m.value_or(o.m);
  o.burn_in = f.burn_in.value_or(o.burn_in);
  o.thin = f.thin.value_or(o.thin);
  o.threads = f.threads;
  o.truncation = parse_truncation(f.truncation, o.truncation);
  o.resume_dir = fs::path(f.out);
  const StudyReport report = run_factorial(o);
  write_study_report(f.out, report);
  write_manifest(f.out, "simulate", args, {{"seed", o.seed}, {"study", study_options_json(o)}});
  int failed = 0;
  for (const auto& r : report.runs) failed += r.ok ? 0 : 1;
  out << "completed " << report.runs.size() - static_cast<std::size_t>(failed) << " of " << report.runs.size()
      << " runs\n";
  return kExitOk;
}

int cmd_ppc(const CommonFlags& f, const std::vector<std::string>& args, std::ostream& out) {
  Resolved r = resolve(f, true);
  require_file(f.data, "--data");
  require(f.out, "--out");
  if (f.replicates < 1) throw ValidationError("--replicates must be positive");
  r.chain.snapshots = std::max(r.chain.snapshots, f.replicates);
  const Dataset data = load_dataset(f.data, r.schema);
  const Model model(r.schema, r.config);
  std::vector<PpcStatistic> stats;
  for (const auto& s : f.stats) stats.push_back(parse_statistic(s, data.schema()));
  if (stats.empty()) stats = default_statistics(data.schema());
  const ChainRecord record = run_chain(model, data, r.chain);
  Rng rng = Rng(r.chain.seed).substream("ppc");
  const auto replicated = replicate_datasets(model, record, data.n(), f.replicates, rng);
  const PpcReport report = ppc_statistics(replicated, record.completed, stats);
  const fs::path dir(f.out);
  fs::create_directories(dir);
  std::ofstream(dir / "ppc.json") << ppc_report_json(report).dump(2) << '\n';
  std::ofstream matrix(dir / "ppc_replicates.csv");
  write_replicate_matrix(matrix, report);
  std::ofstream(dir / "imputed_vs_observed.json") << comparison_json(imputed_vs_observed(data, record.completed)).dump(2)
                                                  << '\n';
  write_manifest(dir, "ppc", args,
                 {{"seed", r.chain.seed},
                  {"schema", r.schema},
                  {"config", config_to_json(r.config, r.schema)},
                  {"chain", chain_json(r.chain)},
                  {"replicates", f.replicates},
                  {"data", f.data}});
  out << "ppc: " << report.entries.size() << " statistics, extreme tail fraction "
      << extreme_tail_fraction(report) << '\n';
  return kExitOk;
}

int cmd_validate(const CommonFlags& f, std::ostream& out) {
  json report;
  Resolved r = resolve(f, false);
  const Model model(r.schema, r.config);
  report["schema"] = "ok";
  report["config"] = "ok";
  report["model"] = to_string(r.kind);
  report["variables"] = model.p();
  report["ordinal_focus"] = model.p_ordinal();
  report["design_columns"] = model.d();
  report["resolved_config"] = config_to_json(r.config, r.schema);
  if (!f.data.empty()) {
    require_file(f.data, "--data");
    const Dataset data = load_dataset(f.data, r.schema);
    report["data"] = {{"rows", data.n()}, {"missing_cells", data.missing_count()}};
  }
  const std::string text = report.dump(2);
  out << text << '\n';
  if (!f.out.empty()) {
    fs::create_directories(f.out);
    std::ofstream(fs::path(f.out) / "validation.json") << text << '\n';
  }
  return kExitOk;
}

void error_line(std::ostream& err, const char* kind, const std::string& message) {
  err << json{{"error", kind}, {"message", message}}.dump() << '\n';
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multiple imputation for mixed ordinal and nominal data", "mmfc"};
  app.require_subcommand(1);
  app.set_version_flag("--version", version_string());
  CommonFlags f;

  auto model_flags = [&](CLI::App* c) {
    c->add_option("--schema", f.schema, "variable schema JSON");
    c->add_option("--config", f.config, "model configuration JSON");
    c->add_option("--model", f.model, "mmfc or mmmix");
    c->add_option("--truncation", f.truncation, "N,N_ZA,N_XA,N_B");
  };
  auto chain_flags = [&](CLI::App* c) {
    c->add_option("--seed", f.seed, "64-bit seed (required)");
    c->add_option("--m", f.m, "completed datasets");
    c->add_option("--burn-in", f.burn_in, "burn-in sweeps");
    c->add_option("--thin", f.thin, "sweeps between saved datasets");
    c->add_option("--threads", f.threads, "worker cap");
  };

  auto* impute = app.add_subcommand("impute", "run the sampler and write completed datasets");
  model_flags(impute);
  chain_flags(impute);
  impute->add_option("--data", f.data, "CSV with NA for missing cells");
  impute->add_option("--out", f.out, "output directory");
  impute->add_option("--snapshots", f.snapshots, "parameter draws to keep");

  auto* pool = app.add_subcommand("pool", "pool cell proportions over completed datasets");
  pool->add_option("--schema", f.schema, "variable schema JSON");
  pool->add_option("--data", f.data_paths, "imputation directory or completed CSV files");
  pool->add_option("--out", f.out, "output directory");
  pool->add_option("--cells", f.cells, "all or focus");
  pool->add_option("--level", f.level, "interval level");

  auto* simulate = app.add_subcommand("simulate", "run the simulation study");
  chain_flags(simulate);
  simulate->add_option("--scenario", f.scenarios, "e.g. high/few/small, or all");
  simulate->add_option("--reps", f.reps, "replicates per scenario");
  simulate->add_option("--model", f.model, "restrict to mmfc or mmmix");
  simulate->add_option("--truncation", f.truncation, "N,N_ZA,N_XA,N_B");
  simulate->add_option("--out", f.out, "output directory (resumable)");

  auto* ppc = app.add_subcommand("ppc", "posterior predictive checks");
  model_flags(ppc);
  chain_flags(ppc);
  ppc->add_option("--data", f.data, "CSV with NA for missing cells");
  ppc->add_option("--out", f.out, "output directory");
  ppc->add_option("--replicates", f.replicates, "replicated datasets");
  ppc->add_option("--stat", f.stats, "statistic such as Y1=2|X1=1");

  auto* validate_cmd = app.add_subcommand("validate", "check a schema, config and optional data file");
  model_flags(validate_cmd);
  validate_cmd->add_option("--data", f.data, "CSV to check against the schema");
  validate_cmd->add_option("--out", f.out, "write validation.json here");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << version_string() << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    error_line(err, "validation", e.what());
    return kExitValidation;
  }

  try {
    if (impute->parsed()) return cmd_impute(f, args, out);
    if (pool->parsed()) return cmd_pool(f, args, out);
    if (simulate->parsed()) return cmd_simulate(f, args, out);
    if (ppc->parsed()) return cmd_ppc(f, args, out);
    return cmd_validate(f, out);
  } catch (const ValidationError& e) {
    error_line(err, "validation", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    error_line(err, "runtime", e.what());
    return kExitRuntime;
  }
}

}  // namespace mmfc
