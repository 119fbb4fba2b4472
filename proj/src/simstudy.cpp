#include "mmfc/simstudy.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "embedded_generators.hpp"
#include "mmfc/error.hpp"

namespace mmfc {

namespace fs = std::filesystem;
using nlohmann::json;

Schema Generator::schema() const {
  Schema s;
  for (const auto& v : variables) s.push_back(v.schema);
  return s;
}

Generator generator_from_json(const json& j) {
  Generator g;
  g.name = j.at("name").get<std::string>();
  g.version = j.at("version").get<int>();
  g.factors = j.value("factors", 2);
  g.truth_draws = j.value("truth_draws", std::size_t{1000000});
  g.truth_seed = j.value("truth_seed", std::uint64_t{0});
  if (g.factors < 1) throw ValidationError("generator '" + g.name + "': factors must be positive");
  std::map<std::string, std::size_t> index;
  for (const auto& jv : j.at("variables")) {
    GeneratorVariable v;
    v.schema = jv.get<VariableSchema>();
    const std::string link = jv.at("link").get<std::string>();
    const auto where = "generator variable '" + v.schema.name + "'";
    if (link == "multinomial_logit") {
      v.intercepts = jv.at("intercepts").get<std::vector<double>>();
      v.loadings = jv.at("loadings").get<std::vector<std::vector<double>>>();
      if (v.intercepts.size() != static_cast<std::size_t>(v.schema.levels) || v.loadings.size() != v.intercepts.size()) {
        throw ValidationError(where + ": need one intercept and one loading row per level");
      }
      for (const auto& row : v.loadings) {
        if (row.size() != static_cast<std::size_t>(g.factors)) throw ValidationError(where + ": loading row length");
      }
    } else if (link == "ordered_logit") {
      v.cutpoints = jv.at("cutpoints").get<std::vector<double>>();
      if (v.cutpoints.size() + 1 != static_cast<std::size_t>(v.schema.levels) ||
          !std::is_sorted(v.cutpoints.begin(), v.cutpoints.end())) {
        throw ValidationError(where + ": need levels - 1 increasing cutpoints");
      }
      for (const auto& jt : jv.value("terms", json::array())) {
        GeneratorTerm t;
        t.coef = jt.at("coef").get<double>();
        if (jt.contains("factor") && !jt.at("factor").is_null()) t.factor = jt.at("factor").get<int>();
        if (t.factor >= g.factors) throw ValidationError(where + ": factor index out of range");
        for (const auto& ind : jt.value("indicators", json::array())) {
          const auto name = ind.at(0).get<std::string>();
          const int level = ind.at(1).get<int>();
          const auto it = index.find(name);
          if (it == index.end()) throw ValidationError(where + ": term refers to '" + name + "' before it is generated");
          if (level < 1 || level > g.variables[it->second].schema.levels) throw ValidationError(where + ": indicator level out of range");
          t.indicators.emplace_back(it->second, level);
        }
        v.terms.push_back(std::move(t));
      }
    } else {
      throw ValidationError(where + ": unknown link '" + link + "'");
    }
    if ((link == "ordered_logit") != (v.schema.kind == VariableKind::ordinal)) {
      throw ValidationError(where + ": ordinal variables use ordered_logit, nominal ones multinomial_logit");
    }
    index[v.schema.name] = g.variables.size();
    g.variables.push_back(std::move(v));
  }
  validate_schema(g.schema());
  return g;
}

json generator_to_json(const Generator& g) {
  json vars = json::array();
  for (const auto& v : g.variables) {
    json jv = v.schema;
    if (v.schema.kind == VariableKind::nominal) {
      jv["link"] = "multinomial_logit";
      jv["intercepts"] = v.intercepts;
      jv["loadings"] = v.loadings;
    } else {
      jv["link"] = "ordered_logit";
      jv["cutpoints"] = v.cutpoints;
      json terms = json::array();
      for (const auto& t : v.terms) {
        json jt{{"coef", t.coef}};
        if (!t.indicators.empty()) {
          json ind = json::array();
          for (const auto& [idx, level] : t.indicators) ind.push_back({g.variables[idx].schema.name, level});
          jt["indicators"] = ind;
        }
        if (t.factor >= 0) jt["factor"] = t.factor;
        terms.push_back(jt);
      }
      jv["terms"] = terms;
    }
    vars.push_back(jv);
  }
  return {{"name", g.name}, {"version", g.version}, {"factors", g.factors},
          {"truth_draws", g.truth_draws}, {"truth_seed", g.truth_seed}, {"variables", vars}};
}

Generator load_generator(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open generator file " + path.string());
  try {
    return generator_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw ValidationError("generator file " + path.string() + ": " + e.what());
  }
}

Generator builtin_generator(const std::string& name) {
  for (const auto& [key, text] : embedded_generators()) {
    if (key == name) return generator_from_json(json::parse(text));
  }
  throw ValidationError("no built-in generator named '" + name + "'");
}

Generator without_interactions(Generator g) {
  for (auto& v : g.variables) {
    for (auto& t : v.terms) {
      const std::size_t parts = t.indicators.size() + (t.factor >= 0 ? 1 : 0);
      if (parts >= 2) t.coef = 0.0;
    }
  }
  return g;
}

namespace {

/// Generator-order index to canonical column index.
std::vector<std::size_t> canonical_positions(const Schema& gen_schema) {
  const Schema canon = canonical_schema(gen_schema);
  std::vector<std::size_t> pos(gen_schema.size());
  for (std::size_t j = 0; j < gen_schema.size(); ++j) {
    for (std::size_t c = 0; c < canon.size(); ++c) {
      if (canon[c].name == gen_schema[j].name) pos[j] = c;
    }
  }
  return pos;
}

/// Draws one unit in generator order.
void draw_unit(const Generator& g, Rng& rng, std::vector<double>& factors, std::vector<double>& scratch,
               std::span<int> out) {
  for (auto& f : factors) f = rng.normal();
  for (std::size_t j = 0; j < g.variables.size(); ++j) {
    const auto& v = g.variables[j];
    if (v.schema.kind == VariableKind::nominal) {
      scratch.resize(v.intercepts.size());
      for (std::size_t c = 0; c < v.intercepts.size(); ++c) {
        double eta = v.intercepts[c];
        for (std::size_t f = 0; f < factors.size(); ++f) eta += v.loadings[c][f] * factors[f];
        scratch[c] = eta;
      }
      out[j] = 1 + static_cast<int>(rng.categorical_log(scratch));
    } else {
      double eta = 0.0;
      for (const auto& t : v.terms) {
        bool on = true;
        for (const auto& [idx, level] : t.indicators) on = on && out[idx] == level;
        if (!on) continue;
        eta += t.coef * (t.factor >= 0 ? factors[static_cast<std::size_t>(t.factor)] : 1.0);
      }
      const double u = rng.uniform();
      const double latent = eta + std::log(u / (1.0 - u));
      int code = 1;
      for (double c : v.cutpoints) code += latent > c ? 1 : 0;
      out[j] = code;
    }
  }
}

}  // namespace

Dataset generate_dataset(const Generator& g, std::size_t n, Rng& rng) {
  const Schema schema = g.schema();
  const std::size_t p = schema.size();
  std::vector<int> values(n * p);
  std::vector<double> factors(static_cast<std::size_t>(g.factors));
  std::vector<double> scratch;
  for (std::size_t i = 0; i < n; ++i) {
    draw_unit(g, rng, factors, scratch, std::span<int>(values.data() + i * p, p));
  }
  return Dataset(schema, std::move(values), n);
}

Scenario parse_scenario(const std::string& name) {
  std::vector<std::string> parts;
  std::stringstream ss(name);
  for (std::string part; std::getline(ss, part, '/');) parts.push_back(part);
  if (parts.size() != 3) throw ValidationError("scenario '" + name + "': expected rate/focus/size");
  Scenario s;
  s.name = name;
  if (parts[0] == "high") {
    s.missing_rate_a = 0.30;
  } else if (parts[0] == "low") {
    s.missing_rate_a = 0.05;
  } else {
    throw ValidationError("scenario '" + name + "': missing rate must be high or low");
  }
  if (parts[1] == "few") {
    s.focus = FocusSize::few;
  } else if (parts[1] == "more") {
    s.focus = FocusSize::more;
  } else {
    throw ValidationError("scenario '" + name + "': focus size must be few or more");
  }
  if (parts[2] == "small") {
    s.n = 500;
  } else if (parts[2] == "large") {
    s.n = 3000;
  } else {
    throw ValidationError("scenario '" + name + "': sample size must be small or large");
  }
  return s;
}

std::vector<Scenario> factorial_scenarios() {
  std::vector<Scenario> out;
  for (const char* rate : {"high", "low"}) {
    for (const char* focus : {"few", "more"}) {
      for (const char* size : {"small", "large"}) {
        out.push_back(parse_scenario(std::string(rate) + "/" + focus + "/" + size));
      }
    }
  }
  return out;
}

std::string generator_name(FocusSize focus) { return focus == FocusSize::few ? "few" : "more"; }

TruthTable compute_truth(const Generator& g, std::size_t draws, std::uint64_t seed) {
  if (draws == 0) throw ValidationError("truth table needs at least one draw");
  const Schema gen_schema = g.schema();
  const auto pos = canonical_positions(gen_schema);
  TruthTable truth;
  truth.generator = g.name;
  truth.generator_version = g.version;
  truth.draws = draws;
  truth.seed = seed;
  truth.schema = canonical_schema(gen_schema);
  const std::size_t p = truth.schema.size();

  std::vector<std::size_t> a_cols;
  std::vector<std::size_t> b_cols;
  std::vector<std::size_t> all_cols;
  std::vector<int> a_levels;
  std::vector<int> b_levels;
  std::vector<int> all_levels;
  for (std::size_t j = 0; j < p; ++j) {
    const bool focus = truth.schema[j].group == VariableGroup::focus;
    (focus ? a_cols : b_cols).push_back(j);
    (focus ? a_levels : b_levels).push_back(truth.schema[j].levels);
    all_cols.push_back(j);
    all_levels.push_back(truth.schema[j].levels);
  }
  truth.joint_a = CellTable(a_cols, a_levels);
  truth.joint_b = CellTable(b_cols, b_levels);
  truth.joint_ab = CellTable(all_cols, all_levels);

  // marginal and pairwise counts, indexed by canonical column
  std::vector<std::vector<std::uint64_t>> marg(p);
  std::vector<std::vector<std::uint64_t>> pair(p * p);
  for (std::size_t a = 0; a < p; ++a) {
    marg[a].assign(static_cast<std::size_t>(truth.schema[a].levels), 0);
    for (std::size_t b = a + 1; b < p; ++b) {
      pair[a * p + b].assign(static_cast<std::size_t>(truth.schema[a].levels * truth.schema[b].levels), 0);
    }
  }
  std::unordered_map<std::uint64_t, std::uint64_t> count_a;
  std::unordered_map<std::uint64_t, std::uint64_t> count_b;
  std::unordered_map<std::uint64_t, std::uint64_t> count_ab;

  Rng rng(seed);
  std::vector<double> factors(static_cast<std::size_t>(g.factors));
  std::vector<double> scratch;
  std::vector<int> unit(p);
  std::vector<int> row(p);
  for (std::size_t t = 0; t < draws; ++t) {
    draw_unit(g, rng, factors, scratch, unit);
    for (std::size_t j = 0; j < p; ++j) row[pos[j]] = unit[j];
    for (std::size_t a = 0; a < p; ++a) {
      ++marg[a][static_cast<std::size_t>(row[a] - 1)];
      for (std::size_t b = a + 1; b < p; ++b) {
        ++pair[a * p + b][static_cast<std::size_t>((row[a] - 1) * truth.schema[b].levels + row[b] - 1)];
      }
    }
    ++count_a[truth.joint_a.key_from_row(row)];
    ++count_b[truth.joint_b.key_from_row(row)];
    ++count_ab[truth.joint_ab.key_from_row(row)];
  }

  const double n = static_cast<double>(draws);
  truth.cells = marginal_and_bivariate_cells(truth.schema);
  for (const auto& cell : truth.cells) {
    std::uint64_t c = 0;
    if (cell.columns.size() == 1) {
      c = marg[cell.columns[0]][static_cast<std::size_t>(cell.levels[0] - 1)];
    } else {
      const std::size_t a = cell.columns[0];
      const std::size_t b = cell.columns[1];
      c = pair[a * p + b][static_cast<std::size_t>((cell.levels[0] - 1) * truth.schema[b].levels + cell.levels[1] - 1)];
    }
    const double q = static_cast<double>(c) / n;
    truth.prob.push_back(q);
    truth.std_error.push_back(std::sqrt(q * (1.0 - q) / n));
  }
  auto fill = [n](CellTable& table, const std::unordered_map<std::uint64_t, std::uint64_t>& counts) {
    for (const auto& [k, c] : counts) table.add(k, static_cast<double>(c) / n);
    table.finalize();
  };
  fill(truth.joint_a, count_a);
  fill(truth.joint_b, count_b);
  fill(truth.joint_ab, count_ab);
  return truth;
}

std::shared_ptr<const TruthTable> cached_truth(const Generator& g) {
  static std::mutex mutex;
  static std::map<std::pair<std::string, int>, std::shared_ptr<const TruthTable>> cache;
  const std::lock_guard lock(mutex);
  auto& slot = cache[{g.name, g.version}];
  if (!slot) slot = std::make_shared<const TruthTable>(compute_truth(g, g.truth_draws, g.truth_seed));
  return slot;
}

Population generate_population(const Scenario& scenario, Rng& rng) {
  const Generator g = builtin_generator(generator_name(scenario.focus));
  return {generate_dataset(g, scenario.n, rng), cached_truth(g)};
}

Dataset inject_mcar(const Dataset& data, const Scenario& scenario, Rng& rng) {
  for (double rate : {scenario.missing_rate_a, scenario.missing_rate_b}) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ValidationError("missing rates must lie in [0, 1)");
  }
  std::vector<int> values = data.values();
  const std::size_t p = data.p();
  for (std::size_t i = 0; i < data.n(); ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      const double rate = data.variable(j).group == VariableGroup::focus ? scenario.missing_rate_a
                                                                         : scenario.missing_rate_b;
      if (rng.uniform() < rate) values[i * p + j] = Dataset::kMissing;
    }
  }
  return data.with_values(std::move(values));
}

std::string estimand_class(const Cell& cell, const Schema& schema) {
  auto block = [&](std::size_t col) { return schema[col].group == VariableGroup::focus ? 'A' : 'B'; };
  auto kind = [&](std::size_t col) { return schema[col].kind == VariableKind::ordinal ? 'o' : 'n'; };
  if (cell.columns.size() == 1) return std::string(1, block(cell.columns[0]));
  if (cell.columns.size() != 2) throw ValidationError("estimand_class: only marginal and bivariate cells");
  std::size_t a = cell.columns[0];
  std::size_t b = cell.columns[1];
  if (block(a) == 'B' && block(b) == 'A') std::swap(a, b);
  std::string cls{block(a), block(b)};
  if (cls == "BB") return cls;
  char ka = kind(a);
  char kb = kind(b);
  if (cls == "AA" && ka == 'n' && kb == 'o') std::swap(ka, kb);
  return cls + "-" + ka + kb;
}

RunMetrics evaluate_run(const TruthTable& truth, const std::vector<MIEstimate>& pooled,
                        const std::vector<CompletedDataset>& completed, double threshold, double level) {
  if (pooled.size() != truth.cells.size()) throw ValidationError("evaluate_run: estimands do not match the truth table");
  if (completed.empty()) throw ValidationError("evaluate_run: no completed datasets");
  RunMetrics m;
  for (std::size_t c = 0; c < pooled.size(); ++c) {
    const auto [lo, hi] = mi_interval(pooled[c], level);
    m.abs_error.push_back(std::abs(pooled[c].q_bar - truth.prob[c]));
    m.covered.push_back(lo <= truth.prob[c] && truth.prob[c] <= hi ? 1 : 0);
    m.width.push_back(hi - lo);
  }
  for (const auto& d : completed) {
    if (d.schema() != truth.schema) throw ValidationError("evaluate_run: completed data schema differs from truth");
    m.hellinger_a += hellinger(truth.joint_a, empirical_table(d, truth.joint_a.columns()), threshold);
    m.hellinger_b += hellinger(truth.joint_b, empirical_table(d, truth.joint_b.columns()), threshold);
    m.hellinger_ab += hellinger(truth.joint_ab, empirical_table(d, truth.joint_ab.columns()), threshold);
  }
  const double k = static_cast<double>(completed.size());
  m.hellinger_a /= k;
  m.hellinger_b /= k;
  m.hellinger_ab /= k;
  return m;
}

json study_options_json(const StudyOptions& o) {
  json scenarios = json::array();
  for (const auto& s : o.scenarios) scenarios.push_back(s.name);
  json models = json::array();
  for (auto k : o.models) models.push_back(to_string(k));
  return {{"scenarios", scenarios},
          {"models", models},
          {"reps", o.reps},
          {"m", o.m},
          {"burn_in", o.burn_in},
          {"thin", o.thin},
          {"seed", o.seed},
          {"truncation",
           {{"N", o.truncation.top}, {"N_ZA", o.truncation.za}, {"N_XA", o.truncation.xa}, {"N_B", o.truncation.b}}}};
}

json run_result_json(const RunResult& r) {
  return {{"scenario", r.scenario},
          {"rep", r.rep},
          {"model", to_string(r.model)},
          {"ok", r.ok},
          {"error", r.error},
          {"missing_fraction_a", r.missing_fraction_a},
          {"missing_fraction_b", r.missing_fraction_b},
          {"complete_case_fraction", r.complete_case_fraction},
          {"warnings", r.warnings},
          {"abs_error", r.metrics.abs_error},
          {"covered", r.metrics.covered},
          {"width", r.metrics.width},
          {"hellinger_a", r.metrics.hellinger_a},
          {"hellinger_b", r.metrics.hellinger_b},
          {"hellinger_ab", r.metrics.hellinger_ab}};
}

RunResult run_result_from_json(const json& j) {
  RunResult r;
  r.scenario = j.at("scenario").get<std::string>();
  r.rep = j.at("rep").get<int>();
  r.model = parse_model_kind(j.at("model").get<std::string>());
  r.ok = j.at("ok").get<bool>();
  r.error = j.at("error").get<std::string>();
  r.missing_fraction_a = j.at("missing_fraction_a").get<double>();
  r.missing_fraction_b = j.at("missing_fraction_b").get<double>();
  r.complete_case_fraction = j.at("complete_case_fraction").get<double>();
  r.warnings = j.at("warnings").get<std::vector<std::string>>();
  r.metrics.abs_error = j.at("abs_error").get<std::vector<double>>();
  r.metrics.covered = j.at("covered").get<std::vector<int>>();
  r.metrics.width = j.at("width").get<std::vector<double>>();
  r.metrics.hellinger_a = j.at("hellinger_a").get<double>();
  r.metrics.hellinger_b = j.at("hellinger_b").get<double>();
  r.metrics.hellinger_ab = j.at("hellinger_ab").get<double>();
  return r;
}

namespace {

std::string slug(const std::string& s) {
  std::string out = s;
  std::replace(out.begin(), out.end(), '/', '-');
  return out;
}

RunResult run_one(const StudyOptions& options, const Scenario& scenario, int rep, ModelKind kind) {
  RunResult r;
  r.scenario = scenario.name;
  r.rep = rep;
  r.model = kind;
  const auto urep = static_cast<std::uint64_t>(rep);
  const Rng root(options.seed);
  try {
    Rng data_rng = root.substream("data/" + scenario.name, {urep});
    const Population pop = generate_population(scenario, data_rng);
    Rng mask_rng = root.substream("mask/" + scenario.name, {urep});
    const Dataset masked = inject_mcar(pop.data, scenario, mask_rng);

    std::size_t miss_a = 0;
    std::size_t miss_b = 0;
    std::size_t cells_a = 0;
    std::size_t complete_rows = 0;
    for (std::size_t i = 0; i < masked.n(); ++i) {
      bool complete = true;
      for (std::size_t j = 0; j < masked.p(); ++j) {
        const bool focus = masked.variable(j).group == VariableGroup::focus;
        cells_a += focus ? 1 : 0;
        if (masked.missing(i, j)) {
          (focus ? miss_a : miss_b) += 1;
          complete = false;
        }
      }
      complete_rows += complete ? 1 : 0;
    }
    const double cells_b = static_cast<double>(masked.n() * masked.p() - cells_a);
    r.missing_fraction_a = cells_a ? static_cast<double>(miss_a) / static_cast<double>(cells_a) : 0.0;
    r.missing_fraction_b = cells_b > 0 ? static_cast<double>(miss_b) / cells_b : 0.0;
    r.complete_case_fraction = static_cast<double>(complete_rows) / static_cast<double>(masked.n());

    ModelConfig config = default_config(masked.schema(), kind);
    config.truncation = options.truncation;
    const Model model(masked.schema(), config);
    Rng chain_rng = root.substream("chain/" + scenario.name, {urep, static_cast<std::uint64_t>(kind)});
    ChainOptions chain;
    chain.burn_in = options.burn_in;
    chain.thin = options.thin;
    chain.m = options.m;
    chain.seed = chain_rng.engine()();
    chain.trace = false;
    const ChainRecord record = run_chain(model, masked, chain);
    r.warnings = record.warnings;
    const auto pooled = cell_estimates(record.completed, pop.truth->cells);
    r.metrics = evaluate_run(*pop.truth, pooled, record.completed);
    r.ok = true;
  } catch (const std::exception& e) {
    r.ok = false;
    r.error = e.what();
  }
  return r;
}

ScenarioSummary summarize(const std::vector<RunResult>& runs, const Scenario& scenario, ModelKind kind,
                          const TruthTable& truth) {
  ScenarioSummary s;
  s.scenario = scenario.name;
  s.model = kind;
  const std::size_t cells = truth.cells.size();
  s.estimand_abs_error.assign(cells, 0.0);
  s.estimand_coverage.assign(cells, 0.0);
  for (const auto& r : runs) {
    if (r.scenario != scenario.name || r.model != kind) continue;
    if (!r.ok) {
      ++s.runs_failed;
      continue;
    }
    ++s.runs_ok;
    for (std::size_t c = 0; c < cells; ++c) {
      s.estimand_abs_error[c] += r.metrics.abs_error[c];
      s.estimand_coverage[c] += r.metrics.covered[c];
    }
    s.hellinger_a += r.metrics.hellinger_a;
    s.hellinger_b += r.metrics.hellinger_b;
    s.hellinger_ab += r.metrics.hellinger_ab;
  }
  if (s.runs_ok == 0) return s;
  const double k = s.runs_ok;
  for (std::size_t c = 0; c < cells; ++c) {
    s.estimand_abs_error[c] /= k;
    s.estimand_coverage[c] /= k;
  }
  s.hellinger_a /= k;
  s.hellinger_b /= k;
  s.hellinger_ab /= k;

  std::vector<double> width(cells, 0.0);
  for (const auto& r : runs) {
    if (r.scenario != scenario.name || r.model != kind || !r.ok) continue;
    for (std::size_t c = 0; c < cells; ++c) width[c] += r.metrics.width[c] / k;
  }
  for (const char* cls : {"A", "B", "AA-oo", "AA-on", "AA-nn", "AB-oo", "AB-on", "AB-no", "AB-nn", "BB"}) {
    ClassSummary cs;
    cs.estimand_class = cls;
    for (std::size_t c = 0; c < cells; ++c) {
      if (estimand_class(truth.cells[c], truth.schema) != cls) continue;
      ++cs.estimands;
      cs.mean_abs_error += s.estimand_abs_error[c];
      cs.coverage += s.estimand_coverage[c];
      cs.mean_width += width[c];
    }
    if (cs.estimands == 0) continue;
    const double e = static_cast<double>(cs.estimands);
    cs.mean_abs_error /= e;
    cs.coverage /= e;
    cs.mean_width /= e;
    s.classes.push_back(cs);
  }
  return s;
}

}  // namespace

StudyReport run_factorial(const StudyOptions& options) {
  if (options.scenarios.empty()) throw ValidationError("study needs at least one scenario");
  if (options.models.empty()) throw ValidationError("study needs at least one model");
  if (options.reps < 1) throw ValidationError("reps must be at least 1");
  if (options.m < 2) throw ValidationError("pooling needs m >= 2");
  ChainOptions probe;
  probe.burn_in = options.burn_in;
  probe.thin = options.thin;
  probe.m = options.m;
  validate(probe);

  // Build truth tables up front so workers only read them.
  std::map<std::string, std::shared_ptr<const TruthTable>> truths;
  for (const auto& s : options.scenarios) {
    const auto name = generator_name(s.focus);
    if (!truths.count(name)) truths[name] = cached_truth(builtin_generator(name));
  }

  struct Task {
    std::size_t scenario;
    int rep;
    ModelKind model;
  };
  std::vector<Task> tasks;
  for (std::size_t s = 0; s < options.scenarios.size(); ++s) {
    for (int rep = 0; rep < options.reps; ++rep) {
      for (auto kind : options.models) tasks.push_back({s, rep, kind});
    }
  }

  std::vector<RunResult> results(tasks.size());
  std::vector<bool> done(tasks.size(), false);
  std::optional<fs::path> runs_dir;
  if (options.resume_dir) {
    const fs::path dir = *options.resume_dir;
    fs::create_directories(dir / "runs");
    runs_dir = dir / "runs";
    const json manifest = study_options_json(options);
    const fs::path manifest_path = dir / "manifest.json";
    if (fs::exists(manifest_path)) {
      std::ifstream in(manifest_path);
      if (json::parse(in) != manifest) {
        throw ValidationError("resume directory " + dir.string() + " belongs to a study with different options");
      }
    } else {
      std::ofstream(manifest_path) << manifest.dump(2) << '\n';
    }
  }
  auto run_path = [&](const Task& t) {
    return *runs_dir / (slug(options.scenarios[t.scenario].name) + "_rep" + std::to_string(t.rep) + "_" +
                        to_string(t.model) + ".json");
  };
  if (runs_dir) {
    for (std::size_t k = 0; k < tasks.size(); ++k) {
      const auto path = run_path(tasks[k]);
      if (!fs::exists(path)) continue;
      std::ifstream in(path);
      results[k] = run_result_from_json(json::parse(in));
      done[k] = true;
    }
  }

  std::atomic<std::size_t> next{0};
  std::mutex io_mutex;
  auto worker = [&] {
    for (std::size_t k = next++; k < tasks.size(); k = next++) {
      if (done[k]) continue;
      const auto& t = tasks[k];
      results[k] = run_one(options, options.scenarios[t.scenario], t.rep, t.model);
      if (runs_dir) {
        const std::lock_guard lock(io_mutex);
        const auto path = run_path(t);
        const auto tmp = fs::path(path.string() + ".tmp");
        std::ofstream(tmp) << run_result_json(results[k]).dump() << '\n';
        fs::rename(tmp, path);
      }
    }
  };
  unsigned threads = options.threads > 0 ? static_cast<unsigned>(options.threads)
                                         : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(tasks.size()));
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
  }

  StudyReport report;
  report.options = options;
  report.runs = std::move(results);
  for (const auto& s : options.scenarios) {
    const auto& truth = *truths.at(generator_name(s.focus));
    for (auto kind : options.models) report.summaries.push_back(summarize(report.runs, s, kind, truth));
  }
  return report;
}

const ScenarioSummary& find_summary(const StudyReport& report, const std::string& scenario, ModelKind model) {
  for (const auto& s : report.summaries) {
    if (s.scenario == scenario && s.model == model) return s;
  }
  throw ValidationError("no summary for " + scenario + " / " + to_string(model));
}

const ClassSummary& find_class(const ScenarioSummary& summary, const std::string& estimand_class) {
  for (const auto& c : summary.classes) {
    if (c.estimand_class == estimand_class) return c;
  }
  throw ValidationError("no estimand class " + estimand_class);
}

std::vector<std::pair<double, double>> paired_hellinger_a(const StudyReport& report, const std::string& scenario) {
  std::map<int, std::pair<const RunResult*, const RunResult*>> by_rep;
  for (const auto& r : report.runs) {
    if (r.scenario != scenario || !r.ok) continue;
    auto& slot = by_rep[r.rep];
    (r.model == ModelKind::mmfc ? slot.first : slot.second) = &r;
  }
  std::vector<std::pair<double, double>> out;
  for (const auto& [rep, pair] : by_rep) {
    if (pair.first && pair.second) out.emplace_back(pair.first->metrics.hellinger_a, pair.second->metrics.hellinger_a);
  }
  return out;
}

json study_report_json(const StudyReport& report) {
  json runs = json::array();
  for (const auto& r : report.runs) runs.push_back(run_result_json(r));
  json summaries = json::array();
  for (const auto& s : report.summaries) {
    json classes = json::array();
    for (const auto& c : s.classes) {
      classes.push_back({{"class", c.estimand_class},
                         {"estimands", c.estimands},
                         {"mean_abs_error", c.mean_abs_error},
                         {"coverage", c.coverage},
                         {"mean_width", c.mean_width}});
    }
    summaries.push_back({{"scenario", s.scenario},
                         {"model", to_string(s.model)},
                         {"runs_ok", s.runs_ok},
                         {"runs_failed", s.runs_failed},
                         {"classes", classes},
                         {"hellinger_a", s.hellinger_a},
                         {"hellinger_b", s.hellinger_b},
                         {"hellinger_ab", s.hellinger_ab}});
  }
  return {{"options", study_options_json(report.options)}, {"runs", runs}, {"summaries", summaries}};
}

void write_study_report(const fs::path& dir, const StudyReport& report) {
  fs::create_directories(dir);
  std::ofstream(dir / "report.json") << study_report_json(report).dump(2) << '\n';

  std::ofstream runs(dir / "runs.csv");
  runs.precision(17);
  runs << "scenario,rep,model,ok,hellinger_a,hellinger_b,hellinger_ab,missing_fraction_a,missing_fraction_b,"
          "complete_case_fraction\n";
  for (const auto& r : report.runs) {
    runs << r.scenario << ',' << r.rep << ',' << to_string(r.model) << ',' << (r.ok ? 1 : 0) << ','
         << r.metrics.hellinger_a << ',' << r.metrics.hellinger_b << ',' << r.metrics.hellinger_ab << ','
         << r.missing_fraction_a << ',' << r.missing_fraction_b << ',' << r.complete_case_fraction << '\n';
  }

  std::ofstream est(dir / "estimands.csv");
  est.precision(17);
  est << "scenario,model,cell,class,truth,mean_abs_error,coverage\n";
  std::map<std::string, std::shared_ptr<const TruthTable>> truths;
  for (const auto& s : report.options.scenarios) {
    const auto name = generator_name(s.focus);
    if (!truths.count(name)) truths[name] = cached_truth(builtin_generator(name));
    const auto& truth = *truths[name];
    for (auto kind : report.options.models) {
      const auto& sum = find_summary(report, s.name, kind);
      if (sum.runs_ok == 0) continue;
      for (std::size_t c = 0; c < truth.cells.size(); ++c) {
        est << s.name << ',' << to_string(kind) << ',' << cell_label(truth.cells[c], truth.schema) << ','
            << estimand_class(truth.cells[c], truth.schema) << ',' << truth.prob[c] << ','
            << sum.estimand_abs_error[c] << ',' << sum.estimand_coverage[c] << '\n';
      }
    }
  }
}

}  // namespace mmfc
