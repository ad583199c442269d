#include "dichogeo/config.hpp"

#include "dichogeo/csv.hpp"
#include "dichogeo/errors.hpp"
#include "dichogeo/random.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace dichogeo {

namespace {

constexpr std::pair<Task, const char*> kTasks[] = {
    {Task::simulate, "simulate"}, {Task::fit_linear, "fit-linear"}, {Task::fit_binomial, "fit-binomial"},
    {Task::info_curve, "info-curve"}, {Task::cld, "cld"},           {Task::predict, "predict"},
    {Task::sim_study, "sim-study"}};

}  // namespace

Task parse_task(const std::string& name) {
  for (const auto& [t, n] : kTasks)
    if (name == n) return t;
  throw ConfigError("unknown task '" + name +
                    "' (expected simulate, fit-linear, fit-binomial, info-curve, cld, predict or sim-study)");
}

const char* to_string(Task task) {
  for (const auto& [t, n] : kTasks)
    if (t == task) return n;
  return "?";
}

namespace {

/// A mapping node with its key path, for messages like "predict.n_samples".
class Section {
public:
  Section(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) throw ConfigError(where() + "must be a mapping");
  }

  bool present() const { return node_ && !node_.IsNull(); }
  bool has(const char* key) const { return node_ && node_.IsMap() && node_[key] && !node_[key].IsNull(); }

  void allow(std::initializer_list<const char*> keys) const {
    if (!node_ || !node_.IsMap()) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.Scalar();
      if (std::none_of(keys.begin(), keys.end(), [&key](const char* k) { return key == k; }))
        throw ConfigError("unknown key '" + name(key) + "'");
    }
  }

  Section section(const char* key) const { return {has(key) ? node_[key] : YAML::Node(), name(key)}; }
  YAML::Node raw(const char* key) const { return node_[key]; }

  std::optional<std::string> text(const char* key) const {
    if (!has(key)) return std::nullopt;
    const YAML::Node n = node_[key];
    if (!n.IsScalar()) throw ConfigError(name(key) + " must be a single value");
    return n.Scalar();
  }

  std::optional<double> number(const char* key) const {
    const auto t = text(key);
    if (!t) return std::nullopt;
    const auto v = parse_number(*t);
    if (!v) throw ConfigError(name(key) + " must be a finite number, found '" + *t + "'");
    return v;
  }

  std::optional<long long> integer(const char* key, long long lo, long long hi) const {
    const auto v = number(key);
    if (!v) return std::nullopt;
    if (*v != std::floor(*v) || *v < static_cast<double>(lo) || *v > static_cast<double>(hi))
      throw ConfigError(name(key) + " must be an integer in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return static_cast<long long>(*v);
  }

  std::optional<double> positive(const char* key) const {
    const auto v = number(key);
    if (v && !(*v > 0.0)) throw ConfigError(name(key) + " must be positive");
    return v;
  }

  std::optional<bool> flag(const char* key) const {
    const auto t = text(key);
    if (!t) return std::nullopt;
    if (*t == "true" || *t == "yes") return true;
    if (*t == "false" || *t == "no") return false;
    throw ConfigError(name(key) + " must be true or false");
  }

  std::optional<std::vector<double>> numbers(const char* key) const {
    if (!has(key)) return std::nullopt;
    const YAML::Node n = node_[key];
    if (!n.IsSequence()) throw ConfigError(name(key) + " must be a list of numbers");
    std::vector<double> out;
    for (const auto& e : n) {
      const auto v = e.IsScalar() ? parse_number(e.Scalar()) : std::nullopt;
      if (!v) throw ConfigError(name(key) + " must be a list of finite numbers");
      out.push_back(*v);
    }
    return out;
  }

  std::optional<std::vector<std::string>> texts(const char* key) const {
    if (!has(key)) return std::nullopt;
    const YAML::Node n = node_[key];
    if (!n.IsSequence()) throw ConfigError(name(key) + " must be a list");
    std::vector<std::string> out;
    for (const auto& e : n) {
      if (!e.IsScalar() || e.Scalar().empty()) throw ConfigError(name(key) + " must be a list of names");
      out.push_back(e.Scalar());
    }
    return out;
  }

  template <class E>
  std::optional<E> choice(const char* key, std::initializer_list<std::pair<const char*, E>> options) const {
    const auto t = text(key);
    if (!t) return std::nullopt;
    std::string expected;
    for (const auto& [label, value] : options) {
      if (*t == label) return value;
      expected += expected.empty() ? label : std::string(", ") + label;
    }
    throw ConfigError(name(key) + " must be one of " + expected + ", found '" + *t + "'");
  }

  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  const YAML::Node& node() const { return node_; }

private:
  std::string where() const { return path_.empty() ? "config " : path_ + " "; }
  YAML::Node node_;
  std::string path_;
};

template <class T, class U>
void set(T& target, const std::optional<U>& v) {
  if (v) target = static_cast<T>(*v);
}

constexpr long long kBig = 1LL << 40;

std::optional<GridKind> grid_choice(const Section& s, const char* key) {
  return s.choice<GridKind>(key, {{"unit225", GridKind::unit225}, {"extended450", GridKind::extended450}});
}

std::optional<LatentIntegrationSettings::Mode> integration_choice(const Section& s, const char* key) {
  using M = LatentIntegrationSettings::Mode;
  return s.choice<M>(key, {{"laplace", M::laplace}, {"laplace_is", M::laplace_is}, {"ep", M::ep}});
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

void parse_model(const Section& s, RunConfig& c) {
  s.allow({"outcome", "outcome_type", "log_outcome", "covariates", "splines"});
  set(c.schema.outcome, s.text("outcome"));
  if (c.schema.outcome.empty()) throw ConfigError("model.outcome must not be empty");
  if (auto t = s.choice<bool>("outcome_type", {{"continuous", false}, {"binary", true}})) c.schema.binary_outcome = *t;
  set(c.schema.log_outcome, s.flag("log_outcome"));
  if (c.schema.binary_outcome && c.schema.log_outcome)
    throw ConfigError("model.log_outcome applies to continuous outcomes only");
  set(c.schema.covariates, s.texts("covariates"));
  if (s.has("splines")) {
    const YAML::Node list = s.raw("splines");
    if (!list.IsSequence()) throw ConfigError("model.splines must be a list");
    int k = 0;
    for (const auto& item : list) {
      const Section sp(item, "model.splines[" + std::to_string(k++) + "]");
      sp.allow({"column", "knots"});
      SplineColumn col;
      const auto name = sp.text("column");
      if (!name || name->empty()) throw ConfigError(sp.name("column") + " is required");
      col.column = *name;
      set(col.spec.knots, sp.numbers("knots"));
      for (std::size_t h = 1; h < col.spec.knots.size(); ++h)
        if (!(col.spec.knots[h] > col.spec.knots[h - 1])) throw ConfigError(sp.name("knots") + " must be strictly ascending");
      c.schema.splines.push_back(col);
    }
  }
  std::set<std::string> names;
  for (const auto& n : c.schema.design_names())
    if (!names.insert(n).second) throw ConfigError("model covariate '" + n + "' appears twice");
  for (const char* fixed : {"loc_id", "x", "y"})
    if (names.count(fixed) || c.schema.outcome == fixed)
      throw ConfigError(std::string("model cannot use the '") + fixed + "' column as outcome or covariate");
  if (names.count(c.schema.outcome)) throw ConfigError("model outcome is also listed as a covariate");
}

void parse_threshold(const Section& s, RunConfig& c) {
  s.allow({"value", "column", "table", "sex_column", "age_column", "pregnant_column", "log"});
  ThresholdRule& r = c.threshold;
  const int rules = s.has("value") + s.has("column") + s.has("table");
  if (rules > 1) throw ConfigError("threshold: give exactly one of value, column or table");
  if (const auto v = s.number("value")) {
    r.kind = ThresholdRule::Kind::scalar;
    r.value = *v;
  }
  if (const auto col = s.text("column")) {
    if (col->empty()) throw ConfigError("threshold.column must not be empty");
    r.kind = ThresholdRule::Kind::column;
    r.column = *col;
  }
  if (const auto t = s.text("table")) {
    r.kind = ThresholdRule::Kind::table;
    if (*t == "builtin:severe_anaemia")
      r.table = severe_anaemia_table();
    else
      c.threshold_table = resolve(c.base_dir, *t);
  }
  for (auto [key, target] : {std::pair{"sex_column", &r.sex_column}, std::pair{"age_column", &r.age_column},
                             std::pair{"pregnant_column", &r.pregnant_column}}) {
    if (!s.has(key)) continue;
    if (r.kind != ThresholdRule::Kind::table) throw ConfigError(s.name(key) + " only applies to a threshold table");
    set(*target, s.text(key));
    if (target->empty()) throw ConfigError(s.name(key) + " must not be empty");
  }
  set(r.log, s.flag("log"));
  if (r.log && r.kind == ThresholdRule::Kind::none) throw ConfigError("threshold.log given without a threshold rule");
  if (r.log && r.kind == ThresholdRule::Kind::scalar && !(r.value > 0.0))
    throw ConfigError("threshold.value must be positive to take its log");
}

void parse_simulate(const Section& s, RunConfig& c) {
  s.allow({"grid", "n_per_location", "alpha", "sigma2", "tau2", "phi"});
  set(c.simulate.grid, grid_choice(s, "grid"));
  set(c.simulate.n_per_location, s.integer("n_per_location", 1, 1000));
  set(c.simulate.truth.alpha, s.number("alpha"));
  set(c.simulate.truth.sigma2, s.positive("sigma2"));
  set(c.simulate.truth.tau2, s.positive("tau2"));
  set(c.simulate.truth.phi, s.positive("phi"));
  c.simulate.truth.beta_gamma = Eigen::VectorXd(0);
}

void parse_linear(const Section& s, RunConfig& c) {
  s.allow({"max_iter", "gtol", "fixed_phi", "intervals"});
  set(c.linear.max_iter, s.integer("max_iter", 1, 100000));
  set(c.linear.gtol, s.positive("gtol"));
  if (auto v = s.positive("fixed_phi")) c.linear.fixed_phi = *v;
  set(c.linear.compute_obs_info, s.flag("intervals"));
}

void parse_binomial(const Section& s, RunConfig& c) {
  s.allow({"method", "integration", "is_samples", "max_iter", "gtol", "intervals", "mcml"});
  auto& b = c.binomial;
  set(b.method, s.choice<BinomialConfig::Method>("method", {{"ml", BinomialConfig::Method::ml},
                                                            {"mcml", BinomialConfig::Method::mcml}}));
  set(b.integration.mode, integration_choice(s, "integration"));
  set(b.integration.is_samples, s.integer("is_samples", 2, 10000000));
  set(b.options.max_iter, s.integer("max_iter", 1, 100000));
  set(b.options.gtol, s.positive("gtol"));
  set(b.options.compute_obs_info, s.flag("intervals"));
  const Section m = s.section("mcml");
  m.allow({"n_samples", "burn_in", "thin", "iterations"});
  set(b.mcml.n_samples, m.integer("n_samples", 1, 10000000));
  set(b.mcml.burn_in, m.integer("burn_in", 0, 10000000));
  set(b.mcml.thin, m.integer("thin", 1, 10000));
  set(b.mcml.iterations, m.integer("iterations", 1, 1000));
  if (m.present() && b.method != BinomialConfig::Method::mcml)
    throw ConfigError("binomial.mcml settings given but binomial.method is not mcml");
}

void parse_predict(const Section& s, RunConfig& c) {
  s.allow({"models", "grid", "n_samples", "exceedance", "tile_size", "profile", "profile_threshold"});
  auto& p = c.predict;
  using M = PredictConfig::Models;
  set(p.models, s.choice<M>("models", {{"binomial", M::binomial}, {"linear", M::linear}, {"both", M::both}}));
  if (const auto g = s.text("grid")) {
    if (*g == "unit225" || *g == "extended450")
      p.grid_kind = parse_grid_kind(*g);
    else
      p.grid = resolve(c.base_dir, *g);
  }
  set(p.settings.n_cond_samples, s.integer("n_samples", 1, 10000000));
  if (const auto t = s.number("exceedance")) {
    if (!(*t > 0.0 && *t < 1.0)) throw ConfigError("predict.exceedance must lie in (0, 1)");
    p.settings.exceedance_threshold = *t;
  }
  set(p.settings.tile_size, s.integer("tile_size", 1, 1000000));
  const Section prof = s.section("profile");
  if (prof.present())
    for (const auto& kv : prof.node()) {
      const std::string key = kv.first.Scalar();
      const auto v = prof.number(key.c_str());
      if (!v) throw ConfigError(prof.name(key) + " must be a number");
      p.profile[key] = *v;
    }
  if (const auto t = s.number("profile_threshold")) p.profile_threshold = *t;
}

void parse_info(const Section& s, RunConfig& c) {
  s.allow({"expectation", "n_outcome_draws", "qmc_points", "qmc_rel_tol", "max_qmc_points", "rho", "alpha", "tau2"});
  auto& e = c.info;
  using X = EfiSettings::Expectation;
  set(e.expectation, s.choice<X>("expectation", {{"enumerate", X::enumerate}, {"sample", X::sample}}));
  set(e.n_outcome_draws, s.integer("n_outcome_draws", 1, 100000000));
  set(e.qmc_points, s.integer("qmc_points", 16, 1 << 26));
  set(e.qmc_rel_tol, s.positive("qmc_rel_tol"));
  set(e.max_qmc_points, s.integer("max_qmc_points", 16, 1 << 26));
  set(e.rho_grid, s.numbers("rho"));
  set(e.alpha_grid, s.numbers("alpha"));
  set(e.tau2_grid, s.numbers("tau2"));
  try {
    e.validate();
  } catch (const std::exception& ex) {
    throw ConfigError(std::string("info_curve: ") + ex.what());
  }
}

void parse_cld(const Section& s, RunConfig& c) {
  s.allow({"quadrature_order", "rel_step"});
  set(c.cld.quadrature_order, s.integer("quadrature_order", 2, 100));
  set(c.cld.rel_step, s.positive("rel_step"));
  if (c.cld.rel_step > 0.1) throw ConfigError("cld.rel_step must not exceed 0.1");
}

void parse_sim(const Section& s, RunConfig& c) {
  s.allow({"grid", "n_reps", "cells", "checkpoint_dir", "integration", "nugget_floor", "allow_off_table"});
  auto& m = c.sim;
  set(m.grid, grid_choice(s, "grid"));
  set(m.n_reps, s.integer("n_reps", 0, 1000000));
  if (const auto d = s.text("checkpoint_dir")) m.checkpoint_dir = resolve(c.base_dir, *d);
  set(m.integration.mode, integration_choice(s, "integration"));
  set(m.nugget_floor, s.positive("nugget_floor"));
  bool off_table = false;
  set(off_table, s.flag("allow_off_table"));
  if (s.has("cells")) {
    const YAML::Node list = s.raw("cells");
    if (!list.IsSequence() || list.size() == 0) throw ConfigError("sim_study.cells must be a non-empty list");
    int k = 0;
    for (const auto& item : list) {
      const Section cell(item, "sim_study.cells[" + std::to_string(k++) + "]");
      cell.allow({"tau2", "phi", "c"});
      ScenarioSpec spec;
      for (const char* key : {"tau2", "phi", "c"})
        if (!cell.has(key)) throw ConfigError(cell.name(key) + " is required");
      spec.tau2 = *cell.number("tau2");
      spec.phi = *cell.number("phi");
      spec.c = *cell.number("c");
      spec.allow_off_table = off_table;
      m.cells.push_back(spec);
    }
  }
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config is not valid YAML: ") + e.what());
  }
  if (!root || root.IsNull()) throw ConfigError("config is empty");
  RunConfig c;
  c.source_text = text;
  c.base_dir = base_dir;
  try {
    const Section top(root, "");
    top.allow({"task", "seed", "workers", "output", "survey", "model", "threshold", "simulate", "linear", "binomial",
               "predict", "info_curve", "cld", "sim_study"});
    if (const auto t = top.text("task")) c.task = parse_task(*t);
    set(c.seed, top.integer("seed", 0, kBig));
    set(c.workers, top.integer("workers", 1, 1024));
    if (const auto o = top.text("output")) {
      if (o->empty()) throw ConfigError("output must not be empty");
      c.output_dir = *o;
    }
    c.output_dir = resolve(base_dir, c.output_dir.string());
    if (const auto s = top.text("survey")) c.survey = resolve(base_dir, *s);
    parse_model(top.section("model"), c);
    parse_threshold(top.section("threshold"), c);
    parse_simulate(top.section("simulate"), c);
    parse_linear(top.section("linear"), c);
    parse_binomial(top.section("binomial"), c);
    parse_predict(top.section("predict"), c);
    parse_info(top.section("info_curve"), c);
    parse_cld(top.section("cld"), c);
    parse_sim(top.section("sim_study"), c);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

namespace {

void check_readable(const std::filesystem::path& p, const std::string& what) {
  std::ifstream in(p);
  if (!in) throw ConfigError(what + " '" + p.string() + "' cannot be read");
}

void check_columns(const std::filesystem::path& p, const std::vector<std::string>& needed, const std::string& what) {
  check_readable(p, what);
  std::vector<std::string> header;
  try {
    header = read_csv_header(p);
  } catch (const std::exception& e) {
    throw ConfigError(what + ": " + e.what());
  }
  for (const auto& col : needed)
    if (std::find(header.begin(), header.end(), col) == header.end())
      throw ConfigError(what + " '" + p.filename().string() + "' has no column '" + col + "'");
}

bool varying_rule(const ThresholdRule& r) {
  return r.kind == ThresholdRule::Kind::column || r.kind == ThresholdRule::Kind::table;
}

}  // namespace

void RunConfig::validate_for(Task t) const {
  if (task && *task != t)
    throw ConfigError(std::string("config is for task '") + to_string(*task) + "', not '" + to_string(t) + "'");
  const bool needs_survey = t == Task::fit_linear || t == Task::fit_binomial || t == Task::cld || t == Task::predict;
  const bool has_rule = threshold.kind != ThresholdRule::Kind::none;

  if (t == Task::simulate) {
    if (has_rule && threshold.kind != ThresholdRule::Kind::scalar)
      throw ConfigError("simulate takes a scalar threshold only");
    try {
      simulate.truth.validate();
    } catch (const std::exception& e) {
      throw ConfigError(std::string("simulate: ") + e.what());
    }
    return;
  }
  if (t == Task::info_curve) return;
  if (t == Task::sim_study) {
    std::vector<ScenarioSpec> cells = sim.cells;
    for (auto& s : cells) {
      s.grid = sim.grid;
      s.n_reps = sim.n_reps;
      try {
        s.validate();
      } catch (const ConfigError& e) {
        throw ConfigError(std::string("sim_study.cells: ") + e.what());
      }
    }
    return;
  }

  if (!needs_survey) return;
  if (!survey) throw ConfigError(std::string("task ") + to_string(t) + " needs 'survey'");
  const bool continuous = !schema.binary_outcome;
  if (t == Task::fit_linear && !continuous) throw ConfigError("fit-linear needs a continuous outcome");
  if (t == Task::cld && !continuous) throw ConfigError("cld needs a continuous outcome");
  if (t == Task::cld && !has_rule) throw ConfigError("cld needs a threshold rule");
  if (t == Task::fit_binomial && continuous && !has_rule)
    throw ConfigError("fit-binomial on a continuous outcome needs a threshold rule");
  if (!continuous && has_rule) throw ConfigError("a binary outcome takes no threshold rule");
  if (t == Task::predict) {
    if (!continuous && predict.models != PredictConfig::Models::binomial)
      throw ConfigError("predict.models must be binomial for a binary outcome");
    if (continuous && predict.models != PredictConfig::Models::linear && !has_rule)
      throw ConfigError("predict with a binomial model on a continuous outcome needs a threshold rule");
    if (!predict.grid && !predict.grid_kind) throw ConfigError("predict needs 'predict.grid'");
    if (varying_rule(threshold) && !predict.profile_threshold)
      throw ConfigError("predict needs predict.profile_threshold when thresholds vary between individuals");
    std::vector<std::string> grid_cols{"x", "y"};
    std::vector<std::string> raw_names = schema.covariates;
    for (const auto& s : schema.splines) raw_names.push_back(s.column);
    std::vector<std::string> header;
    if (predict.grid) {
      check_columns(*predict.grid, grid_cols, "grid file");
      header = read_csv_header(*predict.grid);
    }
    for (const auto& name : raw_names)
      if (!predict.profile.count(name) && std::find(header.begin(), header.end(), name) == header.end())
        throw ConfigError("predict.profile lacks covariate '" + name + "' and the grid has no such column");
    for (const auto& [name, v] : predict.profile)
      if (std::find(raw_names.begin(), raw_names.end(), name) == raw_names.end())
        throw ConfigError("predict.profile." + name + " is not a model covariate");
  }
  if (threshold.kind == ThresholdRule::Kind::table && threshold_table) {
    check_readable(*threshold_table, "threshold table");
    try {
      load_threshold_table(*threshold_table);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("threshold table: ") + e.what());
    }
  }
  SurveySchema s = schema;
  s.keep = threshold.columns();
  check_columns(*survey, s.required_columns(), "survey");
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const std::filesystem::path base = std::filesystem::absolute(path).parent_path();

  // A run manifest embeds the config it ran with.
  YAML::Node probe;
  try {
    probe = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config is not valid YAML: ") + e.what());
  }
  if (probe.IsMap() && probe["manifest_version"]) {
    try {
      RunConfig c = parse_config(probe["config_text"].as<std::string>(), probe["base_dir"].as<std::string>());
      c.task = parse_task(probe["task"].as<std::string>());
      c.seed = probe["seed"].as<std::uint64_t>();
      c.workers = probe["workers"].as<int>();
      return c;
    } catch (const YAML::Exception& e) {
      throw ConfigError(std::string("manifest is incomplete: ") + e.what());
    }
  }
  return parse_config(text, base);
}

}  // namespace dichogeo
