#include "dichogeo/pipeline.hpp"

#include "dichogeo/bridge.hpp"
#include "dichogeo/errors.hpp"
#include "dichogeo/format.hpp"
#include "dichogeo/normal.hpp"
#include "dichogeo/random.hpp"
#include "dichogeo/simulate.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#ifndef DICHOGEO_VERSION
#define DICHOGEO_VERSION "unknown"
#endif

namespace dichogeo {

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + path.string() + " for hashing");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return hex.str();
}

namespace {

class RunLog {
public:
  RunLog(const std::filesystem::path& path, std::ostream* echo)
      : out_(path), echo_(echo), start_(std::chrono::steady_clock::now()) {}

  void operator()(const std::string& line) {
    const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    std::ostringstream s;
    s << '[' << std::fixed << std::setprecision(2) << std::setw(8) << t << "s] " << line << '\n';
    out_ << s.str() << std::flush;
    if (echo_) *echo_ << s.str() << std::flush;
  }

private:
  std::ofstream out_;
  std::ostream* echo_;
  std::chrono::steady_clock::time_point start_;
};

/// One task's working state: the config, where files go, and what was read
/// and written.
struct Job {
  Task task;
  RunConfig config;
  RunLog log;
  RunArtifacts artifacts;
  std::vector<std::pair<std::string, std::filesystem::path>> inputs;

  std::ofstream open(const std::string& name) {
    std::ofstream out(artifacts.output_dir / name, std::ios::binary);
    if (!out) throw IngestionError("cannot write " + (artifacts.output_dir / name).string());
    artifacts.outputs.push_back(name);
    return out;
  }
};

std::string fmt(double x) { return format_full(x); }

// Survey loading ---------------------------------------------------------

struct Survey {
  LoadedSurvey loaded;
  bool varying = false;
};

Survey load(Job& job) {
  const RunConfig& c = job.config;
  SurveySchema schema = c.schema;
  schema.keep = c.threshold.columns();
  Survey s;
  s.loaded = load_survey(*c.survey, schema);
  job.inputs.push_back({"survey", *c.survey});
  if (c.threshold.kind != ThresholdRule::Kind::none) {
    ThresholdRule rule = c.threshold;
    if (c.threshold_table) {
      rule.table = load_threshold_table(*c.threshold_table);
      job.inputs.push_back({"threshold_table", *c.threshold_table});
    }
    s.loaded.data.thresholds = resolve_thresholds(s.loaded, rule);
    s.varying = thresholds_vary(s.loaded.data);
  }
  const auto& d = s.loaded.data;
  job.log("survey: " + std::to_string(d.n_individuals()) + " individuals at " + std::to_string(d.n_locations()) +
          " locations, " + std::to_string(d.n_covariates()) + " covariate columns");
  return s;
}

SurveyDataset binary_view(const Survey& s) {
  const SurveyDataset& d = s.loaded.data;
  if (d.binary) return d;
  return dichotomize(d, *d.thresholds);
}

// Fits -------------------------------------------------------------------

FitResult linear_fit(Job& job, const SurveyDataset& data) {
  job.log("fitting the linear model");
  FitResult fit = fit_linear(data, std::nullopt, job.config.linear);
  if (!fit.converged) throw NumericalError("linear fit did not converge: " + fit.message);
  job.log("linear fit: loglik " + format_report(fit.loglik) + " after " + std::to_string(fit.iterations) + " iterations");
  return fit;
}

FitResult binomial_fit(Job& job, const SurveyDataset& binary) {
  const auto& b = job.config.binomial;
  LatentIntegrationSettings integration = b.integration;
  integration.seed = derive_seed(job.config.seed, seed_stream::importance);
  FitResult fit;
  if (b.method == BinomialConfig::Method::mcml) {
    job.log("fitting the binomial model by Monte Carlo maximum likelihood");
    McmlSettings m = b.mcml;
    m.seed = derive_seed(job.config.seed, seed_stream::mcml);
    fit = fit_binomial_mcml(binary, std::nullopt, m, b.options);
  } else {
    job.log("fitting the binomial model");
    fit = fit_binomial(binary, std::nullopt, integration, b.options);
  }
  if (!fit.converged) throw NumericalError("binomial fit did not converge: " + fit.message);
  job.log("binomial fit: loglik " + format_report(fit.loglik) + " after " + std::to_string(fit.iterations) +
          " iterations");
  return fit;
}

void write_estimates(Job& job, const std::vector<const FitResult*>& fits) {
  auto out = job.open("estimates.csv");
  out << "model,parameter,scale,estimate,lower,upper\n";
  for (const FitResult* f : fits)
    for (const auto& e : f->estimates)
      out << to_string(f->model) << ',' << csv_field(e.name) << ',' << to_string(e.scale) << ',' << fmt(e.value) << ','
          << fmt(e.lower) << ',' << fmt(e.upper) << '\n';
  auto sum = job.open("fit_summary.csv");
  sum << "model,loglik,converged,iterations,gradient_norm\n";
  for (const FitResult* f : fits)
    sum << to_string(f->model) << ',' << fmt(f->loglik) << ',' << (f->converged ? 1 : 0) << ',' << f->iterations << ','
        << fmt(f->gradient_norm) << '\n';
}

// Tasks ------------------------------------------------------------------

void task_simulate(Job& job) {
  const auto& s = job.config.simulate;
  const SurveyDesign design = SurveyDesign::intercept_only(generate_grid(s.grid), s.n_per_location, s.truth);
  SimulatedSurvey sim = simulate_survey(design, derive_seed(job.config.seed, seed_stream::simulate));
  const bool thresholded = job.config.threshold.kind == ThresholdRule::Kind::scalar;
  double c = 0.0;
  if (thresholded) {
    c = job.config.threshold.log ? std::log(job.config.threshold.value) : job.config.threshold.value;
    sim.data.thresholds = Eigen::VectorXd::Constant(sim.data.n_individuals(), c);
  }
  {
    auto out = job.open("survey.csv");
    write_survey_csv(sim.data, out);
  }
  auto out = job.open("latent.csv");
  out << "loc_id,x,y,s" << (thresholded ? ",prevalence" : "") << '\n';
  const double tau = std::sqrt(s.truth.tau2);
  for (Eigen::Index i = 0; i < sim.data.n_locations(); ++i) {
    const Location& l = sim.data.locations[i];
    out << csv_field(l.id) << ',' << fmt(l.x) << ',' << fmt(l.y) << ',' << fmt(sim.latent(i));
    if (thresholded) out << ',' << fmt(norm_cdf((c - s.truth.alpha - sim.latent(i)) / tau));
    out << '\n';
  }
  job.log("simulated " + std::to_string(sim.data.n_individuals()) + " individuals");
}

void task_fit_linear(Job& job) {
  const Survey s = load(job);
  const FitResult fit = linear_fit(job, s.loaded.data);
  write_estimates(job, {&fit});
}

void task_fit_binomial(Job& job) {
  const Survey s = load(job);
  const FitResult fit = binomial_fit(job, binary_view(s));
  write_estimates(job, {&fit});
}

void task_info_curve(Job& job) {
  EfiSettings e = job.config.info;
  e.seed = derive_seed(job.config.seed, seed_stream::info_curve);
  job.log("computing information curves");
  const auto records = info_curves(e, job.config.workers);
  auto out = job.open("info_curve.csv");
  out << "alpha_t,rho,tau2,i_y,i_yt,r\n";
  for (const auto& r : records)
    out << fmt(r.alpha_t) << ',' << fmt(r.rho) << ',' << fmt(r.tau2) << ',' << fmt(r.i_y) << ',' << fmt(r.i_yt) << ','
        << fmt(r.r) << '\n';
}

void task_cld(Job& job) {
  const Survey s = load(job);
  const FitResult fit = linear_fit(job, s.loaded.data);
  CldSettings settings = job.config.cld;
  settings.workers = job.config.workers;
  job.log("computing composite likelihood Hessians");
  const CldReport r = cld(*fit.continuous, binary_view(s), settings);
  write_estimates(job, {&fit});
  auto out = job.open("cld.csv");
  out << "logdet_continuous,logdet_binary,cld,sigma2,tau2,noise_to_signal\n";
  const ModelParams& p = *fit.continuous;
  out << fmt(r.logdet_continuous) << ',' << fmt(r.logdet_binary) << ',' << fmt(r.cld) << ',' << fmt(p.sigma2) << ','
      << fmt(p.tau2) << ',' << fmt(p.tau2 / p.sigma2) << '\n';
  job.log("CLD " + format_report(r.cld));
}

struct Grid {
  std::vector<Location> points;
  std::vector<std::map<std::string, double>> values;  // per point, covariate columns from the grid file
};

Grid load_grid(Job& job) {
  const auto& p = job.config.predict;
  Grid g;
  if (!p.grid) {
    g.points = generate_grid(*p.grid_kind);
    g.values.resize(g.points.size());
    return g;
  }
  const CsvTable t = read_csv_file(*p.grid);
  job.inputs.push_back({"grid", *p.grid});
  const std::size_t cx = t.require_column("x"), cy = t.require_column("y");
  std::vector<std::pair<std::string, std::size_t>> extra;
  for (const auto& name : job.config.schema.covariates)
    if (auto j = t.column(name)) extra.push_back({name, *j});
  for (const auto& s : job.config.schema.splines)
    if (auto j = t.column(s.column)) extra.push_back({s.column, *j});
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    auto num = [&](std::size_t col) {
      const auto v = parse_number(t.rows[r][col]);
      if (!v) throw IngestionError("grid value is missing or not a number", t.line_of_row[r], t.header[col]);
      return *v;
    };
    g.points.push_back({num(cx), num(cy), std::to_string(r)});
    std::map<std::string, double> v;
    for (const auto& [name, col] : extra) v[name] = num(col);
    g.values.push_back(std::move(v));
  }
  if (g.points.empty()) throw IngestionError("grid file has no rows");
  return g;
}

/// Predictions for one model, with grid points sharing a covariate profile
/// handled together.
PredictionGrid predict_model(Job& job, const FitResult& fit, const SurveyDataset& data, const Grid& grid,
                             bool varying) {
  const auto& p = job.config.predict;
  const LatentPosterior post = latent_posterior(fit, data, job.config.binomial.integration);
  std::map<std::vector<double>, std::vector<std::size_t>> groups;
  std::vector<std::vector<double>> order;
  for (std::size_t i = 0; i < grid.points.size(); ++i) {
    std::map<std::string, double> values = p.profile;
    for (const auto& [k, v] : grid.values[i]) values[k] = v;
    const Eigen::RowVectorXd row = design_row(job.config.schema, values);
    std::vector<double> key(row.data(), row.data() + row.size());
    if (varying) {
      const double c = *p.profile_threshold;
      key.push_back(job.config.threshold.log ? std::log(c) : c);
    }
    auto [it, fresh] = groups.try_emplace(key);
    if (fresh) order.push_back(key);
    it->second.push_back(i);
  }
  const Eigen::Index g = static_cast<Eigen::Index>(grid.points.size());
  PredictionGrid out;
  out.grid_locations = grid.points;
  out.prevalence_mean = Eigen::VectorXd(g);
  out.threshold = p.settings.exceedance_threshold;
  if (out.threshold) out.exceedance = Eigen::VectorXd(g);
  const std::uint64_t base = derive_seed(job.config.seed, seed_stream::predict);
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& idx = groups[order[k]];
    std::vector<Location> pts;
    for (auto i : idx) pts.push_back(grid.points[i]);
    PredictionSettings settings = p.settings;
    settings.workers = job.config.workers;
    settings.seed = derive_seed(base, k);
    const Eigen::VectorXd profile = Eigen::Map<const Eigen::VectorXd>(order[k].data(), order[k].size());
    const PredictionGrid part = predict_prevalence(post, pts, profile, settings);
    for (std::size_t j = 0; j < idx.size(); ++j) {
      out.prevalence_mean(idx[j]) = part.prevalence_mean(j);
      if (out.threshold) out.exceedance(idx[j]) = part.exceedance(j);
    }
  }
  out.n_cond_samples = p.settings.n_cond_samples;
  return out;
}

void write_prediction(Job& job, const std::string& name, const PredictionGrid& pred) {
  auto out = job.open(name);
  out << "x,y,prev_mean" << (pred.threshold ? ",exceed_prob" : "") << '\n';
  for (std::size_t i = 0; i < pred.grid_locations.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    out << fmt(pred.grid_locations[i].x) << ',' << fmt(pred.grid_locations[i].y) << ',' << fmt(pred.prevalence_mean(k));
    if (pred.threshold) out << ',' << fmt(pred.exceedance(k));
    out << '\n';
  }
}

void task_predict(Job& job) {
  const Survey s = load(job);
  const Grid grid = load_grid(job);
  const auto models = job.config.predict.models;
  std::optional<FitResult> lin, bin;
  std::optional<PredictionGrid> plin, pbin;
  if (models != PredictConfig::Models::linear) {
    const SurveyDataset binary = binary_view(s);
    bin = binomial_fit(job, binary);
    job.log("predicting from the binomial model at " + std::to_string(grid.points.size()) + " points");
    pbin = predict_model(job, *bin, binary, grid, s.varying);
  }
  if (models != PredictConfig::Models::binomial) {
    lin = linear_fit(job, s.loaded.data);
    job.log("predicting from the linear model at " + std::to_string(grid.points.size()) + " points");
    plin = predict_model(job, *lin, s.loaded.data, grid, s.varying);
  }
  std::vector<const FitResult*> fits;
  if (bin) fits.push_back(&*bin);
  if (lin) fits.push_back(&*lin);
  write_estimates(job, fits);
  if (pbin) write_prediction(job, "prediction_binomial.csv", *pbin);
  if (plin) write_prediction(job, "prediction_linear.csv", *plin);
  if (pbin && plin) {
    // Differences are binomial minus linear.
    const bool ex = pbin->threshold.has_value();
    auto out = job.open("comparison.csv");
    out << "x,y,prev_binomial,prev_linear,prev_diff"
        << (ex ? ",exceed_binomial,exceed_linear,exceed_diff" : "") << '\n';
    for (std::size_t i = 0; i < grid.points.size(); ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      const double a = pbin->prevalence_mean(k), b = plin->prevalence_mean(k);
      out << fmt(grid.points[i].x) << ',' << fmt(grid.points[i].y) << ',' << fmt(a) << ',' << fmt(b) << ',' << fmt(a - b);
      if (ex) {
        const double ea = pbin->exceedance(k), eb = plin->exceedance(k);
        out << ',' << fmt(ea) << ',' << fmt(eb) << ',' << fmt(ea - eb);
      }
      out << '\n';
    }
  }
}

void task_sim_study(Job& job) {
  const auto& m = job.config.sim;
  std::vector<ScenarioSpec> specs;
  if (m.cells.empty()) {
    specs = standard_scenarios(m.grid, m.n_reps, job.config.seed);
  } else {
    // Cells with the same (tau2, phi) share a seed, as in the standard set.
    std::vector<std::pair<double, double>> keys;
    for (ScenarioSpec s : m.cells) {
      const std::pair<double, double> key{s.tau2, s.phi};
      auto it = std::find(keys.begin(), keys.end(), key);
      if (it == keys.end()) it = keys.insert(keys.end(), key);
      s.grid = m.grid;
      s.n_reps = m.n_reps;
      s.seed = derive_seed(job.config.seed, static_cast<std::uint64_t>(it - keys.begin()));
      specs.push_back(s);
    }
  }
  SimSettings settings;
  settings.workers = job.config.workers;
  settings.checkpoint_dir = m.checkpoint_dir;
  settings.integration = m.integration;
  settings.nugget_floor = m.nugget_floor;
  SimReport report;
  for (const auto& spec : specs) {
    job.log("cell " + spec.label() + ": " + std::to_string(spec.n_reps) + " replicates");
    report.cells.push_back(run_scenario(spec, settings));
    int failed_b = 0, failed_c = 0;
    for (const auto& r : report.cells.back().replicates) {
      failed_b += !r.binomial.ok;
      failed_c += !r.linear.ok;
    }
    job.log("cell " + spec.label() + " done, excluded B " + std::to_string(failed_b) + ", C " +
            std::to_string(failed_c));
  }
  {
    auto out = job.open("summary.csv");
    write_summary_csv(report, out);
  }
  {
    auto out = job.open("replicates.csv");
    write_replicates_csv(report, out);
  }
  auto out = job.open("report.txt");
  out << format_report_table(report);
}

void write_manifest(Job& job) {
  const RunConfig& c = job.config;
  nlohmann::ordered_json m;
  m["manifest_version"] = 1;
  m["tool"] = "dichogeo";
  m["version"] = DICHOGEO_VERSION;
  m["task"] = to_string(job.task);
  m["seed"] = c.seed;
  m["workers"] = c.workers;
  m["base_dir"] = c.base_dir.string();
  m["config_text"] = c.source_text;
  m["build"] = {{"compiler", __VERSION__},
                {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                              std::to_string(EIGEN_MINOR_VERSION)}};
  auto inputs = nlohmann::ordered_json::array();
  for (const auto& [role, path] : job.inputs)
    inputs.push_back({{"role", role}, {"path", path.string()}, {"sha256", sha256_file(path)}});
  m["inputs"] = inputs;
  auto outputs = nlohmann::ordered_json::array();
  for (const auto& name : job.artifacts.outputs)
    outputs.push_back({{"file", name}, {"sha256", sha256_file(job.artifacts.output_dir / name)}});
  m["outputs"] = outputs;
  std::ofstream out(job.artifacts.output_dir / "manifest.json", std::ios::binary);
  out << m.dump(2) << '\n';
}

}  // namespace

RunArtifacts run_task(Task task, const RunConfig& config, std::ostream* progress) {
  config.validate_for(task);
  std::filesystem::create_directories(config.output_dir);
  std::filesystem::remove(config.output_dir / "error.json");
  Job job{task, config, RunLog(config.output_dir / "run.log", progress), {config.output_dir, {}}, {}};
  job.log(std::string("task ") + to_string(task) + ", seed " + std::to_string(config.seed) + ", workers " +
          std::to_string(config.workers));
  switch (task) {
    case Task::simulate: task_simulate(job); break;
    case Task::fit_linear: task_fit_linear(job); break;
    case Task::fit_binomial: task_fit_binomial(job); break;
    case Task::info_curve: task_info_curve(job); break;
    case Task::cld: task_cld(job); break;
    case Task::predict: task_predict(job); break;
    case Task::sim_study: task_sim_study(job); break;
  }
  write_manifest(job);
  job.log("wrote " + std::to_string(job.artifacts.outputs.size()) + " output files and manifest.json");
  return job.artifacts;
}

int exit_status(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const SchemaError*>(&e)) return 3;
  if (dynamic_cast<const NumericalError*>(&e) || dynamic_cast<const ConditioningError*>(&e) ||
      dynamic_cast<const ParameterDomainError*>(&e) || dynamic_cast<const UnsupportedSizeError*>(&e))
    return 4;
  return 1;
}

namespace {

const char* error_type(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const IngestionError*>(&e)) return "ingestion";
  if (dynamic_cast<const SchemaError*>(&e)) return "schema";
  if (dynamic_cast<const ConditioningError*>(&e)) return "conditioning";
  if (dynamic_cast<const NumericalError*>(&e)) return "numerical";
  if (dynamic_cast<const ParameterDomainError*>(&e)) return "parameter_domain";
  if (dynamic_cast<const UnsupportedSizeError*>(&e)) return "unsupported_size";
  return "internal";
}

}  // namespace

void write_error_file(const std::filesystem::path& dir, const std::string& task, const std::exception& e) {
  try {
    std::filesystem::create_directories(dir);
    nlohmann::ordered_json j;
    j["task"] = task;
    j["error_type"] = error_type(e);
    j["exit_status"] = exit_status(e);
    j["message"] = e.what();
    if (const auto* ing = dynamic_cast<const IngestionError*>(&e)) {
      if (ing->row() >= 0) j["row"] = ing->row();
      if (!ing->column().empty()) j["column"] = ing->column();
    }
    std::ofstream(dir / "error.json", std::ios::binary) << j.dump(2) << '\n';
  } catch (...) {
  }
}

}  // namespace dichogeo
