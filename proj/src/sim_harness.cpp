#include "dichogeo/sim_harness.hpp"

#include "dichogeo/errors.hpp"
#include "dichogeo/format.hpp"
#include "dichogeo/lin_fit.hpp"
#include "dichogeo/normal.hpp"
#include "dichogeo/parallel.hpp"
#include "dichogeo/predict.hpp"
#include "dichogeo/random.hpp"
#include "dichogeo/simulate.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

namespace dichogeo {

GridKind parse_grid_kind(const std::string& name) {
  if (name == "unit225") return GridKind::unit225;
  if (name == "extended450") return GridKind::extended450;
  throw ConfigError("unknown grid '" + name + "' (expected unit225 or extended450)");
}

const char* to_string(GridKind kind) { return kind == GridKind::unit225 ? "unit225" : "extended450"; }

std::vector<Location> generate_grid(GridKind kind) {
  std::vector<Location> out;
  const int blocks = kind == GridKind::unit225 ? 1 : 2;
  for (int b = 0; b < blocks; ++b)
    for (int i = 0; i <= 14; ++i)
      for (int j = 0; j <= 14; ++j)
        out.push_back({b * (1.0 + 1.0 / 14.0) + i / 14.0, j / 14.0, std::to_string(out.size())});
  return out;
}

namespace {

bool member(double x, std::initializer_list<double> set) {
  return std::any_of(set.begin(), set.end(), [x](double v) { return std::abs(x - v) < 1e-12; });
}

}  // namespace

void ScenarioSpec::validate() const {
  if (!(tau2 > 0.0) || !std::isfinite(tau2)) throw ConfigError("scenario tau2 must be positive");
  if (!(phi > 0.0) || !std::isfinite(phi)) throw ConfigError("scenario phi must be positive");
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw ConfigError("scenario sigma2 must be positive");
  if (!std::isfinite(alpha) || !std::isfinite(c)) throw ConfigError("scenario alpha and c must be finite");
  if (n_reps < 0) throw ConfigError("scenario n_reps must not be negative");
  if (allow_off_table) return;
  if (!member(tau2, {0.5, 1.0, 2.0})) throw ConfigError("scenario tau2 must be one of 0.5, 1, 2");
  if (!member(phi, {0.1, 0.2})) throw ConfigError("scenario phi must be one of 0.1, 0.2");
  if (!member(c, {0.0, 0.2, 0.4})) throw ConfigError("scenario c must be one of 0, 0.2, 0.4");
  if (alpha != 0.0 || sigma2 != 1.0) throw ConfigError("scenario alpha and sigma2 are fixed at 0 and 1");
}

std::string ScenarioSpec::label() const {
  return "tau2_" + format_report(tau2) + "_phi_" + format_report(phi) + "_c_" + format_report(c);
}

std::vector<ScenarioSpec> standard_scenarios(GridKind grid, int n_reps, std::uint64_t seed) {
  std::vector<ScenarioSpec> out;
  std::uint64_t k = 0;
  for (double tau2 : {0.5, 1.0, 2.0})
    for (double phi : {0.1, 0.2}) {
      for (double c : {0.0, 0.2, 0.4}) {
        ScenarioSpec s;
        s.tau2 = tau2;
        s.phi = phi;
        s.c = c;
        s.grid = grid;
        s.n_reps = n_reps;
        s.seed = derive_seed(seed, k);
        out.push_back(s);
      }
      ++k;
    }
  return out;
}

const SummaryRow* SimReport::find(const std::string& cell, const std::string& parameter, char model) const {
  for (const auto& c : cells)
    for (const auto& r : c.rows)
      if (r.cell == cell && r.parameter == parameter && r.model == model) return &r;
  return nullptr;
}

namespace {

/// Grid averages of p_hat - p and (p_hat - p)^2 with p_hat = E[Phi(alpha~ + S~)]
/// under the plug-in conditional, in closed form.
void score_prediction(const LatentPosterior& post, std::span<const Location> grid, const Eigen::VectorXd& truth,
                      ModelOutcome& out) {
  const ConditionalGaussian cond = conditional_latent(post, grid);
  const Eigen::Index g = truth.size();
  double bias = 0.0, mse = 0.0;
  for (Eigen::Index i = 0; i < g; ++i) {
    const double p = norm_cdf((post.params.alpha_t + cond.mean(i)) / std::sqrt(1.0 + cond.cov(i, i)));
    const double e = p - truth(i);
    bias += e;
    mse += e * e;
  }
  out.pred_bias = bias / g;
  out.pred_mse = mse / g;
}

void fill_estimates(const PrevalenceParams& p, ModelOutcome& out) {
  out.alpha_t = p.alpha_t;
  out.sigma2_t = p.sigma2_t;
  out.phi = p.phi;
}

template <class F>
void guarded(ModelOutcome& out, F&& body) {
  try {
    body();
  } catch (const std::exception& e) {
    out.ok = false;
    out.failure = e.what();
  }
}

nlohmann::json to_json(const ModelOutcome& m) {
  return {{"ok", m.ok},         {"failure", m.failure},     {"alpha_t", m.alpha_t}, {"sigma2_t", m.sigma2_t},
          {"phi", m.phi},       {"pred_bias", m.pred_bias}, {"pred_mse", m.pred_mse}};
}

ModelOutcome outcome_from_json(const nlohmann::json& j) {
  ModelOutcome m;
  m.ok = j.at("ok").get<bool>();
  m.failure = j.at("failure").get<std::string>();
  m.alpha_t = j.at("alpha_t").get<double>();
  m.sigma2_t = j.at("sigma2_t").get<double>();
  m.phi = j.at("phi").get<double>();
  m.pred_bias = j.at("pred_bias").get<double>();
  m.pred_mse = j.at("pred_mse").get<double>();
  return m;
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, const ScenarioSpec& spec, int rep) {
  char name[32];
  std::snprintf(name, sizeof name, "rep_%05d.json", rep);
  return dir / spec.label() / name;
}

std::optional<ReplicateRecord> read_checkpoint(const std::filesystem::path& path, const ScenarioSpec& spec, int rep) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  try {
    const auto j = nlohmann::json::parse(in);
    // A checkpoint from another configuration under the same label is ignored.
    if (j.at("seed").get<std::uint64_t>() != spec.seed || j.at("rep").get<int>() != rep ||
        j.at("grid").get<std::string>() != to_string(spec.grid))
      return std::nullopt;
    ReplicateRecord r;
    r.rep = rep;
    r.binomial = outcome_from_json(j.at("binomial"));
    r.linear = outcome_from_json(j.at("linear"));
    return r;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

void write_checkpoint(const std::filesystem::path& path, const ScenarioSpec& spec, const ReplicateRecord& r) {
  std::filesystem::create_directories(path.parent_path());
  const nlohmann::json j = {{"seed", spec.seed},          {"rep", r.rep},
                            {"grid", to_string(spec.grid)}, {"binomial", to_json(r.binomial)},
                            {"linear", to_json(r.linear)}};
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp);
    out << j.dump() << '\n';
  }
  std::filesystem::rename(tmp, path);
}

struct Moments {
  double mean = 0.0;
  double mcse = 0.0;
};

Moments moments(const std::vector<double>& v) {
  Moments m;
  const auto n = static_cast<double>(v.size());
  if (v.empty()) return {std::nan(""), std::nan("")};
  for (double x : v) m.mean += x;
  m.mean /= n;
  if (v.size() < 2) {
    m.mcse = std::nan("");
    return m;
  }
  double ss = 0.0;
  for (double x : v) ss += (x - m.mean) * (x - m.mean);
  m.mcse = std::sqrt(ss / (n - 1.0) / n);
  return m;
}

}  // namespace

ReplicateRecord run_replicate(const ScenarioSpec& spec, int rep, const SimSettings& settings) {
  const std::vector<Location> grid = generate_grid(spec.grid);
  ModelParams truth;
  truth.alpha = spec.alpha;
  truth.beta_gamma = Eigen::VectorXd(0);
  truth.sigma2 = spec.sigma2;
  truth.tau2 = spec.tau2;
  truth.phi = spec.phi;
  const SimulatedSurvey sim =
      simulate_survey(SurveyDesign::intercept_only(grid, 1, truth), derive_seed(spec.seed, static_cast<std::uint64_t>(rep)));
  const SurveyDataset binary = dichotomize(sim.data, spec.c);

  const double tau = std::sqrt(spec.tau2);
  const double alpha_t = (spec.c - spec.alpha) / tau;
  const Eigen::VectorXd prevalence = sim.latent.unaryExpr([&](double s) { return norm_cdf(alpha_t - s / tau); });

  ReplicateRecord r;
  r.rep = rep;
  guarded(r.linear, [&] {
    LinearFitOptions opt;
    opt.compute_obs_info = false;
    opt.threshold = spec.c;
    const FitResult fit = fit_linear(sim.data, std::nullopt, opt);
    if (!fit.converged) throw NumericalError("linear fit did not converge: " + fit.message);
    const ModelParams& p = *fit.continuous;
    if (p.tau2 < settings.nugget_floor * p.sigma2) throw NumericalError("linear fit on the zero-nugget boundary");
    fill_estimates(fit.prevalence, r.linear);
    score_prediction(latent_posterior(fit, sim.data), grid, prevalence, r.linear);
    r.linear.ok = true;
  });
  guarded(r.binomial, [&] {
    BinomialFitOptions opt;
    opt.compute_obs_info = false;
    const FitResult fit = fit_binomial(binary, std::nullopt, settings.integration, opt);
    if (!fit.converged) throw NumericalError("binomial fit did not converge: " + fit.message);
    // sigma2~ = sigma2 / tau2, so this is the same boundary as the linear check.
    if (fit.prevalence.sigma2_t * settings.nugget_floor > 1.0)
      throw NumericalError("binomial fit on the zero-nugget boundary");
    fill_estimates(fit.prevalence, r.binomial);
    score_prediction(latent_posterior(fit, binary, settings.integration), grid, prevalence, r.binomial);
    r.binomial.ok = true;
  });
  return r;
}

std::vector<SummaryRow> summarize(const ScenarioSpec& spec, const std::vector<ReplicateRecord>& reps) {
  std::vector<SummaryRow> rows;
  if (reps.empty()) return rows;
  const double truth[3] = {(spec.c - spec.alpha) / std::sqrt(spec.tau2), spec.sigma2 / spec.tau2, spec.phi};
  const char* names[4] = {"alpha_t", "sigma2_t", "phi", "prevalence"};
  for (int k = 0; k < 4; ++k)
    for (char model : {'B', 'C'}) {
      std::vector<double> err, sq;
      int failed = 0;
      for (const auto& r : reps) {
        const ModelOutcome& m = model == 'B' ? r.binomial : r.linear;
        if (!m.ok) {
          ++failed;
          continue;
        }
        if (k == 3) {
          err.push_back(m.pred_bias);
          sq.push_back(m.pred_mse);
        } else {
          const double est = k == 0 ? m.alpha_t : k == 1 ? m.sigma2_t : m.phi;
          err.push_back(est - truth[k]);
          sq.push_back(err.back() * err.back());
        }
      }
      const Moments b = moments(err), s = moments(sq);
      SummaryRow row;
      row.cell = spec.label();
      row.tau2 = spec.tau2;
      row.phi = spec.phi;
      row.c = spec.c;
      row.parameter = names[k];
      row.model = model;
      row.bias = b.mean;
      row.mse = s.mean;
      row.mcse = b.mcse;
      row.mcse_mse = s.mcse;
      row.n_ok = static_cast<int>(err.size());
      row.n_failed = failed;
      rows.push_back(row);
    }
  return rows;
}

CellResult run_scenario(const ScenarioSpec& spec, const SimSettings& settings) {
  spec.validate();
  settings.integration.validate();
  CellResult out;
  out.spec = spec;
  out.replicates.resize(static_cast<std::size_t>(spec.n_reps));
  parallel_for(out.replicates.size(), settings.workers, [&](std::size_t i) {
    const int rep = static_cast<int>(i);
    if (settings.checkpoint_dir) {
      const auto path = checkpoint_path(*settings.checkpoint_dir, spec, rep);
      if (auto done = read_checkpoint(path, spec, rep)) {
        out.replicates[i] = *done;
        return;
      }
      out.replicates[i] = run_replicate(spec, rep, settings);
      write_checkpoint(path, spec, out.replicates[i]);
    } else {
      out.replicates[i] = run_replicate(spec, rep, settings);
    }
  });
  out.rows = summarize(spec, out.replicates);
  return out;
}

SimReport run_study(const std::vector<ScenarioSpec>& specs, const SimSettings& settings) {
  SimReport report;
  for (const auto& s : specs) report.cells.push_back(run_scenario(s, settings));
  return report;
}

void write_summary_csv(const SimReport& report, std::ostream& out) {
  out << "cell,tau2,phi,c,parameter,model,bias,mse,mcse,mcse_mse,n_ok,n_failed\n";
  for (const auto& cell : report.cells)
    for (const auto& r : cell.rows)
      out << r.cell << ',' << format_full(r.tau2) << ',' << format_full(r.phi) << ',' << format_full(r.c) << ','
          << r.parameter << ',' << r.model << ',' << format_full(r.bias) << ',' << format_full(r.mse) << ','
          << format_full(r.mcse) << ',' << format_full(r.mcse_mse) << ',' << r.n_ok << ',' << r.n_failed << '\n';
}

void write_replicates_csv(const SimReport& report, std::ostream& out) {
  out << "cell,rep,model,ok,alpha_t,sigma2_t,phi,pred_bias,pred_mse,failure\n";
  for (const auto& cell : report.cells)
    for (const auto& r : cell.replicates)
      for (char model : {'B', 'C'}) {
        const ModelOutcome& m = model == 'B' ? r.binomial : r.linear;
        out << cell.spec.label() << ',' << r.rep << ',' << model << ',' << (m.ok ? 1 : 0) << ','
            << format_full(m.alpha_t) << ',' << format_full(m.sigma2_t) << ',' << format_full(m.phi) << ','
            << format_full(m.pred_bias) << ',' << format_full(m.pred_mse) << ',' << csv_field(m.failure) << '\n';
      }
}

std::string format_report_table(const SimReport& report) {
  std::vector<std::pair<double, double>> blocks;
  std::vector<double> cs;
  for (const auto& cell : report.cells) {
    const std::pair<double, double> key{cell.spec.tau2, cell.spec.phi};
    if (std::find(blocks.begin(), blocks.end(), key) == blocks.end()) blocks.push_back(key);
    if (std::find(cs.begin(), cs.end(), cell.spec.c) == cs.end()) cs.push_back(cell.spec.c);
  }
  auto entry = [](const SummaryRow* r) {
    if (!r || r->n_ok == 0) return std::string("-");
    return format_report(r->bias) + " (" + format_report(r->mse) + ")";
  };
  std::ostringstream out;
  for (const char* parameter : {"alpha_t", "sigma2_t", "phi", "prevalence"}) {
    out << parameter << '\n' << "tau2\tphi";
    for (double c : cs) out << "\tc=" << format_report(c) << " B\tc=" << format_report(c) << " C";
    out << '\n';
    for (const auto& [tau2, phi] : blocks) {
      out << format_report(tau2) << '\t' << format_report(phi);
      for (double c : cs) {
        const CellResult* found = nullptr;
        for (const auto& cell : report.cells)
          if (cell.spec.tau2 == tau2 && cell.spec.phi == phi && cell.spec.c == c) found = &cell;
        const std::string label = found ? found->spec.label() : "";
        out << '\t' << entry(found ? report.find(label, parameter, 'B') : nullptr) << '\t'
            << entry(found ? report.find(label, parameter, 'C') : nullptr);
      }
      out << '\n';
    }
    out << '\n';
  }
  int failed_b = 0, failed_c = 0, total = 0;
  for (const auto& cell : report.cells)
    for (const auto& r : cell.replicates) {
      ++total;
      failed_b += !r.binomial.ok;
      failed_c += !r.linear.ok;
    }
  out << "replicates: " << total << ", excluded B: " << failed_b << ", excluded C: " << failed_c << '\n';
  return out.str();
}

}  // namespace dichogeo
