#include "dichogeo/bin_fit.hpp"

#include "dichogeo/covariance.hpp"
#include "dichogeo/errors.hpp"
#include "dichogeo/normal.hpp"
#include "dichogeo/optimize.hpp"
#include "dichogeo/random.hpp"
#include "wald.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace dichogeo {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

Eigen::MatrixXd lower_factor(const Eigen::MatrixXd& a, const char* what) {
  const Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) throw NumericalError(std::string(what) + " is not positive definite");
  return llt.matrixL();
}

/// N(0, 1) truncated to (a, inf). Inversion of the upper tail, which stays
/// accurate far out; exponential rejection beyond a = 8.
double truncated_above(double a, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (a <= 8.0) {
    const double u = 1.0 - unif(rng);  // (0, 1]
    return -norm_quantile(u * norm_cdf(-a));
  }
  for (;;) {
    const double x = a - std::log(1.0 - unif(rng)) / a;
    if (unif(rng) <= std::exp(-0.5 * (x - a) * (x - a))) return x;
  }
}

/// Pieces of log f(y~, s; theta) shared by the value and its gradient.
struct JointTerms {
  Eigen::MatrixXd d;
  Eigen::VectorXd offset, sign;
  Eigen::MatrixXd k, lk, z;  // z = L_K^-1 S
  Eigen::VectorXd log_joint;

  JointTerms(const PrevalenceParams& params, const SurveyDataset& data, const Eigen::MatrixXd& s) {
    if (!data.binary) throw SchemaError("Monte Carlo likelihood needs binary outcomes");
    params.validate();
    d = prevalence_design(data);
    if (params.beta_gamma_t.size() != d.cols() - 1)
      throw SchemaError("prevalence coefficients do not match the design");
    const Eigen::Index m = data.n_locations(), n = d.rows();
    if (s.rows() != m) throw SchemaError("latent draws do not match the dataset");
    Eigen::VectorXd theta(d.cols());
    theta << params.alpha_t, params.beta_gamma_t;
    offset = d * theta;
    sign = (2 * data.binary->array() - 1).cast<double>().matrix();
    k = params.sigma2_t * exp_correlation(distance_matrix(data.locations), params.phi);
    lk = lower_factor(k, "latent covariance");
    z = lk.triangularView<Eigen::Lower>().solve(s);
    const double log_det = lk.diagonal().array().log().sum();
    log_joint.resize(s.cols());
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      double g = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) g += log_norm_cdf(sign(i) * (offset(i) + s(data.location_of[i], j)));
      log_joint(j) = g - 0.5 * z.col(j).squaredNorm() - log_det - static_cast<double>(m) * kHalfLog2Pi;
    }
  }
};

}  // namespace

void McmlSettings::validate() const {
  if (n_samples < 100) throw ConfigError("mcml n_samples must be at least 100");
  if (burn_in < 0) throw ConfigError("mcml burn_in must not be negative");
  if (thin < 1) throw ConfigError("mcml thin must be at least 1");
  if (iterations < 1) throw ConfigError("mcml iterations must be at least 1");
}

LatentDraws sample_latent_posterior(const PrevalenceParams& params, const SurveyDataset& data,
                                    const McmlSettings& settings, std::uint64_t seed) {
  settings.validate();
  const LaplaceApproximation lap = laplace_approximation(params, data);
  const Eigen::VectorXd offset = prevalence_offsets(params, data);
  const Eigen::VectorXi& y = *data.binary;
  const Eigen::Index m = data.n_locations(), n = offset.size();

  // s | u ~ N(V r, V) with V = (K^-1 + N)^-1 = K - K N^1/2 (I + N^1/2 K N^1/2)^-1 N^1/2 K,
  // N = diag(n_i) and r_i the summed u_ij - mu~_ij at location i.
  const Eigen::VectorXd root_n = data.counts().cast<double>().cwiseSqrt();
  Eigen::MatrixXd b = root_n.asDiagonal() * lap.k * root_n.asDiagonal();
  b.diagonal().array() += 1.0;
  const Eigen::MatrixXd lb = lower_factor(b, "Gibbs system");
  const Eigen::MatrixXd h = lb.triangularView<Eigen::Lower>().solve(root_n.asDiagonal() * lap.k);
  Eigen::MatrixXd v = lap.k - h.transpose() * h;
  v = 0.5 * (v + v.transpose()).eval();
  const CholeskyFactor lv = robust_cholesky(v, Degenerate::allow, "Gibbs conditional covariance");

  Rng rng = make_rng(seed);
  std::normal_distribution<double> normal;
  Eigen::VectorXd s = lap.mode, r(m), e(m);
  LatentDraws out;
  out.s.resize(m, settings.n_samples);
  const long total = static_cast<long>(settings.burn_in) + static_cast<long>(settings.n_samples) * settings.thin;
  for (long it = 0, kept = 0; it < total; ++it) {
    r.setZero();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mean = offset(i) + s(data.location_of[i]);
      // u > 0 when y = 1, u < 0 when y = 0; residual u - mu~ = s + e.
      const double e_ij = y(i) == 1 ? truncated_above(-mean, rng) : -truncated_above(mean, rng);
      r(data.location_of[i]) += s(data.location_of[i]) + e_ij;
    }
    for (Eigen::Index l = 0; l < m; ++l) e(l) = normal(rng);
    s = v * r + lv.lower.triangularView<Eigen::Lower>() * e;
    if (it >= settings.burn_in && (it - settings.burn_in) % settings.thin == settings.thin - 1)
      out.s.col(kept++) = s;
  }
  out.log_joint = JointTerms(params, data, out.s).log_joint;
  return out;
}

double mcml_loglik_ratio(const PrevalenceParams& params, const SurveyDataset& data, const LatentDraws& draws,
                         Eigen::VectorXd* grad, double* ess) {
  if (draws.log_joint.size() != draws.s.cols()) throw SchemaError("latent draws are inconsistent");
  const JointTerms t(params, data, draws.s);
  const Eigen::Index m = data.n_locations(), n = t.d.rows(), p = t.d.cols(), draws_n = draws.s.cols();

  const Eigen::VectorXd lw = t.log_joint - draws.log_joint;
  const double top = lw.maxCoeff();
  if (!std::isfinite(top)) throw NumericalError("mcml: no draw has positive weight");
  const Eigen::VectorXd e = (lw.array() - top).exp().matrix();
  const double total = e.sum();
  const Eigen::VectorXd w = e / total;
  if (ess) *ess = 1.0 / w.squaredNorm();
  const double value = top + std::log(total / static_cast<double>(draws_n));
  if (!grad) return value;

  grad->resize(p + 2);
  Eigen::VectorXd g_ind = Eigen::VectorXd::Zero(n);
  for (Eigen::Index j = 0; j < draws_n; ++j) {
    if (w(j) == 0.0) continue;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double x = t.sign(i) * (t.offset(i) + draws.s(data.location_of[i], j));
      g_ind(i) += w(j) * t.sign(i) * inv_mills(x);
    }
  }
  grad->head(p) = t.d.transpose() * g_ind;
  (*grad)(p) = 0.5 * w.dot(t.z.colwise().squaredNorm().transpose()) - 0.5 * static_cast<double>(m);
  // d log f(s; K) / d log phi = -tr(K^-1 dK)/2 + a' dK a / 2 with a = K^-1 s.
  const Eigen::MatrixXd a = t.lk.transpose().triangularView<Eigen::Upper>().solve(t.z);
  const Eigen::MatrixXd aw = a * w.cwiseSqrt().asDiagonal();
  const Eigen::MatrixXd k_inv = t.lk.transpose().triangularView<Eigen::Upper>().solve(
      t.lk.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(m, m)));
  const Eigen::MatrixXd dk = t.k.cwiseProduct(distance_matrix(data.locations)) / params.phi;
  (*grad)(p + 1) = 0.5 * dk.cwiseProduct(aw * aw.transpose() - k_inv).sum();
  return value;
}

FitResult fit_binomial_mcml(const SurveyDataset& data, std::optional<PrevalenceParams> init,
                            const McmlSettings& mcml, const BinomialFitOptions& options) {
  mcml.validate();
  BinomialFitOptions laplace_options = options;
  laplace_options.compute_obs_info = false;
  FitResult fit = fit_binomial(data, init, {}, laplace_options);
  if (fit.diagnostics.count("separation")) return fit;
  fit.diagnostics["laplace_loglik_at_laplace_fit"] = fit.loglik;

  const bool vary = thresholds_vary(data);
  const Eigen::Index p = prevalence_design(data).cols();
  const bool free_phi = !options.fixed_phi.has_value();
  const Eigen::Index nw = p + (free_phi ? 2 : 1);
  const double phi_fixed = fit.prevalence.phi;
  auto unpack = [&](const Eigen::VectorXd& x) {
    PrevalenceParams q;
    q.alpha_t = x(0);
    q.beta_gamma_t = x.segment(1, p - 1);
    q.sigma2_t = std::exp(x(p));
    q.phi = free_phi ? std::exp(x(p + 1)) : phi_fixed;
    return q;
  };

  Eigen::VectorXd x = fit.working;
  LatentDraws draws;
  OptimizerResult opt;
  int iterations = fit.iterations;
  const Objective objective = [&](const Eigen::VectorXd& w, Eigen::VectorXd* grad) {
    try {
      const PrevalenceParams q = unpack(w);
      if (!std::isfinite(q.sigma2_t) || !(q.sigma2_t > 0.0) || !std::isfinite(q.phi) || !(q.phi > 0.0))
        throw ParameterDomainError("overflow");
      Eigen::VectorXd full;
      const double v = mcml_loglik_ratio(q, data, draws, grad ? &full : nullptr);
      if (grad) *grad = full.head(nw);
      return v;
    } catch (const NumericalError&) {
    } catch (const ParameterDomainError&) {
    }
    if (grad) grad->setConstant(w.size(), std::numeric_limits<double>::quiet_NaN());
    return -std::numeric_limits<double>::infinity();
  };

  OptimizerOptions oo;
  oo.max_iter = options.max_iter;
  oo.gtol = options.gtol;
  oo.max_step = 1.0;
  for (int round = 0; round < mcml.iterations; ++round) {
    try {
      draws = sample_latent_posterior(unpack(x), data, mcml, derive_seed(mcml.seed, static_cast<std::uint64_t>(round)));
    } catch (const std::exception& e) {
      fit.converged = false;
      fit.message = std::string("mcml: sampling the latent field failed: ") + e.what();
      return fit;
    }
    opt = maximize_bfgs(objective, x, oo);
    iterations += opt.iterations;
    x = opt.x;
  }

  double ess = 0.0;
  fit.working = x;
  fit.prevalence = unpack(x);
  fit.converged = opt.converged;
  fit.iterations = iterations;
  fit.gradient_norm = opt.gradient.size() ? opt.gradient.lpNorm<Eigen::Infinity>() : 0.0;
  fit.message = opt.message;
  fit.trace = opt.trace;
  fit.diagnostics["mcml_final_ratio"] = opt.value;
  try {
    mcml_loglik_ratio(fit.prevalence, data, draws, nullptr, &ess);
    fit.loglik = integrated_loglik(fit.prevalence, data);
  } catch (const std::exception&) {
    fit.loglik = std::numeric_limits<double>::quiet_NaN();
  }
  fit.diagnostics["mcml_ess"] = ess;

  std::optional<Eigen::MatrixXd> cov;
  fit.obs_info.resize(0, 0);
  fit.estimates.clear();
  if (options.compute_obs_info && std::isfinite(opt.value)) {
    fit.obs_info = -hessian_from_gradient(objective, x, 1e-5);
    fit.obs_info = 0.5 * (fit.obs_info + fit.obs_info.transpose()).eval();
    cov = detail::invert_information(fit.obs_info);
    if (!cov) fit.message += "; observed information not positive definite";
  }
  for (Eigen::Index j = 0; j < p; ++j)
    fit.estimates.push_back(
        detail::delta_estimate(fit.working_names[j], Scale::prevalence, x(j), detail::unit(nw, j), cov, false));
  fit.estimates.push_back(detail::delta_estimate("sigma2", Scale::prevalence, x(p), detail::unit(nw, p), cov, true));
  if (free_phi)
    fit.estimates.push_back(
        detail::delta_estimate("phi", Scale::prevalence, x(p + 1), detail::unit(nw, p + 1), cov, true));
  if (vary) fit.diagnostics["threshold_coefficient"] = x(p - 1);
  return fit;
}

}  // namespace dichogeo
