#include "dichogeo/lin_fit.hpp"

#include "dichogeo/bridge.hpp"
#include "dichogeo/covariance.hpp"
#include "dichogeo/errors.hpp"
#include "dichogeo/optimize.hpp"
#include "wald.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <string>

namespace dichogeo {

namespace {

constexpr double kLog2Pi = 1.83787706640934548356;

/// Quantities that stay fixed while the covariance parameters move.
struct LinearProblem {
  Eigen::MatrixXd design;
  Eigen::VectorXd y;
  Eigen::MatrixXd distances;  // individual level

  explicit LinearProblem(const SurveyDataset& data)
      : design(design_matrix(data)),
        y(*data.continuous),
        distances(expand_to_individuals(distance_matrix(data.locations), data.location_of)) {}

  Eigen::Index n() const { return y.size(); }
  Eigen::Index p() const { return design.cols(); }

  struct Evaluation {
    double value;
    Eigen::VectorXd gradient;  // regression block then the three log-variances
    Eigen::VectorXd beta;
  };

  /// Full log-likelihood at (beta, sigma2, tau2, phi). When `profile` is set
  /// beta is replaced by its GLS estimate first.
  Evaluation evaluate(Eigen::VectorXd beta, double sigma2, double tau2, double phi, bool profile,
                      Degenerate mode) const {
    const Eigen::MatrixXd corr = (-distances.array() / phi).exp().matrix();
    Eigen::MatrixXd cov = sigma2 * corr;
    cov.diagonal().array() += tau2;
    const CholeskyFactor factor = robust_cholesky(cov, mode, "outcome covariance");
    const auto lower = factor.lower.triangularView<Eigen::Lower>();

    if (profile) {
      const Eigen::MatrixXd wd = lower.solve(design);
      const Eigen::VectorXd wy = lower.solve(y);
      beta = (wd.transpose() * wd).ldlt().solve(wd.transpose() * wy);
    }
    const Eigen::VectorXd r = y - design * beta;
    const Eigen::VectorXd z = lower.solve(r);
    const Eigen::VectorXd a = lower.transpose().solve(z);

    Evaluation ev;
    ev.beta = beta;
    ev.value = -0.5 * (static_cast<double>(n()) * kLog2Pi + factor.log_determinant() + z.squaredNorm());

    const Eigen::MatrixXd linv = lower.solve(Eigen::MatrixXd::Identity(n(), n()));
    const Eigen::MatrixXd prec = linv.transpose() * linv;

    ev.gradient.resize(p() + 3);
    ev.gradient.head(p()) = design.transpose() * a;
    // d Sigma / d log sigma2 = sigma2 * corr
    const Eigen::MatrixXd d_sigma = sigma2 * corr;
    ev.gradient(p()) = 0.5 * (a.dot(d_sigma * a) - (prec.array() * d_sigma.array()).sum());
    // d Sigma / d log tau2 = tau2 * I
    ev.gradient(p() + 1) = 0.5 * tau2 * (a.squaredNorm() - prec.trace());
    // d Sigma / d log phi = sigma2 * corr * u / phi
    const Eigen::MatrixXd d_phi = (d_sigma.array() * distances.array() / phi).matrix();
    ev.gradient(p() + 2) = 0.5 * (a.dot(d_phi * a) - (prec.array() * d_phi.array()).sum());
    return ev;
  }
};

Eigen::VectorXd regression_vector(const ModelParams& params) {
  Eigen::VectorXd beta(1 + params.beta_gamma.size());
  beta << params.alpha, params.beta_gamma;
  return beta;
}

}  // namespace

GaussianLoglik gaussian_loglik(const ModelParams& params, const SurveyDataset& data, Degenerate mode) {
  if (!data.continuous) throw SchemaError("gaussian_loglik needs continuous outcomes");
  data.validate();
  params.validate(mode);
  if (params.beta_gamma.size() != data.n_covariates())
    throw SchemaError("coefficient count does not match covariate columns");
  const LinearProblem problem(data);
  auto ev = problem.evaluate(regression_vector(params), params.sigma2, params.tau2, params.phi, false, mode);
  return {ev.value, std::move(ev.gradient)};
}

ModelParams initial_linear_params(const SurveyDataset& data) {
  if (!data.continuous) throw SchemaError("initial_linear_params needs continuous outcomes");
  const Eigen::MatrixXd d = design_matrix(data);
  const Eigen::VectorXd& y = *data.continuous;
  const Eigen::VectorXd beta = d.colPivHouseholderQr().solve(y);
  const Eigen::VectorXd r = y - d * beta;
  const double dof = std::max<double>(1.0, static_cast<double>(y.size() - d.cols()));
  double s2 = r.squaredNorm() / dof;
  if (!(s2 > 0.0)) s2 = 1.0;

  ModelParams p;
  p.alpha = beta(0);
  p.beta_gamma = beta.tail(beta.size() - 1);
  p.sigma2 = 0.5 * s2;
  p.tau2 = 0.5 * s2;
  const double dmax = max_pairwise_distance(data.locations);
  p.phi = dmax > 0.0 ? 0.1 * dmax : 1.0;
  return p;
}

FitResult fit_linear(const SurveyDataset& data, std::optional<ModelParams> init, const LinearFitOptions& options) {
  if (!data.continuous) throw SchemaError("fit_linear needs continuous outcomes");
  data.validate();
  const LinearProblem problem(data);
  const Eigen::Index p = problem.p();
  if (problem.n() < p + 3)
    throw SchemaError("fit_linear needs at least " + std::to_string(p + 3) + " observations");

  ModelParams start = init ? *init : initial_linear_params(data);
  if (options.fixed_phi) start.phi = *options.fixed_phi;
  start.validate();
  if (start.beta_gamma.size() != data.n_covariates())
    throw SchemaError("initial coefficient count does not match covariate columns");

  const bool free_phi = !options.fixed_phi.has_value();
  const Eigen::Index k = free_phi ? 3 : 2;
  auto unpack = [&](const Eigen::VectorXd& theta) {
    return std::array<double, 3>{std::exp(theta(0)), std::exp(theta(1)), free_phi ? std::exp(theta(2)) : start.phi};
  };

  Eigen::VectorXd beta_hat = regression_vector(start);
  const Objective profile = [&](const Eigen::VectorXd& theta, Eigen::VectorXd* grad) {
    const auto [s2, t2, ph] = unpack(theta);
    try {
      auto ev = problem.evaluate(beta_hat, s2, t2, ph, true, Degenerate::forbid);
      beta_hat = ev.beta;
      if (grad) *grad = ev.gradient.segment(p, k);
      return ev.value;
    } catch (const ConditioningError&) {
      if (grad) grad->setConstant(k, std::numeric_limits<double>::quiet_NaN());
      return -std::numeric_limits<double>::infinity();
    }
  };

  Eigen::VectorXd theta0(k);
  theta0(0) = std::log(start.sigma2);
  theta0(1) = std::log(start.tau2);
  if (free_phi) theta0(2) = std::log(start.phi);

  OptimizerOptions oo;
  oo.max_iter = options.max_iter;
  oo.gtol = options.gtol;
  const OptimizerResult opt = maximize_bfgs(profile, theta0, oo);

  const auto [s2, t2, ph] = unpack(opt.x);
  const auto final_ev = problem.evaluate(beta_hat, s2, t2, ph, true, Degenerate::forbid);

  FitResult fit;
  fit.model = ModelKind::linear;
  ModelParams est;
  est.alpha = final_ev.beta(0);
  est.beta_gamma = final_ev.beta.tail(p - 1);
  est.sigma2 = s2;
  est.tau2 = t2;
  est.phi = ph;
  fit.continuous = est;

  const double c = options.threshold ? *options.threshold : common_threshold(data).value_or(0.0);
  const bool vary = thresholds_vary(data) && !options.threshold;
  fit.prevalence = vary ? to_prevalence_scale_threshold_covariate(est) : to_prevalence_scale(est, c);

  const Eigen::Index nw = p + k;
  fit.working.resize(nw);
  fit.working.head(p) = final_ev.beta;
  fit.working.tail(k) = opt.x;
  fit.working_names = detail::regression_names(data, false);
  fit.working_names.insert(fit.working_names.end(), {"log_sigma2", "log_tau2"});
  if (free_phi) fit.working_names.push_back("log_phi");

  fit.loglik = final_ev.value;
  fit.converged = opt.converged;
  fit.iterations = opt.iterations;
  fit.gradient_norm = final_ev.gradient.head(p + k).lpNorm<Eigen::Infinity>();
  fit.message = opt.message;
  fit.trace = opt.trace;

  std::optional<Eigen::MatrixXd> cov;
  if (options.compute_obs_info) {
    const Objective full = [&](const Eigen::VectorXd& w, Eigen::VectorXd* grad) {
      const Eigen::VectorXd th = w.tail(k);
      const auto [a2, b2, c2] = unpack(th);
      auto ev = problem.evaluate(w.head(p), a2, b2, c2, false, Degenerate::forbid);
      if (grad) {
        grad->resize(nw);
        grad->head(p) = ev.gradient.head(p);
        grad->tail(k) = ev.gradient.segment(p, k);
      }
      return ev.value;
    };
    fit.obs_info = -hessian_from_gradient(full, fit.working, 1e-5);
    cov = detail::invert_information(fit.obs_info);
    if (!cov) fit.message += "; observed information not positive definite";
  }

  // Continuous-scale estimates.
  for (Eigen::Index j = 0; j < p; ++j)
    fit.estimates.push_back(detail::delta_estimate(fit.working_names[j], Scale::continuous, fit.working(j),
                                                   detail::unit(nw, j), cov, false));
  fit.estimates.push_back(
      detail::delta_estimate("sigma2", Scale::continuous, opt.x(0), detail::unit(nw, p), cov, true));
  fit.estimates.push_back(
      detail::delta_estimate("tau2", Scale::continuous, opt.x(1), detail::unit(nw, p + 1), cov, true));
  if (free_phi)
    fit.estimates.push_back(
        detail::delta_estimate("phi", Scale::continuous, opt.x(2), detail::unit(nw, p + 2), cov, true));

  // Prevalence scale: alpha_t = (c - alpha)/tau, so d/dlog tau2 = -alpha_t/2.
  const Eigen::Index ltau = p + 1;
  const double tau = std::sqrt(t2);
  for (Eigen::Index j = 0; j < p; ++j) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(nw);
    g(j) = -1.0 / tau;
    const double value = j == 0 ? fit.prevalence.alpha_t : fit.prevalence.beta_gamma_t(j - 1);
    g(ltau) = -0.5 * value;
    fit.estimates.push_back(detail::delta_estimate(fit.working_names[j], Scale::prevalence, value, g, cov, false));
  }
  if (vary) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(nw);
    g(ltau) = -0.5 / tau;
    fit.estimates.push_back(detail::delta_estimate("threshold", Scale::prevalence, 1.0 / tau, g, cov, false));
  }
  {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(nw);
    g(p) = 1.0;
    g(ltau) = -1.0;
    fit.estimates.push_back(
        detail::delta_estimate("sigma2", Scale::prevalence, opt.x(0) - opt.x(1), g, cov, true));
  }
  if (free_phi)
    fit.estimates.push_back(
        detail::delta_estimate("phi", Scale::prevalence, opt.x(2), detail::unit(nw, p + 2), cov, true));
  fit.diagnostics["threshold_coefficient_implied"] = 1.0 / tau;
  return fit;
}

}  // namespace dichogeo
