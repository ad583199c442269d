#include "dichogeo/predict.hpp"

#include "dichogeo/bin_fit.hpp"
#include "dichogeo/covariance.hpp"
#include "dichogeo/errors.hpp"
#include "dichogeo/normal.hpp"
#include "dichogeo/parallel.hpp"
#include "dichogeo/random.hpp"

#include <algorithm>
#include <cmath>

namespace dichogeo {

namespace {

LatentPosterior linear_posterior(const FitResult& fit, const SurveyDataset& data) {
  if (!fit.continuous) throw SchemaError("linear fit carries no continuous-scale parameters");
  if (!data.continuous) throw SchemaError("linear prediction needs the continuous outcomes");
  data.validate();
  const ModelParams& p = *fit.continuous;
  p.validate();
  const Eigen::Index m = data.n_locations();
  Eigen::VectorXd beta(1 + p.beta_gamma.size());
  beta << p.alpha, p.beta_gamma;
  if (beta.size() != 1 + data.n_covariates()) throw SchemaError("fit and dataset differ in covariates");
  const Eigen::VectorXd resid = *data.continuous - design_matrix(data) * beta;

  // S enters only through the location means, observed with noise tau2 / n_i.
  // On the S~ = -S / tau scale that noise is 1 / n_i.
  const double tau = std::sqrt(p.tau2);
  Eigen::VectorXd ybar = Eigen::VectorXd::Zero(m);
  const Eigen::VectorXi counts = data.counts();
  for (Eigen::Index k = 0; k < data.n_individuals(); ++k) ybar(data.location_of[k]) += resid(k);
  ybar.array() /= counts.cast<double>().array();
  ybar /= -tau;

  LatentPosterior post;
  post.params = fit.prevalence;
  post.sites = data.locations;
  Eigen::MatrixXd c = (p.sigma2 / p.tau2) * exp_correlation(distance_matrix(data.locations), p.phi);
  c.diagonal().array() += counts.cast<double>().cwiseInverse().array();
  const CholeskyFactor f = robust_cholesky(c, Degenerate::forbid, "kriging system");
  post.q = f.lower.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(m, m));
  post.weights = post.q.transpose() * (post.q * ybar);
  return post;
}

LatentPosterior ep_posterior(const FitResult& fit, const SurveyDataset& data,
                             const LatentIntegrationSettings& settings) {
  const EpApproximation ep = ep_approximation(fit.prevalence, data, settings);
  LatentPosterior post;
  post.params = fit.prevalence;
  post.sites = data.locations;
  post.weights = ep.b;
  post.q = ep.b_lower.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd(ep.t.cwiseSqrt().asDiagonal()));
  return post;
}

LatentPosterior binomial_posterior(const FitResult& fit, const SurveyDataset& data) {
  const LaplaceApproximation lap = laplace_approximation(fit.prevalence, data);
  LatentPosterior post;
  post.params = fit.prevalence;
  post.sites = data.locations;
  post.weights = lap.a;
  // (K + W^-1)^-1 = W^1/2 B^-1 W^1/2 with B = L L'.
  post.q = lap.b_lower.triangularView<Eigen::Lower>().solve(
      Eigen::MatrixXd(lap.w.array().sqrt().matrix().asDiagonal()));
  return post;
}

}  // namespace

LatentPosterior latent_posterior(const FitResult& fit, const SurveyDataset& data) {
  return fit.model == ModelKind::linear ? linear_posterior(fit, data) : binomial_posterior(fit, data);
}

LatentPosterior latent_posterior(const FitResult& fit, const SurveyDataset& data,
                                 const LatentIntegrationSettings& settings) {
  if (fit.model == ModelKind::binomial && settings.mode == LatentIntegrationSettings::Mode::ep)
    return ep_posterior(fit, data, settings);
  return latent_posterior(fit, data);
}

ConditionalGaussian conditional_latent(const LatentPosterior& post, std::span<const Location> grid) {
  const auto& p = post.params;
  const auto m = static_cast<Eigen::Index>(post.sites.size());
  if (post.weights.size() != m || post.q.rows() != m || post.q.cols() != m)
    throw SchemaError("latent posterior has inconsistent dimensions");
  const Eigen::MatrixXd k_star = p.sigma2_t * exp_correlation(cross_distances(post.sites, grid), p.phi);
  const Eigen::MatrixXd v = post.q * k_star;
  ConditionalGaussian out;
  out.mean = k_star.transpose() * post.weights;
  out.cov = p.sigma2_t * exp_correlation(distance_matrix(grid), p.phi);
  out.cov.noalias() -= v.transpose() * v;
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  // Rounding can leave tiny negative variances at data locations.
  out.cov.diagonal() = out.cov.diagonal().cwiseMax(0.0);
  return out;
}

ConditionalGaussian conditional_latent(const FitResult& fit, const SurveyDataset& data,
                                       std::span<const Location> grid) {
  return conditional_latent(latent_posterior(fit, data), grid);
}

double profile_predictor(const PrevalenceParams& params, const Eigen::VectorXd& profile) {
  if (profile.size() != params.beta_gamma_t.size())
    throw SchemaError("covariate profile has " + std::to_string(profile.size()) + " entries, the fit has " +
                      std::to_string(params.beta_gamma_t.size()));
  return params.alpha_t + profile.dot(params.beta_gamma_t);
}

Eigen::MatrixXd sample_prevalence(const ConditionalGaussian& cond, double mu, int n, std::uint64_t seed) {
  if (n < 1) throw ParameterDomainError("need at least one conditional sample");
  const Eigen::Index g = cond.mean.size();
  Rng rng = make_rng(seed);
  const Eigen::MatrixXd z = standard_normal(g, n, rng);
  Eigen::MatrixXd s;
  if (cond.cov.cwiseAbs().maxCoeff() == 0.0) {
    s = Eigen::MatrixXd::Zero(g, n);
  } else {
    const CholeskyFactor f = robust_cholesky(cond.cov, Degenerate::allow, "conditional covariance");
    s = f.lower.triangularView<Eigen::Lower>() * z;
  }
  s.colwise() += cond.mean;
  return s.unaryExpr([mu](double x) { return norm_cdf(mu + x); });
}

Eigen::VectorXd exceedance_prob(const Eigen::MatrixXd& samples, double t) {
  if (!(t > 0.0 && t < 1.0)) throw ParameterDomainError("exceedance threshold must lie in (0, 1)");
  if (samples.cols() == 0) throw ParameterDomainError("no samples");
  return (samples.array() > t).cast<double>().rowwise().mean();
}

void PredictionSettings::validate() const {
  if (n_cond_samples < 1) throw ConfigError("n_cond_samples must be positive");
  if (tile_size < 1) throw ConfigError("tile_size must be positive");
  if (exceedance_threshold && !(*exceedance_threshold > 0.0 && *exceedance_threshold < 1.0))
    throw ConfigError("exceedance threshold must lie in (0, 1)");
}

PredictionGrid predict_prevalence(const LatentPosterior& post, std::span<const Location> grid,
                                  const Eigen::VectorXd& profile, const PredictionSettings& settings) {
  settings.validate();
  const double mu = profile_predictor(post.params, profile);
  const auto g = static_cast<Eigen::Index>(grid.size());
  PredictionGrid out;
  out.grid_locations.assign(grid.begin(), grid.end());
  out.covariate_profile = profile;
  out.threshold = settings.exceedance_threshold;
  out.n_cond_samples = settings.n_cond_samples;
  out.prevalence_mean.resize(g);
  if (out.threshold) out.exceedance.resize(g);

  const Eigen::Index tile = settings.tile_size;
  const auto n_tiles = static_cast<std::size_t>((g + tile - 1) / tile);
  parallel_for(n_tiles, settings.workers, [&](std::size_t t) {
    const Eigen::Index start = static_cast<Eigen::Index>(t) * tile;
    const Eigen::Index len = std::min(tile, g - start);
    const ConditionalGaussian cond = conditional_latent(post, grid.subspan(start, len));
    const Eigen::MatrixXd samples =
        sample_prevalence(cond, mu, settings.n_cond_samples, derive_seed(settings.seed, t));
    out.prevalence_mean.segment(start, len) = samples.rowwise().mean();
    if (out.threshold) out.exceedance.segment(start, len) = exceedance_prob(samples, *out.threshold);
  });
  return out;
}

PredictionGrid predict_prevalence(const FitResult& fit, const SurveyDataset& data, std::span<const Location> grid,
                                  const Eigen::VectorXd& profile, const PredictionSettings& settings) {
  return predict_prevalence(latent_posterior(fit, data), grid, profile, settings);
}

}  // namespace dichogeo
