#include "dichogeo/simulate.hpp"

#include "dichogeo/covariance.hpp"
#include "dichogeo/errors.hpp"
#include "dichogeo/random.hpp"

namespace dichogeo {

Eigen::VectorXd simulate_gp(std::span<const Location> locations, double sigma2, double phi, std::uint64_t seed,
                            Degenerate mode) {
  ModelParams check;
  check.sigma2 = sigma2;
  check.phi = phi;
  check.validate(mode);
  const Eigen::MatrixXd cov = sigma2 * exp_correlation(distance_matrix(locations), phi);
  const CholeskyFactor factor = robust_cholesky(cov, mode, "GP covariance");
  Rng rng = make_rng(seed, 0);
  const Eigen::VectorXd z = standard_normal(static_cast<Eigen::Index>(locations.size()), rng);
  return factor.lower * z;
}

SurveyDesign SurveyDesign::intercept_only(std::vector<Location> locations, int n_per_location, ModelParams params) {
  SurveyDesign d;
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(locations.size()); ++i)
    for (int j = 0; j < n_per_location; ++j) d.location_of.push_back(i);
  d.locations = std::move(locations);
  d.covariates = Eigen::MatrixXd(static_cast<Eigen::Index>(d.location_of.size()), 0);
  d.params = std::move(params);
  return d;
}

SimulatedSurvey simulate_survey(const SurveyDesign& design, std::uint64_t seed, Degenerate mode) {
  const auto n = static_cast<Eigen::Index>(design.location_of.size());
  if (design.covariates.rows() != n)
    throw SchemaError("design matrix has " + std::to_string(design.covariates.rows()) + " rows for " +
                      std::to_string(n) + " individuals");
  if (design.params.beta_gamma.size() != design.covariates.cols())
    throw SchemaError("coefficient count does not match covariate columns");
  design.params.validate(mode);

  SimulatedSurvey out;
  out.data.locations = design.locations;
  out.data.location_of = design.location_of;
  out.data.covariates = design.covariates;
  out.data.covariate_names = design.covariate_names;
  out.data.validate();

  out.latent = simulate_gp(design.locations, design.params.sigma2, design.params.phi, seed, mode);
  Rng nugget_rng = make_rng(seed, 1);
  const Eigen::VectorXd z = standard_normal(n, nugget_rng) * std::sqrt(design.params.tau2);

  Eigen::VectorXd y(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    double mu = design.params.alpha;
    if (design.covariates.cols() > 0) mu += design.covariates.row(k).dot(design.params.beta_gamma);
    y(k) = mu + out.latent(design.location_of[k]) + z(k);
  }
  out.data.continuous = std::move(y);
  return out;
}

SurveyDataset dichotomize(const SurveyDataset& data, double threshold) {
  return dichotomize(data, Eigen::VectorXd::Constant(data.n_individuals(), threshold));
}

SurveyDataset dichotomize(const SurveyDataset& data, const Eigen::VectorXd& thresholds) {
  if (!data.continuous) throw SchemaError("dichotomize needs continuous outcomes");
  if (thresholds.size() != data.n_individuals())
    throw SchemaError("missing threshold: got " + std::to_string(thresholds.size()) + " for " +
                      std::to_string(data.n_individuals()) + " individuals");
  if (!thresholds.allFinite()) throw SchemaError("non-finite threshold");
  SurveyDataset out = data;
  out.binary = (data.continuous->array() < thresholds.array()).cast<int>().matrix();
  out.thresholds = thresholds;
  return out;
}

}  // namespace dichogeo
