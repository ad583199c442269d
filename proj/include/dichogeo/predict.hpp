#ifndef DICHOGEO_PREDICT_HPP
#define DICHOGEO_PREDICT_HPP

#include "dichogeo/bin_fit.hpp"
#include "dichogeo/fit_result.hpp"
#include "dichogeo/types.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace dichogeo {

/// Gaussian approximation to S~ at the data locations given the outcomes,
/// in the form needed for kriging:
///   E[S~(grid)]   = K*' weights
///   Var[S~(grid)] = K** - (q K*)' (q K*)
/// with K* the prior cross covariance between data locations and grid.
struct LatentPosterior {
  PrevalenceParams params;
  std::vector<Location> sites;
  Eigen::VectorXd weights;
  Eigen::MatrixXd q;
};

/// Linear model: exact Gaussian conditional given the location means of the
/// residuals, mapped to S~ = -S / tau. Binomial model: the Laplace Gaussian.
LatentPosterior latent_posterior(const FitResult& fit, const SurveyDataset& data);
/// As above, but with the EP Gaussian for a binomial fit when settings ask for EP.
LatentPosterior latent_posterior(const FitResult& fit, const SurveyDataset& data,
                                 const LatentIntegrationSettings& settings);

struct ConditionalGaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

ConditionalGaussian conditional_latent(const LatentPosterior& post, std::span<const Location> grid);
ConditionalGaussian conditional_latent(const FitResult& fit, const SurveyDataset& data,
                                       std::span<const Location> grid);

/// alpha~ + profile' beta~. The profile excludes the intercept and, when the
/// fit carries a threshold coefficient, ends with the threshold value.
double profile_predictor(const PrevalenceParams& params, const Eigen::VectorXd& profile);

/// n draws of Phi(mu + S~) per grid point (rows) from the conditional.
Eigen::MatrixXd sample_prevalence(const ConditionalGaussian& cond, double mu, int n, std::uint64_t seed);

/// Fraction of samples per row strictly above t, t in (0, 1).
Eigen::VectorXd exceedance_prob(const Eigen::MatrixXd& samples, double t);

struct PredictionSettings {
  int n_cond_samples = 2000;
  std::uint64_t seed = 1;
  int tile_size = 2500;
  int workers = 1;
  std::optional<double> exceedance_threshold;

  void validate() const;
};

struct PredictionGrid {
  std::vector<Location> grid_locations;
  Eigen::VectorXd covariate_profile;
  Eigen::VectorXd prevalence_mean;
  Eigen::VectorXd exceedance;  // empty without a threshold
  std::optional<double> threshold;
  int n_cond_samples = 0;
};

/// Tiles of at most tile_size grid points, each sampled from its own
/// conditional with seed derived from (seed, tile index).
PredictionGrid predict_prevalence(const LatentPosterior& post, std::span<const Location> grid,
                                  const Eigen::VectorXd& profile, const PredictionSettings& settings = {});
PredictionGrid predict_prevalence(const FitResult& fit, const SurveyDataset& data, std::span<const Location> grid,
                                  const Eigen::VectorXd& profile, const PredictionSettings& settings = {});

}  // namespace dichogeo

#endif  // DICHOGEO_PREDICT_HPP
