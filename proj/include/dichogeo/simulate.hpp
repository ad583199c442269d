#ifndef DICHOGEO_SIMULATE_HPP
#define DICHOGEO_SIMULATE_HPP

#include "dichogeo/types.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

namespace dichogeo {

/// Zero-mean Gaussian process values at `locations`: L z with L the lower
/// factor of sigma2 * rho(|x_i - x_j|). Uses stream 0 of `seed`.
Eigen::VectorXd simulate_gp(std::span<const Location> locations, double sigma2, double phi, std::uint64_t seed,
                            Degenerate mode = Degenerate::forbid);

/// Where and how to simulate: locations, individual-to-location map, the
/// covariate rows (intercept excluded) and the true parameters.
struct SurveyDesign {
  std::vector<Location> locations;
  std::vector<Eigen::Index> location_of;
  Eigen::MatrixXd covariates;
  std::vector<std::string> covariate_names;
  ModelParams params;

  /// n_per_location individuals at each location, no covariates.
  static SurveyDesign intercept_only(std::vector<Location> locations, int n_per_location, ModelParams params);
};

struct SimulatedSurvey {
  SurveyDataset data;
  Eigen::VectorXd latent;  // S(x_i), one per location
};

/// y_ij = alpha + covariates_ij' beta_gamma + S(x_i) + Z_ij. S uses stream 0
/// of `seed`, the nugget Z stream 1.
SimulatedSurvey simulate_survey(const SurveyDesign& design, std::uint64_t seed,
                                Degenerate mode = Degenerate::forbid);

/// y~ = 1 if y < c else 0, with a common threshold. Thresholds are kept.
SurveyDataset dichotomize(const SurveyDataset& data, double threshold);

/// Per-individual thresholds c_ij.
SurveyDataset dichotomize(const SurveyDataset& data, const Eigen::VectorXd& thresholds);

}  // namespace dichogeo

#endif  // DICHOGEO_SIMULATE_HPP
