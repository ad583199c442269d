#ifndef DICHOGEO_TYPES_HPP
#define DICHOGEO_TYPES_HPP

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace dichogeo {

/// Whether zero variances are accepted. Zero signal or nugget is only
/// meaningful for simulation and test limits; fitting never produces it.
enum class Degenerate { forbid, allow };

struct Location {
  double x = 0.0;
  double y = 0.0;
  std::string id;
};

/// Survey data stored individual-major: row k of every per-individual array
/// belongs to location `location_of[k]`.
///
/// Continuous outcomes, binary outcomes and thresholds are each optional, but
/// when present they have one entry per individual.
struct SurveyDataset {
  std::vector<Location> locations;
  std::vector<Eigen::Index> location_of;
  std::optional<Eigen::VectorXd> continuous;
  std::optional<Eigen::VectorXi> binary;
  Eigen::MatrixXd covariates;  // N x q, intercept not included
  std::vector<std::string> covariate_names;
  std::optional<Eigen::VectorXd> thresholds;

  Eigen::Index n_individuals() const { return static_cast<Eigen::Index>(location_of.size()); }
  Eigen::Index n_locations() const { return static_cast<Eigen::Index>(locations.size()); }
  Eigen::Index n_covariates() const { return covariates.cols(); }

  /// n_i for each location.
  Eigen::VectorXi counts() const;

  /// Throws SchemaError on any broken invariant. `min_locations` lets callers
  /// that need spatial pairs demand m >= 2.
  void validate(Eigen::Index min_locations = 1) const;
};

struct ModelParams {
  double alpha = 0.0;
  Eigen::VectorXd beta_gamma;
  double sigma2 = 1.0;
  double tau2 = 1.0;
  double phi = 0.1;

  void validate(Degenerate mode = Degenerate::forbid) const;
};

struct PrevalenceParams {
  double alpha_t = 0.0;
  Eigen::VectorXd beta_gamma_t;
  double sigma2_t = 1.0;
  double phi = 0.1;

  void validate(Degenerate mode = Degenerate::forbid) const;
};

struct CorrelationModel {
  enum class Family { exponential };
  Family family = Family::exponential;
  double phi = 0.1;

  double operator()(double u) const;
};

struct SplineSpec {
  std::vector<double> knots;

  void validate() const;
};

/// Intercept column followed by the covariates.
Eigen::MatrixXd design_matrix(const SurveyDataset& data);

/// True when thresholds exist and are not all equal.
bool thresholds_vary(const SurveyDataset& data);

/// Design of the probit linear predictor: intercept, covariates and, when
/// thresholds vary between individuals, the threshold itself as a last column.
Eigen::MatrixXd prevalence_design(const SurveyDataset& data);

/// Single threshold when all individuals share it.
std::optional<double> common_threshold(const SurveyDataset& data);

}  // namespace dichogeo

#endif  // DICHOGEO_TYPES_HPP
