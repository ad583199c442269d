#ifndef DICHOGEO_LIN_FIT_HPP
#define DICHOGEO_LIN_FIT_HPP

#include "dichogeo/fit_result.hpp"
#include "dichogeo/types.hpp"

#include <Eigen/Dense>

#include <optional>

namespace dichogeo {

/// Log density of the continuous outcomes and its gradient with respect to
/// (alpha, beta_gamma..., log sigma2, log tau2, log phi).
struct GaussianLoglik {
  double value = 0.0;
  Eigen::VectorXd gradient;
};

GaussianLoglik gaussian_loglik(const ModelParams& params, const SurveyDataset& data,
                               Degenerate mode = Degenerate::forbid);

struct LinearFitOptions {
  int max_iter = 500;
  double gtol = 1e-6;
  bool compute_obs_info = true;
  std::optional<double> fixed_phi;
  /// Threshold for the prevalence view; falls back to the dataset's common
  /// threshold, then to 0.
  std::optional<double> threshold;
};

/// OLS coefficients, half the residual variance to each of sigma2 and tau2,
/// phi at 10% of the largest inter-location distance.
ModelParams initial_linear_params(const SurveyDataset& data);

/// Maximum likelihood with the regression block profiled out by GLS and
/// BFGS over (log sigma2, log tau2, log phi).
FitResult fit_linear(const SurveyDataset& data, std::optional<ModelParams> init = std::nullopt,
                     const LinearFitOptions& options = {});

}  // namespace dichogeo

#endif  // DICHOGEO_LIN_FIT_HPP
