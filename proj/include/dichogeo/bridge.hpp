#ifndef DICHOGEO_BRIDGE_HPP
#define DICHOGEO_BRIDGE_HPP

#include "dichogeo/types.hpp"

#include <cmath>

namespace dichogeo {

/// Continuous-scale parameters to the probit model for y~ = 1{y < c}:
/// alpha_t = (c - alpha)/tau, beta_t = -beta/tau, sigma2_t = sigma2/tau2,
/// phi unchanged.
PrevalenceParams to_prevalence_scale(const ModelParams& params, double c);

/// Variant for individual thresholds carried as a covariate: alpha_t =
/// -alpha/tau and a trailing coefficient 1/tau for the threshold column.
PrevalenceParams to_prevalence_scale_threshold_covariate(const ModelParams& params);

/// Picks the variant matching the dataset's thresholds (common value, varying
/// values, or none, which is treated as c = 0).
PrevalenceParams to_prevalence_scale(const ModelParams& params, const SurveyDataset& data);

/// alpha = c - tau * alpha_t.
inline double intercept_from_prevalence(double alpha_t, double tau2, double c) {
  return c - std::sqrt(tau2) * alpha_t;
}

}  // namespace dichogeo

#endif  // DICHOGEO_BRIDGE_HPP
