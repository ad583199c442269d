#include "dichogeo/bridge.hpp"

#include "dichogeo/errors.hpp"

#include <cmath>

namespace dichogeo {

namespace {

double checked_tau(const ModelParams& params) {
  if (!std::isfinite(params.tau2) || !(params.tau2 > 0.0))
    throw ParameterDomainError("prevalence scale needs tau2 > 0");
  return std::sqrt(params.tau2);
}

}  // namespace

PrevalenceParams to_prevalence_scale(const ModelParams& params, double c) {
  const double tau = checked_tau(params);
  PrevalenceParams out;
  out.alpha_t = (c - params.alpha) / tau;
  out.beta_gamma_t = -params.beta_gamma / tau;
  out.sigma2_t = params.sigma2 / params.tau2;
  out.phi = params.phi;
  return out;
}

PrevalenceParams to_prevalence_scale_threshold_covariate(const ModelParams& params) {
  const double tau = checked_tau(params);
  PrevalenceParams out = to_prevalence_scale(params, 0.0);
  out.beta_gamma_t.conservativeResize(params.beta_gamma.size() + 1);
  out.beta_gamma_t(params.beta_gamma.size()) = 1.0 / tau;
  return out;
}

PrevalenceParams to_prevalence_scale(const ModelParams& params, const SurveyDataset& data) {
  if (thresholds_vary(data)) return to_prevalence_scale_threshold_covariate(params);
  return to_prevalence_scale(params, common_threshold(data).value_or(0.0));
}

}  // namespace dichogeo
