#ifndef DICHOGEO_INFO_LOSS_HPP
#define DICHOGEO_INFO_LOSS_HPP

#include "dichogeo/types.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

namespace dichogeo {

struct EfiSettings {
  /// enumerate: exact sum over the four outcome configurations of two
  /// locations; sample: average over n_outcome_draws simulated outcome pairs.
  enum class Expectation { enumerate, sample };
  Expectation expectation = Expectation::enumerate;
  int n_outcome_draws = 10000;
  int qmc_points = 4096;         // starting node count, doubled until stable
  double qmc_rel_tol = 1e-3;
  int max_qmc_points = 1 << 20;
  std::vector<double> rho_grid{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
  std::vector<double> alpha_grid{0.0, 0.4, 0.8, 1.2, 1.6, 2.0};
  std::vector<double> tau2_grid{0.5, 1.0, 2.0};
  std::uint64_t seed = 1;

  void validate() const;
};

/// tau2 * 1' (sigma2 R + tau2 I)^-1 1 for a correlation matrix R.
double efi_linear(const Eigen::MatrixXd& correlation, double sigma2, double tau2);

/// Same with R built from locations and phi; intercept-only structure.
double efi_linear(std::span<const Location> locations, const ModelParams& params);

/// Expected information about alpha~ carried by the two binary outcomes
/// at correlation rho.
double efi_binary_two_points(double alpha_t, double sigma2_t, double rho, const EfiSettings& settings = {});

/// 1 - i_yt / i_y.
double loss_ratio(double i_y, double i_yt);

/// Relative loss for independent observations (S = 0). Does not depend on
/// the number of observations.
double loss_no_spatial(double alpha_t);

struct InfoLossRecord {
  double alpha_t = 0.0;
  double rho = 0.0;
  double tau2 = 0.0;
  double i_y = 0.0;
  double i_yt = 0.0;
  double r = 0.0;
};

/// One record per (tau2, rho, alpha~) grid point with sigma2 = 1, in that
/// nesting order.
std::vector<InfoLossRecord> info_curves(const EfiSettings& settings, int workers = 1);

struct CldSettings {
  int quadrature_order = 20;
  double rel_step = 1e-4;  // Hessian step h_j = rel_step * (1 + |theta_j|)
  int workers = 1;
};

/// Sum over location pairs of the log bivariate marginal of the binary
/// outcomes, each pair integrated by tensor Gauss-Hermite.
double pairwise_composite_loglik(const PrevalenceParams& params, const SurveyDataset& data,
                                 const CldSettings& settings = {});

/// Finite-difference Hessian of the pairwise composite log-likelihood over
/// the regression block, covariance parameters held fixed.
Eigen::MatrixXd composite_hessian_binary(const PrevalenceParams& params, const SurveyDataset& data,
                                         const CldSettings& settings = {});

/// Closed form -tau2 * sum_{h<k} D_hk' Sigma_hk^-1 D_hk with D_hk the stacked
/// prevalence-design rows of the pair and Sigma_hk its outcome covariance.
Eigen::MatrixXd composite_hessian_continuous(const ModelParams& params, const SurveyDataset& data,
                                             const CldSettings& settings = {});

struct CldReport {
  double logdet_continuous = 0.0;
  double logdet_binary = 0.0;
  double cld = 0.0;
};

/// log det(-h_continuous) - log det(-h_binary). Throws NumericalError naming
/// the matrix when either negated Hessian is not positive definite.
CldReport cld_from_hessians(const Eigen::MatrixXd& h_continuous, const Eigen::MatrixXd& h_binary);

/// Both Hessians at the linear-model estimates, the binary one after the
/// prevalence-scale transformation.
CldReport cld(const ModelParams& theta_lm, const SurveyDataset& data, const CldSettings& settings = {});

}  // namespace dichogeo

#endif  // DICHOGEO_INFO_LOSS_HPP
