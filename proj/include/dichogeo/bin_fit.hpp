#ifndef DICHOGEO_BIN_FIT_HPP
#define DICHOGEO_BIN_FIT_HPP

#include "dichogeo/fit_result.hpp"
#include "dichogeo/types.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>

namespace dichogeo {

struct LatentIntegrationSettings {
  enum class Mode { laplace, laplace_is, ep };
  Mode mode = Mode::laplace;
  int is_samples = 1000;      // laplace_is only; rounded up to an even count (antithetic pairs)
  double inner_tol = 1e-9;    // max-norm of the Newton step on s~
  int quadrature_order = 40;  // exact_loglik_smallm
  int max_inner_iter = 50;
  int max_ep_sweeps = 200;    // ep only; convergence when no site moves by more than inner_tol
  std::uint64_t seed = 1;     // importance-sampling draws

  void validate() const;
};

/// Linear predictor mu~_ij = D~_ij theta~ without the latent field.
Eigen::VectorXd prevalence_offsets(const PrevalenceParams& params, const SurveyDataset& data);

/// sum_ij log P(y~_ij | s~) with P = Phi(+-eta); s_t holds one value per location.
double conditional_binary_loglik(const PrevalenceParams& params, const SurveyDataset& data,
                                 const Eigen::VectorXd& s_t);

/// Gaussian approximation of s~ | y~ at its mode. With K the prior
/// covariance, mode = K a and the approximate posterior covariance is
/// K - K W^1/2 B^-1 W^1/2 K with B = I + W^1/2 K W^1/2 = L L'.
struct LaplaceApproximation {
  Eigen::VectorXd mode;
  Eigen::VectorXd a;
  Eigen::VectorXd w;  // -d2 g / ds2 at the mode, per location
  Eigen::MatrixXd k;
  Eigen::MatrixXd b_lower;
  double log_marginal = 0.0;
  int iterations = 0;
};

/// Newton iteration for the conditional mode with step halving. `warm`
/// supplies a starting value for s~ (length m) when given.
LaplaceApproximation laplace_approximation(const PrevalenceParams& params, const SurveyDataset& data,
                                           const LatentIntegrationSettings& settings = {},
                                           Degenerate mode = Degenerate::forbid,
                                           const Eigen::VectorXd* warm = nullptr);

/// log of the marginal probability of the binary outcomes.
double integrated_loglik(const PrevalenceParams& params, const SurveyDataset& data,
                         const LatentIntegrationSettings& settings = {}, Degenerate mode = Degenerate::forbid,
                         const Eigen::VectorXd* warm = nullptr);

/// Laplace log marginal with its exact gradient in the working coordinates
/// (alpha~, beta~..., log sigma2~, log phi), including the dependence of the
/// mode on the parameters. `mode_out` receives the mode when given.
double laplace_loglik_gradient(const PrevalenceParams& params, const SurveyDataset& data, Eigen::VectorXd& grad,
                               const LatentIntegrationSettings& settings = {},
                               const Eigen::VectorXd* warm = nullptr, Eigen::VectorXd* mode_out = nullptr);

/// Expectation propagation with one Gaussian site per individual. The
/// approximate posterior of s~ is N(K b, (K^-1 + T)^-1) with T the summed
/// site precisions per location; B = I + T^1/2 K T^1/2 = L L'.
struct EpApproximation {
  Eigen::VectorXd site_tau;  // per individual
  Eigen::VectorXd site_nu;
  Eigen::VectorXd mean;
  Eigen::VectorXd b;         // K^-1 mean
  Eigen::VectorXd t;         // per location
  Eigen::MatrixXd k;
  Eigen::MatrixXd b_lower;
  double log_marginal = 0.0;
  int sweeps = 0;
};

/// Sequential EP sweeps until no site parameter moves by more than
/// settings.inner_tol. `warm` holds site_tau and site_nu stacked (length 2n).
EpApproximation ep_approximation(const PrevalenceParams& params, const SurveyDataset& data,
                                 const LatentIntegrationSettings& settings = {},
                                 const Eigen::VectorXd* warm = nullptr);

/// EP log marginal with its gradient in (alpha~, beta~..., log sigma2~,
/// log phi). `sites_out` receives the stacked site parameters.
double ep_loglik_gradient(const PrevalenceParams& params, const SurveyDataset& data, Eigen::VectorXd& grad,
                          const LatentIntegrationSettings& settings = {}, const Eigen::VectorXd* warm = nullptr,
                          Eigen::VectorXd* sites_out = nullptr);

/// Tensor-product Gauss-Hermite evaluation of the same integral for m <= 3.
double exact_loglik_smallm(const PrevalenceParams& params, const SurveyDataset& data,
                           const LatentIntegrationSettings& settings = {}, Degenerate mode = Degenerate::forbid);

/// Non-spatial probit regression on the prevalence design by Newton's method.
/// Returns the coefficients and whether the iteration converged.
std::pair<Eigen::VectorXd, bool> probit_regression(const Eigen::MatrixXd& design, const Eigen::VectorXi& y,
                                                   int max_iter = 100);

struct BinomialFitOptions {
  int max_iter = 500;
  double gtol = 1e-6;
  double fd_step = 1e-4;
  bool compute_obs_info = true;
  std::optional<double> fixed_phi;
};

/// Probit coefficients, sigma2~ = 0.5, phi at 10% of the largest
/// inter-location distance.
PrevalenceParams initial_binomial_params(const SurveyDataset& data);

/// Maximizes integrated_loglik over (alpha~, beta~..., log sigma2~, log phi)
/// with central-difference gradients. When thresholds vary the last
/// regression coefficient belongs to the threshold column.
FitResult fit_binomial(const SurveyDataset& data, std::optional<PrevalenceParams> init = std::nullopt,
                       const LatentIntegrationSettings& settings = {}, const BinomialFitOptions& options = {});

/// Monte Carlo maximum likelihood settings.
struct McmlSettings {
  int n_samples = 1000;
  int burn_in = 500;
  int thin = 5;
  int iterations = 3;  // rounds of fresh draws
  std::uint64_t seed = 1;

  void validate() const;
};

/// Draws of s~ at the data locations (one column each) with the log joint
/// density log f(y~, s_j) at the parameters they were drawn under.
struct LatentDraws {
  Eigen::MatrixXd s;
  Eigen::VectorXd log_joint;
};

/// Gibbs sampler for s~ | y~ using the latent Gaussian utilities
/// u_ij = mu~_ij + s~(x_i) + e_ij with y~_ij = 1{u_ij > 0}. Starts at the
/// Laplace mode.
LatentDraws sample_latent_posterior(const PrevalenceParams& params, const SurveyDataset& data,
                                    const McmlSettings& settings, std::uint64_t seed);

/// log (1/N) sum_j f(y~, s_j; theta) / f(y~, s_j; theta0): the Monte Carlo
/// log-likelihood ratio against the parameters the draws came from.
/// `grad` receives its gradient in (alpha~, beta~..., log sigma2~, log phi)
/// and `ess` the effective sample size of the weights.
double mcml_loglik_ratio(const PrevalenceParams& params, const SurveyDataset& data, const LatentDraws& draws,
                         Eigen::VectorXd* grad = nullptr, double* ess = nullptr);

/// Starts from the Laplace fit. Each round samples s~ | y~ at the current
/// estimate and maximizes the likelihood ratio with the draws held fixed.
/// FitResult::loglik holds the Laplace log-likelihood at the estimate.
FitResult fit_binomial_mcml(const SurveyDataset& data, std::optional<PrevalenceParams> init = std::nullopt,
                            const McmlSettings& mcml = {}, const BinomialFitOptions& options = {});

}  // namespace dichogeo

#endif  // DICHOGEO_BIN_FIT_HPP
