#include "dichogeo/bin_fit.hpp"

#include "dichogeo/covariance.hpp"
#include "dichogeo/errors.hpp"
#include "dichogeo/normal.hpp"

#include <algorithm>
#include <cmath>

namespace dichogeo {

namespace {

struct Posterior {
  Eigen::VectorXd t, v;      // summed site precision and shift per location
  Eigen::MatrixXd b_lower;   // B = I + T^1/2 K T^1/2
  Eigen::MatrixXd sigma;     // (K^-1 + T)^-1
  Eigen::VectorXd mean;
};

Posterior posterior(const Eigen::MatrixXd& k, const Eigen::VectorXd& tau, const Eigen::VectorXd& nu,
                    const std::vector<Eigen::Index>& location_of) {
  const Eigen::Index m = k.rows();
  Posterior p;
  p.t = Eigen::VectorXd::Zero(m);
  p.v = Eigen::VectorXd::Zero(m);
  for (Eigen::Index i = 0; i < tau.size(); ++i) {
    p.t(location_of[i]) += tau(i);
    p.v(location_of[i]) += nu(i);
  }
  const Eigen::VectorXd root = p.t.cwiseSqrt();
  Eigen::MatrixXd b = root.asDiagonal() * k * root.asDiagonal();
  b.diagonal().array() += 1.0;
  const Eigen::LLT<Eigen::MatrixXd> llt(b);
  if (llt.info() != Eigen::Success) throw NumericalError("EP: B is not positive definite");
  p.b_lower = llt.matrixL();
  const Eigen::MatrixXd h = p.b_lower.triangularView<Eigen::Lower>().solve(root.asDiagonal() * k);
  p.sigma = k - h.transpose() * h;
  p.mean = p.sigma * p.v;
  return p;
}

/// Cavity of site i given the current posterior.
struct Cavity {
  double tau, nu;
};

Cavity cavity(const Posterior& p, Eigen::Index loc, double site_tau, double site_nu) {
  const double s = p.sigma(loc, loc);
  return {1.0 / s - site_tau, p.mean(loc) / s - site_nu};
}

}  // namespace

EpApproximation ep_approximation(const PrevalenceParams& params, const SurveyDataset& data,
                                 const LatentIntegrationSettings& settings, const Eigen::VectorXd* warm) {
  if (!data.binary) throw SchemaError("ep_approximation needs binary outcomes");
  data.validate();
  params.validate();
  settings.validate();
  const Eigen::VectorXd offset = prevalence_offsets(params, data);
  const Eigen::VectorXd sign = (2 * data.binary->array() - 1).cast<double>().matrix();
  const Eigen::Index n = offset.size();
  const auto& loc = data.location_of;

  EpApproximation out;
  out.k = params.sigma2_t * exp_correlation(distance_matrix(data.locations), params.phi);
  out.site_tau = Eigen::VectorXd::Zero(n);
  out.site_nu = Eigen::VectorXd::Zero(n);
  if (warm && warm->size() == 2 * n && warm->allFinite() && (warm->head(n).array() >= 0.0).all()) {
    out.site_tau = warm->head(n);
    out.site_nu = warm->tail(n);
  }

  Posterior post = posterior(out.k, out.site_tau, out.site_nu, loc);
  bool converged = false;
  for (int sweep = 0; sweep < settings.max_ep_sweeps && !converged; ++sweep) {
    double moved = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index l = loc[i];
      const Cavity c = cavity(post, l, out.site_tau(i), out.site_nu(i));
      if (!(c.tau > 0.0)) throw NumericalError("EP: cavity precision not positive");
      const double var_c = 1.0 / c.tau, mean_c = c.nu * var_c;
      const double denom = std::sqrt(1.0 + var_c);
      const double z = sign(i) * (offset(i) + mean_c) / denom;
      const double r = inv_mills(z);
      const double mean_hat = mean_c + sign(i) * var_c * r / denom;
      const double var_hat = var_c - var_c * var_c * r * (z + r) / (1.0 + var_c);
      const double tau_new = std::max(1.0 / var_hat - c.tau, 0.0);
      const double nu_new = mean_hat / var_hat - c.nu;
      const double d_tau = tau_new - out.site_tau(i), d_nu = nu_new - out.site_nu(i);
      moved = std::max({moved, std::abs(d_tau), std::abs(d_nu)});
      out.site_tau(i) = tau_new;
      out.site_nu(i) = nu_new;
      // Rank-one update of the posterior at location l.
      const Eigen::VectorXd col = post.sigma.col(l);
      post.sigma.noalias() -= (d_tau / (1.0 + d_tau * col(l))) * col * col.transpose();
      post.t(l) += d_tau;
      post.v(l) += d_nu;
      post.mean.noalias() = post.sigma * post.v;
    }
    post = posterior(out.k, out.site_tau, out.site_nu, loc);
    out.sweeps = sweep + 1;
    converged = moved < settings.inner_tol;
  }
  if (!converged)
    throw NumericalError("EP: sites did not settle in " + std::to_string(settings.max_ep_sweeps) + " sweeps");

  // log Z = sum_i c_i - log|B|/2 + v' mean / 2, with c_i normalizing site i so
  // that cavity times site integrates to the tilted mass.
  double log_z = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Cavity c = cavity(post, loc[i], out.site_tau(i), out.site_nu(i));
    const double var_c = 1.0 / c.tau, mean_c = c.nu * var_c;
    const double z = sign(i) * (offset(i) + mean_c) / std::sqrt(1.0 + var_c);
    const double tau_sum = c.tau + out.site_tau(i), nu_sum = c.nu + out.site_nu(i);
    log_z += log_norm_cdf(z) - 0.5 * nu_sum * nu_sum / tau_sum + 0.5 * c.nu * c.nu / c.tau +
             0.5 * std::log(tau_sum / c.tau);
  }
  log_z += -post.b_lower.diagonal().array().log().sum() + 0.5 * post.v.dot(post.mean);
  if (!std::isfinite(log_z)) throw NumericalError("EP: non-finite log marginal");

  const Eigen::VectorXd root = post.t.cwiseSqrt();
  const Eigen::VectorXd kv = out.k * post.v;
  const Eigen::VectorXd inner = post.b_lower.triangularView<Eigen::Lower>().solve(root.cwiseProduct(kv));
  out.b = post.v - root.cwiseProduct(post.b_lower.transpose().triangularView<Eigen::Upper>().solve(inner));
  out.mean = post.mean;
  out.t = post.t;
  out.b_lower = post.b_lower;
  out.log_marginal = log_z;
  return out;
}

double ep_loglik_gradient(const PrevalenceParams& params, const SurveyDataset& data, Eigen::VectorXd& grad,
                          const LatentIntegrationSettings& settings, const Eigen::VectorXd* warm,
                          Eigen::VectorXd* sites_out) {
  const EpApproximation ep = ep_approximation(params, data, settings, warm);
  if (sites_out) {
    sites_out->resize(2 * ep.site_tau.size());
    *sites_out << ep.site_tau, ep.site_nu;
  }
  const Eigen::MatrixXd d = prevalence_design(data);
  const Eigen::VectorXd offset = prevalence_offsets(params, data);
  const Eigen::Index n = d.rows(), p = d.cols();

  // Posterior variances from B: diag((K^-1 + T)^-1).
  const Eigen::VectorXd root = ep.t.cwiseSqrt();
  const Eigen::MatrixXd h = ep.b_lower.triangularView<Eigen::Lower>().solve(root.asDiagonal() * ep.k);
  const Eigen::VectorXd post_var = ep.k.diagonal() - h.colwise().squaredNorm().transpose();

  // At the fixed point only the explicit dependence counts: d log Z_i / d mu_i
  // at the cavity for the regression block.
  Eigen::VectorXd g(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index l = data.location_of[i];
    const double q = 2.0 * (*data.binary)(i) - 1.0;
    const double c_tau = 1.0 / post_var(l) - ep.site_tau(i);
    const double c_nu = ep.mean(l) / post_var(l) - ep.site_nu(i);
    const double var_c = 1.0 / c_tau, mean_c = c_nu * var_c;
    const double denom = std::sqrt(1.0 + var_c);
    const double z = q * (offset(i) + mean_c) / denom;
    g(i) = q * inv_mills(z) / denom;
  }
  grad.resize(p + 2);
  grad.head(p) = d.transpose() * g;

  // R = T^1/2 B^-1 T^1/2.
  const Eigen::MatrixXd z = ep.b_lower.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd(root.asDiagonal()));
  const Eigen::MatrixXd r = z.transpose() * z;
  const Eigen::MatrixXd dk_phi = ep.k.cwiseProduct(distance_matrix(data.locations)) / params.phi;
  const Eigen::MatrixXd* dks[2] = {&ep.k, &dk_phi};
  for (int j = 0; j < 2; ++j)
    grad(p + j) = 0.5 * ep.b.dot(*dks[j] * ep.b) - 0.5 * r.cwiseProduct(*dks[j]).sum();
  return ep.log_marginal;
}

}  // namespace dichogeo
