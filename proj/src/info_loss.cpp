#include "dichogeo/info_loss.hpp"

#include "dichogeo/bin_fit.hpp"
#include "dichogeo/bridge.hpp"
#include "dichogeo/covariance.hpp"
#include "dichogeo/errors.hpp"
#include "dichogeo/normal.hpp"
#include "dichogeo/optimize.hpp"
#include "dichogeo/parallel.hpp"
#include "dichogeo/quadrature.hpp"
#include "dichogeo/random.hpp"

#include <array>
#include <cmath>
#include <string>

namespace dichogeo {

void EfiSettings::validate() const {
  if (qmc_points < 1024) throw ConfigError("qmc_points must be at least 1024");
  if (max_qmc_points < qmc_points) throw ConfigError("max_qmc_points must not be below qmc_points");
  if (!(qmc_rel_tol > 0.0)) throw ConfigError("qmc_rel_tol must be positive");
  if (expectation == Expectation::sample && n_outcome_draws < 1) throw ConfigError("n_outcome_draws must be positive");
  for (double r : rho_grid)
    if (!(r >= 0.0 && r < 1.0)) throw ConfigError("rho_grid values must lie in [0, 1)");
  for (double a : alpha_grid)
    if (!std::isfinite(a)) throw ConfigError("alpha_grid values must be finite");
  for (double t : tau2_grid)
    if (!(t > 0.0) || !std::isfinite(t)) throw ConfigError("tau2_grid values must be positive");
}

double efi_linear(const Eigen::MatrixXd& correlation, double sigma2, double tau2) {
  if (!(tau2 > 0.0) || !(sigma2 >= 0.0)) throw ParameterDomainError("efi_linear needs tau2 > 0 and sigma2 >= 0");
  Eigen::MatrixXd s = sigma2 * correlation;
  s.diagonal().array() += tau2;
  const CholeskyFactor f = robust_cholesky(s, Degenerate::forbid, "outcome covariance");
  const Eigen::VectorXd w = f.lower.triangularView<Eigen::Lower>().solve(Eigen::VectorXd::Ones(s.rows()));
  return tau2 * w.squaredNorm();
}

double efi_linear(std::span<const Location> locations, const ModelParams& params) {
  params.validate(Degenerate::allow);
  return efi_linear(exp_correlation(distance_matrix(locations), params.phi), params.sigma2, params.tau2);
}

namespace {

/// Outcome likelihoods of the four configurations (y1, y2) in order
/// 00, 01, 10, 11 and their first two derivatives in alpha~.
struct PairMoments {
  std::array<double, 4> l{}, d1{}, d2{};
};

/// Running sums over the first n Halton points; extended in place.
struct PairAccumulator {
  double alpha, sigma, rho, rho_c;
  std::array<double, 4> l{}, d1{}, d2{};
  std::uint64_t n = 0;

  void extend_to(std::uint64_t target) {
    for (std::uint64_t i = n + 1; i <= target; ++i) {
      const double z1 = norm_quantile(radical_inverse(i, 2));
      const double z2 = norm_quantile(radical_inverse(i, 3));
      const double eta[2] = {alpha + sigma * z1, alpha + sigma * (rho * z1 + rho_c * z2)};
      double h[2][2], h1[2][2], h2[2][2];  // [location][outcome]
      for (int k = 0; k < 2; ++k) {
        const double p = norm_cdf(eta[k]);
        const double dp = norm_pdf(eta[k]);
        const double ddp = -eta[k] * dp;
        h[k][1] = p;
        h[k][0] = norm_cdf(-eta[k]);
        h1[k][1] = dp;
        h1[k][0] = -dp;
        h2[k][1] = ddp;
        h2[k][0] = -ddp;
      }
      for (int c = 0; c < 4; ++c) {
        const int a = c >> 1, b = c & 1;
        l[c] += h[0][a] * h[1][b];
        d1[c] += h1[0][a] * h[1][b] + h[0][a] * h1[1][b];
        d2[c] += h2[0][a] * h[1][b] + 2.0 * h1[0][a] * h1[1][b] + h[0][a] * h2[1][b];
      }
    }
    n = target;
  }

  PairMoments moments() const {
    PairMoments m;
    const double inv = 1.0 / static_cast<double>(n);
    for (int c = 0; c < 4; ++c) {
      m.l[c] = l[c] * inv;
      m.d1[c] = d1[c] * inv;
      m.d2[c] = d2[c] * inv;
    }
    return m;
  }
};

double observed_information(const PairMoments& m, int c) {
  if (!(m.l[c] > 0.0)) throw NumericalError("EFI: configuration probability is not positive");
  const double score = m.d1[c] / m.l[c];
  return score * score - m.d2[c] / m.l[c];
}

double enumerate_efi(const PairMoments& m) {
  double total = 0.0;
  for (int c = 0; c < 4; ++c) total += m.l[c] * observed_information(m, c);
  return total;
}

}  // namespace

double efi_binary_two_points(double alpha_t, double sigma2_t, double rho, const EfiSettings& settings) {
  settings.validate();
  if (!std::isfinite(alpha_t)) throw ParameterDomainError("alpha~ must be finite");
  if (!(sigma2_t >= 0.0) || !std::isfinite(sigma2_t)) throw ParameterDomainError("sigma2~ must be non-negative");
  if (!(rho >= 0.0 && rho < 1.0)) throw ParameterDomainError("rho must lie in [0, 1)");

  PairAccumulator acc{alpha_t, std::sqrt(sigma2_t), rho, std::sqrt(1.0 - rho * rho)};
  auto n = static_cast<std::uint64_t>(settings.qmc_points);
  acc.extend_to(n);
  double value = enumerate_efi(acc.moments());
  while (2 * n <= static_cast<std::uint64_t>(settings.max_qmc_points)) {
    n *= 2;
    acc.extend_to(n);
    const double next = enumerate_efi(acc.moments());
    const bool stable = std::abs(next - value) <= settings.qmc_rel_tol * std::abs(next);
    value = next;
    if (stable) break;
  }
  if (!std::isfinite(value)) throw NumericalError("EFI: inner integral is not finite");
  if (settings.expectation == EfiSettings::Expectation::enumerate) return value;

  // Average of the observed information over simulated outcome pairs.
  const PairMoments m = acc.moments();
  Rng rng = make_rng(settings.seed, 0);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double sigma = std::sqrt(sigma2_t);
  double total = 0.0;
  for (int r = 0; r < settings.n_outcome_draws; ++r) {
    const double z1 = z(rng), z2 = z(rng);
    const double s1 = sigma * z1, s2 = sigma * (rho * z1 + std::sqrt(1.0 - rho * rho) * z2);
    const int y1 = u(rng) < norm_cdf(alpha_t + s1) ? 1 : 0;
    const int y2 = u(rng) < norm_cdf(alpha_t + s2) ? 1 : 0;
    total += observed_information(m, 2 * y1 + y2);
  }
  return total / settings.n_outcome_draws;
}

double loss_ratio(double i_y, double i_yt) {
  if (!(i_y > 0.0)) throw ParameterDomainError("loss_ratio needs i_y > 0");
  return 1.0 - i_yt / i_y;
}

double loss_no_spatial(double alpha_t) {
  if (!std::isfinite(alpha_t)) throw ParameterDomainError("alpha~ must be finite");
  // Per observation, E[-d2 log f] = Phi (Phi'^2/Phi^2 - Phi''/Phi)
  //   + (1 - Phi)(Phi'^2/(1 - Phi)^2 + Phi''/(1 - Phi)); I_Y per observation is 1.
  if (std::abs(alpha_t) < 8.0) {
    const double p = norm_cdf(alpha_t), q = norm_cdf(-alpha_t);
    const double d = norm_pdf(alpha_t), dd = norm_pdf_derivative(alpha_t);
    const double info = p * (d * d / (p * p) - dd / p) + q * (d * d / (q * q) + dd / q);
    return 1.0 - info;
  }
  // The Phi'' terms cancel; evaluate phi^2 / (Phi (1 - Phi)) in logs.
  const double log_info = 2.0 * log_norm_pdf(alpha_t) - log_norm_cdf(alpha_t) - log_norm_cdf(-alpha_t);
  return 1.0 - std::exp(log_info);
}

std::vector<InfoLossRecord> info_curves(const EfiSettings& settings, int workers) {
  settings.validate();
  std::vector<InfoLossRecord> out;
  for (double tau2 : settings.tau2_grid)
    for (double rho : settings.rho_grid)
      for (double a : settings.alpha_grid) out.push_back({a, rho, tau2, 0.0, 0.0, 0.0});
  parallel_for(out.size(), workers, [&](std::size_t i) {
    auto& rec = out[i];
    Eigen::Matrix2d r;
    r << 1.0, rec.rho, rec.rho, 1.0;
    rec.i_y = efi_linear(r, 1.0, rec.tau2);
    rec.i_yt = efi_binary_two_points(rec.alpha_t, 1.0 / rec.tau2, rec.rho, settings);
    rec.r = loss_ratio(rec.i_y, rec.i_yt);
  });
  return out;
}

namespace {

/// Individuals grouped by location with their fixed linear predictors.
struct LocationGroups {
  std::vector<std::vector<Eigen::Index>> members;

  explicit LocationGroups(const SurveyDataset& data) : members(data.n_locations()) {
    for (Eigen::Index k = 0; k < data.n_individuals(); ++k) members[data.location_of[k]].push_back(k);
  }
};

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double top = v.maxCoeff();
  if (!std::isfinite(top)) return top;
  return top + std::log((v.array() - top).exp().sum());
}

}  // namespace

double pairwise_composite_loglik(const PrevalenceParams& params, const SurveyDataset& data,
                                 const CldSettings& settings) {
  if (!data.binary) throw SchemaError("pairwise_composite_loglik needs binary outcomes");
  data.validate(2);
  params.validate(Degenerate::allow);
  if (settings.quadrature_order < 2) throw ConfigError("quadrature_order must be at least 2");

  const Eigen::VectorXd eta = prevalence_offsets(params, data);
  const Eigen::VectorXd q = (2 * data.binary->array() - 1).cast<double>().matrix();
  const LocationGroups groups(data);
  const Eigen::MatrixXd u = distance_matrix(data.locations);
  const GaussHermiteRule& rule = gauss_hermite_normal(settings.quadrature_order);
  const Eigen::Index n = rule.nodes.size();
  const Eigen::Index m = data.n_locations();
  const double sigma = std::sqrt(params.sigma2_t);
  const Eigen::VectorXd log_w = rule.weights.array().log().matrix();

  auto log_cond = [&](Eigen::Index loc, double s) {
    double t = 0.0;
    for (auto k : groups.members[loc]) t += log_norm_cdf(q(k) * (eta(k) + s));
    return t;
  };
  auto cond = [&](Eigen::Index loc, double s) {
    double t = 1.0;
    for (auto k : groups.members[loc]) t *= norm_cdf(q(k) * (eta(k) + s));
    return t;
  };

  // Symmetric square root of the pair correlation, (s_h, s_k) = (a z1 + b z2,
  // a z1 - b z2), so the rule treats both locations alike.
  std::vector<double> partial(static_cast<std::size_t>(m), 0.0);
  parallel_for(static_cast<std::size_t>(m), settings.workers, [&](std::size_t hh) {
    const auto h = static_cast<Eigen::Index>(hh);
    double total = 0.0;
    for (Eigen::Index k = h + 1; k < m; ++k) {
      const double rho = params.phi > 0.0 ? std::exp(-u(h, k) / params.phi) : 0.0;
      const double a = sigma * std::sqrt(0.5 * (1.0 + rho));
      const double b = sigma * std::sqrt(std::max(0.0, 0.5 * (1.0 - rho)));
      double pair = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        double inner = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
          const double zi = a * rule.nodes(i), zj = b * rule.nodes(j);
          inner += rule.weights(j) * cond(h, zi + zj) * cond(k, zi - zj);
        }
        pair += rule.weights(i) * inner;
      }
      if (pair > 1e-280 && std::isfinite(pair)) {
        total += std::log(pair);
        continue;
      }
      // Underflow: redo the pair in log space.
      Eigen::VectorXd terms(n * n);
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
          const double zi = a * rule.nodes(i), zj = b * rule.nodes(j);
          terms(i * n + j) = log_w(i) + log_w(j) + log_cond(h, zi + zj) + log_cond(k, zi - zj);
        }
      const double lp = log_sum_exp(terms);
      if (!std::isfinite(lp)) throw NumericalError("pairwise likelihood underflow for locations " +
                                                   std::to_string(h) + " and " + std::to_string(k));
      total += lp;
    }
    partial[hh] = total;
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

Eigen::MatrixXd composite_hessian_binary(const PrevalenceParams& params, const SurveyDataset& data,
                                         const CldSettings& settings) {
  const Eigen::Index p = 1 + params.beta_gamma_t.size();
  Eigen::VectorXd theta(p);
  theta << params.alpha_t, params.beta_gamma_t;
  const ValueFunction f = [&](const Eigen::VectorXd& t) {
    PrevalenceParams q = params;
    q.alpha_t = t(0);
    q.beta_gamma_t = t.tail(p - 1);
    return pairwise_composite_loglik(q, data, settings);
  };
  const Eigen::MatrixXd h = finite_difference_hessian(f, theta, settings.rel_step);
  const double asym = (h - h.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-6 * std::max(1.0, h.cwiseAbs().maxCoeff()))
    throw NumericalError("composite Hessian of the binary outcomes is not symmetric");
  return h;
}

Eigen::MatrixXd composite_hessian_continuous(const ModelParams& params, const SurveyDataset& data,
                                             const CldSettings& settings) {
  data.validate(2);
  params.validate();
  const Eigen::MatrixXd d = prevalence_design(data);
  const LocationGroups groups(data);
  const Eigen::MatrixXd u = distance_matrix(data.locations);
  const Eigen::Index m = data.n_locations();
  const Eigen::Index p = d.cols();

  std::vector<Eigen::MatrixXd> partial(static_cast<std::size_t>(m), Eigen::MatrixXd::Zero(p, p));
  parallel_for(static_cast<std::size_t>(m), settings.workers, [&](std::size_t hh) {
    const auto h = static_cast<Eigen::Index>(hh);
    const auto& gh = groups.members[h];
    for (Eigen::Index k = h + 1; k < m; ++k) {
      const auto& gk = groups.members[k];
      const auto nh = static_cast<Eigen::Index>(gh.size()), nk = static_cast<Eigen::Index>(gk.size());
      const double cross = params.sigma2 * std::exp(-u(h, k) / params.phi);
      Eigen::MatrixXd s = Eigen::MatrixXd::Constant(nh + nk, nh + nk, params.sigma2);
      s.topRightCorner(nh, nk).setConstant(cross);
      s.bottomLeftCorner(nk, nh).setConstant(cross);
      s.diagonal().array() += params.tau2;
      Eigen::MatrixXd dhk(nh + nk, p);
      for (Eigen::Index r = 0; r < nh; ++r) dhk.row(r) = d.row(gh[r]);
      for (Eigen::Index r = 0; r < nk; ++r) dhk.row(nh + r) = d.row(gk[r]);
      const CholeskyFactor f = robust_cholesky(s, Degenerate::forbid, "pair covariance");
      const Eigen::MatrixXd w = f.lower.triangularView<Eigen::Lower>().solve(dhk);
      partial[hh] += w.transpose() * w;
    }
  });
  Eigen::MatrixXd total = Eigen::MatrixXd::Zero(p, p);
  for (const auto& part : partial) total += part;
  return -params.tau2 * total;
}

CldReport cld_from_hessians(const Eigen::MatrixXd& h_continuous, const Eigen::MatrixXd& h_binary) {
  auto logdet_neg = [](const Eigen::MatrixXd& h, const char* name) {
    const Eigen::LLT<Eigen::MatrixXd> llt(-h);
    if (h.size() == 0 || llt.info() != Eigen::Success)
      throw NumericalError(std::string("-") + name + " is not positive definite");
    return 2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
  };
  if (h_continuous.rows() != h_binary.rows()) throw SchemaError("CLD Hessians differ in dimension");
  CldReport r;
  r.logdet_continuous = logdet_neg(h_continuous, "H_Y (continuous composite Hessian)");
  r.logdet_binary = logdet_neg(h_binary, "H_Y~ (binary composite Hessian)");
  r.cld = r.logdet_continuous - r.logdet_binary;
  return r;
}

CldReport cld(const ModelParams& theta_lm, const SurveyDataset& data, const CldSettings& settings) {
  const PrevalenceParams q = to_prevalence_scale(theta_lm, data);
  const Eigen::MatrixXd hb = composite_hessian_binary(q, data, settings);
  const Eigen::MatrixXd hc = composite_hessian_continuous(theta_lm, data, settings);
  return cld_from_hessians(hc, hb);
}

}  // namespace dichogeo
