#include "dichogeo/bin_fit.hpp"

#include "dichogeo/covariance.hpp"
#include "dichogeo/errors.hpp"
#include "dichogeo/normal.hpp"
#include "dichogeo/optimize.hpp"
#include "dichogeo/quadrature.hpp"
#include "dichogeo/random.hpp"
#include "wald.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace dichogeo {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr Eigen::Index kMaxQmcDim = 16;

/// Per-individual pieces that do not depend on s~.
struct BinaryTerms {
  Eigen::VectorXd offset;  // mu~_ij
  Eigen::VectorXd sign;    // q = 2y - 1
  const std::vector<Eigen::Index>* location_of = nullptr;
  Eigen::Index m = 0;

  BinaryTerms(const PrevalenceParams& params, const SurveyDataset& data)
      : offset(prevalence_offsets(params, data)),
        sign((2 * data.binary->array() - 1).cast<double>().matrix()),
        location_of(&data.location_of),
        m(data.n_locations()) {}

  double loglik(const Eigen::VectorXd& s) const {
    double total = 0.0;
    for (Eigen::Index k = 0; k < offset.size(); ++k)
      total += log_norm_cdf(sign(k) * (offset(k) + s((*location_of)[k])));
    return total;
  }

  /// Value, gradient and negative second derivative per location.
  double derivatives(const Eigen::VectorXd& s, Eigen::VectorXd& grad, Eigen::VectorXd& w) const {
    grad.setZero(m);
    w.setZero(m);
    double total = 0.0;
    for (Eigen::Index k = 0; k < offset.size(); ++k) {
      const Eigen::Index i = (*location_of)[k];
      const double x = sign(k) * (offset(k) + s(i));
      const double lam = inv_mills(x);
      total += log_norm_cdf(x);
      grad(i) += sign(k) * lam;
      w(i) += lam * (x + lam);
    }
    return total;
  }
};

Eigen::MatrixXd prior_covariance(const PrevalenceParams& params, const SurveyDataset& data) {
  return params.sigma2_t * exp_correlation(distance_matrix(data.locations), params.phi);
}

void check_binary(const SurveyDataset& data, const char* who) {
  if (!data.binary) throw SchemaError(std::string(who) + " needs binary outcomes");
  data.validate();
}

void check_params(const PrevalenceParams& params, const SurveyDataset& data, Degenerate mode) {
  params.validate(mode);
  const Eigen::Index expected = prevalence_design(data).cols() - 1;
  if (params.beta_gamma_t.size() != expected)
    throw SchemaError("prevalence coefficients: expected " + std::to_string(expected) + ", got " +
                      std::to_string(params.beta_gamma_t.size()));
}

double log_sum_exp(const Eigen::VectorXd& v) {
  const double top = v.maxCoeff();
  if (!std::isfinite(top)) return top;
  return top + std::log((v.array() - top).exp().sum());
}

}  // namespace

void LatentIntegrationSettings::validate() const {
  if (mode == Mode::laplace_is && is_samples < 100)
    throw ConfigError("is_samples must be at least 100 for laplace_is");
  if (quadrature_order < 20) throw ConfigError("quadrature_order must be at least 20");
  if (!(inner_tol > 0.0)) throw ConfigError("inner_tol must be positive");
  if (max_inner_iter < 1) throw ConfigError("max_inner_iter must be positive");
  if (max_ep_sweeps < 1) throw ConfigError("max_ep_sweeps must be positive");
}

Eigen::VectorXd prevalence_offsets(const PrevalenceParams& params, const SurveyDataset& data) {
  const Eigen::MatrixXd d = prevalence_design(data);
  if (params.beta_gamma_t.size() != d.cols() - 1)
    throw SchemaError("prevalence coefficients do not match the design");
  Eigen::VectorXd theta(d.cols());
  theta << params.alpha_t, params.beta_gamma_t;
  return d * theta;
}

double conditional_binary_loglik(const PrevalenceParams& params, const SurveyDataset& data,
                                 const Eigen::VectorXd& s_t) {
  check_binary(data, "conditional_binary_loglik");
  if (s_t.size() != data.n_locations()) throw SchemaError("latent vector length must equal the location count");
  return BinaryTerms(params, data).loglik(s_t);
}

LaplaceApproximation laplace_approximation(const PrevalenceParams& params, const SurveyDataset& data,
                                           const LatentIntegrationSettings& settings, Degenerate mode,
                                           const Eigen::VectorXd* warm) {
  check_binary(data, "laplace_approximation");
  check_params(params, data, mode);
  settings.validate();
  const BinaryTerms terms(params, data);
  const Eigen::Index m = data.n_locations();

  LaplaceApproximation out;
  out.k = prior_covariance(params, data);
  const Eigen::MatrixXd& k = out.k;
  Eigen::VectorXd f = (warm && warm->size() == m && warm->allFinite()) ? *warm : Eigen::VectorXd::Zero(m);
  Eigen::VectorXd a = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd grad(m), w(m);
  bool have_a = false;  // a is only known once a Newton step has been taken
  double psi = kNegInf;
  Eigen::LLT<Eigen::MatrixXd> llt;

  auto psi_of = [&](const Eigen::VectorXd& a_, const Eigen::VectorXd& f_) {
    return -0.5 * a_.dot(f_) + terms.loglik(f_);
  };
  if (!warm || f.isZero(0.0)) {
    have_a = true;
    psi = terms.loglik(f);
  }

  bool converged = false;
  for (out.iterations = 0; out.iterations <= settings.max_inner_iter; ++out.iterations) {
    terms.derivatives(f, grad, w);
    const Eigen::VectorXd sw = w.array().sqrt().matrix();
    Eigen::MatrixXd b = sw.asDiagonal() * k * sw.asDiagonal();
    b.diagonal().array() += 1.0;
    llt.compute(b);
    if (llt.info() != Eigen::Success) throw NumericalError("Laplace: B matrix not positive definite");
    if (converged) break;

    const Eigen::VectorXd rhs = w.cwiseProduct(f) + grad;
    const Eigen::VectorXd c = llt.matrixL().solve(sw.cwiseProduct(k * rhs));
    const Eigen::VectorXd a_full = rhs - sw.cwiseProduct(llt.matrixU().solve(c));
    Eigen::VectorXd a_new = a_full;
    Eigen::VectorXd f_new = k * a_new;
    double psi_new = psi_of(a_new, f_new);
    if (have_a) {
      for (int halve = 0; halve < 30 && !(psi_new >= psi - 1e-12 * (1.0 + std::abs(psi))); ++halve) {
        a_new = 0.5 * (a + a_new);
        f_new = k * a_new;
        psi_new = psi_of(a_new, f_new);
      }
    }
    if (!std::isfinite(psi_new)) throw NumericalError("Laplace: non-finite objective in Newton iteration");
    const double step = (f_new - f).lpNorm<Eigen::Infinity>();
    a = a_new;
    f = f_new;
    psi = psi_new;
    have_a = true;
    if (step < settings.inner_tol) converged = true;
  }
  if (!converged)
    throw NumericalError("Laplace: Newton iteration did not converge in " + std::to_string(settings.max_inner_iter) +
                         " steps");

  out.mode = f;
  out.a = a;
  out.w = w;
  out.b_lower = llt.matrixL();
  out.log_marginal = psi - out.b_lower.diagonal().array().log().sum();
  return out;
}

double integrated_loglik(const PrevalenceParams& params, const SurveyDataset& data,
                         const LatentIntegrationSettings& settings, Degenerate mode, const Eigen::VectorXd* warm) {
  if (settings.mode == LatentIntegrationSettings::Mode::ep) {
    check_binary(data, "integrated_loglik");
    check_params(params, data, mode);
    return ep_approximation(params, data, settings, warm).log_marginal;
  }
  const LaplaceApproximation lap = laplace_approximation(params, data, settings, mode, warm);
  if (settings.mode == LatentIntegrationSettings::Mode::laplace) return lap.log_marginal;

  // Importance sampling in whitened coordinates s = L_K z. The main proposal
  // is centred at the Laplace mode with axes v_k = L_P^-T e_k, where
  // P = I + L_K' W L_K, and a split-normal profile along each axis whose two
  // scales are fitted to the log-posterior drop on either side. A small prior
  // component N(0, I) is mixed in so the weights stay bounded; draws are
  // stratified over the two components.
  const BinaryTerms terms(params, data);
  const Eigen::Index m = data.n_locations();
  const CholeskyFactor lk = robust_cholesky(lap.k, Degenerate::allow, "latent covariance");
  Eigen::MatrixXd p = lk.lower.transpose() * lap.w.asDiagonal() * lk.lower;
  p.diagonal().array() += 1.0;
  const Eigen::LLT<Eigen::MatrixXd> lp(p);
  if (lp.info() != Eigen::Success) throw NumericalError("importance sampling: proposal precision not positive definite");
  const Eigen::MatrixXd lp_lower = lp.matrixL();
  const Eigen::MatrixXd axes = lp_lower.transpose().triangularView<Eigen::Upper>().solve(
      Eigen::MatrixXd::Identity(m, m));
  const Eigen::VectorXd z_hat = lk.lower.transpose() * lap.a;
  const double log_det_lp = lp_lower.diagonal().array().log().sum();

  auto log_post = [&](const Eigen::VectorXd& z) { return -0.5 * z.squaredNorm() + terms.loglik(lk.lower * z); };
  const double h0 = log_post(z_hat);
  Eigen::VectorXd s_lo(m), s_hi(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    for (int side = 0; side < 2; ++side) {
      double scale = 1.0;
      for (double t : {0.5, 1.0, 1.5, 2.0, 3.0, 4.0}) {
        const double drop = h0 - log_post(z_hat + (side ? t : -t) * axes.col(k));
        if (drop > 0.0) scale = std::max(scale, t / std::sqrt(2.0 * drop));
      }
      (side ? s_hi : s_lo)(k) = std::min(scale, 10.0);
    }
  }
  const Eigen::VectorXd s_sum = s_lo + s_hi;
  const Eigen::VectorXd lo_mass = s_lo.cwiseQuotient(s_sum);
  const double log_norm_split = (2.0 / s_sum.array()).log().sum();

  constexpr double defensive = 0.1;
  const int pairs = (settings.is_samples + 1) / 2;
  const int prior_pairs = std::max(1, static_cast<int>(std::lround(defensive * pairs)));
  const int main_pairs = pairs - prior_pairs;
  const double log_mix_main = std::log1p(-defensive);
  const double log_mix_prior = std::log(defensive);

  auto log_weight = [&](const Eigen::VectorXd& z) {
    const Eigen::VectorXd x = lp_lower.transpose() * (z - z_hat);
    double quad = 0.0;
    for (Eigen::Index k = 0; k < m; ++k) {
      const double r = x(k) / (x(k) < 0.0 ? s_lo(k) : s_hi(k));
      quad += r * r;
    }
    const double a = log_mix_main + log_det_lp + log_norm_split - 0.5 * quad;
    const double b = log_mix_prior - 0.5 * z.squaredNorm();
    const double hi = std::max(a, b);
    const double log_q = hi + std::log1p(std::exp(std::min(a, b) - hi));
    return log_post(z) - log_q;
  };

  // Uniform base points: Halton under a random shift when the dimension
  // allows it, pseudo-random otherwise. Each column is one antithetic pair.
  Rng rng = make_rng(settings.seed, 0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::MatrixXd base(m, pairs);
  if (m <= kMaxQmcDim) {
    const Eigen::MatrixXd h = halton_points(pairs, static_cast<int>(m));
    for (Eigen::Index d = 0; d < m; ++d) {
      const double shift = unif(rng);
      for (int r = 0; r < pairs; ++r) {
        const double u = h(r, d) + shift;
        base(d, r) = u - std::floor(u);
      }
    }
  } else {
    for (int r = 0; r < pairs; ++r)
      for (Eigen::Index d = 0; d < m; ++d) base(d, r) = unif(rng);
  }
  base = base.cwiseMax(1e-300).cwiseMin(1.0 - 1e-16);

  // Split-normal inverse CDF per axis.
  auto split_point = [&](const Eigen::VectorXd& u) {
    Eigen::VectorXd x(m);
    for (Eigen::Index k = 0; k < m; ++k) {
      const double r = lo_mass(k);
      x(k) = u(k) < r ? s_lo(k) * norm_quantile(0.5 * u(k) / r)
                      : s_hi(k) * norm_quantile(0.5 + 0.5 * (u(k) - r) / (1.0 - r));
    }
    return x;
  };

  Eigen::VectorXd from_main(2 * main_pairs), from_prior(2 * prior_pairs);
  for (int r = 0; r < main_pairs; ++r) {
    const Eigen::VectorXd u = base.col(r);
    from_main(2 * r) = log_weight(z_hat + axes * split_point(u));
    from_main(2 * r + 1) = log_weight(z_hat + axes * split_point((1.0 - u.array()).matrix()));
  }
  for (int k = 0; k < prior_pairs; ++k) {
    const Eigen::VectorXd e = base.col(main_pairs + k).unaryExpr([](double u) { return norm_quantile(u); });
    from_prior(2 * k) = log_weight(e);
    from_prior(2 * k + 1) = log_weight(-e);
  }
  const double n2 = static_cast<double>(from_prior.size());
  if (main_pairs == 0) return log_sum_exp(from_prior) - std::log(n2);
  const double part1 = log_mix_main + log_sum_exp(from_main) - std::log(static_cast<double>(from_main.size()));
  const double part2 = log_mix_prior + log_sum_exp(from_prior) - std::log(n2);
  const double hi = std::max(part1, part2);
  return hi + std::log(std::exp(part1 - hi) + std::exp(part2 - hi));
}

double laplace_loglik_gradient(const PrevalenceParams& params, const SurveyDataset& data, Eigen::VectorXd& grad,
                               const LatentIntegrationSettings& settings, const Eigen::VectorXd* warm,
                               Eigen::VectorXd* mode_out) {
  const LaplaceApproximation lap = laplace_approximation(params, data, settings, Degenerate::forbid, warm);
  if (mode_out) *mode_out = lap.mode;
  const BinaryTerms terms(params, data);
  const Eigen::MatrixXd d = prevalence_design(data);
  const Eigen::Index m = data.n_locations(), n = d.rows(), p = d.cols();
  const Eigen::MatrixXd& k = lap.k;

  // Per individual at the mode: score g, curvature w and dw/d eta.
  Eigen::VectorXd g(n), d3_loc = Eigen::VectorXd::Zero(m);
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(m, p), e = Eigen::MatrixXd::Zero(m, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index l = data.location_of[i];
    const double q = terms.sign(i);
    const double x = q * (terms.offset(i) + lap.mode(l));
    const double lam = inv_mills(x);
    const double wi = lam * (x + lam);
    const double d3 = q * lam * (1.0 - (x + lam) * (x + 2.0 * lam));
    g(i) = q * lam;
    d3_loc(l) += d3;
    t.row(l) -= wi * d.row(i);
    e.row(l) += d3 * d.row(i);
  }

  // R = W^1/2 B^-1 W^1/2 and C = (K^-1 + W)^-1 = K - K R K.
  const Eigen::MatrixXd z = lap.b_lower.triangularView<Eigen::Lower>().solve(
      Eigen::MatrixXd(lap.w.array().sqrt().matrix().asDiagonal()));
  const Eigen::MatrixXd r = z.transpose() * z;
  const Eigen::MatrixXd v = z * k;
  const Eigen::VectorXd c_diag = k.diagonal() - v.colwise().squaredNorm().transpose();
  const Eigen::VectorXd u = c_diag.cwiseProduct(d3_loc);
  auto solve_mode_shift = [&](const Eigen::MatrixXd& b) -> Eigen::MatrixXd { return b - k * (r * b); };

  grad.resize(p + 2);
  // Regression block: explicit score plus the change of log|B| through W.
  const Eigen::MatrixXd df = solve_mode_shift(k * t);
  grad.head(p) = d.transpose() * g - 0.5 * (e.transpose() * c_diag + df.transpose() * u);

  // Covariance parameters through dK.
  const Eigen::MatrixXd dist = distance_matrix(data.locations);
  const Eigen::MatrixXd dk_phi = k.cwiseProduct(dist) / params.phi;
  const Eigen::MatrixXd* dks[2] = {&k, &dk_phi};
  for (int j = 0; j < 2; ++j) {
    const Eigen::MatrixXd& dk = *dks[j];
    const double explicit_part = 0.5 * lap.a.dot(dk * lap.a) - 0.5 * r.cwiseProduct(dk).sum();
    const Eigen::VectorXd shift = solve_mode_shift(dk * lap.a);
    grad(p + j) = explicit_part - 0.5 * u.dot(shift);
  }
  return lap.log_marginal;
}

double exact_loglik_smallm(const PrevalenceParams& params, const SurveyDataset& data,
                           const LatentIntegrationSettings& settings, Degenerate mode) {
  check_binary(data, "exact_loglik_smallm");
  const Eigen::Index m = data.n_locations();
  if (m > 3) throw UnsupportedSizeError("exact_loglik_smallm supports at most 3 locations, got " + std::to_string(m));
  check_params(params, data, mode);
  settings.validate();
  const BinaryTerms terms(params, data);
  const CholeskyFactor lk = robust_cholesky(prior_covariance(params, data), mode, "latent covariance");
  const GaussHermiteRule& rule = gauss_hermite_normal(settings.quadrature_order);
  const Eigen::Index order = rule.nodes.size();

  Eigen::Index total = 1;
  for (Eigen::Index i = 0; i < m; ++i) total *= order;
  Eigen::VectorXd terms_log(total);
  Eigen::VectorXd z(m);
  for (Eigen::Index idx = 0; idx < total; ++idx) {
    Eigen::Index rest = idx;
    double log_weight = 0.0;
    for (Eigen::Index d = 0; d < m; ++d) {
      const Eigen::Index node = rest % order;
      rest /= order;
      z(d) = rule.nodes(node);
      log_weight += std::log(rule.weights(node));
    }
    terms_log(idx) = log_weight + terms.loglik(lk.lower * z);
  }
  return log_sum_exp(terms_log);
}

std::pair<Eigen::VectorXd, bool> probit_regression(const Eigen::MatrixXd& design, const Eigen::VectorXi& y,
                                                   int max_iter) {
  if (design.rows() != y.size()) throw SchemaError("probit_regression: design and outcome lengths differ");
  const Eigen::VectorXd q = (2 * y.array() - 1).cast<double>().matrix();
  auto value = [&](const Eigen::VectorXd& beta) {
    const Eigen::VectorXd x = q.cwiseProduct(design * beta);
    double total = 0.0;
    for (Eigen::Index k = 0; k < x.size(); ++k) total += log_norm_cdf(x(k));
    return total;
  };
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(design.cols());
  double current = value(beta);
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::VectorXd x = q.cwiseProduct(design * beta);
    Eigen::VectorXd score(x.size()), w(x.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      const double lam = inv_mills(x(k));
      score(k) = q(k) * lam;
      w(k) = lam * (x(k) + lam);
    }
    const Eigen::MatrixXd info = design.transpose() * w.asDiagonal() * design;
    const Eigen::VectorXd step = info.ldlt().solve(design.transpose() * score);
    if (!step.allFinite()) return {beta, false};
    double t = 1.0;
    Eigen::VectorXd next = beta + step;
    double v = value(next);
    for (int h = 0; h < 30 && !(v >= current); ++h) {
      t *= 0.5;
      next = beta + t * step;
      v = value(next);
    }
    beta = next;
    current = v;
    if ((t * step).lpNorm<Eigen::Infinity>() < 1e-10) return {beta, true};
  }
  return {beta, false};
}

PrevalenceParams initial_binomial_params(const SurveyDataset& data) {
  check_binary(data, "initial_binomial_params");
  const auto [coef, ok] = probit_regression(prevalence_design(data), *data.binary);
  (void)ok;
  PrevalenceParams p;
  p.alpha_t = coef(0);
  p.beta_gamma_t = coef.tail(coef.size() - 1);
  p.sigma2_t = 0.5;
  const double dmax = max_pairwise_distance(data.locations);
  p.phi = dmax > 0.0 ? 0.1 * dmax : 1.0;
  return p;
}

FitResult fit_binomial(const SurveyDataset& data, std::optional<PrevalenceParams> init,
                       const LatentIntegrationSettings& settings, const BinomialFitOptions& options) {
  check_binary(data, "fit_binomial");
  settings.validate();
  const bool vary = thresholds_vary(data);
  const Eigen::Index p = prevalence_design(data).cols();

  FitResult fit;
  fit.model = ModelKind::binomial;
  PrevalenceParams start = init ? *init : initial_binomial_params(data);
  if (options.fixed_phi) start.phi = *options.fixed_phi;
  check_params(start, data, Degenerate::forbid);

  const bool free_phi = !options.fixed_phi.has_value();
  const Eigen::Index nw = p + (free_phi ? 2 : 1);
  fit.working_names = detail::regression_names(data, vary);
  fit.working_names.push_back("log_sigma2");
  if (free_phi) fit.working_names.push_back("log_phi");

  auto unpack = [&](const Eigen::VectorXd& w) {
    PrevalenceParams q;
    q.alpha_t = w(0);
    q.beta_gamma_t = w.segment(1, p - 1);
    q.sigma2_t = std::exp(w(p));
    q.phi = free_phi ? std::exp(w(p + 1)) : start.phi;
    return q;
  };
  Eigen::VectorXd x0(nw);
  x0(0) = start.alpha_t;
  x0.segment(1, p - 1) = start.beta_gamma_t;
  x0(p) = std::log(start.sigma2_t);
  if (free_phi) x0(p + 1) = std::log(start.phi);

  Eigen::VectorXd warm;
  const ValueFunction value = [&](const Eigen::VectorXd& w) {
    try {
      const PrevalenceParams q = unpack(w);
      if (!std::isfinite(q.sigma2_t) || !(q.sigma2_t > 0.0) || !std::isfinite(q.phi) || !(q.phi > 0.0)) return kNegInf;
      const double v = integrated_loglik(q, data, settings, Degenerate::forbid, warm.size() ? &warm : nullptr);
      return v;
    } catch (const NumericalError&) {
      return kNegInf;
    } catch (const ConditioningError&) {
      return kNegInf;
    } catch (const ParameterDomainError&) {
      return kNegInf;
    }
  };
  // The warm start only moves at points where the gradient is requested, so
  // the differences below see a fixed starting value.
  auto refresh_warm = [&](const Eigen::VectorXd& w) {
    try {
      warm = laplace_approximation(unpack(w), data, settings, Degenerate::forbid, warm.size() ? &warm : nullptr).mode;
    } catch (const NumericalError&) {
      warm.resize(0);
    } catch (const ConditioningError&) {
      warm.resize(0);
    } catch (const ParameterDomainError&) {
      warm.resize(0);
    }
  };

  const Eigen::VectorXi& y = *data.binary;
  if (y.size() == 0 || (y.array() == y(0)).all()) {
    fit.prevalence = start;
    fit.working = x0;
    fit.loglik = value(x0);
    fit.converged = false;
    fit.message = "separation: all binary outcomes are identical, intercept not identifiable";
    fit.diagnostics["separation"] = 1.0;
    return fit;
  }

  refresh_warm(x0);
  const bool ep = settings.mode == LatentIntegrationSettings::Mode::ep;
  const bool analytic = ep || settings.mode == LatentIntegrationSettings::Mode::laplace;
  if (ep) warm.resize(0);
  const Objective objective = [&](const Eigen::VectorXd& w, Eigen::VectorXd* grad) {
    if (grad && analytic) {
      try {
        const PrevalenceParams q = unpack(w);
        if (!std::isfinite(q.sigma2_t) || !std::isfinite(q.phi)) throw ParameterDomainError("overflow");
        Eigen::VectorXd full, next;
        const Eigen::VectorXd* start = warm.size() ? &warm : nullptr;
        const double v = ep ? ep_loglik_gradient(q, data, full, settings, start, &next)
                            : laplace_loglik_gradient(q, data, full, settings, start, &next);
        warm = next;
        *grad = full.head(nw);
        return v;
      } catch (const NumericalError&) {
      } catch (const ConditioningError&) {
      } catch (const ParameterDomainError&) {
      }
      grad->setConstant(w.size(), std::numeric_limits<double>::quiet_NaN());
      return kNegInf;
    }
    if (grad) refresh_warm(w);
    const double v = value(w);
    if (grad) {
      if (std::isfinite(v)) {
        *grad = finite_difference_gradient(value, w, options.fd_step);
      } else {
        grad->setConstant(w.size(), std::numeric_limits<double>::quiet_NaN());
      }
    }
    return v;
  };

  OptimizerOptions oo;
  oo.max_iter = options.max_iter;
  oo.gtol = options.gtol;
  const OptimizerResult opt = maximize_bfgs(objective, x0, oo);
  if (!ep) refresh_warm(opt.x);

  fit.working = opt.x;
  fit.prevalence = unpack(opt.x);
  fit.loglik = opt.value;
  fit.converged = opt.converged;
  fit.iterations = opt.iterations;
  fit.gradient_norm = opt.gradient.size() ? opt.gradient.lpNorm<Eigen::Infinity>() : 0.0;
  fit.message = opt.message;
  fit.trace = opt.trace;

  std::optional<Eigen::MatrixXd> cov;
  if (options.compute_obs_info && std::isfinite(opt.value)) {
    fit.obs_info = analytic ? Eigen::MatrixXd(-hessian_from_gradient(objective, opt.x, 1e-5))
                            : Eigen::MatrixXd(-finite_difference_hessian(value, opt.x, options.fd_step));
    fit.obs_info = 0.5 * (fit.obs_info + fit.obs_info.transpose()).eval();
    cov = detail::invert_information(fit.obs_info);
    if (!cov) fit.message += "; observed information not positive definite";
  }

  for (Eigen::Index j = 0; j < p; ++j)
    fit.estimates.push_back(detail::delta_estimate(fit.working_names[j], Scale::prevalence, opt.x(j),
                                                   detail::unit(nw, j), cov, false));
  fit.estimates.push_back(
      detail::delta_estimate("sigma2", Scale::prevalence, opt.x(p), detail::unit(nw, p), cov, true));
  if (free_phi)
    fit.estimates.push_back(
        detail::delta_estimate("phi", Scale::prevalence, opt.x(p + 1), detail::unit(nw, p + 1), cov, true));
  if (vary) fit.diagnostics["threshold_coefficient"] = opt.x(p - 1);
  return fit;
}

}  // namespace dichogeo
