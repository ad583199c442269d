#include "doctest.h"
#include "oracles.hpp"

#include "dichogeo/bin_fit.hpp"
#include "dichogeo/bridge.hpp"
#include "dichogeo/errors.hpp"
#include "dichogeo/random.hpp"
#include "dichogeo/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace dichogeo;

namespace {

SurveyDataset binary_dataset(std::vector<Location> locs, std::vector<Eigen::Index> location_of, std::vector<int> y) {
  SurveyDataset d;
  d.locations = std::move(locs);
  d.location_of = std::move(location_of);
  d.binary = Eigen::Map<Eigen::VectorXi>(y.data(), static_cast<Eigen::Index>(y.size()));
  d.covariates = Eigen::MatrixXd(d.n_individuals(), 0);
  return d;
}

PrevalenceParams prev(double alpha_t, double sigma2_t, double phi) {
  PrevalenceParams p;
  p.alpha_t = alpha_t;
  p.sigma2_t = sigma2_t;
  p.phi = phi;
  return p;
}

SurveyDataset random_small(Rng& rng, int m) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> n_i(1, 3), bit(0, 1);
  std::vector<Location> locs;
  std::vector<Eigen::Index> of;
  std::vector<int> y;
  for (int i = 0; i < m; ++i) {
    locs.push_back({u(rng), u(rng), std::to_string(i)});
    const int n = n_i(rng);
    for (int j = 0; j < n; ++j) {
      of.push_back(i);
      y.push_back(bit(rng));
    }
  }
  return binary_dataset(locs, of, y);
}

std::vector<Location> unit_grid(int side) {
  std::vector<Location> locs;
  for (int i = 0; i < side; ++i)
    for (int j = 0; j < side; ++j)
      locs.push_back({i / double(side - 1), j / double(side - 1), std::to_string(i * side + j)});
  return locs;
}

}  // namespace

TEST_CASE("conditional_binary_loglik") {
  const auto one = binary_dataset({{0, 0, "a"}}, {0}, {1});
  CHECK(conditional_binary_loglik(prev(0, 1, 1), one, Eigen::VectorXd::Zero(1)) == doctest::Approx(std::log(0.5)));
  const auto two = binary_dataset({{0, 0, "a"}}, {0, 0}, {1, 0});
  CHECK(conditional_binary_loglik(prev(0, 1, 1), two, Eigen::VectorXd::Zero(1)) ==
        doctest::Approx(2 * std::log(0.5)));
  const auto zero = binary_dataset({{0, 0, "a"}}, {0}, {0});
  CHECK(conditional_binary_loglik(prev(3, 1, 1), zero, Eigen::VectorXd::Zero(1)) ==
        doctest::Approx(-6.607726221510342).epsilon(1e-12));
  // Far tail stays finite.
  CHECK(std::isfinite(conditional_binary_loglik(prev(40, 1, 1), zero, Eigen::VectorXd::Zero(1))));
}

TEST_CASE("integrated_loglik: zero latent variance limit") {
  Rng rng = make_rng(5);
  const SurveyDataset d = random_small(rng, 5);
  const auto p = prev(0.3, 0.0, 0.2);
  double expected = 0.0;
  for (Eigen::Index k = 0; k < d.n_individuals(); ++k)
    expected += std::log((*d.binary)(k) ? oracle::cdf(0.3) : 1.0 - oracle::cdf(0.3));
  CHECK(integrated_loglik(p, d, {}, Degenerate::allow) == doctest::Approx(expected).epsilon(1e-12));
  LatentIntegrationSettings is;
  is.mode = LatentIntegrationSettings::Mode::laplace_is;
  CHECK(integrated_loglik(p, d, is, Degenerate::allow) == doctest::Approx(expected).epsilon(1e-12));
  CHECK_THROWS_AS(integrated_loglik(p, d), ParameterDomainError);
}

TEST_CASE("exact_loglik_smallm: closed cases and 1-D oracle") {
  const auto one = binary_dataset({{0, 0, "a"}}, {0}, {1});
  CHECK(exact_loglik_smallm(prev(0, 1, 0.5), one) == doctest::Approx(std::log(0.5)).epsilon(1e-13));

  // rho = 0 between two far locations
  const auto a = binary_dataset({{0, 0, "a"}}, {0, 0}, {1, 0});
  const auto b = binary_dataset({{0, 0, "b"}}, {0}, {1});
  const auto ab = binary_dataset({{0, 0, "a"}, {100, 0, "b"}}, {0, 0, 1}, {1, 0, 1});
  const auto p = prev(0.4, 0.8, 0.01);
  CHECK(exact_loglik_smallm(p, ab) ==
        doctest::Approx(exact_loglik_smallm(p, a) + exact_loglik_smallm(p, b)).epsilon(1e-12));

  // m = 1 with three individuals against adaptive quadrature.
  const auto three = binary_dataset({{0, 0, "a"}}, {0, 0, 0}, {1, 1, 0});
  const double s = std::sqrt(1.3);
  const double ref = std::log(oracle::expect_normal([&](double z) {
    const double pr = oracle::cdf(0.2 + s * z);
    return pr * pr * (1.0 - pr);
  }));
  LatentIntegrationSettings fine;
  fine.quadrature_order = 80;
  CHECK(exact_loglik_smallm(prev(0.2, 1.3, 1.0), three, fine) == doctest::Approx(ref).epsilon(1e-11));
  CHECK(exact_loglik_smallm(prev(0.2, 1.3, 1.0), three) == doctest::Approx(ref).epsilon(1e-8));

  CHECK_THROWS_AS(exact_loglik_smallm(p, binary_dataset({{0, 0, "a"}, {1, 0, "b"}, {2, 0, "c"}, {3, 0, "d"}},
                                                        {0, 1, 2, 3}, {1, 0, 1, 0})),
                  UnsupportedSizeError);
}

TEST_CASE("exact_loglik_smallm self-convergence") {
  // rho = 0.5 at distance phi * log 2
  const auto d = binary_dataset({{0, 0, "a"}, {std::log(2.0), 0, "b"}}, {0, 1}, {1, 1});
  LatentIntegrationSettings s40, s60;
  s40.quadrature_order = 40;
  s60.quadrature_order = 60;
  const auto p = prev(0.2, 1.0, 1.0);
  CHECK(std::abs(exact_loglik_smallm(p, d, s40) - exact_loglik_smallm(p, d, s60)) < 1e-8);
  // Against the bivariate normal CDF: P(Y1 = Y2 = 1) = P(U1 < a, U2 < a), corr 0.5/2.
  const double scale = std::sqrt(2.0);
  CHECK(std::exp(exact_loglik_smallm(p, d, s60)) ==
        doctest::Approx(oracle::bvn_cdf(0.2 / scale, 0.2 / scale, 0.25)).epsilon(1e-9));
}

TEST_CASE("laplace_is agrees with the quadrature oracle for m <= 3") {
  Rng rng = make_rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  LatentIntegrationSettings is;
  is.mode = LatentIntegrationSettings::Mode::laplace_is;
  is.is_samples = 5000;
  for (int t = 0; t < 30; ++t) {
    const int m = 1 + t % 3;
    const SurveyDataset d = random_small(rng, m);
    const auto p = prev(2.0 * u(rng) - 1.0, 0.2 + 1.5 * u(rng), 0.1 + 0.5 * u(rng));
    is.seed = rng();
    const double oracle_value = exact_loglik_smallm(p, d);
    const double lap = integrated_loglik(p, d);
    const double refined = integrated_loglik(p, d, is);
    CHECK(std::abs(refined - oracle_value) / std::abs(oracle_value) < 1e-3);
    const bool between = (refined - lap) * (oracle_value - refined) >= 0.0;
    CHECK((between || std::abs(refined - oracle_value) < 1e-3 * std::abs(oracle_value)));
  }
}

TEST_CASE("integrated_loglik: permutation invariance and probit symmetry") {
  Rng rng = make_rng(31);
  ModelParams truth;
  truth.sigma2 = 1.0;
  truth.tau2 = 1.0;
  truth.phi = 0.2;
  truth.beta_gamma = Eigen::VectorXd::Constant(1, 0.3);
  auto design = SurveyDesign::intercept_only(unit_grid(5), 2, truth);
  design.covariates = standard_normal(50, 1, rng);
  const SurveyDataset d = dichotomize(simulate_survey(design, 9).data, 0.2);
  PrevalenceParams p = to_prevalence_scale(truth, 0.2);
  for (auto mode : {LatentIntegrationSettings::Mode::laplace, LatentIntegrationSettings::Mode::laplace_is}) {
    LatentIntegrationSettings s;
    s.mode = mode;
    const double base = integrated_loglik(p, d, s);

    // Relabel locations by a random permutation.
    std::vector<Eigen::Index> perm(d.n_locations());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    SurveyDataset q = d;
    for (Eigen::Index i = 0; i < d.n_locations(); ++i) q.locations[perm[i]] = d.locations[i];
    for (auto& loc : q.location_of) loc = perm[loc];
    if (mode == LatentIntegrationSettings::Mode::laplace)
      CHECK(integrated_loglik(p, q, s) == doctest::Approx(base).epsilon(1e-9));
    else
      CHECK(integrated_loglik(p, q, s) == doctest::Approx(base).epsilon(1e-3));

    SurveyDataset flipped = d;
    *flipped.binary = 1 - d.binary->array();
    PrevalenceParams neg = p;
    neg.alpha_t = -p.alpha_t;
    neg.beta_gamma_t = -p.beta_gamma_t;
    CHECK(integrated_loglik(neg, flipped, s) == doctest::Approx(base).epsilon(1e-9));
  }
}

TEST_CASE("Laplace Newton converges quickly on Table-1 scenarios") {
  const auto locs = unit_grid(15);
  int worst = 0;
  for (double tau2 : {0.5, 1.0, 2.0})
    for (double phi : {0.1, 0.2})
      for (double c : {0.0, 0.2, 0.4}) {
        ModelParams truth;
        truth.sigma2 = 1.0;
        truth.tau2 = tau2;
        truth.phi = phi;
        const auto d = dichotomize(simulate_survey(SurveyDesign::intercept_only(locs, 1, truth), 3).data, c);
        const auto lap = laplace_approximation(to_prevalence_scale(truth, c), d);
        worst = std::max(worst, lap.iterations);
      }
  CHECK(worst <= 50);
}

TEST_CASE("Laplace handles duplicated locations") {
  const auto d = binary_dataset({{0, 0, "a"}, {0, 0, "b"}, {0.3, 0, "c"}}, {0, 1, 2}, {1, 0, 1});
  const auto p = prev(0.1, 1.0, 0.2);
  const double lap = integrated_loglik(p, d);
  CHECK(std::isfinite(lap));
  CHECK(lap == doctest::Approx(exact_loglik_smallm(p, d)).epsilon(5e-2));
}

TEST_CASE("settings validation") {
  LatentIntegrationSettings s;
  s.mode = LatentIntegrationSettings::Mode::laplace_is;
  s.is_samples = 50;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.is_samples = 100;
  s.quadrature_order = 10;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("probit regression recovers coefficients") {
  Rng rng = make_rng(1);
  const int n = 4000;
  Eigen::MatrixXd x(n, 2);
  x.col(0).setOnes();
  x.col(1) = standard_normal(n, rng);
  Eigen::VectorXi y(n);
  std::normal_distribution<double> z;
  for (int k = 0; k < n; ++k) y(k) = (0.3 + 0.8 * x(k, 1) + z(rng)) > 0 ? 1 : 0;
  const auto [beta, ok] = probit_regression(x, y);
  CHECK(ok);
  CHECK(beta(0) == doctest::Approx(0.3).epsilon(0.1));
  CHECK(beta(1) == doctest::Approx(0.8).epsilon(0.1));
}

TEST_CASE("fit_binomial: separation is reported, not thrown") {
  const auto d = binary_dataset({{0, 0, "a"}, {1, 0, "b"}, {0, 1, "c"}}, {0, 1, 2}, {1, 1, 1});
  const auto fit = fit_binomial(d);
  CHECK_FALSE(fit.converged);
  CHECK(fit.diagnostics.count("separation") == 1);
}

TEST_CASE("fit_binomial on a simulated survey") {
  ModelParams truth;
  truth.sigma2 = 1.0;
  truth.tau2 = 0.5;
  truth.phi = 0.2;
  const auto d = dichotomize(simulate_survey(SurveyDesign::intercept_only(unit_grid(10), 3, truth), 8).data, 0.4);
  const auto fit = fit_binomial(d);
  CHECK(fit.converged);
  for (size_t i = 1; i < fit.trace.size(); ++i) CHECK(fit.trace[i] >= fit.trace[i - 1]);
  CHECK((fit.obs_info - fit.obs_info.transpose()).cwiseAbs().maxCoeff() < 1e-9);
  const auto* a = fit.find("alpha", Scale::prevalence);
  REQUIRE(a != nullptr);
  CHECK(a->lower < a->upper);
  const double truth_alpha = to_prevalence_scale(truth, 0.4).alpha_t;
  CHECK(std::abs(fit.prevalence.alpha_t - truth_alpha) < 3.0 * (a->upper - a->lower) / 3.92);
}

TEST_CASE("laplace_loglik_gradient matches central differences") {
  Rng rng = make_rng(41);
  for (int rep = 0; rep < 10; ++rep) {
    SurveyDataset d = random_small(rng, 12);
    d.covariates = standard_normal(d.n_individuals(), 2, rng);
    d.covariate_names = {"x1", "x2"};
    if (rep % 2 == 1) {
      // Varying thresholds add a column to the design.
      d.thresholds = Eigen::VectorXd(d.n_individuals());
      for (Eigen::Index k = 0; k < d.n_individuals(); ++k) (*d.thresholds)(k) = k % 2 ? 7.0 : 8.0;
    }
    const Eigen::Index p = prevalence_design(d).cols();
    Eigen::VectorXd x(p + 2);
    x.head(p) = 0.3 * standard_normal(p, rng);
    if (rep % 2 == 1) x(p - 1) = 0.05;
    x(p) = std::log(0.3 + 0.3 * rep);
    x(p + 1) = std::log(0.15 + 0.05 * rep);
    auto unpack = [&](const Eigen::VectorXd& w) {
      PrevalenceParams q;
      q.alpha_t = w(0);
      q.beta_gamma_t = w.segment(1, p - 1);
      q.sigma2_t = std::exp(w(p));
      q.phi = std::exp(w(p + 1));
      return q;
    };
    Eigen::VectorXd grad;
    const double v = laplace_loglik_gradient(unpack(x), d, grad);
    CHECK(v == doctest::Approx(integrated_loglik(unpack(x), d)).epsilon(1e-12));
    REQUIRE(grad.size() == p + 2);
    const double h = 1e-5;
    for (Eigen::Index j = 0; j < p + 2; ++j) {
      Eigen::VectorXd hi = x, lo = x;
      hi(j) += h;
      lo(j) -= h;
      const double fd = (integrated_loglik(unpack(hi), d) - integrated_loglik(unpack(lo), d)) / (2 * h);
      CAPTURE(rep);
      CAPTURE(j);
      CHECK(std::abs(grad(j) - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
}
