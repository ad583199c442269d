#include "doctest.h"
#include "oracles.hpp"

#include "dichogeo/bin_fit.hpp"
#include "dichogeo/bridge.hpp"
#include "dichogeo/errors.hpp"
#include "dichogeo/info_loss.hpp"
#include "dichogeo/random.hpp"
#include "dichogeo/simulate.hpp"

#include <cmath>
#include <numbers>
#include <type_traits>

using namespace dichogeo;

namespace {

// Outcome probabilities for two locations from the bivariate normal cdf:
// P(Y1 = Y2 = 1) = Phi2(a, a; r) with a = alpha~/sqrt(1 + s2), r = s2 rho/(1 + s2).
std::array<double, 4> pair_probs(double alpha_t, double s2, double rho) {
  const double a = alpha_t / std::sqrt(1.0 + s2);
  const double r = s2 * rho / (1.0 + s2);
  const double p11 = oracle::bvn_cdf(a, a, r);
  const double p1 = oracle::cdf(a);
  return {1.0 - 2.0 * p1 + p11, p1 - p11, p1 - p11, p11};
}

// Expected information by enumeration with derivatives from central
// differences of the closed-form probabilities.
double efi_oracle(double alpha_t, double s2, double rho) {
  const double h = 2e-3;
  const auto lo = pair_probs(alpha_t - h, s2, rho);
  const auto mid = pair_probs(alpha_t, s2, rho);
  const auto hi = pair_probs(alpha_t + h, s2, rho);
  double total = 0.0;
  for (int c = 0; c < 4; ++c) {
    const double d1 = (hi[c] - lo[c]) / (2 * h);
    const double d2 = (hi[c] - 2 * mid[c] + lo[c]) / (h * h);
    total += d1 * d1 / mid[c] - d2;
  }
  return total;
}

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

SurveyDataset random_binary(Rng& rng, int m, int max_n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> n_i(1, max_n), bit(0, 1);
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

TEST_CASE("efi_linear examples") {
  Eigen::Matrix2d r;
  r << 1, 0, 0, 1;
  CHECK(efi_linear(r, 1.0, 1.0) == doctest::Approx(1.0).epsilon(1e-14));
  r << 1, 0.5, 0.5, 1;
  CHECK(efi_linear(r, 1.0, 1.0) == doctest::Approx(0.8).epsilon(1e-14));
  CHECK(efi_linear(Eigen::MatrixXd::Ones(1, 1), 1.0, 2.0) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));

  const std::vector<Location> two{{0, 0, "a"}, {std::log(2.0), 0, "b"}};
  ModelParams p;
  p.sigma2 = 1.0;
  p.tau2 = 1.0;
  p.phi = 1.0;  // rho = 0.5
  CHECK(efi_linear(two, p) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK_THROWS_AS(efi_linear(r, 1.0, 0.0), ParameterDomainError);
}

TEST_CASE("efi_binary_two_points: independent probit limit") {
  CHECK(efi_binary_two_points(0.0, 0.0, 0.0) == doctest::Approx(4.0 / std::numbers::pi).epsilon(1e-9));
}

TEST_CASE("efi_binary_two_points against bivariate normal oracle") {
  for (double s2 : {0.5, 1.0, 2.0})
    for (double rho : {0.0, 0.3, 0.7})
      for (double a : {0.0, 0.8, 1.6}) {
        CAPTURE(s2);
        CAPTURE(rho);
        CAPTURE(a);
        CHECK(efi_binary_two_points(a, s2, rho) == doctest::Approx(efi_oracle(a, s2, rho)).epsilon(2e-3));
      }
}

TEST_CASE("efi_binary_two_points symmetric in alpha~") {
  for (double rho : {0.1, 0.5})
    CHECK(efi_binary_two_points(0.8, 1.0, rho) == doctest::Approx(efi_binary_two_points(-0.8, 1.0, rho)).epsilon(1e-3));
}

TEST_CASE("efi_binary_two_points sampling mode agrees with enumeration") {
  EfiSettings s;
  s.expectation = EfiSettings::Expectation::sample;
  s.n_outcome_draws = 40000;
  s.seed = 3;
  const double exact = efi_binary_two_points(0.4, 1.0, 0.3);
  CHECK(efi_binary_two_points(0.4, 1.0, 0.3, s) == doctest::Approx(exact).epsilon(0.03));
}

TEST_CASE("efi_binary_two_points rejects bad input") {
  CHECK_THROWS_AS(efi_binary_two_points(0.0, 1.0, 1.0), ParameterDomainError);
  CHECK_THROWS_AS(efi_binary_two_points(0.0, -1.0, 0.1), ParameterDomainError);
  EfiSettings s;
  s.qmc_points = 100;
  CHECK_THROWS_AS(efi_binary_two_points(0.0, 1.0, 0.1, s), ConfigError);
  s = {};
  s.rho_grid = {0.2, 1.0};
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("loss_ratio") {
  CHECK(loss_ratio(1.0, 1.0) == 0.0);
  CHECK(loss_ratio(1.0, 0.6366) == doctest::Approx(0.3634).epsilon(1e-12));
  CHECK(loss_ratio(2.0, 0.5) == doctest::Approx(0.75));
  CHECK_THROWS_AS(loss_ratio(0.0, 0.5), ParameterDomainError);
}

TEST_CASE("loss_no_spatial") {
  static_assert(std::is_same_v<decltype(&loss_no_spatial), double (*)(double)>);
  CHECK(std::abs(loss_no_spatial(0.0) - (1.0 - 2.0 / std::numbers::pi)) < 1e-9);
  CHECK(loss_no_spatial(3.0) > 0.9);
  for (double a : {0.5, 1.0, 2.0}) CHECK(loss_no_spatial(a) == doctest::Approx(loss_no_spatial(-a)).epsilon(1e-14));
  // Independent route: 1 - phi^2 / (Phi (1 - Phi)).
  for (double a : {0.3, 1.7, 4.0, 8.0}) {
    const double p = oracle::cdf(a);
    CHECK(loss_no_spatial(a) == doctest::Approx(1.0 - oracle::phi(a) * oracle::phi(a) / (p * (1 - p))).epsilon(1e-9));
  }
  // Both sides of the switch to the log form.
  CHECK(loss_no_spatial(7.999) == doctest::Approx(loss_no_spatial(8.001)).epsilon(1e-6));
  for (double a : {12.0, 40.0, -300.0}) {
    CHECK(std::isfinite(loss_no_spatial(a)));
    CHECK(loss_no_spatial(a) <= 1.0);
    CHECK(loss_no_spatial(a) > 0.9);
  }
}

TEST_CASE("vanishing latent variance recovers the non-spatial loss") {
  for (double a : {0.0, 0.8, 1.6, 2.0}) {
    // sigma2 = 0, tau2 = 1: I_Y = 2 for two independent observations.
    const double r = loss_ratio(2.0, efi_binary_two_points(a, 1e-6, 0.5));
    CHECK(std::abs(r - loss_no_spatial(a)) < 1e-2);
  }
}

TEST_CASE("info_curves: ordering, inequality and monotonicity") {
  EfiSettings s;
  s.rho_grid = {0.1, 0.4, 0.7};
  s.alpha_grid = {0.0, 1.2};
  s.tau2_grid = {0.5, 2.0};
  const auto rec = info_curves(s, 2);
  REQUIRE(rec.size() == 12);
  CHECK(rec[0].tau2 == 0.5);
  CHECK(rec[0].rho == 0.1);
  CHECK(rec[1].alpha_t == 1.2);
  CHECK(rec[2].rho == 0.4);
  for (const auto& x : rec) {
    CHECK(x.i_yt <= x.i_y);
    CHECK(x.r >= 0.0);
    CHECK(x.r <= 1.0);
  }
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t a = 0; a < 2; ++a)
      for (std::size_t k = 0; k + 1 < 3; ++k)
        CHECK(rec[t * 6 + (k + 1) * 2 + a].r <= rec[t * 6 + k * 2 + a].r + 1e-9);
  // Same records regardless of the number of workers.
  const auto serial = info_curves(s, 1);
  for (std::size_t i = 0; i < rec.size(); ++i) CHECK(serial[i].r == rec[i].r);
}

TEST_CASE("pairwise_composite_loglik: single pair is the full likelihood") {
  Rng rng = make_rng(21);
  for (int rep = 0; rep < 5; ++rep) {
    const SurveyDataset d = random_binary(rng, 2, 3);
    const auto p = prev(0.4 - 0.3 * rep, 0.5 + 0.4 * rep, 0.3);
    CldSettings s;
    s.quadrature_order = 80;
    LatentIntegrationSettings e;
    e.quadrature_order = 80;
    CHECK(pairwise_composite_loglik(p, d, s) == doctest::Approx(exact_loglik_smallm(p, d, e)).epsilon(1e-10));
  }
}

TEST_CASE("pairwise_composite_loglik: independence limit") {
  Rng rng = make_rng(22);
  const SurveyDataset d = random_binary(rng, 6, 1);
  const auto p = prev(0.3, 0.0, 0.2);
  double single = 0.0;
  for (Eigen::Index k = 0; k < d.n_individuals(); ++k) {
    const double pr = oracle::cdf(0.3);
    single += (*d.binary)(k) ? std::log(pr) : std::log(1 - pr);
  }
  CHECK(pairwise_composite_loglik(p, d) == doctest::Approx(5 * single).epsilon(1e-12));
}

TEST_CASE("pairwise_composite_loglik: permutation and worker invariance") {
  Rng rng = make_rng(23);
  const SurveyDataset d = random_binary(rng, 7, 3);
  const auto p = prev(-0.2, 1.2, 0.4);
  const double base = pairwise_composite_loglik(p, d);

  SurveyDataset q = d;
  std::vector<Eigen::Index> perm{3, 6, 0, 5, 1, 4, 2}, inv(7);
  for (int i = 0; i < 7; ++i) inv[perm[i]] = i;
  for (int i = 0; i < 7; ++i) q.locations[i] = d.locations[perm[i]];
  for (auto& l : q.location_of) l = inv[l];
  CHECK(pairwise_composite_loglik(p, q) == doctest::Approx(base).epsilon(1e-12));

  CldSettings s;
  s.workers = 3;
  CHECK(pairwise_composite_loglik(p, d, s) == base);

  const auto one = binary_dataset({{0, 0, "a"}}, {0}, {1});
  CHECK_THROWS_AS(pairwise_composite_loglik(p, one), SchemaError);
}

TEST_CASE("pairwise_composite_loglik stays finite for extreme intercepts") {
  Rng rng = make_rng(24);
  SurveyDataset d = random_binary(rng, 4, 3);
  d.binary->setZero();
  CHECK(std::isfinite(pairwise_composite_loglik(prev(9.0, 0.5, 0.3), d)));
}

TEST_CASE("composite_hessian_binary: m = 2 matches the exact likelihood") {
  const auto d = binary_dataset({{0, 0, "a"}, {0.3, 0.1, "b"}}, {0, 0, 1, 1, 1}, {1, 0, 1, 1, 0});
  const auto p = prev(0.2, 0.8, 0.5);
  CldSettings s;
  s.quadrature_order = 40;
  const Eigen::MatrixXd h = composite_hessian_binary(p, d, s);
  REQUIRE(h.rows() == 1);
  const double step = 1e-3;
  auto f = [&](double a) { return exact_loglik_smallm(prev(a, 0.8, 0.5), d); };
  const double fd = (f(0.2 + step) - 2 * f(0.2) + f(0.2 - step)) / (step * step);
  CHECK(h(0, 0) == doctest::Approx(fd).epsilon(1e-4));
}

TEST_CASE("composite_hessian_binary is negative definite on simulated data") {
  ModelParams truth;
  truth.alpha = 0.0;
  truth.beta_gamma = Eigen::VectorXd::Constant(1, 0.5);
  truth.sigma2 = 1.0;
  truth.tau2 = 1.0;
  truth.phi = 0.2;
  auto design = SurveyDesign::intercept_only(unit_grid(5), 2, truth);
  Rng rng = make_rng(25);
  design.covariates = standard_normal(static_cast<Eigen::Index>(design.location_of.size()), 1, rng);
  design.covariate_names = {"x"};
  const SimulatedSurvey sim = simulate_survey(design, 26);
  const SurveyDataset d = dichotomize(sim.data, 0.2);
  const PrevalenceParams q = to_prevalence_scale(truth, d);
  const Eigen::MatrixXd h = composite_hessian_binary(q, d);
  REQUIRE(h.rows() == 2);
  CHECK((h - h.transpose()).cwiseAbs().maxCoeff() <= 1e-6 * h.cwiseAbs().maxCoeff());
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h);
  CHECK(eig.eigenvalues().maxCoeff() < 0.0);
}

TEST_CASE("composite_hessian_continuous: single pair") {
  SurveyDataset d = binary_dataset({{0, 0, "a"}, {std::log(2.0), 0, "b"}}, {0, 1}, {0, 1});
  ModelParams p;
  p.sigma2 = 1.0;
  p.tau2 = 1.5;
  p.phi = 1.0;
  Eigen::Matrix2d s;
  s << 2.5, 0.5, 0.5, 2.5;
  const double expected = -1.5 * Eigen::Vector2d::Ones().dot(s.inverse() * Eigen::Vector2d::Ones());
  const Eigen::MatrixXd h = composite_hessian_continuous(p, d);
  REQUIRE(h.rows() == 1);
  CHECK(h(0, 0) == doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("composite_hessian_continuous against differentiated pairwise Gaussian likelihood") {
  ModelParams truth;
  truth.alpha = 7.5;
  truth.beta_gamma = Eigen::VectorXd::Constant(1, 0.3);
  truth.sigma2 = 0.8;
  truth.tau2 = 1.7;
  truth.phi = 0.3;
  auto design = SurveyDesign::intercept_only(unit_grid(3), 2, truth);
  Rng rng = make_rng(27);
  design.covariates = standard_normal(static_cast<Eigen::Index>(design.location_of.size()), 1, rng);
  design.covariate_names = {"x"};
  const SimulatedSurvey sim = simulate_survey(design, 28);
  // Varying thresholds add a threshold column to the design.
  Eigen::VectorXd c(sim.data.n_individuals());
  for (Eigen::Index k = 0; k < c.size(); ++k) c(k) = k % 3 == 0 ? 7.0 : 8.0;
  const SurveyDataset d = dichotomize(sim.data, c);

  const Eigen::MatrixXd h = composite_hessian_continuous(truth, d);
  REQUIRE(h.rows() == 3);

  // On the prevalence scale the outcome mean is -tau (a + x b + c g) up to a
  // constant shift, which leaves the Hessian alone.
  const double tau = std::sqrt(truth.tau2);
  auto pair_loglik = [&](const Eigen::Vector3d& th) {
    double total = 0.0;
    const auto n = d.n_individuals();
    for (Eigen::Index hh = 0; hh < d.n_locations(); ++hh)
      for (Eigen::Index kk = hh + 1; kk < d.n_locations(); ++kk) {
        std::vector<Eigen::Index> idx;
        for (Eigen::Index i = 0; i < n; ++i)
          if (d.location_of[i] == hh || d.location_of[i] == kk) idx.push_back(i);
        const auto ni = static_cast<Eigen::Index>(idx.size());
        Eigen::VectorXd y(ni), mu(ni);
        Eigen::MatrixXd s(ni, ni);
        for (Eigen::Index a = 0; a < ni; ++a) {
          const auto i = idx[a];
          y(a) = (*sim.data.continuous)(i);
          mu(a) = -tau * (th(0) + d.covariates(i, 0) * th(1) + c(i) * th(2));
          for (Eigen::Index b = 0; b < ni; ++b) {
            const auto& la = d.locations[d.location_of[i]];
            const auto& lb = d.locations[d.location_of[idx[b]]];
            s(a, b) = truth.sigma2 * std::exp(-std::hypot(la.x - lb.x, la.y - lb.y) / truth.phi) +
                      (a == b ? truth.tau2 : 0.0);
          }
        }
        total += oracle::dense_gaussian_logpdf(y, mu, s);
      }
    return total;
  };
  const Eigen::Vector3d th0(-0.4, 0.2, 1.0 / tau);
  const double step = 0.05;
  Eigen::Matrix3d fd;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      Eigen::Vector3d pp = th0, pm = th0, mp = th0, mm = th0;
      pp(i) += step, pp(j) += step;
      pm(i) += step, pm(j) -= step;
      mp(i) -= step, mp(j) += step;
      mm(i) -= step, mm(j) -= step;
      fd(i, j) = (pair_loglik(pp) - pair_loglik(pm) - pair_loglik(mp) + pair_loglik(mm)) / (4 * step * step);
    }
  CHECK((h - fd).cwiseAbs().maxCoeff() <= 1e-6 * fd.cwiseAbs().maxCoeff());
}

TEST_CASE("cld_from_hessians") {
  Eigen::Matrix2d h;
  h << -3.0, 0.5, 0.5, -2.0;
  const CldReport self = cld_from_hessians(h, h);
  CHECK(self.cld == 0.0);
  CHECK(self.logdet_continuous == doctest::Approx(std::log(5.75)).epsilon(1e-14));

  const CldReport r = cld_from_hessians(2.0 * h, h);
  CHECK(r.cld == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-13));
  CHECK(r.cld == r.logdet_continuous - r.logdet_binary);

  Eigen::Matrix2d bad;
  bad << 1.0, 0.0, 0.0, -1.0;
  try {
    cld_from_hessians(h, bad);
    FAIL("expected an error");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("binary") != std::string::npos);
  }
  try {
    cld_from_hessians(bad, h);
    FAIL("expected an error");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("continuous") != std::string::npos);
  }
}

TEST_CASE("cld on simulated data is positive") {
  ModelParams truth;
  truth.alpha = 0.0;
  truth.beta_gamma = Eigen::VectorXd(0);
  truth.sigma2 = 1.0;
  truth.tau2 = 1.0;
  truth.phi = 0.2;
  const auto design = SurveyDesign::intercept_only(unit_grid(6), 1, truth);
  const SimulatedSurvey sim = simulate_survey(design, 29);
  const SurveyDataset d = dichotomize(sim.data, 0.0);
  const CldReport r = cld(truth, d);
  CHECK(r.cld == r.logdet_continuous - r.logdet_binary);
  CHECK(r.cld > 0.0);
}
