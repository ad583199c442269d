#include "dichogeo/optimize.hpp"

#include <cmath>
#include <limits>

namespace dichogeo {

OptimizerResult maximize_bfgs(const Objective& f, Eigen::VectorXd x0, const OptimizerOptions& options) {
  const auto n = x0.size();
  OptimizerResult res;
  res.x = std::move(x0);
  res.gradient.resize(n);
  res.value = f(res.x, &res.gradient);
  if (!std::isfinite(res.value) || !res.gradient.allFinite()) {
    res.message = "objective not finite at the starting point";
    return res;
  }
  res.trace.push_back(res.value);

  // Inverse-Hessian approximation of -f.
  Eigen::MatrixXd h_inv = Eigen::MatrixXd::Identity(n, n);
  bool fresh = true;
  Eigen::VectorXd g_new(n);

  for (res.iterations = 0; res.iterations < options.max_iter; ++res.iterations) {
    if (res.gradient.lpNorm<Eigen::Infinity>() < options.gtol) {
      res.converged = true;
      res.message = "gradient below tolerance";
      return res;
    }
    Eigen::VectorXd dir = h_inv * res.gradient;
    double slope = res.gradient.dot(dir);
    if (!(slope > 0.0)) {
      h_inv.setIdentity();
      fresh = true;
      dir = res.gradient;
      slope = res.gradient.squaredNorm();
    }
    double t = 1.0;
    const double dmax = dir.lpNorm<Eigen::Infinity>();
    if (dmax * t > options.max_step) t = options.max_step / dmax;

    bool accepted = false;
    Eigen::VectorXd x_new;
    double f_new = 0.0;
    for (int bt = 0; bt < 40; ++bt, t *= 0.5) {
      x_new = res.x + t * dir;
      f_new = f(x_new, &g_new);
      if (std::isfinite(f_new) && g_new.allFinite() && f_new >= res.value + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (!fresh) {
        h_inv.setIdentity();
        fresh = true;
        --res.iterations;
        continue;
      }
      res.message = "line search failed";
      return res;
    }

    const Eigen::VectorXd s = x_new - res.x;
    const Eigen::VectorXd y = res.gradient - g_new;  // gradient change of -f
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (fresh) {
        h_inv *= sy / y.squaredNorm();
        fresh = false;
      }
      const double rho = 1.0 / sy;
      const Eigen::VectorXd hy = h_inv * y;
      h_inv += (rho * rho * y.dot(hy) + rho) * s * s.transpose() - rho * (hy * s.transpose() + s * hy.transpose());
    }
    res.x = std::move(x_new);
    res.value = f_new;
    res.gradient = g_new;
    res.trace.push_back(res.value);
  }
  res.converged = res.gradient.lpNorm<Eigen::Infinity>() < options.gtol;
  res.message = res.converged ? "gradient below tolerance" : "iteration limit reached";
  return res;
}

Eigen::VectorXd finite_difference_gradient(const ValueFunction& f, const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    xp(j) = x(j) + h;
    const double fp = f(xp);
    xp(j) = x(j) - h;
    const double fm = f(xp);
    xp(j) = x(j);
    g(j) = (fp - fm) / (2.0 * h);
  }
  return g;
}

Eigen::MatrixXd finite_difference_hessian(const ValueFunction& f, const Eigen::VectorXd& x, double rel_step) {
  const auto n = x.size();
  Eigen::VectorXd h = (1.0 + x.array().abs()) * rel_step;
  Eigen::MatrixXd hess(n, n);
  const double f0 = f(x);
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < n; ++i) {
    xp(i) = x(i) + h(i);
    const double fp = f(xp);
    xp(i) = x(i) - h(i);
    const double fm = f(xp);
    xp(i) = x(i);
    hess(i, i) = (fp - 2.0 * f0 + fm) / (h(i) * h(i));
    for (Eigen::Index j = 0; j < i; ++j) {
      auto eval = [&](double si, double sj) {
        xp(i) = x(i) + si * h(i);
        xp(j) = x(j) + sj * h(j);
        const double v = f(xp);
        xp(i) = x(i);
        xp(j) = x(j);
        return v;
      };
      const double v = (eval(1, 1) - eval(1, -1) - eval(-1, 1) + eval(-1, -1)) / (4.0 * h(i) * h(j));
      hess(i, j) = hess(j, i) = v;
    }
  }
  return hess;
}

Eigen::MatrixXd hessian_from_gradient(const Objective& f, const Eigen::VectorXd& x, double rel_step) {
  const auto n = x.size();
  Eigen::MatrixXd hess(n, n);
  Eigen::VectorXd gp(n), gm(n);
  Eigen::VectorXd xp = x;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double h = rel_step * (1.0 + std::abs(x(j)));
    xp(j) = x(j) + h;
    f(xp, &gp);
    xp(j) = x(j) - h;
    f(xp, &gm);
    xp(j) = x(j);
    hess.col(j) = (gp - gm) / (2.0 * h);
  }
  return 0.5 * (hess + hess.transpose());
}

}  // namespace dichogeo
