#ifndef DICHOGEO_OPTIMIZE_HPP
#define DICHOGEO_OPTIMIZE_HPP

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

namespace dichogeo {

/// Objective returning f(x); fills `grad` when it is non-null.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

struct OptimizerOptions {
  int max_iter = 500;
  double gtol = 1e-6;      // max-norm of the gradient
  double max_step = 2.0;   // cap on the max-norm of a single step
};

struct OptimizerResult {
  Eigen::VectorXd x;
  double value = 0.0;
  Eigen::VectorXd gradient;
  bool converged = false;
  int iterations = 0;
  std::string message;
  std::vector<double> trace;  // objective after each accepted iteration
};

/// BFGS ascent with Armijo backtracking. Accepted iterates never decrease f.
OptimizerResult maximize_bfgs(const Objective& f, Eigen::VectorXd x0, const OptimizerOptions& options = {});

using ValueFunction = std::function<double(const Eigen::VectorXd& x)>;

/// Central differences with a fixed step.
Eigen::VectorXd finite_difference_gradient(const ValueFunction& f, const Eigen::VectorXd& x, double h);

/// Central-difference Hessian from values, step h_j = rel_step * (1 + |x_j|).
Eigen::MatrixXd finite_difference_hessian(const ValueFunction& f, const Eigen::VectorXd& x, double rel_step);

/// Symmetrized central-difference Jacobian of an analytic gradient.
Eigen::MatrixXd hessian_from_gradient(const Objective& f, const Eigen::VectorXd& x, double rel_step);

}  // namespace dichogeo

#endif  // DICHOGEO_OPTIMIZE_HPP
