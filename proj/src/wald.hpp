// Internal: Wald intervals and delta-method helpers shared by the fitters.
#ifndef DICHOGEO_SRC_WALD_HPP
#define DICHOGEO_SRC_WALD_HPP

#include "dichogeo/fit_result.hpp"
#include "dichogeo/types.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace dichogeo::detail {

inline constexpr double kZ975 = 1.959963984540054;

/// Inverse of the observed information, or nullopt when it is not positive definite.
inline std::optional<Eigen::MatrixXd> invert_information(const Eigen::MatrixXd& info) {
  if (info.size() == 0) return std::nullopt;
  Eigen::LLT<Eigen::MatrixXd> llt(info);
  if (llt.info() != Eigen::Success) return std::nullopt;
  return llt.solve(Eigen::MatrixXd::Identity(info.rows(), info.cols()));
}

/// Interval for a linear functional g'x of the working vector; `log_scale`
/// exponentiates value and bounds.
inline Estimate delta_estimate(std::string name, Scale scale, double value, const Eigen::VectorXd& grad,
                               const std::optional<Eigen::MatrixXd>& cov, bool log_scale) {
  Estimate e{std::move(name), scale, value, std::numeric_limits<double>::quiet_NaN(),
             std::numeric_limits<double>::quiet_NaN()};
  if (cov) {
    const double se = std::sqrt(std::max(0.0, grad.dot(*cov * grad)));
    e.lower = value - kZ975 * se;
    e.upper = value + kZ975 * se;
  }
  if (log_scale) {
    e.value = std::exp(e.value);
    e.lower = std::exp(e.lower);
    e.upper = std::exp(e.upper);
  }
  return e;
}

/// alpha, covariate names (or beta[k]) and optionally "threshold".
inline std::vector<std::string> regression_names(const SurveyDataset& data, bool threshold_column) {
  std::vector<std::string> names{"alpha"};
  for (Eigen::Index j = 0; j < data.n_covariates(); ++j)
    names.push_back(j < static_cast<Eigen::Index>(data.covariate_names.size()) ? data.covariate_names[j]
                                                                                : "beta[" + std::to_string(j + 1) + "]");
  if (threshold_column) names.push_back("threshold");
  return names;
}

inline Eigen::VectorXd unit(Eigen::Index n, Eigen::Index k) { return Eigen::VectorXd::Unit(n, k); }

}  // namespace dichogeo::detail

#endif  // DICHOGEO_SRC_WALD_HPP
