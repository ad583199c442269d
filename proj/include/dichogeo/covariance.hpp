#ifndef DICHOGEO_COVARIANCE_HPP
#define DICHOGEO_COVARIANCE_HPP

#include "dichogeo/errors.hpp"
#include "dichogeo/types.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <string>

namespace dichogeo {

/// rho(u) = exp(-u / phi).
template <typename Scalar>
Scalar exp_correlation(Scalar u, Scalar phi) {
  using std::exp;
  using std::isfinite;
  if (!isfinite(phi) || !(phi > Scalar(0)))
    throw ParameterDomainError("correlation scale phi must be positive and finite");
  if (!isfinite(u) || u < Scalar(0)) throw ParameterDomainError("distance must be finite and non-negative");
  return exp(-u / phi);
}

/// Elementwise rho over a distance matrix.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> exp_correlation(
    const Eigen::MatrixBase<Derived>& distances, typename Derived::Scalar phi) {
  using Scalar = typename Derived::Scalar;
  if (!std::isfinite(phi) || !(phi > Scalar(0)))
    throw ParameterDomainError("correlation scale phi must be positive and finite");
  return (-distances.derived().array() / phi).exp().matrix();
}

/// Euclidean distances between two location sets (rows: a, columns: b).
Eigen::MatrixXd cross_distances(std::span<const Location> a, std::span<const Location> b);

inline Eigen::MatrixXd distance_matrix(std::span<const Location> locs) { return cross_distances(locs, locs); }

double max_pairwise_distance(std::span<const Location> locs);

/// Individual-level covariance sigma2 * rho(|x_i - x_j|) + tau2 * I (N x N).
Eigen::MatrixXd build_covariance(const SurveyDataset& data, const ModelParams& params,
                                 Degenerate mode = Degenerate::forbid);

/// Expand an m x m location matrix to the N x N individual matrix.
Eigen::MatrixXd expand_to_individuals(const Eigen::MatrixXd& by_location,
                                      const std::vector<Eigen::Index>& location_of);

/// Lower-triangular factor with the jitter that was needed to obtain it.
struct CholeskyFactor {
  Eigen::MatrixXd lower;
  double jitter = 0.0;

  double log_determinant() const { return 2.0 * lower.diagonal().array().log().sum(); }
};

/// Cholesky with escalating diagonal jitter: 1e-10 * mean(diag), then x10 up
/// to three more times. An all-zero matrix is accepted only with
/// Degenerate::allow and yields a zero factor.
CholeskyFactor robust_cholesky(const Eigen::MatrixXd& a, Degenerate mode = Degenerate::forbid,
                               const std::string& what = "covariance");

/// Equirectangular projection of (lon, lat) degrees to kilometres about the
/// mean latitude. Returns (x, y) pairs in the same order.
std::vector<Location> project_equirectangular(std::span<const Location> lonlat);

}  // namespace dichogeo

#endif  // DICHOGEO_COVARIANCE_HPP
