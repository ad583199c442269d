#ifndef DICHOGEO_SPLINE_HPP
#define DICHOGEO_SPLINE_HPP

#include "dichogeo/types.hpp"

#include <Eigen/Dense>

namespace dichogeo {

/// Linear spline basis (a, max(0, a - k_1), ..., max(0, a - k_K)).
Eigen::VectorXd spline_basis(double a, const SplineSpec& spec);

/// Basis rows for a column of values (n x (K+1)).
Eigen::MatrixXd spline_basis(const Eigen::VectorXd& a, const SplineSpec& spec);

}  // namespace dichogeo

#endif  // DICHOGEO_SPLINE_HPP
