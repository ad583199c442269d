#include "dichogeo/spline.hpp"

#include <algorithm>

namespace dichogeo {

Eigen::VectorXd spline_basis(double a, const SplineSpec& spec) {
  spec.validate();
  Eigen::VectorXd b(static_cast<Eigen::Index>(spec.knots.size()) + 1);
  b(0) = a;
  for (std::size_t h = 0; h < spec.knots.size(); ++h)
    b(static_cast<Eigen::Index>(h) + 1) = std::max(0.0, a - spec.knots[h]);
  return b;
}

Eigen::MatrixXd spline_basis(const Eigen::VectorXd& a, const SplineSpec& spec) {
  Eigen::MatrixXd out(a.size(), static_cast<Eigen::Index>(spec.knots.size()) + 1);
  for (Eigen::Index i = 0; i < a.size(); ++i) out.row(i) = spline_basis(a(i), spec).transpose();
  return out;
}

}  // namespace dichogeo
