#include "dichogeo/quadrature.hpp"

#include "dichogeo/errors.hpp"
#include "dichogeo/normal.hpp"

#include <Eigen/Eigenvalues>

#include <map>
#include <mutex>

namespace dichogeo {

namespace {

GaussHermiteRule golub_welsch(int order) {
  // Jacobi matrix of He_n: zero diagonal, off-diagonal sqrt(k).
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(order, order);
  for (int k = 1; k < order; ++k) jacobi(k, k - 1) = jacobi(k - 1, k) = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
  if (eig.info() != Eigen::Success) throw NumericalError("Gauss-Hermite eigen decomposition failed");
  GaussHermiteRule rule;
  rule.nodes = eig.eigenvalues();
  rule.weights = eig.eigenvectors().row(0).transpose().array().square();
  rule.weights /= rule.weights.sum();
  return rule;
}

}  // namespace

const GaussHermiteRule& gauss_hermite_normal(int order) {
  if (order < 1 || order > 200) throw ParameterDomainError("Gauss-Hermite order must be in [1, 200]");
  static std::mutex mutex;
  static std::map<int, GaussHermiteRule> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(order);
  if (it == cache.end()) it = cache.emplace(order, golub_welsch(order)).first;
  return it->second;
}

double radical_inverse(std::uint64_t index, unsigned base) {
  const double inv_base = 1.0 / base;
  double inv = inv_base;
  double result = 0.0;
  while (index > 0) {
    result += static_cast<double>(index % base) * inv;
    index /= base;
    inv *= inv_base;
  }
  return result;
}

Eigen::MatrixXd halton_points(Eigen::Index n, int dim) {
  static constexpr unsigned primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};
  if (dim < 1 || dim > 16) throw UnsupportedSizeError("Halton dimension must be in [1, 16]");
  Eigen::MatrixXd pts(n, dim);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int d = 0; d < dim; ++d) pts(i, d) = radical_inverse(static_cast<std::uint64_t>(i + 1), primes[d]);
  return pts;
}

Eigen::MatrixXd halton_normal_points(Eigen::Index n, int dim) {
  Eigen::MatrixXd pts = halton_points(n, dim);
  pts = pts.unaryExpr([](double u) { return norm_quantile(u); });
  return pts;
}

}  // namespace dichogeo
