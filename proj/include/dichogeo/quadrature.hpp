#ifndef DICHOGEO_QUADRATURE_HPP
#define DICHOGEO_QUADRATURE_HPP

#include <Eigen/Dense>

#include <cstdint>

namespace dichogeo {

/// Nodes and weights with sum_k w_k f(z_k) ~ E[f(Z)], Z ~ N(0, 1).
struct GaussHermiteRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};

/// Golub-Welsch on the probabilists' Hermite recurrence. Cached per order.
const GaussHermiteRule& gauss_hermite_normal(int order);

/// Van der Corput radical inverse of `index` in `base`.
double radical_inverse(std::uint64_t index, unsigned base);

/// First `n` Halton points in [0,1)^dim, skipping index 0 so no coordinate is 0.
Eigen::MatrixXd halton_points(Eigen::Index n, int dim);

/// Halton points pushed through Phi^{-1}: quasi-random N(0, I_dim) draws.
Eigen::MatrixXd halton_normal_points(Eigen::Index n, int dim);

}  // namespace dichogeo

#endif  // DICHOGEO_QUADRATURE_HPP
