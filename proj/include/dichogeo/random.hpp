#ifndef DICHOGEO_RANDOM_HPP
#define DICHOGEO_RANDOM_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <random>

namespace dichogeo {

using Rng = std::mt19937_64;

/// Stream splitting rule: the generator for (seed, stream) is seeded through
/// std::seed_seq over the four 32-bit halves of seed and stream. Every random
/// quantity in the library is drawn from a generator built this way.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

/// 64-bit child seed for (seed, stream); used to hand a seed to a nested call.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  Rng rng = make_rng(seed, stream);
  return rng();
}

inline Eigen::VectorXd standard_normal(Eigen::Index n, Rng& rng) {
  std::normal_distribution<double> z;
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) out(i) = z(rng);
  return out;
}

inline Eigen::MatrixXd standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> z;
  Eigen::MatrixXd out(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) out(i, j) = z(rng);
  return out;
}

}  // namespace dichogeo

#endif  // DICHOGEO_RANDOM_HPP
