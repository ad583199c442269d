#include "dichogeo/covariance.hpp"

#include <algorithm>
#include <numbers>

namespace dichogeo {

Eigen::MatrixXd cross_distances(std::span<const Location> a, std::span<const Location> b) {
  Eigen::MatrixXd d(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = std::hypot(a[i].x - b[j].x, a[i].y - b[j].y);
  return d;
}

double max_pairwise_distance(std::span<const Location> locs) {
  double best = 0.0;
  for (std::size_t i = 0; i < locs.size(); ++i)
    for (std::size_t j = i + 1; j < locs.size(); ++j)
      best = std::max(best, std::hypot(locs[i].x - locs[j].x, locs[i].y - locs[j].y));
  return best;
}

Eigen::MatrixXd expand_to_individuals(const Eigen::MatrixXd& by_location,
                                      const std::vector<Eigen::Index>& location_of) {
  const auto n = static_cast<Eigen::Index>(location_of.size());
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) out(i, j) = by_location(location_of[i], location_of[j]);
  return out;
}

Eigen::MatrixXd build_covariance(const SurveyDataset& data, const ModelParams& params, Degenerate mode) {
  params.validate(mode);
  const Eigen::MatrixXd corr = exp_correlation(distance_matrix(data.locations), params.phi);
  Eigen::MatrixXd cov = params.sigma2 * expand_to_individuals(corr, data.location_of);
  cov.diagonal().array() += params.tau2;
  return cov;
}

CholeskyFactor robust_cholesky(const Eigen::MatrixXd& a, Degenerate mode, const std::string& what) {
  if (a.rows() != a.cols()) throw ConditioningError(what + ": matrix is not square");
  if (!a.allFinite()) throw ConditioningError(what + ": matrix has non-finite entries");
  const auto n = a.rows();
  if (n == 0) return {Eigen::MatrixXd(0, 0), 0.0};
  if (a.isZero(0.0)) {
    if (mode == Degenerate::allow) return {Eigen::MatrixXd::Zero(n, n), 0.0};
    throw ConditioningError(what + ": matrix is identically zero");
  }

  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() == Eigen::Success) return {llt.matrixL(), 0.0};

  const double base = 1e-10 * a.diagonal().mean();
  if (!(base > 0.0)) throw ConditioningError(what + ": non-positive mean diagonal");
  double jitter = base;
  for (int attempt = 0; attempt < 4; ++attempt, jitter *= 10.0) {
    Eigen::MatrixXd shifted = a;
    shifted.diagonal().array() += jitter;
    llt.compute(shifted);
    if (llt.info() == Eigen::Success) return {llt.matrixL(), jitter};
  }
  throw ConditioningError(what + ": Cholesky failed after jitter up to " + std::to_string(jitter / 10.0));
}

std::vector<Location> project_equirectangular(std::span<const Location> lonlat) {
  constexpr double earth_radius_km = 6371.0;
  constexpr double deg = std::numbers::pi / 180.0;
  if (lonlat.empty()) return {};
  double lat0 = 0.0;
  for (const auto& p : lonlat) lat0 += p.y;
  lat0 /= static_cast<double>(lonlat.size());
  const double coslat = std::cos(lat0 * deg);
  std::vector<Location> out;
  out.reserve(lonlat.size());
  for (const auto& p : lonlat)
    out.push_back({earth_radius_km * p.x * deg * coslat, earth_radius_km * (p.y - lat0) * deg, p.id});
  return out;
}

}  // namespace dichogeo
