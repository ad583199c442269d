#include "dichogeo/types.hpp"

#include "dichogeo/covariance.hpp"
#include "dichogeo/errors.hpp"

#include <cmath>
#include <set>

namespace dichogeo {

Eigen::VectorXi SurveyDataset::counts() const {
  Eigen::VectorXi n = Eigen::VectorXi::Zero(n_locations());
  for (auto loc : location_of) {
    if (loc < 0 || loc >= n_locations()) throw SchemaError("individual references an unknown location");
    ++n(loc);
  }
  return n;
}

void SurveyDataset::validate(Eigen::Index min_locations) const {
  const auto m = n_locations();
  const auto n = n_individuals();
  if (m < min_locations)
    throw SchemaError("dataset has " + std::to_string(m) + " locations, need at least " +
                      std::to_string(min_locations));
  std::set<std::string> ids;
  for (const auto& loc : locations) {
    if (!std::isfinite(loc.x) || !std::isfinite(loc.y))
      throw SchemaError("location '" + loc.id + "' has non-finite coordinates");
    if (!loc.id.empty() && !ids.insert(loc.id).second)
      throw SchemaError("duplicate location id '" + loc.id + "'");
  }
  const Eigen::VectorXi nc = counts();
  for (Eigen::Index i = 0; i < m; ++i)
    if (nc(i) < 1) throw SchemaError("location '" + locations[i].id + "' has no individuals");
  if (covariates.rows() != n && !(covariates.cols() == 0 && covariates.rows() == 0))
    throw SchemaError("covariate matrix has " + std::to_string(covariates.rows()) + " rows for " +
                      std::to_string(n) + " individuals");
  if (!covariate_names.empty() && static_cast<Eigen::Index>(covariate_names.size()) != covariates.cols())
    throw SchemaError("covariate name count does not match covariate columns");
  if (!covariates.allFinite()) throw SchemaError("non-finite covariate value");
  if (continuous) {
    if (continuous->size() != n) throw SchemaError("continuous outcome length mismatch");
    if (!continuous->allFinite()) throw SchemaError("non-finite continuous outcome");
  }
  if (binary) {
    if (binary->size() != n) throw SchemaError("binary outcome length mismatch");
    for (Eigen::Index k = 0; k < n; ++k)
      if ((*binary)(k) != 0 && (*binary)(k) != 1) throw SchemaError("binary outcome outside {0,1}");
  }
  if (thresholds) {
    if (thresholds->size() != n) throw SchemaError("thresholds must be present for all individuals or none");
    if (!thresholds->allFinite()) throw SchemaError("non-finite threshold");
  }
}

namespace {

void check_positive(double v, const char* name, Degenerate mode) {
  const bool ok = mode == Degenerate::allow ? (std::isfinite(v) && v >= 0.0) : (std::isfinite(v) && v > 0.0);
  if (!ok) throw ParameterDomainError(std::string(name) + " must be " +
                                      (mode == Degenerate::allow ? "non-negative" : "positive") +
                                      " and finite, got " + std::to_string(v));
}

}  // namespace

void ModelParams::validate(Degenerate mode) const {
  if (!std::isfinite(alpha) || !beta_gamma.allFinite()) throw ParameterDomainError("non-finite regression coefficient");
  check_positive(sigma2, "sigma2", mode);
  check_positive(tau2, "tau2", mode);
  check_positive(phi, "phi", Degenerate::forbid);
}

void PrevalenceParams::validate(Degenerate mode) const {
  if (!std::isfinite(alpha_t) || !beta_gamma_t.allFinite())
    throw ParameterDomainError("non-finite regression coefficient");
  check_positive(sigma2_t, "sigma2_t", mode);
  check_positive(phi, "phi", Degenerate::forbid);
}

double CorrelationModel::operator()(double u) const { return exp_correlation(u, phi); }

void SplineSpec::validate() const {
  for (std::size_t h = 0; h < knots.size(); ++h) {
    if (!std::isfinite(knots[h])) throw ParameterDomainError("non-finite spline knot");
    if (h > 0 && !(knots[h] > knots[h - 1])) throw ParameterDomainError("spline knots must be strictly ascending");
  }
}

Eigen::MatrixXd design_matrix(const SurveyDataset& data) {
  const auto n = data.n_individuals();
  Eigen::MatrixXd d(n, 1 + data.n_covariates());
  d.col(0).setOnes();
  if (data.n_covariates() > 0) d.rightCols(data.n_covariates()) = data.covariates;
  return d;
}

bool thresholds_vary(const SurveyDataset& data) {
  if (!data.thresholds || data.thresholds->size() == 0) return false;
  return data.thresholds->maxCoeff() != data.thresholds->minCoeff();
}

Eigen::MatrixXd prevalence_design(const SurveyDataset& data) {
  Eigen::MatrixXd d = design_matrix(data);
  if (!thresholds_vary(data)) return d;
  Eigen::MatrixXd out(d.rows(), d.cols() + 1);
  out << d, *data.thresholds;
  return out;
}

std::optional<double> common_threshold(const SurveyDataset& data) {
  if (!data.thresholds || data.thresholds->size() == 0 || thresholds_vary(data)) return std::nullopt;
  return (*data.thresholds)(0);
}

}  // namespace dichogeo
