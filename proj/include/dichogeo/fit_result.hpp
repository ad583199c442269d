#ifndef DICHOGEO_FIT_RESULT_HPP
#define DICHOGEO_FIT_RESULT_HPP

#include "dichogeo/types.hpp"

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dichogeo {

enum class ModelKind { linear, binomial };

enum class Scale { continuous, prevalence };

/// One reported parameter with its 95% interval on the natural scale.
struct Estimate {
  std::string name;
  Scale scale = Scale::continuous;
  double value = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

struct FitResult {
  ModelKind model = ModelKind::linear;
  std::optional<ModelParams> continuous;  // linear model only
  PrevalenceParams prevalence;

  std::vector<std::string> working_names;
  Eigen::VectorXd working;
  double loglik = 0.0;
  Eigen::MatrixXd obs_info;  // -Hessian on the working scale; empty if not requested
  std::vector<Estimate> estimates;

  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;
  std::string message;
  std::vector<double> trace;
  std::map<std::string, double> diagnostics;

  const Estimate* find(const std::string& name, Scale scale) const {
    for (const auto& e : estimates)
      if (e.name == name && e.scale == scale) return &e;
    return nullptr;
  }
};

inline const char* to_string(Scale s) { return s == Scale::continuous ? "continuous" : "prevalence"; }
inline const char* to_string(ModelKind m) { return m == ModelKind::linear ? "linear" : "binomial"; }

}  // namespace dichogeo

#endif  // DICHOGEO_FIT_RESULT_HPP
