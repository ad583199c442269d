#ifndef DICHOGEO_CONFIG_HPP
#define DICHOGEO_CONFIG_HPP

#include "dichogeo/bin_fit.hpp"
#include "dichogeo/info_loss.hpp"
#include "dichogeo/lin_fit.hpp"
#include "dichogeo/predict.hpp"
#include "dichogeo/sim_harness.hpp"
#include "dichogeo/survey_io.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dichogeo {

enum class Task { simulate, fit_linear, fit_binomial, info_curve, cld, predict, sim_study };

Task parse_task(const std::string& name);  // ConfigError on unknown names
const char* to_string(Task task);

struct SimulateConfig {
  GridKind grid = GridKind::unit225;
  int n_per_location = 1;
  ModelParams truth;  // intercept only
};

struct BinomialConfig {
  enum class Method { ml, mcml };
  Method method = Method::ml;
  LatentIntegrationSettings integration;
  McmlSettings mcml;
  BinomialFitOptions options;
};

struct PredictConfig {
  enum class Models { binomial, linear, both };
  Models models = Models::both;
  std::optional<std::filesystem::path> grid;  // x, y plus optional profile columns
  std::optional<GridKind> grid_kind;          // when no grid file
  PredictionSettings settings;
  std::map<std::string, double> profile;      // raw covariate values
  std::optional<double> profile_threshold;    // needed when thresholds vary
};

struct SimStudyConfig {
  GridKind grid = GridKind::unit225;
  int n_reps = 200;
  std::vector<ScenarioSpec> cells;  // empty: the 18 standard cells
  std::optional<std::filesystem::path> checkpoint_dir;
  LatentIntegrationSettings integration;
  double nugget_floor = 1e-4;
};

/// Everything a run needs. Paths are resolved against the directory of the
/// config file.
struct RunConfig {
  std::optional<Task> task;
  std::uint64_t seed = 1;
  int workers = 1;
  std::filesystem::path output_dir = "out";
  std::optional<std::filesystem::path> survey;
  SurveySchema schema;
  ThresholdRule threshold;
  std::optional<std::filesystem::path> threshold_table;  // table rule from a file
  SimulateConfig simulate;
  LinearFitOptions linear;
  BinomialConfig binomial;
  PredictConfig predict;
  EfiSettings info;
  CldSettings cld;
  SimStudyConfig sim;

  std::string source_text;            // the config as read
  std::filesystem::path base_dir;

  /// Checks that `task` can run: required sections present, referenced
  /// files readable, referenced columns in their headers. ConfigError
  /// otherwise.
  void validate_for(Task task) const;
};

/// Parses YAML text. Unknown keys, wrong types and out-of-range values are
/// ConfigErrors naming the key path.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir);

/// Reads a config file, or a run manifest, whose embedded config and base
/// directory are used so the run can be repeated from the manifest alone.
RunConfig load_config(const std::filesystem::path& path);

}  // namespace dichogeo

#endif  // DICHOGEO_CONFIG_HPP
