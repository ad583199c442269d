#ifndef DICHOGEO_SURVEY_IO_HPP
#define DICHOGEO_SURVEY_IO_HPP

#include "dichogeo/csv.hpp"
#include "dichogeo/types.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dichogeo {

struct SplineColumn {
  std::string column;
  SplineSpec spec;
};

/// Which columns of a survey CSV make up the dataset. Fixed columns are
/// loc_id, x, y and the outcome; an optional `id` column must be unique.
struct SurveySchema {
  std::string outcome = "outcome";
  bool binary_outcome = false;  // 0/1 values instead of a continuous measurement
  bool log_outcome = false;
  std::vector<std::string> covariates;
  std::vector<SplineColumn> splines;     // each expands to knots + 1 columns
  std::vector<std::string> keep;         // raw columns retained for threshold rules

  /// Covariate names in design order: plain covariates, then for each
  /// spline `col`, `col_k1`, ... `col_kK`.
  std::vector<std::string> design_names() const;
  /// Every column the schema reads.
  std::vector<std::string> required_columns() const;
};

struct LoadedSurvey {
  SurveyDataset data;
  std::map<std::string, std::vector<std::string>> raw;  // kept columns, one entry per individual
  std::vector<long> lines;                              // file row of each individual
};

/// Individuals in file order; locations in order of first appearance. Rows
/// sharing a loc_id must share coordinates.
LoadedSurvey read_survey(const CsvTable& table, const SurveySchema& schema);
LoadedSurvey load_survey(const std::filesystem::path& path, const SurveySchema& schema);

/// Covariate rows from raw values in the schema's design order.
Eigen::RowVectorXd design_row(const SurveySchema& schema, const std::map<std::string, double>& values);

/// loc_id, x, y, outcome, then threshold when present, then covariates.
/// Binary outcomes are written when there is no continuous outcome.
void write_survey_csv(const SurveyDataset& data, std::ostream& out);

// Thresholds ------------------------------------------------------------

/// One row of an age/sex/pregnancy table. Ages are in years, age_min
/// inclusive and age_max exclusive (absent: unbounded).
struct ThresholdGroup {
  std::optional<std::string> sex;  // "female" / "male"; absent matches both
  double age_min = 0.0;
  std::optional<double> age_max;
  std::optional<bool> pregnant;    // absent matches both
  double threshold = 0.0;
};

struct ThresholdTable {
  std::vector<ThresholdGroup> groups;  // first match wins
};

/// Severe-anaemia haemoglobin cut-offs in g/dL.
ThresholdTable severe_anaemia_table();

/// Columns sex, age_min, age_max, pregnant, threshold. Empty sex, pregnant
/// or "any" match everything; empty age_max is unbounded.
ThresholdTable read_threshold_table(const CsvTable& table);
ThresholdTable load_threshold_table(const std::filesystem::path& path);

struct ThresholdRule {
  enum class Kind { none, scalar, column, table };
  Kind kind = Kind::none;
  double value = 0.0;
  std::string column = "threshold";
  ThresholdTable table;
  std::string sex_column = "sex";
  std::string age_column = "age";
  std::string pregnant_column = "pregnant";
  bool log = false;  // apply log to every resolved threshold

  /// Raw columns the rule reads.
  std::vector<std::string> columns() const;
};

/// c_ij per individual. Throws IngestionError listing the first unmatched
/// keys, or when a looked-up value is malformed.
Eigen::VectorXd resolve_thresholds(const LoadedSurvey& survey, const ThresholdRule& rule);

}  // namespace dichogeo

#endif  // DICHOGEO_SURVEY_IO_HPP
