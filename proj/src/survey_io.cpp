#include "dichogeo/survey_io.hpp"

#include "dichogeo/errors.hpp"
#include "dichogeo/format.hpp"
#include "dichogeo/spline.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <ostream>
#include <set>
#include <unordered_map>

namespace dichogeo {

std::vector<std::string> SurveySchema::design_names() const {
  std::vector<std::string> out = covariates;
  for (const auto& s : splines) {
    out.push_back(s.column);
    for (std::size_t k = 0; k < s.spec.knots.size(); ++k) out.push_back(s.column + "_k" + std::to_string(k + 1));
  }
  return out;
}

std::vector<std::string> SurveySchema::required_columns() const {
  std::vector<std::string> out{"loc_id", "x", "y", outcome};
  auto add = [&out](const std::string& c) {
    if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
  };
  for (const auto& c : covariates) add(c);
  for (const auto& s : splines) add(s.column);
  for (const auto& c : keep) add(c);
  return out;
}

namespace {

double number_at(const CsvTable& t, std::size_t r, std::size_t col) {
  const auto v = parse_number(t.rows[r][col]);
  if (!v) {
    const std::string what = t.rows[r][col].empty() ? "missing value" : "not a number: '" + t.rows[r][col] + "'";
    throw IngestionError(what, t.line_of_row[r], t.header[col]);
  }
  return *v;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  const auto a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return {};
  return s.substr(a, s.find_last_not_of(" \t") - a + 1);
}

}  // namespace

LoadedSurvey read_survey(const CsvTable& t, const SurveySchema& schema) {
  for (const auto& s : schema.splines) s.spec.validate();
  const std::size_t c_loc = t.require_column("loc_id"), c_x = t.require_column("x"), c_y = t.require_column("y");
  const std::size_t c_out = t.require_column(schema.outcome);
  std::vector<std::size_t> c_cov;
  for (const auto& c : schema.covariates) c_cov.push_back(t.require_column(c));
  std::vector<std::size_t> c_spline;
  for (const auto& s : schema.splines) c_spline.push_back(t.require_column(s.column));
  std::vector<std::size_t> c_keep;
  for (const auto& c : schema.keep) c_keep.push_back(t.require_column(c));
  const auto c_id = t.column("id");

  const auto n = static_cast<Eigen::Index>(t.rows.size());
  if (n == 0) throw IngestionError("survey has no data rows");
  LoadedSurvey out;
  SurveyDataset& d = out.data;
  const std::vector<std::string> names = schema.design_names();
  d.covariate_names = names;
  d.covariates = Eigen::MatrixXd(n, static_cast<Eigen::Index>(names.size()));
  Eigen::VectorXd y(n);
  std::unordered_map<std::string, Eigen::Index> loc_index;
  std::set<std::string> ids;
  for (const auto& c : schema.keep) out.raw[c].reserve(t.rows.size());

  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto k = static_cast<Eigen::Index>(r);
    const long line = t.line_of_row[r];
    if (c_id && !ids.insert(t.rows[r][*c_id]).second)
      throw IngestionError("duplicate individual id '" + t.rows[r][*c_id] + "'", line, "id");
    const std::string& loc = t.rows[r][c_loc];
    if (loc.empty()) throw IngestionError("missing value", line, "loc_id");
    const double x = number_at(t, r, c_x), yy = number_at(t, r, c_y);
    auto [it, fresh] = loc_index.try_emplace(loc, d.n_locations());
    if (fresh) {
      d.locations.push_back({x, yy, loc});
    } else {
      const Location& l = d.locations[it->second];
      if (l.x != x || l.y != yy)
        throw IngestionError("coordinates differ from the first row of location '" + loc + "'", line, "x");
    }
    d.location_of.push_back(it->second);

    double v = number_at(t, r, c_out);
    if (schema.binary_outcome) {
      if (v != 0.0 && v != 1.0) throw IngestionError("binary outcome must be 0 or 1", line, schema.outcome);
    } else if (schema.log_outcome) {
      if (!(v > 0.0)) throw IngestionError("outcome must be positive to take its log", line, schema.outcome);
      v = std::log(v);
    }
    y(k) = v;

    Eigen::Index col = 0;
    for (std::size_t j = 0; j < c_cov.size(); ++j) d.covariates(k, col++) = number_at(t, r, c_cov[j]);
    for (std::size_t j = 0; j < c_spline.size(); ++j) {
      const Eigen::VectorXd b = spline_basis(number_at(t, r, c_spline[j]), schema.splines[j].spec);
      d.covariates.row(k).segment(col, b.size()) = b.transpose();
      col += b.size();
    }
    for (std::size_t j = 0; j < c_keep.size(); ++j) out.raw[schema.keep[j]].push_back(t.rows[r][c_keep[j]]);
  }
  out.lines = t.line_of_row;
  if (schema.binary_outcome)
    d.binary = y.cast<int>();
  else
    d.continuous = y;
  d.validate();
  return out;
}

LoadedSurvey load_survey(const std::filesystem::path& path, const SurveySchema& schema) {
  const CsvTable t = read_csv_file(path);
  try {
    return read_survey(t, schema);
  } catch (const IngestionError& e) {
    throw e.prefixed(path.filename().string() + ": ");
  }
}

Eigen::RowVectorXd design_row(const SurveySchema& schema, const std::map<std::string, double>& values) {
  auto get = [&values](const std::string& name) {
    const auto it = values.find(name);
    if (it == values.end()) throw SchemaError("covariate profile lacks '" + name + "'");
    return it->second;
  };
  Eigen::RowVectorXd row(static_cast<Eigen::Index>(schema.design_names().size()));
  Eigen::Index col = 0;
  for (const auto& c : schema.covariates) row(col++) = get(c);
  for (const auto& s : schema.splines) {
    const Eigen::VectorXd b = spline_basis(get(s.column), s.spec);
    row.segment(col, b.size()) = b.transpose();
    col += b.size();
  }
  return row;
}

void write_survey_csv(const SurveyDataset& data, std::ostream& out) {
  data.validate();
  if (!data.continuous && !data.binary) throw SchemaError("dataset has no outcome to write");
  out << "loc_id,x,y,outcome";
  if (data.thresholds) out << ",threshold";
  for (Eigen::Index j = 0; j < data.n_covariates(); ++j)
    out << ',' << csv_field(j < static_cast<Eigen::Index>(data.covariate_names.size()) ? data.covariate_names[j]
                                                                                       : "x" + std::to_string(j + 1));
  out << '\n';
  for (Eigen::Index k = 0; k < data.n_individuals(); ++k) {
    const auto i = data.location_of[k];
    const Location& l = data.locations[i];
    out << csv_field(l.id.empty() ? std::to_string(i) : l.id) << ',' << format_full(l.x) << ','
        << format_full(l.y) << ',';
    if (data.continuous)
      out << format_full((*data.continuous)(k));
    else
      out << (*data.binary)(k);
    if (data.thresholds) out << ',' << format_full((*data.thresholds)(k));
    for (Eigen::Index j = 0; j < data.n_covariates(); ++j) out << ',' << format_full(data.covariates(k, j));
    out << '\n';
  }
}

// Thresholds ------------------------------------------------------------

ThresholdTable severe_anaemia_table() {
  ThresholdTable t;
  t.groups = {
      {std::nullopt, 0.5, 5.0, std::nullopt, 7.0},   // children 6-59 months
      {std::nullopt, 5.0, 12.0, std::nullopt, 8.0},  // children 5-11 years
      {std::nullopt, 12.0, 15.0, std::nullopt, 8.0}, // children 12-14 years
      {"female", 15.0, std::nullopt, true, 7.0},
      {"female", 15.0, std::nullopt, false, 8.0},
      {"male", 15.0, std::nullopt, std::nullopt, 8.0},
  };
  return t;
}

namespace {

std::optional<std::string> parse_sex(const std::string& field, long line, const std::string& column) {
  const std::string s = lower(field);
  if (s.empty() || s == "any") return std::nullopt;
  if (s == "f" || s == "female") return "female";
  if (s == "m" || s == "male") return "male";
  throw IngestionError("sex must be female, male or any, found '" + field + "'", line, column);
}

std::optional<bool> parse_flag(const std::string& field, long line, const std::string& column) {
  const std::string s = lower(field);
  if (s.empty() || s == "any") return std::nullopt;
  if (s == "1" || s == "yes" || s == "true") return true;
  if (s == "0" || s == "no" || s == "false") return false;
  throw IngestionError("expected yes, no or any, found '" + field + "'", line, column);
}

}  // namespace

ThresholdTable read_threshold_table(const CsvTable& t) {
  const std::size_t c_sex = t.require_column("sex"), c_min = t.require_column("age_min"),
                    c_max = t.require_column("age_max"), c_preg = t.require_column("pregnant"),
                    c_thr = t.require_column("threshold");
  ThresholdTable out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const long line = t.line_of_row[r];
    ThresholdGroup g;
    g.sex = parse_sex(t.rows[r][c_sex], line, "sex");
    g.age_min = t.rows[r][c_min].empty() ? 0.0 : number_at(t, r, c_min);
    if (!t.rows[r][c_max].empty()) {
      g.age_max = number_at(t, r, c_max);
      if (!(*g.age_max > g.age_min)) throw IngestionError("age_max must exceed age_min", line, "age_max");
    }
    g.pregnant = parse_flag(t.rows[r][c_preg], line, "pregnant");
    g.threshold = number_at(t, r, c_thr);
    out.groups.push_back(g);
  }
  if (out.groups.empty()) throw IngestionError("threshold table has no rows");
  return out;
}

ThresholdTable load_threshold_table(const std::filesystem::path& path) {
  const CsvTable t = read_csv_file(path);
  try {
    return read_threshold_table(t);
  } catch (const IngestionError& e) {
    throw e.prefixed(path.filename().string() + ": ");
  }
}

std::vector<std::string> ThresholdRule::columns() const {
  switch (kind) {
    case Kind::column: return {column};
    case Kind::table: return {sex_column, age_column, pregnant_column};
    default: return {};
  }
}

Eigen::VectorXd resolve_thresholds(const LoadedSurvey& survey, const ThresholdRule& rule) {
  const Eigen::Index n = survey.data.n_individuals();
  Eigen::VectorXd c(n);
  auto raw = [&survey](const std::string& name) -> const std::vector<std::string>& {
    const auto it = survey.raw.find(name);
    if (it == survey.raw.end()) throw SchemaError("threshold rule needs column '" + name + "', which was not loaded");
    return it->second;
  };
  auto row_of = [&survey](Eigen::Index k) {
    return k < static_cast<Eigen::Index>(survey.lines.size()) ? survey.lines[k] : -1L;
  };
  switch (rule.kind) {
    case ThresholdRule::Kind::none: throw SchemaError("no threshold rule configured");
    case ThresholdRule::Kind::scalar: c.setConstant(rule.value); break;
    case ThresholdRule::Kind::column: {
      const auto& col = raw(rule.column);
      for (Eigen::Index k = 0; k < n; ++k) {
        const auto v = parse_number(col[k]);
        if (!v) throw IngestionError(col[k].empty() ? "missing threshold" : "threshold is not a number", row_of(k), rule.column);
        c(k) = *v;
      }
      break;
    }
    case ThresholdRule::Kind::table: {
      const auto& sex = raw(rule.sex_column);
      const auto& age = raw(rule.age_column);
      const auto& preg = raw(rule.pregnant_column);
      for (Eigen::Index k = 0; k < n; ++k) {
        const auto s = parse_sex(sex[k], row_of(k), rule.sex_column);
        const auto a = parse_number(age[k]);
        if (!a) throw IngestionError("age is missing or not a number", row_of(k), rule.age_column);
        const auto p = parse_flag(preg[k], row_of(k), rule.pregnant_column);
        const ThresholdGroup* hit = nullptr;
        for (const auto& g : rule.table.groups) {
          if (g.sex && (!s || *g.sex != *s)) continue;
          if (*a < g.age_min || (g.age_max && *a >= *g.age_max)) continue;
          if (g.pregnant && (!p || *g.pregnant != *p)) continue;
          hit = &g;
          break;
        }
        if (!hit)
          throw IngestionError("no threshold group matches sex='" + sex[k] + "', age='" + age[k] + "', pregnant='" +
                                   preg[k] + "'",
                               row_of(k));
        c(k) = hit->threshold;
      }
      break;
    }
  }
  if (rule.log) {
    if ((c.array() <= 0.0).any()) throw IngestionError("thresholds must be positive to take their log");
    c = c.array().log().matrix();
  }
  return c;
}

}  // namespace dichogeo
