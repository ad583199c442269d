#include "doctest.h"

#include "dichogeo/config.hpp"
#include "dichogeo/csv.hpp"
#include "dichogeo/errors.hpp"
#include "dichogeo/pipeline.hpp"
#include "dichogeo/random.hpp"
#include "dichogeo/simulate.hpp"
#include "dichogeo/survey_io.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace dichogeo;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dichogeo_pipeline_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

CsvTable csv(const std::string& text) {
  std::istringstream in(text);
  return read_csv(in);
}

/// A small simulated survey with an age column, sex and pregnancy status.
fs::path make_survey(const fs::path& dir, int side = 4) {
  ModelParams truth;
  truth.alpha = 0.2;
  truth.sigma2 = 1.0;
  truth.tau2 = 0.5;
  truth.phi = 0.3;
  std::vector<Location> locs;
  for (int i = 0; i < side; ++i)
    for (int j = 0; j < side; ++j) locs.push_back({i / double(side - 1), j / double(side - 1), "L" + std::to_string(i * side + j)});
  const auto sim = simulate_survey(SurveyDesign::intercept_only(locs, 3, truth), 99);
  Rng rng = make_rng(5);
  std::uniform_real_distribution<double> age(16.0, 60.0);
  std::ostringstream out;
  out << "id,loc_id,x,y,outcome,age,sex,pregnant\n";
  for (Eigen::Index k = 0; k < sim.data.n_individuals(); ++k) {
    const auto& l = sim.data.locations[sim.data.location_of[k]];
    const bool female = k % 2 == 0;
    out << "p" << k << ',' << l.id << ',' << l.x << ',' << l.y << ',' << (*sim.data.continuous)(k) << ',' << age(rng)
        << ',' << (female ? "female" : "male") << ',' << (female && k % 6 == 0 ? "yes" : "no") << '\n';
  }
  const fs::path p = dir / "survey.csv";
  write_file(p, out.str());
  return p;
}

const char* kPredictConfig = R"(seed: 11
output: out
survey: survey.csv
model:
  covariates: [age]
threshold:
  value: 0.3
linear:
  intervals: false
binomial:
  intervals: false
predict:
  grid: grid.csv
  n_samples: 200
  exceedance: 0.4
  profile: {age: 30}
)";

fs::path predict_fixture(const std::string& name) {
  const fs::path dir = scratch(name);
  make_survey(dir);
  write_file(dir / "grid.csv", "x,y\n0.1,0.1\n0.5,0.5\n0.9,0.2\n0.3,0.8\n");
  write_file(dir / "run.yaml", kPredictConfig);
  return dir;
}

}  // namespace

TEST_CASE("read_csv: quoting, line ends, BOM and blank lines") {
  const auto t = csv("\xEF\xBB\xBF" "a,b,c\r\n1,\"x, y\",3\r\n\r\n4,\"say \"\"hi\"\"\",\"multi\nline\"\n7,8,9");
  REQUIRE(t.header == std::vector<std::string>{"a", "b", "c"});
  REQUIRE(t.rows.size() == 3);
  CHECK(t.rows[0][1] == "x, y");
  CHECK(t.rows[1][1] == "say \"hi\"");
  CHECK(t.rows[1][2] == "multi\nline");
  CHECK(t.line_of_row[0] == 2);
  CHECK(t.line_of_row[1] == 4);
  CHECK(t.line_of_row[2] == 6);
  CHECK(t.rows[2][2] == "9");

  try {
    csv("a,b\n1,2\n3\n");
    FAIL("expected an error");
  } catch (const IngestionError& e) {
    CHECK(e.row() == 3);
  }
  CHECK_THROWS_AS(csv(""), IngestionError);
  CHECK_THROWS_AS(csv("a,a\n1,2\n"), IngestionError);
  CHECK_THROWS_AS(csv("a,b\n\"open,2\n"), IngestionError);
}

TEST_CASE("parse_number is strict") {
  CHECK(parse_number("1.5") == 1.5);
  CHECK(parse_number(" -2e-3 ") == -2e-3);
  CHECK(parse_number("+4") == 4.0);
  for (const char* bad : {"", " ", "1.5x", "abc", "nan", "inf", "1e999", "+-1", "1,5"}) {
    CAPTURE(bad);
    CHECK_FALSE(parse_number(bad).has_value());
  }
}

TEST_CASE("load_survey: a 3-row file") {
  const auto t = csv("loc_id,x,y,outcome\na,0,0,1.5\nb,1,0,2.5\na,0,0,0.5\n");
  const LoadedSurvey s = read_survey(t, {});
  CHECK(s.data.n_locations() == 2);
  CHECK(s.data.n_individuals() == 3);
  CHECK(s.data.counts().sum() == 3);
  CHECK(s.data.location_of == std::vector<Eigen::Index>{0, 1, 0});
  CHECK((*s.data.continuous)(2) == 0.5);
}

TEST_CASE("load_survey: ingestion errors name row and column") {
  auto expect = [](const std::string& text, long row, const std::string& column, const SurveySchema& schema = {}) {
    try {
      read_survey(csv(text), schema);
      FAIL("expected an error for " << text);
    } catch (const IngestionError& e) {
      CHECK(e.row() == row);
      CHECK(e.column() == column);
    }
  };
  expect("loc_id,x,y,outcome\na,0,0,1\nb,1,0,\n", 3, "outcome");
  expect("loc_id,x,y,outcome\na,0,zero,1\n", 2, "y");
  expect("loc_id,x,y\na,0,0\n", 1, "outcome");
  expect("id,loc_id,x,y,outcome\n1,a,0,0,1\n1,b,1,0,2\n", 3, "id");
  expect("loc_id,x,y,outcome\na,0,0,1\na,0.5,0,2\n", 3, "x");
  SurveySchema binary;
  binary.binary_outcome = true;
  expect("loc_id,x,y,outcome\na,0,0,1\nb,1,0,2\n", 3, "outcome", binary);
  SurveySchema logged;
  logged.log_outcome = true;
  expect("loc_id,x,y,outcome\na,0,0,-1\n", 2, "outcome", logged);
  SurveySchema cov;
  cov.covariates = {"age"};
  expect("loc_id,x,y,outcome\na,0,0,1\n", 1, "age", cov);
}

TEST_CASE("survey CSV round trip") {
  ModelParams truth;
  truth.sigma2 = 0.7;
  truth.tau2 = 0.3;
  truth.phi = 0.2;
  std::vector<Location> locs;
  for (int i = 0; i < 5; ++i) locs.push_back({0.1 * i + 1.0 / 3.0, std::sqrt(2.0) * i, "s" + std::to_string(i)});
  SurveyDesign design = SurveyDesign::intercept_only(locs, 2, truth);
  Rng rng = make_rng(8);
  design.covariates = standard_normal(10, 2, rng);
  design.covariate_names = {"u", "v"};
  design.params.beta_gamma = Eigen::Vector2d(0.5, -1.0);
  SurveyDataset d = simulate_survey(design, 4).data;
  d.thresholds = Eigen::VectorXd::LinSpaced(10, 0.1, 1.0);

  std::ostringstream out;
  write_survey_csv(d, out);
  SurveySchema schema;
  schema.covariates = {"u", "v"};
  schema.keep = {"threshold"};
  const LoadedSurvey back = read_survey(csv(out.str()), schema);
  REQUIRE(back.data.n_individuals() == d.n_individuals());
  CHECK((*back.data.continuous - *d.continuous).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((back.data.covariates - d.covariates).cwiseAbs().maxCoeff() <= 1e-12);
  for (Eigen::Index i = 0; i < d.n_locations(); ++i) {
    CHECK(back.data.locations[i].x == d.locations[i].x);
    CHECK(back.data.locations[i].y == d.locations[i].y);
    CHECK(back.data.locations[i].id == d.locations[i].id);
  }
  ThresholdRule rule;
  rule.kind = ThresholdRule::Kind::column;
  CHECK((resolve_thresholds(back, rule) - *d.thresholds).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("spline columns expand in the schema") {
  SurveySchema s;
  s.covariates = {"female"};
  s.splines = {{"age", SplineSpec{{5.0, 15.0}}}};
  CHECK(s.design_names() == std::vector<std::string>{"female", "age", "age_k1", "age_k2"});
  const auto t = csv("loc_id,x,y,outcome,female,age\na,0,0,1,1,20\nb,1,0,2,0,10\n");
  const LoadedSurvey l = read_survey(t, s);
  REQUIRE(l.data.n_covariates() == 4);
  CHECK(l.data.covariates.row(0) == Eigen::RowVector4d(1, 20, 15, 5));
  CHECK(l.data.covariates.row(1) == Eigen::RowVector4d(0, 10, 5, 0));
  CHECK(design_row(s, {{"female", 1.0}, {"age", 20.0}}) == Eigen::RowVector4d(1, 20, 15, 5));
  CHECK_THROWS_AS(design_row(s, {{"female", 1.0}}), SchemaError);
}

TEST_CASE("resolve_thresholds: scalar and the severe-anaemia table") {
  const auto t = csv(
      "loc_id,x,y,outcome,sex,age,pregnant\n"
      "a,0,0,9,female,20,no\n"
      "a,0,0,9,male,3,no\n"
      "b,1,0,9,female,25,yes\n"
      "b,1,0,9,male,40,\n"
      "c,0,1,9,female,13,no\n");
  SurveySchema schema;
  schema.keep = {"sex", "age", "pregnant"};
  const LoadedSurvey s = read_survey(t, schema);

  ThresholdRule scalar;
  scalar.kind = ThresholdRule::Kind::scalar;
  scalar.value = 0.4;
  CHECK(resolve_thresholds(s, scalar) == Eigen::VectorXd::Constant(5, 0.4));

  ThresholdRule table;
  table.kind = ThresholdRule::Kind::table;
  table.table = severe_anaemia_table();
  const Eigen::VectorXd c = resolve_thresholds(s, table);
  CHECK(c(0) == 8.0);  // non-pregnant woman aged 20
  CHECK(c(1) == 7.0);  // child aged 3 (36 months)
  CHECK(c(2) == 7.0);  // pregnant woman
  CHECK(c(3) == 8.0);  // man
  CHECK(c(4) == 8.0);  // child aged 13

  table.log = true;
  CHECK(resolve_thresholds(s, table)(0) == doctest::Approx(std::log(8.0)));

  // An infant of 3 months falls in no group.
  const LoadedSurvey infant = read_survey(csv("loc_id,x,y,outcome,sex,age,pregnant\na,0,0,9,female,0.25,no\n"), schema);
  table.log = false;
  try {
    resolve_thresholds(infant, table);
    FAIL("expected an unmatched-group error");
  } catch (const IngestionError& e) {
    CHECK(std::string(e.what()).find("age='0.25'") != std::string::npos);
    CHECK(e.row() == 2);
  }
}

TEST_CASE("threshold table CSV") {
  const auto t = read_threshold_table(
      csv("sex,age_min,age_max,pregnant,threshold\nany,0,15,any,1.5\nfemale,15,,yes,2\nF,15,,no,3\nmale,15,,,4\n"));
  REQUIRE(t.groups.size() == 4);
  CHECK_FALSE(t.groups[0].sex.has_value());
  CHECK(t.groups[1].pregnant == true);
  CHECK(*t.groups[2].sex == "female");
  CHECK_FALSE(t.groups[3].age_max.has_value());
  CHECK_THROWS_AS(read_threshold_table(csv("sex,age_min,age_max,pregnant,threshold\nany,0,15,maybe,1\n")),
                  IngestionError);
  CHECK_THROWS_AS(read_threshold_table(csv("sex,age_min,age_max,pregnant,threshold\nany,10,5,any,1\n")),
                  IngestionError);
  CHECK_THROWS_AS(read_threshold_table(csv("sex,age_min,pregnant,threshold\nany,0,any,1\n")), IngestionError);
}

TEST_CASE("parse_config: values, defaults and errors") {
  const RunConfig c = parse_config(R"(
task: predict
seed: 42
workers: 3
survey: data/s.csv
model:
  outcome: hb
  log_outcome: true
  covariates: [female]
  splines:
    - {column: age, knots: [5, 15]}
threshold:
  table: builtin:severe_anaemia
  log: true
binomial:
  integration: ep
predict:
  grid: unit225
  exceedance: 0.2
  profile: {female: 1, age: 20}
  profile_threshold: 8
sim_study:
  n_reps: 10
  cells:
    - {tau2: 1, phi: 0.2, c: 0.4}
)",
                                   "/base");
  CHECK(c.task == Task::predict);
  CHECK(c.seed == 42);
  CHECK(c.workers == 3);
  CHECK(c.survey == fs::path("/base/data/s.csv"));
  CHECK(c.output_dir == fs::path("/base/out"));
  CHECK(c.schema.outcome == "hb");
  CHECK(c.schema.log_outcome);
  CHECK(c.schema.design_names().size() == 4);
  CHECK(c.threshold.kind == ThresholdRule::Kind::table);
  CHECK(c.threshold.table.groups.size() == 6);
  CHECK(c.threshold.log);
  CHECK(c.binomial.integration.mode == LatentIntegrationSettings::Mode::ep);
  CHECK(c.predict.grid_kind == GridKind::unit225);
  CHECK(c.predict.profile.at("age") == 20.0);
  CHECK(c.sim.cells.size() == 1);
  CHECK(c.sim.n_reps == 10);
  CHECK(c.info.tau2_grid.size() == 3);

  auto rejects = [](const std::string& text, const std::string& fragment) {
    try {
      parse_config(text, "/base");
      FAIL("accepted: " << text);
    } catch (const ConfigError& e) {
      CAPTURE(e.what());
      CHECK(std::string(e.what()).find(fragment) != std::string::npos);
    }
  };
  rejects("seed: 1\nsurvy: a.csv\n", "survy");
  rejects("predict:\n  n_sampels: 3\n", "predict.n_sampels");
  rejects("seed: -1\n", "seed");
  rejects("seed: 1.5\n", "seed");
  rejects("workers: many\n", "workers");
  rejects("task: fit\n", "unknown task");
  rejects("threshold: {value: 0.4, column: c}\n", "exactly one");
  rejects("model:\n  splines:\n    - {column: age, knots: [3, 1]}\n", "ascending");
  rejects("model:\n  covariates: [age, age]\n", "twice");
  rejects("model:\n  covariates: [x]\n", "'x'");
  rejects("binomial: {integration: exact}\n", "binomial.integration");
  rejects("binomial: {mcml: {n_samples: 10}}\n", "mcml");
  rejects("predict: {exceedance: 1.5}\n", "exceedance");
  rejects("info_curve: {rho: [0, 1.2]}\n", "info_curve");
  rejects("sim_study: {cells: [{tau2: 1, phi: 0.2}]}\n", "c is required");
  rejects("model: [1, 2]\n", "mapping");
  rejects("seed: [1\n", "YAML");
  rejects("", "empty");
  rejects("threshold: {sex_column: s}\n", "table");
}

TEST_CASE("validate_for checks inputs before any work") {
  const fs::path dir = predict_fixture("validate");
  RunConfig c = load_config(dir / "run.yaml");
  CHECK_NOTHROW(c.validate_for(Task::predict));
  CHECK_NOTHROW(c.validate_for(Task::fit_linear));
  CHECK_NOTHROW(c.validate_for(Task::simulate));

  RunConfig bad = c;
  bad.schema.covariates = {"height"};
  CHECK_THROWS_WITH_AS(bad.validate_for(Task::fit_linear), doctest::Contains("height"), ConfigError);
  bad = c;
  bad.predict.profile.clear();
  CHECK_THROWS_WITH_AS(bad.validate_for(Task::predict), doctest::Contains("age"), ConfigError);
  bad = c;
  bad.threshold.kind = ThresholdRule::Kind::table;
  bad.threshold.table = severe_anaemia_table();
  CHECK_THROWS_WITH_AS(bad.validate_for(Task::predict), doctest::Contains("profile_threshold"), ConfigError);
  bad.predict.profile_threshold = 8.0;
  CHECK_NOTHROW(bad.validate_for(Task::predict));
  bad.threshold.age_column = "years";
  CHECK_THROWS_WITH_AS(bad.validate_for(Task::predict), doctest::Contains("years"), ConfigError);
  bad = c;
  bad.survey = dir / "missing.csv";
  CHECK_THROWS_AS(bad.validate_for(Task::fit_linear), ConfigError);
  bad = c;
  bad.task = Task::cld;
  CHECK_THROWS_WITH_AS(bad.validate_for(Task::predict), doctest::Contains("cld"), ConfigError);
  bad = c;
  bad.threshold.kind = ThresholdRule::Kind::none;
  CHECK_THROWS_AS(bad.validate_for(Task::fit_binomial), ConfigError);
  CHECK_THROWS_AS(bad.validate_for(Task::cld), ConfigError);
  bad.threshold.kind = ThresholdRule::Kind::column;
  CHECK_THROWS_AS(bad.validate_for(Task::simulate), ConfigError);
}

TEST_CASE("malformed configs fail in validation, never later") {
  // Any config that passes parse and validation must run without a schema
  // or config error; everything else must be a ConfigError.
  const fs::path dir = predict_fixture("fuzz");
  const std::string base = kPredictConfig;
  std::vector<std::string> lines;
  {
    std::istringstream in(base);
    for (std::string l; std::getline(in, l);) lines.push_back(l);
  }
  const std::vector<std::string> junk{"-1", "0", "abc", "1e309", "[1, 2]", "{a: 1}", "", "nan", "2.5", "true",
                                      "unit225", "grid.csv", "\"", "age", "0.5", "1000000000", "survey.csv", "~"};
  std::mt19937_64 rng(2024);
  int rejected = 0, ran = 0;
  for (int trial = 0; trial < 160; ++trial) {
    std::vector<std::string> m = lines;
    const auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };
    switch (trial % 5) {
      case 0: m.erase(m.begin() + static_cast<long>(pick(m.size()))); break;
      case 1: {
        auto& l = m[pick(m.size())];
        const auto colon = l.find(':');
        if (colon != std::string::npos) l = l.substr(0, colon + 1) + " " + junk[pick(junk.size())];
        break;
      }
      case 2: m.insert(m.begin() + static_cast<long>(pick(m.size())), "  bogus_key: 1"); break;
      case 3: {
        auto& l = m[pick(m.size())];
        l = l.substr(0, pick(l.size() + 1));
        break;
      }
      default: {
        auto& l = m[pick(m.size())];
        if (!l.empty() && l[0] == ' ') l = l.substr(1);
        else l = "  " + l;
      }
    }
    std::string text;
    for (const auto& l : m) text += l + '\n';
    CAPTURE(text);
    std::optional<RunConfig> c;
    try {
      c = parse_config(text, dir);
      c->output_dir = dir / "fuzz_out";
      c->validate_for(Task::predict);
    } catch (const ConfigError&) {
      ++rejected;
      continue;
    }
    ++ran;
    try {
      run_task(Task::predict, *c);
    } catch (const ConfigError& e) {
      FAIL("config error after validation: " << e.what());
    } catch (const SchemaError& e) {
      FAIL("schema error after validation: " << e.what());
    } catch (const NumericalError&) {
      // A legal but unlucky setting (e.g. few iterations) may not converge.
    }
  }
  CHECK(rejected > 20);
  CHECK(ran > 20);
}

TEST_CASE("run_task: deterministic outputs, worker invariance and manifest replay") {
  const fs::path dir = predict_fixture("determinism");
  RunConfig c = load_config(dir / "run.yaml");
  const RunArtifacts a = run_task(Task::predict, c);
  const std::vector<std::string> expected{"estimates.csv", "fit_summary.csv", "prediction_binomial.csv",
                                          "prediction_linear.csv", "comparison.csv"};
  CHECK(a.outputs == expected);
  std::map<std::string, std::string> first;
  for (const auto& f : a.outputs) first[f] = slurp(a.output_dir / f);

  run_task(Task::predict, c);
  for (const auto& f : a.outputs) CHECK(slurp(a.output_dir / f) == first[f]);

  RunConfig wide = c;
  wide.workers = 3;
  run_task(Task::predict, wide);
  for (const auto& f : a.outputs) CHECK(slurp(a.output_dir / f) == first[f]);

  // The manifest alone reproduces the run.
  fs::copy_file(a.output_dir / "manifest.json", dir / "manifest_copy.json", fs::copy_options::overwrite_existing);
  fs::remove_all(a.output_dir);
  RunConfig replay = load_config(dir / "manifest_copy.json");
  CHECK(replay.seed == 11);
  CHECK(replay.task == Task::predict);
  run_task(Task::predict, replay);
  for (const auto& f : a.outputs) CHECK(slurp(a.output_dir / f) == first[f]);

  const std::string manifest = slurp(a.output_dir / "manifest.json");
  CHECK(manifest.find(sha256_file(dir / "survey.csv")) != std::string::npos);
  CHECK(manifest.find(sha256_file(a.output_dir / "comparison.csv")) != std::string::npos);
  CHECK(fs::exists(a.output_dir / "run.log"));

  // Predictions are probabilities and the comparison is their difference.
  const CsvTable cmp = read_csv_file(a.output_dir / "comparison.csv");
  REQUIRE(cmp.rows.size() == 4);
  for (const auto& row : cmp.rows) {
    for (std::size_t j = 2; j < row.size(); ++j) {
      const double v = *parse_number(row[j]);
      CHECK(v >= (j == 4 || j == 7 ? -1.0 : 0.0));
      CHECK(v <= 1.0);
    }
    CHECK(*parse_number(row[4]) == doctest::Approx(*parse_number(row[2]) - *parse_number(row[3])));
  }
  // A different seed changes the Monte Carlo exceedance.
  RunConfig other = c;
  other.seed = 12;
  run_task(Task::predict, other);
  CHECK(slurp(a.output_dir / "prediction_binomial.csv") != first["prediction_binomial.csv"]);
}

TEST_CASE("sha256_file") {
  const fs::path dir = scratch("sha");
  write_file(dir / "abc.txt", "abc");
  CHECK(sha256_file(dir / "abc.txt") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  write_file(dir / "empty.txt", "");
  CHECK(sha256_file(dir / "empty.txt") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("errors map to exit status and a diagnostic file") {
  CHECK(exit_status(ConfigError("x")) == 2);
  CHECK(exit_status(IngestionError("x", 3, "c")) == 3);
  CHECK(exit_status(SchemaError("x")) == 3);
  CHECK(exit_status(NumericalError("x")) == 4);
  CHECK(exit_status(std::runtime_error("x")) == 1);

  const fs::path dir = scratch("errors");
  write_file(dir / "survey.csv", "loc_id,x,y,outcome\na,0,0,1\nb,1,0,oops\n");
  write_file(dir / "run.yaml", "survey: survey.csv\n");
  const RunConfig c = load_config(dir / "run.yaml");
  try {
    run_task(Task::fit_linear, c);
    FAIL("expected an ingestion error");
  } catch (const IngestionError& e) {
    CHECK(e.row() == 3);
    CHECK(e.column() == "outcome");
    write_error_file(c.output_dir, "fit-linear", e);
  }
  const std::string diag = slurp(c.output_dir / "error.json");
  CHECK(diag.find("\"error_type\": \"ingestion\"") != std::string::npos);
  CHECK(diag.find("\"row\": 3") != std::string::npos);
  CHECK(diag.find("\"column\": \"outcome\"") != std::string::npos);
}

TEST_CASE("simulate then fit round trip through the task runner") {
  const fs::path dir = scratch("simulate");
  write_file(dir / "sim.yaml",
             "seed: 4\noutput: sim\nthreshold: {value: 0.2}\nsimulate: {grid: unit225, tau2: 1, phi: 0.2}\n");
  const RunArtifacts s = run_task(Task::simulate, load_config(dir / "sim.yaml"));
  CHECK(s.outputs == std::vector<std::string>{"survey.csv", "latent.csv"});
  const CsvTable t = read_csv_file(s.output_dir / "survey.csv");
  CHECK(t.rows.size() == 225);
  CHECK(t.header == std::vector<std::string>{"loc_id", "x", "y", "outcome", "threshold"});
  const CsvTable latent = read_csv_file(s.output_dir / "latent.csv");
  for (const auto& row : latent.rows) {
    const double p = *parse_number(row[4]);
    CHECK((p > 0.0 && p < 1.0));
  }

  write_file(dir / "fit.yaml", "seed: 4\noutput: fit\nsurvey: sim/survey.csv\nthreshold: {column: threshold}\n");
  const RunArtifacts f = run_task(Task::fit_binomial, load_config(dir / "fit.yaml"));
  const CsvTable est = read_csv_file(f.output_dir / "estimates.csv");
  bool alpha = false;
  for (const auto& row : est.rows) alpha |= row[0] == "binomial" && row[1] == "alpha";
  CHECK(alpha);
}
