// dichogeo <task> --config <path> [--seed N] [--workers N]

#include "dichogeo/config.hpp"
#include "dichogeo/errors.hpp"
#include "dichogeo/pipeline.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>

int main(int argc, char** argv) {
  using namespace dichogeo;
  CLI::App app{"Geostatistical analysis of continuous and dichotomized survey outcomes"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  bool quiet = false;
  const char* tasks[][2] = {
      {"simulate", "simulate a survey on a regular grid"},
      {"fit-linear", "fit the linear geostatistical model"},
      {"fit-binomial", "fit the binomial (probit) geostatistical model"},
      {"info-curve", "information loss curves for the intercept"},
      {"cld", "composite likelihood dispersion of dichotomizing"},
      {"predict", "prevalence and exceedance predictions on a grid"},
      {"sim-study", "simulation study of bias and MSE"},
  };
  for (auto& [name, help] : tasks) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "config file or run manifest")->required();
    sub->add_option("--seed", seed, "override the config seed")->check(CLI::NonNegativeNumber);
    sub->add_option("--workers", workers, "override the worker count")->check(CLI::Range(1, 1024));
    sub->add_flag("--quiet", quiet, "no progress on stderr");
  }
  CLI11_PARSE(app, argc, argv);
  const std::string task_name = app.get_subcommands().front()->get_name();

  std::optional<RunConfig> config;
  try {
    const Task task = parse_task(task_name);
    config = load_config(config_path);
    if (seed) config->seed = *seed;
    if (workers) config->workers = *workers;
    const RunArtifacts out = run_task(task, *config, quiet ? nullptr : &std::cerr);
    for (const auto& f : out.outputs) std::cout << (out.output_dir / f).string() << '\n';
    return 0;
  } catch (const std::exception& e) {
    // Without a parsed config the diagnostic goes next to the config file.
    const std::filesystem::path dir =
        config ? config->output_dir : std::filesystem::absolute(config_path).parent_path();
    write_error_file(dir, task_name, e);
    std::cerr << "dichogeo " << task_name << ": " << e.what() << '\n'
              << "diagnostics: " << (dir / "error.json").string() << '\n';
    return exit_status(e);
  }
}
