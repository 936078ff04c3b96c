// Command-line experiment runner.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "condfield/experiment.hpp"

namespace {

using condfield::io::Json;

int report_error(const std::string& kind, const std::string& message,
                 const std::string& pointer, int code) {
  Json err = {{"error", kind}, {"message", message}, {"exit_code", code}};
  if (!pointer.empty()) err["pointer"] = pointer;
  std::cerr << condfield::io::dump_json(err);
  return code;
}

template <class F>
int guarded(F&& body) {
  try {
    return body();
  } catch (const condfield::ConfigError& e) {
    return report_error("config", e.what(), e.pointer(), condfield::kExitConfig);
  } catch (const condfield::ResourceLimitError& e) {
    return report_error("resource", e.what(), "", condfield::kExitResource);
  } catch (const condfield::InvalidArgument& e) {
    return report_error("invalid-argument", e.what(), "", condfield::kExitOther);
  } catch (const condfield::NumericalError& e) {
    return report_error("numerical", e.what(), "", condfield::kExitOther);
  } catch (const std::exception& e) {
    return report_error("other", e.what(), "", condfield::kExitOther);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"condfield: Gaussian fields conditioned on a large quadratic form"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  bool force = false;

  auto* run = app.add_subcommand("run", "run the experiment described by a config file");
  run->add_option("config", config_path, "config file (JSON)")->required();
  run->add_option("--out", out_dir, "results root directory");
  run->add_option("--seed", seed, "override the config seed");
  run->add_option("--workers", workers, "OpenMP worker count (default: all cores)");
  run->add_flag("--force", force, "overwrite an existing run directory");

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "check a config file against the schema");
  validate->add_option("config", validate_path, "config file (JSON)")->required();

  auto* list = app.add_subcommand("list-experiments", "print the available experiments");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : condfield::kExitConfig;
  }

  if (*list) {
    for (const auto& e : condfield::list_experiments()) {
      std::printf("%-14s %s\n", e.name.c_str(), e.summary.c_str());
    }
    return 0;
  }
  if (*validate) {
    return guarded([&] {
      const auto config = condfield::load_config(validate_path);
      std::printf("%s: valid %s config\n", validate_path.c_str(), config.experiment.c_str());
      return 0;
    });
  }
  return guarded([&] {
    condfield::RunOptions options;
    if (out_dir) options.out_dir = *out_dir;
    options.seed = seed;
    options.workers = workers;
    options.force = force;
    const auto result = condfield::run_experiment(condfield::load_config(config_path), options);
    std::printf("%s %s\n", result.verdict ? "PASS" : "FAIL", result.directory.c_str());
    if (!result.verdict) {
      std::ifstream in(result.directory / "report.json");
      const Json report = Json::parse(in);
      std::cerr << condfield::io::dump_json(report["verdict"]);
    }
    return result.exit_code;
  });
}
