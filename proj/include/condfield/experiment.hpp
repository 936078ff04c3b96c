#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "condfield/concentration.hpp"
#include "condfield/error.hpp"
#include "condfield/io.hpp"
#include "condfield/kernels.hpp"
#include "condfield/sampling.hpp"

namespace condfield {

/// Schema violation; `pointer` is the JSON pointer of the offending key.
class ConfigError : public InvalidArgument {
 public:
  ConfigError(std::string pointer, const std::string& message)
      : InvalidArgument(pointer + ": " + message), pointer_(std::move(pointer)) {}
  const std::string& pointer() const { return pointer_; }

 private:
  std::string pointer_;
};

struct GridSpec {
  int d = 1;
  double L = 1.0;
  int n = 3;
  int N = 1;
};

enum class ObservableKind { point_intensity, helicity };

struct ObservableSpec {
  ObservableKind kind = ObservableKind::point_intensity;
  std::vector<double> point;
};

/// How the u grid is scaled: as given, by <Q>, or by <Q^2>^{1/2}.
enum class ThresholdUnits { absolute, mean, rms };

struct SamplingSpec {
  FieldKind field = FieldKind::real;
  SamplingMethod method = SamplingMethod::automatic;
  std::vector<double> u_grid;
  ThresholdUnits units = ThresholdUnits::absolute;
  double epsilon = 0.5;
  std::optional<double> floor;
  std::size_t n_samples = 10000;
  std::optional<double> tilt;
  SplitMode mode = SplitMode::upper;
  double min_ess = 100.0;
  std::size_t budget = 0;
  std::size_t dump_fields = 0;
  bool strict = true;  // trend verdict needs disjoint consecutive CIs
};

struct SpectrumSpec {
  double cluster_tol = 1e-6;
  bool dense = true;
};

struct Prop3Spec {
  int instances = 20;
  int dim = 64;
  int deficient_rank = 32;
  int lowrank_rank = 3;
  double tolerance = 1e-8;
};

struct TailSpectrum {
  std::vector<double> eigenvalues;
  FieldKind field = FieldKind::complex;
};

struct TailsSpec {
  std::vector<TailSpectrum> spectra;
  std::vector<double> u;
  std::size_t mc_samples = 100000;
  SamplingMethod method = SamplingMethod::automatic;
  double asymptote_band = 0.1;
  double asymptote_max_p = 1e-4;
  double mc_min_p = 1e-3;
};

struct HelicitySpec {
  double eigen_tolerance = 0.03;
  double ratio_target = 4.0;
  double ratio_band = 0.3;
  int refinement_levels = 1;
  double cluster_tol = 1e-3;
  double angle_tolerance_deg = 5.0;
  std::size_t audit_points = 20;
  double audit_constant = 1.0;  // audit residual <= constant * (h / lambda)^2
  double series_x_max = 0.1;    // in units of lambda
};

struct ExperimentConfig {
  std::string experiment;
  std::uint64_t seed = 0;
  std::optional<GridSpec> grid;
  std::optional<Kernel> kernel;
  std::optional<ObservableSpec> observable;
  std::optional<SamplingSpec> sampling;
  SpectrumSpec spectrum;
  Prop3Spec prop3;
  TailsSpec tails;
  HelicitySpec helicity;
  std::size_t dense_cap = 4096;
  std::string out_dir = "runs";
  io::Json source;  // the validated document
};

struct ExperimentInfo {
  std::string name;
  std::string summary;
};

const std::vector<ExperimentInfo>& list_experiments();

/// Validates and parses a config document; throws ConfigError.
ExperimentConfig parse_config(const io::Json& document);
ExperimentConfig load_config(const std::filesystem::path& path);

struct RunOptions {
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  bool force = false;
};

/// Report and artifacts of one experiment before anything touches the disk.
struct ExperimentOutput {
  io::Json report;
  std::vector<std::pair<std::string, std::string>> artifacts;  // file name, content
  bool verdict = false;
  std::vector<std::string> failures;
};

ExperimentOutput execute_experiment(const ExperimentConfig& config);

struct RunResult {
  std::filesystem::path directory;
  io::Json manifest;
  bool verdict = false;
  int exit_code = 0;
};

enum ExitCode : int {
  kExitPass = 0,
  kExitVerdict = 1,
  kExitConfig = 2,
  kExitResource = 3,
  kExitOther = 4,
};

/// SHA-256 of the canonical config (seed override applied, output block dropped).
std::string config_hash(const ExperimentConfig& config);

/// Runs, writes report.json, CSVs and finally manifest.json. Throws on errors.
RunResult run_experiment(ExperimentConfig config, const RunOptions& options);

}  // namespace condfield
