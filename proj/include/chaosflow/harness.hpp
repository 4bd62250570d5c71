#pragma once

// Experiment configuration, orchestration and file output.
//
// Config files are flat "key = value" lines with dotted section keys; '#'
// starts a comment. See configs/ and README.md for the schema.

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "chaosflow/propagator.hpp"
#include "chaosflow/spectral_field.hpp"
#include "chaosflow/velocity_model.hpp"

namespace chaosflow {

inline constexpr const char* kVersion = "0.1.0";

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> kinds{"validate-basis", "propagate", "energy", "compare-mc", "convergence"};
  return kinds;
}

struct InitialCondition {
  /// single-mode: amplitude * cos(wavevector . x)
  /// two-mode:    cos(x_1) + 0.5 cos(x_1 + 2 x_2)
  /// random-band: random_band_field(band_radius, seed)
  std::string preset = "two-mode";
  std::vector<int> wavevector{1, 0};
  double amplitude = 1.0;
  int band_radius = 2;
  std::uint64_t seed = 7;

  SpectralField build(int dim, int radius) const;
};

struct McConfig {
  int n_paths = 2000;
  int n_steps = 512;
  int radius = 8;
  int pathwise_paths = 50;
  int pathwise_steps = 4096;
};

struct ConvergenceConfig {
  std::vector<int> n_t_values{1, 2, 3, 4};
  std::vector<double> dt_values{1.0 / 32, 1.0 / 64, 1.0 / 128, 1.0 / 256};
  std::vector<int> shell_radii{1, 2};
};

struct ExperimentConfig {
  std::string kind;
  CovarianceSpec covariance;
  int shell_radius = 2;
  GridSpec grid{2, 4, 10};  // room for N = 3 at the default shell radius
  PropagatorConfig propagator;
  Conventions conventions;
  InitialCondition initial;
  McConfig mc;
  ConvergenceConfig convergence;
  double energy_tolerance = 1e-6;
  std::uint64_t master_seed = 1;
  std::string out_dir = "out";
  int workers = 1;

  /// Throws ConfigError naming the violated constraint.
  void validate() const;
  /// Every setting as (key, value) text, in schema order.
  std::vector<std::pair<std::string, std::string>> echo() const;
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config(const std::string& path);

struct RunResult {
  int exit_code = 0;  ///< 0 pass, 1 invariant breach
  std::vector<std::string> files;
  std::vector<std::string> breaches;
};

/// Writes manifest.json and the kind-specific CSVs into cfg.out_dir. Progress
/// lines go to `log` when it is non-null.
RunResult run_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr);

/// Coefficient dump: '#' header with run parameters, then
/// alpha_rank,t,z1..zd,re,im for every nonzero stored coefficient.
void write_coefficient_dump(std::ostream& os, const ChaosSolution& sol);

}  // namespace chaosflow
