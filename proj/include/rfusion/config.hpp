#pragma once

// Run configuration: a flat, typed key = value file with [section] headers.
// Every key has a default except scenario.modalities and scenario.classes.
// Unknown sections or keys are errors, and the fully resolved configuration
// is echoed (in the same format) into every output directory.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "rfusion/baselines.hpp"
#include "rfusion/failure.hpp"
#include "rfusion/loss_weights.hpp"
#include "rfusion/nets.hpp"
#include "rfusion/simdata.hpp"

namespace rfusion {

struct ToyShapesConfig {
  std::size_t samples = 2000;      // points per training distribution
  std::size_t eval_samples = 4000; // generated points scored per task
  std::size_t steps = 2000;        // Adam steps per task, cosine-decayed rate
  std::size_t batch = 256;
  std::size_t width = 64;
  std::size_t layers = 4;          // dense layers, relu between
  std::size_t projections = 64;    // random directions per sliced-Wasserstein step
  double learning_rate = 0.01;
  double epsilon = 0.05;           // disk half-width in r^2
  std::size_t grid = 10;           // coverage grid is grid x grid
};

struct RunConfig {
  std::uint64_t seed = 1;
  ScenarioConfig scenario;
  Architecture arch;               // obs_dims and classes follow the scenario
  LossWeights weights;
  std::size_t epochs = 30;

  double rho = 0.25;
  bool estimate_rho = false;       // replace rho by the empirical estimator
  bool renormalize = false;

  DetectorKind detector = DetectorKind::clustering;
  Linkage linkage = Linkage::average;
  std::size_t tree_points = 5000;
  double calibration_holdout = 0.25;  // share of training samples kept out of the tree
  std::size_t calibration_samples = 400;
  FailureMode failure_mode = FailureMode::noise;
  std::vector<double> calibration_snr{20, 10, 5, 0, -5, -10};

  std::vector<double> snr_grid;                       // evaluation sweep
  std::vector<std::vector<std::size_t>> damaged_sets; // 0-based modality sets
  bool reconstruct = true;
  std::size_t threads = 0;                            // 0: hardware concurrency

  ConcatOptions concat;
  ToyShapesConfig toy;

  /// Throws ConfigError on inconsistent values.
  void validate() const;
};

/// Parses the text of a config file. `origin` prefixes error messages.
RunConfig parse_config(std::string_view text, std::string_view origin = "config");
RunConfig load_config(const std::filesystem::path& path);

/// Canonical text form holding every key; parse_config(render_config(c)) == c.
std::string render_config(const RunConfig& cfg);

/// "1+3" style names (1-based) used in CSV output for a damaged set.
std::string damaged_set_name(const std::vector<std::size_t>& set);

}  // namespace rfusion
