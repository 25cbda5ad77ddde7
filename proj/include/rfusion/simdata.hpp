#pragma once

// Synthetic multi-modal benchmark: a class-structured shared latent observed
// through per-modality waveform embeddings, optional private factors, and
// dB-calibrated corruption. Also the 2-D toy shapes used to probe generator
// dimensionality.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rfusion/batch.hpp"
#include "rfusion/tensor.hpp"

namespace rfusion {

struct ScenarioConfig {
  std::size_t modalities = 3;                      // L
  std::size_t classes = 3;                         // I
  std::size_t latent_dim = 16;                     // shared ground-truth latent
  std::vector<std::size_t> private_dims{0, 0, 0};  // per modality
  std::vector<std::size_t> obs_dims{64, 48, 80};   // d_l per modality
  std::vector<double> view_noise{0.8, 1.0, 1.2};   // per-modality noise on the shared latent
  double obs_noise = 0.05;                         // white sensor noise (std)
  std::size_t n_train = 2000;
  std::size_t n_test = 1000;
  double class_separation = 3.0;    // mean distance between shared class centers
  double private_separation = 3.0;  // same, for the private factors
  bool nonlinear = true;            // tanh observation model
  std::uint64_t seed = 1;

  /// Throws ConfigError on inconsistent or non-positive sizes.
  void validate() const;
};

struct Scenario {
  ScenarioConfig config;
  std::vector<SensorBatch> train;  // one per modality, sample-aligned
  std::vector<SensorBatch> test;
};

/// Deterministic in cfg.seed; each sample is drawn from its own counter stream.
Scenario generate_scenario(const ScenarioConfig& cfg);

/// Adds zero-mean Gaussian noise with power = (mean square of the clean
/// column) / 10^(snr_db/10) to every column. +inf leaves the batch unchanged.
/// Corrupted columns get snr_db set and, if `mark_damaged`, the damaged flag.
SensorBatch inject_noise(const SensorBatch& batch, double snr_db, std::uint64_t seed,
                         bool mark_damaged = true);

enum class FailureMode { noise, zero, stuck };

FailureMode parse_failure_mode(std::string_view name);
std::string_view failure_mode_name(FailureMode mode);

/// Hard failures: all-zero output or every entry stuck at the column's first value.
SensorBatch inject_failure(const SensorBatch& batch, FailureMode mode, double snr_db,
                           std::uint64_t seed);

/// SNR estimate of one raw observation: power of a centred 5-tap moving
/// average versus power of the residual, in dB (+inf for a zero residual).
double estimate_snr_db(std::span<const double> signal);

/// Empirical SNR of a corrupted batch against its clean version, in dB.
double measured_snr_db(const SensorBatch& clean, const SensorBatch& noisy);

enum class ShapeKind { circle, disk, square };

struct ShapeDistribution {
  ShapeKind kind = ShapeKind::square;
  double epsilon = 0.05;  // disk half-width in x^2 + y^2

  static ShapeDistribution parse(std::string_view name, double epsilon = 0.05);
  std::string name() const;
};

/// n uniform samples as an [n x 2] tensor. Circle: x^2 + y^2 = 1. Disk:
/// x^2 + y^2 uniform in [1 - eps, 1 + eps] (area-uniform). Square: [0, 1]^2.
Tensor sample_shape(const ShapeDistribution& dist, std::size_t n, std::uint64_t seed);

/// Fraction of the k x k cells of [0, 1]^2 holding at least one point.
double coverage_fraction(const Tensor& points, std::size_t k);

}  // namespace rfusion
