#pragma once

// Comparison fusion rules: weighted KL consensus for similar sensors, the
// resolution-enhancing rule for dissimilar sensors, Dempster's rule on
// singleton masses, and a linear classifier on concatenated raw features.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "rfusion/batch.hpp"
#include "rfusion/fusion.hpp"
#include "rfusion/tensor.hpp"

namespace rfusion {

struct BaselineWeights {
  std::vector<double> w;  // non-negative, sums to 1

  void validate() const;  // ContractError
  static BaselineWeights uniform(std::size_t modalities);
  /// Accuracies normalized onto the simplex (uniform if they are all zero).
  static BaselineWeights from_accuracies(std::span<const double> acc);
};

enum class KlDirection {
  fused_first,   // KL(r || R^l): weighted geometric mean
  report_first,  // KL(R^l || r): weighted arithmetic mean
};

SensorReport similar_fusion(std::span<const SensorReport> reports, const BaselineWeights& w,
                            KlDirection direction = KlDirection::fused_first);

struct DissimilarDiagnostics {
  std::size_t floored = 0;  // entries raised to the 1e-9 floor
  double lambda = 0.0;
  double sum_error = 0.0;  // |sum p - 1|
  std::size_t iterations = 0;
};

/// p(o_i) = 1 / (lambda + sum_l w^l / P^l(o_i)), lambda found by bisection so
/// that sum p = 1. Not renormalized.
SensorReport dissimilar_fusion(std::span<const SensorReport> reports, const BaselineWeights& w,
                               DissimilarDiagnostics* diagnostics = nullptr);

/// Stationarity residual max_i |sum_l w^l / P^l(o_i) - 1/p_i + lambda| with the
/// lambda that best fits p.
double dissimilar_kkt_residual(std::span<const SensorReport> reports, const BaselineWeights& w,
                               std::span<const double> p);

/// Dempster's rule on singleton masses; nullopt on total conflict.
std::optional<SensorReport> dempster_shafer(std::span<const SensorReport> reports);

struct ConcatOptions {
  std::size_t epochs = 60;
  std::size_t batch_size = 64;
  double learning_rate = 0.05;
  std::uint64_t seed = 1;
};

/// Softmax regression on the stacked raw observations of all modalities.
struct ConcatClassifier {
  Tensor w;  // [I x sum d_l]
  Tensor b;  // [I]
  std::vector<std::size_t> dims;

  static ConcatClassifier train(std::span<const SensorBatch> batches, const ConcatOptions& options);

  /// [I x B] class probabilities.
  Tensor probabilities(std::span<const SensorBatch> batches) const;
  SensorReport report(std::span<const std::vector<double>> features) const;
};

/// Stack the observations of all modalities, [sum d_l x B].
Tensor concat_features(std::span<const SensorBatch> batches);

}  // namespace rfusion
