#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "rfusion/tensor.hpp"

namespace rfusion {

/// Observations of one modality with labels and provenance. Column n of every
/// modality's batch describes the same physical event.
struct SensorBatch {
  Tensor x;                                // [d_l x B]
  Tensor labels;                           // one-hot [I x B]
  std::vector<std::size_t> label_index;    // argmax of each label column
  Tensor true_latent;                      // [d_H_true x B], diagnostics only
  std::vector<double> snr_db;              // per sample; +inf when clean
  std::vector<std::uint8_t> damaged;       // per sample

  std::size_t size() const { return label_index.size(); }
  std::size_t dim() const { return x.rows(); }
  std::size_t classes() const { return labels.rows(); }

  /// Columns `idx` in the given order.
  SensorBatch subset(std::span<const std::size_t> idx) const;

  /// Throws ContractError when label columns are not one-hot or sizes disagree.
  void validate() const;
};

/// Gather columns of a [rows x n] matrix.
Tensor gather_columns(const Tensor& m, std::span<const std::size_t> idx);

/// One-hot [classes x n] from class indices.
Tensor one_hot(std::span<const std::size_t> labels, std::size_t classes);

/// Throws ContractError unless every batch has the same number of samples.
void require_aligned(std::span<const SensorBatch> batches);

}  // namespace rfusion
