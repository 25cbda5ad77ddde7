#pragma once

// Loss terms of the training objective and the alternating update schedule.

#include <cstddef>
#include <span>
#include <vector>

#include "rfusion/batch.hpp"
#include "rfusion/loss_weights.hpp"
#include "rfusion/nets.hpp"
#include "rfusion/tensor.hpp"

namespace rfusion {

/// Per-epoch traces of the training run.
struct TrainState {
  std::size_t epoch = 0;
  std::vector<double> wasserstein;        // sum over l of V(G^l, D) on the training set
  std::vector<double> commutation;        // commutation_penalty over all Z
  std::vector<double> linf1;              // sum over l of ||S^l||_{inf,1}
  std::vector<double> xent;               // per-sample cross-entropy summed over modalities
  std::vector<double> pairwise_dist_sum;  // sum_k of pairwise_hidden_distance
  std::vector<std::vector<double>> acc;   // acc[e][l]

  std::vector<double> latest_accuracy() const;
};

/// V(G^l, D) for every l:
///   sum_{m != l} ( mean D^m(Ĥ^m) - mean D^m(Ĥ^l) ).
/// Requires at least two modalities and equal batch sizes.
std::vector<Tensor> wasserstein_value(std::span<const Tensor> h_by_modality, const CriticNet& d);

/// sum_l sum_{m != l} ||Z^l Z^m - Z^m Z^l||_F^2 (every unordered pair twice).
Tensor commutation_penalty(std::span<const Tensor> z);

/// ||[A, B]||_F for plain matrices, no graph.
double commutator_norm(const Tensor& a, const Tensor& b);

/// Mean over unordered pairs of ||[Z^l, Z^m]||_F.
double mean_pairwise_commutator_norm(const ModelBundle& bundle);

/// sum_j max_i |s_ij|; the subgradient reaches the lowest-index maximal entry.
Tensor linf1_norm(const SelectionMatrix& s);

/// In place: proximal map of t * ||S||_{inf,1}. Each column is clipped to
/// [-theta, theta] where theta removes exactly t of its L1 mass; a column with
/// L1 mass <= t becomes zero.
void prox_linf1_(SelectionMatrix& s, double t);

/// Summed negative log-likelihood, with log clipped at 1e-12.
Tensor cross_entropy(const Tensor& probs, const Tensor& labels);

/// Per hidden coordinate k: sum over ordered pairs l != m of the batch mean of
/// (Ĥ^l(k) - Ĥ^m(k))^2. Rank-1 tensor of length d_H, no graph.
Tensor pairwise_hidden_distance(std::span<const Tensor> h_by_modality);

/// Ĥ^l for every modality, computed without recording a graph.
std::vector<Tensor> hidden_estimates(const ModelBundle& bundle, std::span<const SensorBatch> batches);
Tensor hidden_estimate(const ModelBundle& bundle, std::size_t l, const Tensor& x);

/// Class probabilities of modality l's own classifier, [I x B], no graph.
Tensor modality_probabilities(const ModelBundle& bundle, std::size_t l, const Tensor& x);

/// Fraction of columns whose argmax matches the label (ties to the lowest index).
double accuracy(const Tensor& probs, std::span<const std::size_t> labels);

/// One pass over the aligned training samples in a seeded shuffled order. For
/// every minibatch and every l = 1..L in order: one critic ascent step on
/// sum_l V(G^l, D) followed by clamping, then one descent step of modality l's
/// classifier, selection, Z and body on
///   V(G^l, D) + gamma1 ||S^l|| + gamma2 sum_{m != l} ||[Z^l, Z^m]||^2 + gamma3 CE^l,
/// with other modalities' estimates and operators held fixed. Under
/// SelectionStep::proximal the gamma1 term is applied to S^l as a proximal
/// step after the gradient step instead of through its subgradient.
/// Appends one entry to every history in `state` and updates bundle.acc_train.
TrainState train_epoch(ModelBundle& bundle, std::span<const SensorBatch> batches,
                       const LossWeights& weights, TrainState state);

/// Metrics of the current model on a full split (what train_epoch records).
struct EpochMetrics {
  double wasserstein = 0.0;
  double commutation = 0.0;
  double linf1 = 0.0;
  double xent = 0.0;
  double pairwise_dist_sum = 0.0;
  std::vector<double> accuracy;
};
EpochMetrics measure(const ModelBundle& bundle, std::span<const SensorBatch> batches);

}  // namespace rfusion
