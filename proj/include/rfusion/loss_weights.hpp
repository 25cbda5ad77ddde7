#pragma once

#include <cstddef>

namespace rfusion {

/// How the column-sparsity term reaches the selection matrices. A subgradient
/// step only ever trims one entry per column and leaves columns hovering at
/// the step size; the proximal step zeroes a column outright once its L1 mass
/// falls below mu_g * gamma1.
enum class SelectionStep { subgradient, proximal };

/// Plain SGD follows the written updates; Adam is an opt-in divergence.
enum class Optimizer { sgd, adam };

/// Weights of the training objective and the optimizer settings.
struct LossWeights {
  double gamma1 = 1e-3;    // column-sparsity (L-inf,1) weight on selection matrices
  double gamma2 = 100.0;   // commutator penalty weight on the Z operators
  double gamma3 = 1.0;     // cross-entropy weight
  double clamp_box = 0.01; // critic parameters live in [-clamp_box, clamp_box]
  double mu_g = 5e-4;      // generator-side learning rate
  double mu_d = 5e-4;      // critic learning rate
  std::size_t batch_size = 64;
  SelectionStep selection_step = SelectionStep::proximal;
  Optimizer optimizer = Optimizer::sgd;

  /// Throws ContractError when any weight is negative or a rate/box is not positive.
  void validate() const;
};

}  // namespace rfusion
