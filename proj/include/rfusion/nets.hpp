#pragma once

// Per-modality generators G = Z o M, selection matrices, linear classifiers
// and the shared multi-head critic.

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rfusion/loss_weights.hpp"
#include "rfusion/tensor.hpp"

namespace rfusion {

/// y = W x + b for a column batch x [in x B].
struct DenseLayer {
  Tensor weight;  // [out x in]
  Tensor bias;    // [out]

  std::size_t in_dim() const { return weight.cols(); }
  std::size_t out_dim() const { return weight.rows(); }
  Tensor forward(const Tensor& x) const;
};

struct GeneratorNet {
  std::vector<DenseLayer> m_layers;  // relu after all but the last layer
  Tensor z_matrix;                   // square [d_H x d_H], linear, no bias

  std::size_t input_dim() const;
  std::size_t hidden_dim() const { return z_matrix.rows(); }
  /// M(x): the nonlinear body, [d_H x B].
  Tensor body(const Tensor& x) const;
  std::vector<Tensor> parameters() const;
};

/// Column j with max_i |s_ij| < eps carries no hidden coordinate j into this
/// modality's features.
inline constexpr double kInactiveColumnEps = 1e-4;

struct SelectionMatrix {
  Tensor s;  // [d x d_H]

  std::vector<std::size_t> inactive_columns(double eps = kInactiveColumnEps) const;
};

struct LinearClassifier {
  Tensor w;  // [I x d]
  Tensor b;  // [I]

  std::size_t classes() const { return w.rows(); }
  Tensor logits(const Tensor& f) const;
};

struct CriticNet {
  std::vector<DenseLayer> layers;  // relu between layers; last maps to L heads

  std::size_t heads() const { return layers.back().out_dim(); }
  std::vector<Tensor> parameters() const;
};

/// Layer sizes for one model.
struct Architecture {
  std::vector<std::size_t> obs_dims;  // d_l per modality
  std::size_t hidden_dim = 32;        // d_H
  std::size_t feature_dim = 16;       // d, rows of each selection matrix
  std::size_t classes = 3;            // I
  std::size_t gen_width = 64;
  std::size_t gen_layers = 6;  // dense layers per generator, counting Z
  std::size_t critic_width = 64;
  std::size_t critic_layers = 3;

  std::size_t modalities() const { return obs_dims.size(); }
  void validate() const;
};

/// Everything learned, plus the hyper-parameters it was trained with.
struct ModelBundle {
  Architecture arch;
  std::vector<GeneratorNet> generators;
  std::vector<SelectionMatrix> selections;
  std::vector<LinearClassifier> classifiers;
  CriticNet critic;
  LossWeights weights;
  double rho = 0.25;
  std::uint64_t seed = 0;
  std::size_t epochs_trained = 0;
  std::vector<double> acc_train;  // per modality, filled by training
  std::map<std::string, AdamMoments> adam;  // by parameter name; empty under SGD

  std::size_t modalities() const { return generators.size(); }

  /// Deep copy; the default copy shares parameter storage.
  ModelBundle clone() const;

  /// Trainable tensors of modality l: classifier, selection, Z, then body.
  std::vector<Tensor> modality_parameters(std::size_t l) const;

  /// Stable names for every parameter tensor ("gen0.m2.w", "sel1.s", ...).
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
};

/// Ĥ = Z · M(x); x is [d_l x B].
Tensor generate(const GeneratorNet& g, const Tensor& x);

/// F = S · h.
Tensor select_features(const SelectionMatrix& s, const Tensor& h);

/// Column-wise softmax of W f + b, [I x B].
Tensor classify(const LinearClassifier& c, const Tensor& f);

/// Raw per-head critic scores, [L x B].
Tensor critic_scores(const CriticNet& d, const Tensor& h);

/// Weights ~ N(0, 2/fan_in), zero biases, Z = I + N(0, 0.01^2) entries,
/// S ~ N(0, 1/d_H), classifier weights ~ N(0, 1/d). Critic parameters are
/// clamped into the box right after drawing.
ModelBundle init_params(const Architecture& arch, std::uint64_t seed,
                        const LossWeights& weights = {});

}  // namespace rfusion
