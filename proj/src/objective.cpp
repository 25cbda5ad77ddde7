#include "rfusion/objective.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>

#include "rfusion/error.hpp"
#include "rfusion/kernels.hpp"
#include "rfusion/rng.hpp"

namespace rfusion {

// ---------------------------------------------------------------------------
// SensorBatch helpers

Tensor gather_columns(const Tensor& m, std::span<const std::size_t> idx) {
  const std::size_t rows = m.rows(), n = m.cols();
  std::vector<double> out(rows * idx.size());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < idx.size(); ++j) out[i * idx.size() + j] = m[i * n + idx[j]];
  return Tensor::matrix(rows, idx.size(), std::move(out));
}

Tensor one_hot(std::span<const std::size_t> labels, std::size_t classes) {
  std::vector<double> v(classes * labels.size(), 0.0);
  for (std::size_t j = 0; j < labels.size(); ++j) {
    if (labels[j] >= classes) throw ContractError("label index out of range");
    v[labels[j] * labels.size() + j] = 1.0;
  }
  return Tensor::matrix(classes, labels.size(), std::move(v));
}

SensorBatch SensorBatch::subset(std::span<const std::size_t> idx) const {
  SensorBatch out;
  out.x = gather_columns(x, idx);
  out.labels = gather_columns(labels, idx);
  if (true_latent.rank() == 2 && true_latent.cols() == size()) {
    out.true_latent = gather_columns(true_latent, idx);
  }
  for (auto j : idx) {
    out.label_index.push_back(label_index[j]);
    out.snr_db.push_back(snr_db.empty() ? INFINITY : snr_db[j]);
    out.damaged.push_back(damaged.empty() ? 0 : damaged[j]);
  }
  return out;
}

void SensorBatch::validate() const {
  const std::size_t n = size();
  if (x.rank() != 2 || x.cols() != n || labels.rank() != 2 || labels.cols() != n) {
    throw ContractError("sensor batch: observation/label column counts disagree");
  }
  const std::size_t I = labels.rows();
  for (std::size_t j = 0; j < n; ++j) {
    double total = 0.0;
    for (std::size_t i = 0; i < I; ++i) {
      const double v = labels[i * n + j];
      if (v != 0.0 && v != 1.0) throw ContractError("sensor batch: labels are not one-hot");
      total += v;
    }
    if (total != 1.0 || labels[label_index[j] * n + j] != 1.0) {
      throw ContractError("sensor batch: labels are not one-hot");
    }
  }
}

void require_aligned(std::span<const SensorBatch> batches) {
  for (const auto& b : batches) {
    if (b.size() != batches.front().size()) {
      throw ContractError("modality batches are not aligned: sizes " +
                          std::to_string(batches.front().size()) + " and " +
                          std::to_string(b.size()));
    }
  }
}

// ---------------------------------------------------------------------------
// Loss terms

std::vector<double> TrainState::latest_accuracy() const {
  return acc.empty() ? std::vector<double>{} : acc.back();
}

namespace {

void require_two_modalities(std::size_t L) {
  if (L < 2) throw ContractError("fusion needs >= 2 modalities");
}

// mean_m[k] = mean over the batch of head m's score on modality k's estimate.
Tensor head_mean(const Tensor& scores, std::size_t head) { return mean(row(scores, head)); }

Tensor commutator_sq(const Tensor& a, const Tensor& b) {
  return sum(square(sub(matmul(a, b), matmul(b, a))));
}

}  // namespace

std::vector<Tensor> wasserstein_value(std::span<const Tensor> h, const CriticNet& d) {
  const std::size_t L = h.size();
  require_two_modalities(L);
  if (d.heads() != L) {
    throw DimensionError("critic has " + std::to_string(d.heads()) + " heads for " +
                         std::to_string(L) + " modalities");
  }
  for (const auto& t : h) {
    if (t.shape() != h[0].shape()) {
      throw ContractError("hidden estimates must share a shape (equal batch sizes)");
    }
  }
  std::vector<Tensor> scores;
  for (const auto& t : h) scores.push_back(critic_scores(d, t));
  std::vector<Tensor> out;
  for (std::size_t l = 0; l < L; ++l) {
    Tensor v = Tensor::scalar(0.0);
    for (std::size_t m = 0; m < L; ++m) {
      if (m == l) continue;
      v = add(v, sub(head_mean(scores[m], m), head_mean(scores[l], m)));
    }
    out.push_back(v);
  }
  return out;
}

Tensor commutation_penalty(std::span<const Tensor> z) {
  for (const auto& t : z) {
    if (t.rank() != 2 || t.rows() != t.cols()) {
      throw ContractError("commutation_penalty: operator " + shape_str(t.shape()) +
                          " is not square");
    }
    if (t.shape() != z[0].shape()) {
      throw ContractError("commutation_penalty: operators differ in size");
    }
  }
  Tensor total = Tensor::scalar(0.0);
  for (std::size_t l = 0; l < z.size(); ++l)
    for (std::size_t m = 0; m < z.size(); ++m)
      if (m != l) total = add(total, commutator_sq(z[l], z[m]));
  return total;
}

double commutator_norm(const Tensor& a, const Tensor& b) {
  NoGradGuard guard;
  return std::sqrt(commutator_sq(a, b).item());
}

double mean_pairwise_commutator_norm(const ModelBundle& bundle) {
  const std::size_t L = bundle.modalities();
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t m = l + 1; m < L; ++m, ++pairs)
      total += commutator_norm(bundle.generators[l].z_matrix, bundle.generators[m].z_matrix);
  return pairs ? total / static_cast<double>(pairs) : 0.0;
}

Tensor linf1_norm(const SelectionMatrix& s) { return sum(column_max(abs(s.s))); }

void prox_linf1_(SelectionMatrix& s, double t) {
  if (!(t >= 0.0)) throw ContractError("prox_linf1_: step must be non-negative");
  if (t == 0.0) return;
  const std::size_t rows = s.s.rows(), cols = s.s.cols();
  auto v = s.s.mutable_data();
  std::vector<double> mag(rows);
  for (std::size_t j = 0; j < cols; ++j) {
    double l1 = 0.0;
    for (std::size_t i = 0; i < rows; ++i) l1 += mag[i] = std::fabs(v[i * cols + j]);
    double theta = 0.0;
    if (l1 > t) {
      // Largest theta with sum_i max(|v_i| - theta, 0) = t.
      std::sort(mag.begin(), mag.end(), std::greater<>());
      double run = 0.0;
      for (std::size_t k = 0; k < rows; ++k) {
        run += mag[k];
        const double cand = (run - t) / static_cast<double>(k + 1);
        if (k + 1 == rows || cand >= mag[k + 1]) {
          theta = cand;
          break;
        }
      }
    }
    for (std::size_t i = 0; i < rows; ++i) v[i * cols + j] = std::clamp(v[i * cols + j], -theta, theta);
  }
}

Tensor cross_entropy(const Tensor& probs, const Tensor& labels) {
  if (probs.shape() != labels.shape()) {
    throw DimensionError("cross_entropy: probabilities " + shape_str(probs.shape()) +
                         " vs labels " + shape_str(labels.shape()));
  }
  const std::size_t I = labels.rows(), n = labels.cols();
  for (std::size_t j = 0; j < n; ++j) {
    double total = 0.0;
    for (std::size_t i = 0; i < I; ++i) {
      const double v = labels[i * n + j];
      if (v != 0.0 && v != 1.0) throw ContractError("cross_entropy: labels are not one-hot");
      total += v;
    }
    if (total != 1.0) throw ContractError("cross_entropy: labels are not one-hot");
  }
  const Tensor clipped = maximum(probs, Tensor::scalar(1e-12));
  return neg(sum(mul(labels.detach(), log(clipped))));
}

Tensor pairwise_hidden_distance(std::span<const Tensor> h) {
  if (h.empty()) throw ContractError("pairwise_hidden_distance: no estimates");
  for (const auto& t : h) {
    if (t.shape() != h[0].shape()) {
      throw ContractError("pairwise_hidden_distance: estimates differ in shape");
    }
  }
  const std::size_t dh = h[0].rows(), n = h[0].cols();
  std::vector<double> out(dh, 0.0);
  const auto& k = kernels::active();
  for (std::size_t l = 0; l < h.size(); ++l) {
    for (std::size_t m = 0; m < h.size(); ++m) {
      if (l == m) continue;
      for (std::size_t r = 0; r < dh; ++r) {
        out[r] += k.sqdist(h[l].data().data() + r * n, h[m].data().data() + r * n, n) /
                  static_cast<double>(n);
      }
    }
  }
  return Tensor::vector(std::move(out));
}

std::vector<Tensor> hidden_estimates(const ModelBundle& bundle, std::span<const SensorBatch> batches) {
  if (batches.size() != bundle.modalities()) {
    throw DimensionError("model has " + std::to_string(bundle.modalities()) + " modalities, data has " +
                         std::to_string(batches.size()));
  }
  std::vector<Tensor> out;
  for (std::size_t l = 0; l < bundle.modalities(); ++l) out.push_back(hidden_estimate(bundle, l, batches[l].x));
  return out;
}

Tensor hidden_estimate(const ModelBundle& bundle, std::size_t l, const Tensor& x) {
  NoGradGuard guard;
  return generate(bundle.generators[l], x);
}

Tensor modality_probabilities(const ModelBundle& bundle, std::size_t l, const Tensor& x) {
  NoGradGuard guard;
  const Tensor h = generate(bundle.generators[l], x);
  return classify(bundle.classifiers[l], select_features(bundle.selections[l], h));
}

double accuracy(const Tensor& probs, std::span<const std::size_t> labels) {
  const std::size_t I = probs.rows(), n = probs.cols();
  if (n == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t j = 0; j < n; ++j) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < I; ++i)
      if (probs[i * n + j] > probs[best * n + j]) best = i;
    hits += best == labels[j];
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Training

EpochMetrics measure(const ModelBundle& bundle, std::span<const SensorBatch> batches) {
  NoGradGuard guard;
  const std::size_t L = bundle.modalities();
  const auto h = hidden_estimates(bundle, batches);
  EpochMetrics m;
  for (const auto& v : wasserstein_value(h, bundle.critic)) m.wasserstein += v.item();
  std::vector<Tensor> z;
  for (const auto& g : bundle.generators) z.push_back(g.z_matrix);
  m.commutation = commutation_penalty(z).item();
  const double n = static_cast<double>(batches[0].size());
  for (std::size_t l = 0; l < L; ++l) {
    m.linf1 += linf1_norm(bundle.selections[l]).item();
    const Tensor probs =
        classify(bundle.classifiers[l], select_features(bundle.selections[l], h[l]));
    m.xent += cross_entropy(probs, batches[l].labels).item() / n;
    m.accuracy.push_back(accuracy(probs, batches[l].label_index));
  }
  const Tensor dist = pairwise_hidden_distance(h);
  for (double v : dist.data()) m.pairwise_dist_sum += v;
  return m;
}

namespace {

void zero_grads(std::span<const Tensor> params) {
  for (Tensor t : params) t.zero_grad();
}

// Applies the configured update to every parameter whose name starts with one
// of `prefixes`.
void update(ModelBundle& bundle, std::initializer_list<std::string> prefixes, double rate, const LossWeights& w) {
  std::vector<Tensor> params;
  std::vector<std::string> names;
  for (auto& [name, t] : bundle.named_parameters()) {
    for (const auto& p : prefixes) {
      if (name.rfind(p, 0) == 0) {
        params.push_back(t);
        names.push_back(name);
        break;
      }
    }
  }
  if (w.optimizer == Optimizer::sgd) {
    sgd_step(params, rate);
    return;
  }
  std::vector<AdamMoments> state;
  for (const auto& n : names) state.push_back(bundle.adam[n]);
  adam_step(params, state, rate);
  for (std::size_t k = 0; k < names.size(); ++k) bundle.adam[names[k]] = std::move(state[k]);
}

void critic_step(ModelBundle& bundle, std::span<const Tensor> h_fixed, const LossWeights& w) {
  const auto params = bundle.critic.parameters();
  zero_grads(params);
  const auto values = wasserstein_value(h_fixed, bundle.critic);
  Tensor total = values[0];
  for (std::size_t l = 1; l < values.size(); ++l) total = add(total, values[l]);
  backward(neg(total));  // ascent
  update(bundle, {"critic."}, w.mu_d, w);
  for (Tensor t : params) clamp_(t, -w.clamp_box, w.clamp_box);
}

void generator_step(ModelBundle& bundle, std::size_t l, std::span<const Tensor> h_fixed,
                    const SensorBatch& batch, const LossWeights& w) {
  const std::size_t L = bundle.modalities();
  const auto params = bundle.modality_parameters(l);
  zero_grads(params);

  const Tensor h_l = generate(bundle.generators[l], batch.x);
  std::vector<Tensor> h(h_fixed.begin(), h_fixed.end());
  h[l] = h_l;

  Tensor loss = wasserstein_value(h, bundle.critic)[l];
  const bool prox = w.selection_step == SelectionStep::proximal;
  if (w.gamma1 != 0.0 && !prox) loss = add(loss, scale(linf1_norm(bundle.selections[l]), w.gamma1));
  if (w.gamma2 != 0.0) {
    const Tensor& zl = bundle.generators[l].z_matrix;
    Tensor comm = Tensor::scalar(0.0);
    for (std::size_t m = 0; m < L; ++m) {
      if (m != l) comm = add(comm, commutator_sq(zl, bundle.generators[m].z_matrix.detach()));
    }
    loss = add(loss, scale(comm, w.gamma2));
  }
  if (w.gamma3 != 0.0) {
    const Tensor probs =
        classify(bundle.classifiers[l], select_features(bundle.selections[l], h_l));
    loss = add(loss, scale(cross_entropy(probs, batch.labels), w.gamma3));
  }
  backward(loss);
  const std::string k = std::to_string(l);
  update(bundle, {"gen" + k + ".", "sel" + k + ".", "cls" + k + "."}, w.mu_g, w);
  if (prox) prox_linf1_(bundle.selections[l], w.mu_g * w.gamma1);
  // The adversarial term also reached the critic; those gradients are not ours.
  zero_grads(bundle.critic.parameters());
}

}  // namespace

TrainState train_epoch(ModelBundle& bundle, std::span<const SensorBatch> batches,
                       const LossWeights& weights, TrainState state) {
  weights.validate();
  const std::size_t L = bundle.modalities();
  require_two_modalities(L);
  if (batches.size() != L) {
    throw ContractError("train_epoch: " + std::to_string(batches.size()) + " batches for " +
                        std::to_string(L) + " modalities");
  }
  require_aligned(batches);
  for (std::size_t l = 0; l < L; ++l) {
    if (batches[l].dim() != bundle.arch.obs_dims[l]) {
      throw DimensionError("train_epoch: modality " + std::to_string(l) + " has " +
                           std::to_string(batches[l].dim()) + " rows, model expects " +
                           std::to_string(bundle.arch.obs_dims[l]));
    }
  }
  const std::size_t n = batches[0].size();
  if (n == 0) throw ContractError("train_epoch: empty training set");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  CounterRng rng =
      CounterRng(bundle.seed, "epoch").split(static_cast<std::uint64_t>(state.epoch));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

  try {
    for (std::size_t start = 0; start < n; start += weights.batch_size) {
      const std::size_t stop = std::min(n, start + weights.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, stop - start);
      std::vector<SensorBatch> mb;
      for (const auto& b : batches) mb.push_back(b.subset(idx));
      for (std::size_t l = 0; l < L; ++l) {
        std::vector<Tensor> h_fixed;
        {
          NoGradGuard guard;
          for (std::size_t m = 0; m < L; ++m) h_fixed.push_back(generate(bundle.generators[m], mb[m].x));
        }
        critic_step(bundle, h_fixed, weights);
        generator_step(bundle, l, h_fixed, mb[l], weights);
      }
    }
  } catch (const NumericError& e) {
    throw NumericError("epoch " + std::to_string(state.epoch + 1) + ": " + e.what());
  }

  const EpochMetrics m = measure(bundle, batches);
  state.wasserstein.push_back(m.wasserstein);
  state.commutation.push_back(m.commutation);
  state.linf1.push_back(m.linf1);
  state.xent.push_back(m.xent);
  state.pairwise_dist_sum.push_back(m.pairwise_dist_sum);
  state.acc.push_back(m.accuracy);
  state.epoch += 1;
  bundle.acc_train = m.accuracy;
  bundle.epochs_trained += 1;
  return state;
}

}  // namespace rfusion
