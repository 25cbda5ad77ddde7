#include "rfusion/nets.hpp"

#include <cmath>
#include <sstream>

#include "rfusion/error.hpp"
#include "rfusion/rng.hpp"

namespace rfusion {

void LossWeights::validate() const {
  if (!(gamma1 >= 0.0) || !(gamma2 >= 0.0) || !(gamma3 >= 0.0)) {
    throw ContractError("loss weights gamma1..gamma3 must be non-negative");
  }
  if (!(clamp_box > 0.0)) throw ContractError("critic clamp box must be positive");
  if (!(mu_g >= 0.0) || !(mu_d >= 0.0)) throw ContractError("learning rates must be non-negative");
  if (batch_size == 0) throw ContractError("batch size must be positive");
}

Tensor DenseLayer::forward(const Tensor& x) const { return add_columnwise(matmul(weight, x), bias); }

std::size_t GeneratorNet::input_dim() const { return m_layers.front().in_dim(); }

Tensor GeneratorNet::body(const Tensor& x) const {
  if (x.rank() != 2 || x.rows() != input_dim()) {
    throw DimensionError("generator expects " + std::to_string(input_dim()) +
                         "-row input, got " + shape_str(x.shape()));
  }
  Tensor h = x;
  for (std::size_t k = 0; k < m_layers.size(); ++k) {
    h = m_layers[k].forward(h);
    if (k + 1 < m_layers.size()) h = relu(h);
  }
  return h;
}

std::vector<Tensor> GeneratorNet::parameters() const {
  std::vector<Tensor> out{z_matrix};
  for (const auto& layer : m_layers) {
    out.push_back(layer.weight);
    out.push_back(layer.bias);
  }
  return out;
}

std::vector<std::size_t> SelectionMatrix::inactive_columns(double eps) const {
  std::vector<std::size_t> cols;
  const std::size_t rows = s.rows(), n = s.cols();
  for (std::size_t j = 0; j < n; ++j) {
    double mx = 0.0;
    for (std::size_t i = 0; i < rows; ++i) mx = std::max(mx, std::fabs(s[i * n + j]));
    if (mx < eps) cols.push_back(j);
  }
  return cols;
}

Tensor LinearClassifier::logits(const Tensor& f) const { return add_columnwise(matmul(w, f), b); }

std::vector<Tensor> CriticNet::parameters() const {
  std::vector<Tensor> out;
  for (const auto& layer : layers) {
    out.push_back(layer.weight);
    out.push_back(layer.bias);
  }
  return out;
}

void Architecture::validate() const {
  if (obs_dims.empty()) throw ContractError("architecture needs at least one modality");
  for (auto d : obs_dims) {
    if (d == 0) throw ContractError("observation dimensions must be positive");
  }
  if (hidden_dim == 0 || feature_dim == 0 || classes == 0 || gen_width == 0 || critic_width == 0) {
    throw ContractError("layer sizes must be positive");
  }
  if (gen_layers < 2) throw ContractError("a generator needs at least one body layer plus Z");
  if (critic_layers < 1) throw ContractError("the critic needs at least one layer");
}

ModelBundle ModelBundle::clone() const {
  ModelBundle out = *this;
  auto copy_layers = [](std::vector<DenseLayer>& layers) {
    for (auto& layer : layers) {
      layer.weight = layer.weight.clone();
      layer.bias = layer.bias.clone();
    }
  };
  for (auto& g : out.generators) {
    copy_layers(g.m_layers);
    g.z_matrix = g.z_matrix.clone();
  }
  for (auto& s : out.selections) s.s = s.s.clone();
  for (auto& c : out.classifiers) {
    c.w = c.w.clone();
    c.b = c.b.clone();
  }
  copy_layers(out.critic.layers);
  return out;
}

std::vector<Tensor> ModelBundle::modality_parameters(std::size_t l) const {
  std::vector<Tensor> out{classifiers[l].w, classifiers[l].b, selections[l].s};
  for (auto& t : generators[l].parameters()) out.push_back(t);
  return out;
}

std::vector<std::pair<std::string, Tensor>> ModelBundle::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t l = 0; l < generators.size(); ++l) {
    const std::string g = "gen" + std::to_string(l);
    for (std::size_t k = 0; k < generators[l].m_layers.size(); ++k) {
      out.emplace_back(g + ".m" + std::to_string(k) + ".w", generators[l].m_layers[k].weight);
      out.emplace_back(g + ".m" + std::to_string(k) + ".b", generators[l].m_layers[k].bias);
    }
    out.emplace_back(g + ".z", generators[l].z_matrix);
    out.emplace_back("sel" + std::to_string(l) + ".s", selections[l].s);
    out.emplace_back("cls" + std::to_string(l) + ".w", classifiers[l].w);
    out.emplace_back("cls" + std::to_string(l) + ".b", classifiers[l].b);
  }
  for (std::size_t k = 0; k < critic.layers.size(); ++k) {
    out.emplace_back("critic." + std::to_string(k) + ".w", critic.layers[k].weight);
    out.emplace_back("critic." + std::to_string(k) + ".b", critic.layers[k].bias);
  }
  return out;
}

Tensor generate(const GeneratorNet& g, const Tensor& x) { return matmul(g.z_matrix, g.body(x)); }

Tensor select_features(const SelectionMatrix& s, const Tensor& h) {
  if (h.rank() != 2 || h.rows() != s.s.cols()) {
    throw DimensionError("select_features: selection " + shape_str(s.s.shape()) +
                         " cannot act on " + shape_str(h.shape()));
  }
  return matmul(s.s, h);
}

Tensor classify(const LinearClassifier& c, const Tensor& f) {
  if (f.rank() != 2 || f.rows() != c.w.cols()) {
    throw DimensionError("classify: classifier " + shape_str(c.w.shape()) + " cannot act on " +
                         shape_str(f.shape()));
  }
  return softmax_columns(c.logits(f));
}

Tensor critic_scores(const CriticNet& d, const Tensor& h) {
  if (h.rank() != 2 || h.rows() != d.layers.front().in_dim()) {
    throw DimensionError("critic expects " + std::to_string(d.layers.front().in_dim()) +
                         "-row input, got " + shape_str(h.shape()));
  }
  Tensor s = h;
  for (std::size_t k = 0; k < d.layers.size(); ++k) {
    s = d.layers[k].forward(s);
    if (k + 1 < d.layers.size()) s = relu(s);
  }
  return s;
}

namespace {

Tensor gaussian(CounterRng& rng, std::size_t rows, std::size_t cols, double stddev) {
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = rng.normal(0.0, stddev);
  return Tensor::matrix(rows, cols, std::move(v), true);
}

DenseLayer he_layer(CounterRng& rng, std::size_t in, std::size_t out) {
  return {gaussian(rng, out, in, std::sqrt(2.0 / static_cast<double>(in))),
          Tensor::zeros({out}, true)};
}

}  // namespace

ModelBundle init_params(const Architecture& arch, std::uint64_t seed, const LossWeights& weights) {
  arch.validate();
  weights.validate();
  ModelBundle b;
  b.arch = arch;
  b.weights = weights;
  b.seed = seed;
  const std::size_t L = arch.modalities();
  const std::size_t dh = arch.hidden_dim;
  const CounterRng root(seed, "init_params");
  for (std::size_t l = 0; l < L; ++l) {
    CounterRng rng = root.split(l);
    GeneratorNet g;
    std::size_t in = arch.obs_dims[l];
    const std::size_t body_layers = arch.gen_layers - 1;
    for (std::size_t k = 0; k < body_layers; ++k) {
      const std::size_t out = (k + 1 == body_layers) ? dh : arch.gen_width;
      g.m_layers.push_back(he_layer(rng, in, out));
      in = out;
    }
    g.z_matrix = gaussian(rng, dh, dh, 0.01);
    for (std::size_t i = 0; i < dh; ++i) g.z_matrix.mutable_data()[i * dh + i] += 1.0;
    b.generators.push_back(std::move(g));

    b.selections.push_back(
        {gaussian(rng, arch.feature_dim, dh, std::sqrt(1.0 / static_cast<double>(dh)))});
    b.classifiers.push_back(
        {gaussian(rng, arch.classes, arch.feature_dim,
                  std::sqrt(1.0 / static_cast<double>(arch.feature_dim))),
         Tensor::zeros({arch.classes}, true)});
  }
  CounterRng crng = root.split(std::string_view("critic"));
  std::size_t in = dh;
  for (std::size_t k = 0; k < arch.critic_layers; ++k) {
    const std::size_t out = (k + 1 == arch.critic_layers) ? L : arch.critic_width;
    DenseLayer layer = he_layer(crng, in, out);
    clamp_(layer.weight, -weights.clamp_box, weights.clamp_box);
    b.critic.layers.push_back(std::move(layer));
    in = out;
  }
  b.acc_train.assign(L, 0.0);
  return b;
}

}  // namespace rfusion
