#include "rfusion/persist.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rfusion/error.hpp"
#include "rfusion/text.hpp"

namespace rfusion {

namespace {

NamedMatrix to_named(const std::string& name, const Tensor& t) {
  NamedMatrix m;
  m.name = name;
  if (t.rank() == 2) {
    m.rows = t.rows();
    m.cols = t.cols();
  } else {
    m.rows = t.numel();
    m.cols = 1;
  }
  m.data = t.to_vector();
  return m;
}

// Copies a stored matrix into an existing tensor of the expected shape.
void fill(Tensor t, const NamedMatrix& m) {
  const bool ok = t.rank() == 2 ? (m.rows == t.rows() && m.cols == t.cols())
                                : (m.cols == 1 && m.rows == t.numel());
  if (!ok) {
    throw DataError("checkpoint matrix '" + m.name + "' is " + std::to_string(m.rows) + "x" +
                    std::to_string(m.cols) + ", architecture expects " + shape_str(t.shape()));
  }
  auto dst = t.mutable_data();
  std::copy(m.data.begin(), m.data.end(), dst.begin());
}

std::vector<std::size_t> parse_sizes(const std::string& s, const std::string& what) {
  std::vector<std::size_t> out;
  if (s.empty()) return out;
  for (auto tok : split(s, ',')) out.push_back(parse_uint(tok, what));
  return out;
}

std::vector<double> parse_doubles(const std::string& s, const std::string& what) {
  std::vector<double> out;
  if (s.empty()) return out;
  for (auto tok : split(s, ',')) out.push_back(parse_double(tok, what));
  return out;
}

// Metadata fields are written by this file, so a parse failure means a
// corrupt container rather than a user configuration mistake.
template <typename F>
auto meta_parse(F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw DataError(std::string("malformed container metadata: ") + e.what());
  }
}

std::size_t meta_size(const Container& c, const std::string& key) {
  return meta_parse([&] { return static_cast<std::size_t>(parse_uint(c.meta(key), key)); });
}

double meta_double(const Container& c, const std::string& key) {
  return meta_parse([&] { return parse_double(c.meta(key), key); });
}

}  // namespace

Container checkpoint_container(const ModelBundle& b) {
  Container c;
  c.kind = ContainerKind::checkpoint;
  auto& m = c.metadata;
  m["arch.obs_dims"] = join_numbers(b.arch.obs_dims);
  m["arch.hidden_dim"] = format_number(std::uint64_t{b.arch.hidden_dim});
  m["arch.feature_dim"] = format_number(std::uint64_t{b.arch.feature_dim});
  m["arch.classes"] = format_number(std::uint64_t{b.arch.classes});
  m["arch.gen_width"] = format_number(std::uint64_t{b.arch.gen_width});
  m["arch.gen_layers"] = format_number(std::uint64_t{b.arch.gen_layers});
  m["arch.critic_width"] = format_number(std::uint64_t{b.arch.critic_width});
  m["arch.critic_layers"] = format_number(std::uint64_t{b.arch.critic_layers});
  m["weights.gamma1"] = format_number(b.weights.gamma1);
  m["weights.gamma2"] = format_number(b.weights.gamma2);
  m["weights.gamma3"] = format_number(b.weights.gamma3);
  m["weights.clamp_box"] = format_number(b.weights.clamp_box);
  m["weights.mu_g"] = format_number(b.weights.mu_g);
  m["weights.mu_d"] = format_number(b.weights.mu_d);
  m["weights.batch_size"] = format_number(std::uint64_t{b.weights.batch_size});
  m["weights.selection_step"] =
      b.weights.selection_step == SelectionStep::proximal ? "proximal" : "subgradient";
  m["weights.optimizer"] = b.weights.optimizer == Optimizer::adam ? "adam" : "sgd";
  m["rho"] = format_number(b.rho);
  m["seed"] = format_number(b.seed);
  m["epochs_trained"] = format_number(std::uint64_t{b.epochs_trained});
  m["acc_train"] = join_numbers(b.acc_train);
  for (const auto& [name, t] : b.named_parameters()) c.matrices.push_back(to_named(name, t));
  for (const auto& [name, s] : b.adam) {
    m["adam.t." + name] = format_number(s.t);
    c.matrices.push_back(NamedMatrix{"adam.m." + name, s.m.size(), 1, s.m});
    c.matrices.push_back(NamedMatrix{"adam.v." + name, s.v.size(), 1, s.v});
  }
  return c;
}

ModelBundle bundle_from_container(const Container& c) {
  Architecture arch;
  arch.obs_dims = meta_parse([&] { return parse_sizes(c.meta("arch.obs_dims"), "arch.obs_dims"); });
  arch.hidden_dim = meta_size(c, "arch.hidden_dim");
  arch.feature_dim = meta_size(c, "arch.feature_dim");
  arch.classes = meta_size(c, "arch.classes");
  arch.gen_width = meta_size(c, "arch.gen_width");
  arch.gen_layers = meta_size(c, "arch.gen_layers");
  arch.critic_width = meta_size(c, "arch.critic_width");
  arch.critic_layers = meta_size(c, "arch.critic_layers");
  try {
    arch.validate();
  } catch (const Error& e) {
    throw DataError(std::string("checkpoint architecture: ") + e.what());
  }
  LossWeights w;
  w.gamma1 = meta_double(c, "weights.gamma1");
  w.gamma2 = meta_double(c, "weights.gamma2");
  w.gamma3 = meta_double(c, "weights.gamma3");
  w.clamp_box = meta_double(c, "weights.clamp_box");
  w.mu_g = meta_double(c, "weights.mu_g");
  w.mu_d = meta_double(c, "weights.mu_d");
  w.batch_size = meta_size(c, "weights.batch_size");
  const std::string& step = c.meta("weights.selection_step");
  if (step != "proximal" && step != "subgradient") throw DataError("unknown selection step '" + step + "'");
  w.selection_step = step == "proximal" ? SelectionStep::proximal : SelectionStep::subgradient;
  const std::string& opt = c.meta("weights.optimizer");
  if (opt != "sgd" && opt != "adam") throw DataError("unknown optimizer '" + opt + "'");
  w.optimizer = opt == "adam" ? Optimizer::adam : Optimizer::sgd;

  const auto seed = meta_parse([&] { return parse_uint(c.meta("seed"), "seed"); });
  ModelBundle b = init_params(arch, seed, w);
  b.rho = meta_double(c, "rho");
  b.epochs_trained = meta_size(c, "epochs_trained");
  b.acc_train = meta_parse([&] { return parse_doubles(c.meta("acc_train"), "acc_train"); });
  const auto params = b.named_parameters();
  std::size_t expected = params.size();
  for (const auto& [name, t] : params) {
    fill(t, c.matrix(name));
    const auto key = "adam.t." + name;
    if (!c.metadata.contains(key)) continue;
    AdamMoments s;
    s.t = meta_parse([&] { return parse_uint(c.meta(key), key); });
    s.m = c.matrix("adam.m." + name).data;
    s.v = c.matrix("adam.v." + name).data;
    if (s.m.size() != t.numel() || s.v.size() != t.numel()) {
      throw DataError("checkpoint optimizer state for '" + name + "' does not match the parameter size");
    }
    b.adam[name] = std::move(s);
    expected += 2;
  }
  if (c.matrices.size() != expected) {
    throw DataError("checkpoint holds " + std::to_string(c.matrices.size()) + " matrices, expected " +
                    std::to_string(expected));
  }
  return b;
}

void save_checkpoint(const std::filesystem::path& path, const ModelBundle& bundle) {
  save_container(path, checkpoint_container(bundle));
}

ModelBundle load_checkpoint(const std::filesystem::path& path) {
  return bundle_from_container(load_container(path, ContainerKind::checkpoint));
}

// ---------------------------------------------------------------------------
// Datasets

namespace {

void put_batches(Container& c, const std::string& split, const std::vector<SensorBatch>& batches) {
  for (std::size_t l = 0; l < batches.size(); ++l) {
    const auto& b = batches[l];
    const std::string p = split + "." + std::to_string(l) + ".";
    c.matrices.push_back(to_named(p + "x", b.x));
    NamedMatrix labels{p + "label", b.size(), 1, {}};
    for (auto y : b.label_index) labels.data.push_back(static_cast<double>(y));
    c.matrices.push_back(std::move(labels));
    c.matrices.push_back(to_named(p + "latent", b.true_latent));
    c.matrices.push_back(NamedMatrix{p + "snr_db", b.size(), 1, b.snr_db});
    NamedMatrix damaged{p + "damaged", b.size(), 1, {}};
    for (auto d : b.damaged) damaged.data.push_back(d);
    c.matrices.push_back(std::move(damaged));
  }
}

std::vector<SensorBatch> get_batches(const Container& c, const std::string& split, std::size_t L,
                                     std::size_t classes) {
  std::vector<SensorBatch> out;
  for (std::size_t l = 0; l < L; ++l) {
    const std::string p = split + "." + std::to_string(l) + ".";
    const auto& x = c.matrix(p + "x");
    const auto& lab = c.matrix(p + "label");
    const auto& lat = c.matrix(p + "latent");
    const auto& snr = c.matrix(p + "snr_db");
    const auto& dmg = c.matrix(p + "damaged");
    const std::size_t n = lab.rows;
    if (x.cols != n || lat.cols != n || snr.rows != n || dmg.rows != n) {
      throw DataError("dataset split '" + split + "' modality " + std::to_string(l) + " has inconsistent sizes");
    }
    SensorBatch b;
    b.x = Tensor::matrix(x.rows, x.cols, x.data);
    b.true_latent = Tensor::matrix(lat.rows, lat.cols, lat.data);
    for (double y : lab.data) {
      if (!(y >= 0.0) || y >= static_cast<double>(classes) || y != std::floor(y)) {
        throw DataError("dataset label out of range in '" + split + "'");
      }
      b.label_index.push_back(static_cast<std::size_t>(y));
    }
    b.labels = one_hot(b.label_index, classes);
    b.snr_db = snr.data;
    for (double d : dmg.data) b.damaged.push_back(d != 0.0);
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace

Container dataset_container(const Scenario& s) {
  Container c;
  c.kind = ContainerKind::dataset;
  const auto& cfg = s.config;
  auto& m = c.metadata;
  m["scenario.modalities"] = format_number(std::uint64_t{cfg.modalities});
  m["scenario.classes"] = format_number(std::uint64_t{cfg.classes});
  m["scenario.latent_dim"] = format_number(std::uint64_t{cfg.latent_dim});
  m["scenario.private_dims"] = join_numbers(cfg.private_dims);
  m["scenario.obs_dims"] = join_numbers(cfg.obs_dims);
  m["scenario.view_noise"] = join_numbers(cfg.view_noise);
  m["scenario.obs_noise"] = format_number(cfg.obs_noise);
  m["scenario.n_train"] = format_number(std::uint64_t{cfg.n_train});
  m["scenario.n_test"] = format_number(std::uint64_t{cfg.n_test});
  m["scenario.class_separation"] = format_number(cfg.class_separation);
  m["scenario.private_separation"] = format_number(cfg.private_separation);
  m["scenario.nonlinear"] = cfg.nonlinear ? "true" : "false";
  m["scenario.seed"] = format_number(cfg.seed);
  put_batches(c, "train", s.train);
  put_batches(c, "test", s.test);
  return c;
}

Scenario scenario_from_container(const Container& c) {
  Scenario s;
  auto& cfg = s.config;
  cfg.modalities = meta_size(c, "scenario.modalities");
  cfg.classes = meta_size(c, "scenario.classes");
  cfg.latent_dim = meta_size(c, "scenario.latent_dim");
  meta_parse([&] {
    cfg.private_dims = parse_sizes(c.meta("scenario.private_dims"), "private_dims");
    cfg.obs_dims = parse_sizes(c.meta("scenario.obs_dims"), "obs_dims");
    cfg.view_noise = parse_doubles(c.meta("scenario.view_noise"), "view_noise");
    cfg.nonlinear = parse_bool(c.meta("scenario.nonlinear"), "nonlinear");
    cfg.seed = parse_uint(c.meta("scenario.seed"), "seed");
    return 0;
  });
  cfg.obs_noise = meta_double(c, "scenario.obs_noise");
  cfg.n_train = meta_size(c, "scenario.n_train");
  cfg.n_test = meta_size(c, "scenario.n_test");
  cfg.class_separation = meta_double(c, "scenario.class_separation");
  cfg.private_separation = meta_double(c, "scenario.private_separation");
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw DataError(std::string("dataset configuration: ") + e.what());
  }
  s.train = get_batches(c, "train", cfg.modalities, cfg.classes);
  s.test = get_batches(c, "test", cfg.modalities, cfg.classes);
  try {
    require_aligned(s.train);
    require_aligned(s.test);
  } catch (const Error& e) {
    throw DataError(std::string("dataset: ") + e.what());
  }
  return s;
}

void save_dataset(const std::filesystem::path& path, const Scenario& scenario) {
  save_container(path, dataset_container(scenario));
}

Scenario load_dataset(const std::filesystem::path& path) {
  return scenario_from_container(load_container(path, ContainerKind::dataset));
}

}  // namespace rfusion
