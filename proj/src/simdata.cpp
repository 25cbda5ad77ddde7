#include "rfusion/simdata.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "rfusion/error.hpp"
#include "rfusion/rng.hpp"

namespace rfusion {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Rows are class centers; rescaled so the mean pairwise distance is `sep`.
std::vector<std::vector<double>> class_centers(CounterRng rng, std::size_t classes, std::size_t dim,
                                               double sep) {
  std::vector<std::vector<double>> c(classes, std::vector<double>(dim, 0.0));
  if (dim == 0) return c;
  for (auto& row : c)
    for (auto& v : row) v = rng.normal();
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < classes; ++i)
    for (std::size_t j = i + 1; j < classes; ++j) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < dim; ++k) d2 += (c[i][k] - c[j][k]) * (c[i][k] - c[j][k]);
      total += std::sqrt(d2);
      ++pairs;
    }
  const double f = (pairs == 0 || total == 0.0) ? 0.0 : sep / (total / static_cast<double>(pairs));
  for (auto& row : c)
    for (auto& v : row) v *= f;
  return c;
}

// [rows x cols] embedding whose columns are smooth mixtures of three
// sinusoids, scaled to unit RMS, so each observation reads like a waveform.
std::vector<double> waveform_embedding(CounterRng rng, std::size_t rows, std::size_t cols) {
  std::vector<double> a(rows * cols, 0.0);
  for (std::size_t c = 0; c < cols; ++c) {
    double ss = 0.0;
    for (int f = 0; f < 3; ++f) {
      const double amp = rng.normal();
      const double freq = rng.uniform(0.5, 6.0);
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      for (std::size_t r = 0; r < rows; ++r) {
        const double t = static_cast<double>(r) / static_cast<double>(rows);
        a[r * cols + c] += amp * std::sin(2.0 * std::numbers::pi * freq * t + phase);
      }
    }
    for (std::size_t r = 0; r < rows; ++r) ss += a[r * cols + c] * a[r * cols + c];
    const double rms = std::sqrt(ss / static_cast<double>(rows));
    const double norm = rms > 0.0 ? 1.0 / (rms * std::sqrt(static_cast<double>(cols))) : 0.0;
    for (std::size_t r = 0; r < rows; ++r) a[r * cols + c] *= norm;
  }
  return a;
}

struct Model {
  std::vector<std::vector<double>> shared_centers;
  std::vector<std::vector<std::vector<double>>> private_centers;  // [l][class][k]
  std::vector<std::vector<double>> embed;                         // [l] d_l x (d_H + p_l)
};

Model build_model(const ScenarioConfig& cfg) {
  const CounterRng root(cfg.seed, "scenario");
  Model m;
  m.shared_centers = class_centers(root.split("centers"), cfg.classes, cfg.latent_dim,
                                   cfg.class_separation);
  for (std::size_t l = 0; l < cfg.modalities; ++l) {
    const CounterRng ml = root.split("modality").split(l);
    m.private_centers.push_back(class_centers(ml.split("private"), cfg.classes,
                                              cfg.private_dims[l], cfg.private_separation));
    m.embed.push_back(waveform_embedding(ml.split("embed"), cfg.obs_dims[l],
                                         cfg.latent_dim + cfg.private_dims[l]));
  }
  return m;
}

std::vector<SensorBatch> draw_split(const ScenarioConfig& cfg, const Model& model, std::size_t n,
                                    const CounterRng& stream) {
  const std::size_t L = cfg.modalities, dh = cfg.latent_dim;
  std::vector<std::size_t> labels(n);
  std::vector<double> latent(dh * n);
  std::vector<std::vector<double>> xs(L);
  for (std::size_t l = 0; l < L; ++l) xs[l].assign(cfg.obs_dims[l] * n, 0.0);

  std::vector<double> h(dh), z;
  for (std::size_t s = 0; s < n; ++s) {
    CounterRng rng = stream.split(s);
    const std::size_t y = rng.below(cfg.classes);
    labels[s] = y;
    for (std::size_t k = 0; k < dh; ++k) {
      h[k] = model.shared_centers[y][k] + rng.normal();
      latent[k * n + s] = h[k];
    }
    for (std::size_t l = 0; l < L; ++l) {
      CounterRng lr = rng.split(l);
      const std::size_t p = cfg.private_dims[l], cols = dh + p, d = cfg.obs_dims[l];
      z.resize(cols);
      for (std::size_t k = 0; k < dh; ++k) z[k] = h[k] + cfg.view_noise[l] * lr.normal();
      for (std::size_t k = 0; k < p; ++k) z[dh + k] = model.private_centers[l][y][k] + lr.normal();
      const auto& a = model.embed[l];
      for (std::size_t r = 0; r < d; ++r) {
        double v = 0.0;
        for (std::size_t c = 0; c < cols; ++c) v += a[r * cols + c] * z[c];
        if (cfg.nonlinear) v = std::tanh(v);
        xs[l][r * n + s] = v + cfg.obs_noise * lr.normal();
      }
    }
  }

  std::vector<SensorBatch> out(L);
  const Tensor lab = one_hot(labels, cfg.classes);
  const Tensor lat = Tensor::matrix(dh, n, std::move(latent));
  for (std::size_t l = 0; l < L; ++l) {
    out[l].x = Tensor::matrix(cfg.obs_dims[l], n, std::move(xs[l]));
    out[l].labels = lab;
    out[l].label_index = labels;
    out[l].true_latent = lat;
    out[l].snr_db.assign(n, kInf);
    out[l].damaged.assign(n, 0);
  }
  return out;
}

}  // namespace

void ScenarioConfig::validate() const {
  if (modalities < 2) throw ConfigError("fusion needs >= 2 modalities");
  if (classes < 2) throw ConfigError("scenario needs at least 2 classes");
  if (latent_dim == 0) throw ConfigError("latent_dim must be positive");
  if (obs_dims.size() != modalities || private_dims.size() != modalities ||
      view_noise.size() != modalities) {
    throw ConfigError("obs_dims, private_dims and view_noise need one entry per modality (" +
                      std::to_string(modalities) + ")");
  }
  for (std::size_t l = 0; l < modalities; ++l) {
    if (obs_dims[l] < latent_dim + private_dims[l]) {
      throw ConfigError("modality " + std::to_string(l + 1) + ": obs_dim " +
                        std::to_string(obs_dims[l]) + " cannot embed " +
                        std::to_string(latent_dim + private_dims[l]) + " latent dimensions");
    }
    if (!(view_noise[l] >= 0.0) || !std::isfinite(view_noise[l])) {
      throw ConfigError("view_noise must be finite and non-negative");
    }
  }
  if (!(obs_noise >= 0.0) || !std::isfinite(obs_noise)) {
    throw ConfigError("obs_noise must be finite and non-negative");
  }
  if (!(class_separation >= 0.0) || !(private_separation >= 0.0)) {
    throw ConfigError("class separations must be non-negative");
  }
  if (n_train == 0) throw ConfigError("n_train must be positive");
}

Scenario generate_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  const Model model = build_model(cfg);
  const CounterRng root(cfg.seed, "samples");
  Scenario sc;
  sc.config = cfg;
  sc.train = draw_split(cfg, model, cfg.n_train, root.split("train"));
  sc.test = draw_split(cfg, model, cfg.n_test, root.split("test"));
  return sc;
}

SensorBatch inject_noise(const SensorBatch& batch, double snr_db, std::uint64_t seed,
                         bool mark_damaged) {
  if (std::isnan(snr_db)) throw ContractError("inject_noise: snr is NaN");
  SensorBatch out = batch;
  if (snr_db == kInf) return out;
  if (snr_db == -kInf) throw ContractError("inject_noise: snr must be finite or +inf");
  out.x = batch.x.clone();
  auto x = out.x.mutable_data();
  const std::size_t d = batch.dim(), n = batch.size();
  const double ratio = std::pow(10.0, -snr_db / 10.0);
  const CounterRng root(seed, "noise");
  for (std::size_t s = 0; s < n; ++s) {
    double power = 0.0;
    for (std::size_t r = 0; r < d; ++r) power += x[r * n + s] * x[r * n + s];
    power /= static_cast<double>(d);
    const double sd = std::sqrt(power * ratio);
    CounterRng rng = root.split(s);
    for (std::size_t r = 0; r < d; ++r) x[r * n + s] += sd * rng.normal();
    out.snr_db[s] = snr_db;
    if (mark_damaged) out.damaged[s] = 1;
  }
  return out;
}

FailureMode parse_failure_mode(std::string_view name) {
  if (name == "noise") return FailureMode::noise;
  if (name == "zero") return FailureMode::zero;
  if (name == "stuck") return FailureMode::stuck;
  throw ConfigError("unknown failure mode '" + std::string(name) + "' (noise|zero|stuck)");
}

std::string_view failure_mode_name(FailureMode mode) {
  switch (mode) {
    case FailureMode::noise: return "noise";
    case FailureMode::zero: return "zero";
    case FailureMode::stuck: return "stuck";
  }
  return "noise";
}

SensorBatch inject_failure(const SensorBatch& batch, FailureMode mode, double snr_db,
                           std::uint64_t seed) {
  if (mode == FailureMode::noise) return inject_noise(batch, snr_db, seed);
  SensorBatch out = batch;
  out.x = batch.x.clone();
  auto x = out.x.mutable_data();
  const std::size_t d = batch.dim(), n = batch.size();
  for (std::size_t s = 0; s < n; ++s) {
    const double v = mode == FailureMode::zero ? 0.0 : x[s];
    for (std::size_t r = 0; r < d; ++r) x[r * n + s] = v;
    out.snr_db[s] = -kInf;
    out.damaged[s] = 1;
  }
  return out;
}

double estimate_snr_db(std::span<const double> signal) {
  const std::size_t n = signal.size();
  if (n == 0) return kInf;
  double sp = 0.0, rp = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= 2 ? i - 2 : 0, hi = std::min(n, i + 3);
    double m = 0.0;
    for (std::size_t j = lo; j < hi; ++j) m += signal[j];
    m /= static_cast<double>(hi - lo);
    sp += m * m;
    rp += (signal[i] - m) * (signal[i] - m);
  }
  if (rp == 0.0) return kInf;
  if (sp == 0.0) return -kInf;
  return 10.0 * std::log10(sp / rp);
}

double measured_snr_db(const SensorBatch& clean, const SensorBatch& noisy) {
  if (clean.x.shape() != noisy.x.shape()) {
    throw DimensionError("measured_snr_db: shapes " + shape_str(clean.x.shape()) + " and " +
                         shape_str(noisy.x.shape()));
  }
  double sp = 0.0, np = 0.0;
  const auto a = clean.x.data(), b = noisy.x.data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    sp += a[i] * a[i];
    np += (b[i] - a[i]) * (b[i] - a[i]);
  }
  if (np == 0.0) return kInf;
  return 10.0 * std::log10(sp / np);
}

ShapeDistribution ShapeDistribution::parse(std::string_view name, double epsilon) {
  ShapeDistribution d;
  d.epsilon = epsilon;
  if (name == "circle") d.kind = ShapeKind::circle;
  else if (name == "disk") d.kind = ShapeKind::disk;
  else if (name == "square") d.kind = ShapeKind::square;
  else throw ContractError("unknown shape '" + std::string(name) + "' (circle|disk|square)");
  if (d.kind == ShapeKind::disk && !(epsilon > 0.0 && epsilon < 1.0)) {
    throw ContractError("disk epsilon must lie in (0, 1)");
  }
  return d;
}

std::string ShapeDistribution::name() const {
  switch (kind) {
    case ShapeKind::circle: return "circle";
    case ShapeKind::disk: return "disk";
    case ShapeKind::square: return "square";
  }
  return "square";
}

Tensor sample_shape(const ShapeDistribution& dist, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ContractError("sample_shape needs n > 0");
  CounterRng rng(seed, "shape/" + dist.name());
  std::vector<double> v(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    double x = 0.0, y = 0.0;
    switch (dist.kind) {
      case ShapeKind::circle: {
        const double t = rng.uniform(0.0, 2.0 * std::numbers::pi);
        x = std::cos(t);
        y = std::sin(t);
        break;
      }
      case ShapeKind::disk: {
        const double r = std::sqrt(rng.uniform(1.0 - dist.epsilon, 1.0 + dist.epsilon));
        const double t = rng.uniform(0.0, 2.0 * std::numbers::pi);
        x = r * std::cos(t);
        y = r * std::sin(t);
        break;
      }
      case ShapeKind::square:
        x = rng.uniform();
        y = rng.uniform();
        break;
    }
    v[2 * i] = x;
    v[2 * i + 1] = y;
  }
  return Tensor::matrix(n, 2, std::move(v));
}

double coverage_fraction(const Tensor& points, std::size_t k) {
  if (k < 2) throw ContractError("coverage grid needs k >= 2");
  if (points.numel() == 0) return 0.0;
  if (points.rank() != 2 || points.cols() != 2) {
    throw DimensionError("coverage_fraction expects [n x 2] points, got " +
                         shape_str(points.shape()));
  }
  std::vector<char> hit(k * k, 0);
  const auto p = points.data();
  const double kd = static_cast<double>(k);
  for (std::size_t i = 0; i < points.rows(); ++i) {
    const double x = p[2 * i], y = p[2 * i + 1];
    if (!(x >= 0.0 && x <= 1.0 && y >= 0.0 && y <= 1.0)) continue;
    const auto cx = std::min(k - 1, static_cast<std::size_t>(x * kd));
    const auto cy = std::min(k - 1, static_cast<std::size_t>(y * kd));
    hit[cy * k + cx] = 1;
  }
  return static_cast<double>(std::count(hit.begin(), hit.end(), 1)) / (kd * kd);
}

}  // namespace rfusion
