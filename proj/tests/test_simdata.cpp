#include <cmath>

#include "doctest.h"
#include "rfusion/error.hpp"
#include "rfusion/simdata.hpp"

using namespace rfusion;

namespace {

ScenarioConfig small_config() {
  ScenarioConfig cfg;
  cfg.latent_dim = 6;
  cfg.obs_dims = {16, 12, 20};
  cfg.n_train = 300;
  cfg.n_test = 100;
  return cfg;
}

double mean_square(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s / static_cast<double>(v.size());
}

}  // namespace

TEST_CASE("scenario shapes, alignment and one-hot labels") {
  const Scenario sc = generate_scenario(small_config());
  REQUIRE(sc.train.size() == 3);
  for (std::size_t l = 0; l < 3; ++l) {
    CHECK(sc.train[l].x.shape() == Shape{small_config().obs_dims[l], 300});
    CHECK(sc.train[l].label_index == sc.train[0].label_index);
    CHECK(sc.test[l].size() == 100);
    CHECK_NOTHROW(sc.train[l].validate());
    CHECK(sc.train[l].true_latent.shape() == Shape{6, 300});
    for (double s : sc.train[l].snr_db) CHECK(std::isinf(s));
  }
}

TEST_CASE("scenario generation is bit-reproducible") {
  const Scenario a = generate_scenario(small_config());
  const Scenario b = generate_scenario(small_config());
  ScenarioConfig other = small_config();
  other.seed = 2;
  const Scenario c = generate_scenario(other);
  for (std::size_t l = 0; l < 3; ++l) {
    CHECK(a.train[l].x.to_vector() == b.train[l].x.to_vector());
    CHECK(a.test[l].x.to_vector() == b.test[l].x.to_vector());
  }
  CHECK(a.train[0].x.to_vector() != c.train[0].x.to_vector());
}

TEST_CASE("scenario config validation") {
  ScenarioConfig cfg = small_config();
  cfg.modalities = 1;
  cfg.obs_dims = {16};
  cfg.private_dims = {0};
  cfg.view_noise = {1.0};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.obs_dims = {4, 12, 20};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.obs_dims = {16, 12};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("noise injection hits the requested SNR") {
  const Scenario sc = generate_scenario(small_config());
  const SensorBatch& clean = sc.train[0];
  CHECK(inject_noise(clean, INFINITY, 1).x.to_vector() == clean.x.to_vector());
  for (double snr : {-10.0, 0.0, 5.0, 20.0}) {
    const SensorBatch noisy = inject_noise(clean, snr, 3);
    CHECK(std::fabs(measured_snr_db(clean, noisy) - snr) < 0.2);
    CHECK(noisy.snr_db[0] == snr);
    CHECK(noisy.damaged[0] == 1);
  }
  const SensorBatch zero_db = inject_noise(clean, 0.0, 4);
  std::vector<double> diff(clean.x.numel());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = zero_db.x[i] - clean.x[i];
  CHECK(mean_square(diff) / mean_square(clean.x.data()) == doctest::Approx(1.0).epsilon(0.02));
  CHECK(inject_noise(clean, 5.0, 9).x.to_vector() == inject_noise(clean, 5.0, 9).x.to_vector());
}

TEST_CASE("hard failure modes") {
  const Scenario sc = generate_scenario(small_config());
  const auto z = inject_failure(sc.test[1], FailureMode::zero, 0.0, 1);
  for (double v : z.x.to_vector()) CHECK(v == 0.0);
  const auto s = inject_failure(sc.test[1], FailureMode::stuck, 0.0, 1);
  const std::size_t n = s.size();
  for (std::size_t r = 0; r < s.dim(); ++r) CHECK(s.x[r * n + 5] == sc.test[1].x[5]);
  CHECK(parse_failure_mode("stuck") == FailureMode::stuck);
  CHECK_THROWS_AS(parse_failure_mode("melted"), ConfigError);
}

TEST_CASE("snr estimate falls as noise grows") {
  const Scenario sc = generate_scenario(small_config());
  auto mean_estimate = [&](const SensorBatch& b) {
    double s = 0.0;
    const std::size_t n = b.size(), d = b.dim();
    std::vector<double> col(d);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t r = 0; r < d; ++r) col[r] = b.x[r * n + j];
      s += estimate_snr_db(col);
    }
    return s / static_cast<double>(n);
  };
  const double clean = mean_estimate(sc.train[2]);
  const double at10 = mean_estimate(inject_noise(sc.train[2], 10.0, 1));
  const double at0 = mean_estimate(inject_noise(sc.train[2], 0.0, 1));
  CHECK(clean > at10);
  CHECK(at10 > at0);
  const double flat[] = {1.0, 1.0, 1.0, 1.0};
  CHECK(std::isinf(estimate_snr_db(flat)));
}

TEST_CASE("shape samples satisfy their constraints") {
  const Tensor c = sample_shape(ShapeDistribution::parse("circle"), 2000, 1);
  const Tensor d = sample_shape(ShapeDistribution::parse("disk", 0.05), 2000, 1);
  const Tensor s = sample_shape(ShapeDistribution::parse("square"), 2000, 1);
  for (std::size_t i = 0; i < 2000; ++i) {
    const double rc = c.at(i, 0) * c.at(i, 0) + c.at(i, 1) * c.at(i, 1);
    CHECK(std::fabs(rc - 1.0) < 1e-9);
    const double rd = d.at(i, 0) * d.at(i, 0) + d.at(i, 1) * d.at(i, 1);
    CHECK(rd >= 0.95);
    CHECK(rd <= 1.05);
    CHECK(s.at(i, 0) >= 0.0);
    CHECK(s.at(i, 0) <= 1.0);
    CHECK(s.at(i, 1) >= 0.0);
    CHECK(s.at(i, 1) <= 1.0);
  }
  CHECK_THROWS_AS(ShapeDistribution::parse("torus"), ContractError);
}

TEST_CASE("coverage fraction") {
  CHECK(coverage_fraction(Tensor::zeros({0, 2}), 10) == 0.0);
  std::vector<double> centers;
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) {
      centers.push_back((i + 0.5) / 10.0);
      centers.push_back((j + 0.5) / 10.0);
    }
  CHECK(coverage_fraction(Tensor::matrix(100, 2, centers), 10) == 1.0);
  CHECK(coverage_fraction(sample_shape(ShapeDistribution::parse("square"), 10000, 3), 10) >= 0.99);
  CHECK(coverage_fraction(Tensor::matrix(1, 2, {0.05, 0.05}), 10) == doctest::Approx(0.01));
  CHECK_THROWS_AS(coverage_fraction(Tensor::matrix(1, 2, {0.5, 0.5}), 1), ContractError);
}

TEST_CASE("zero class separation leaves labels unpredictable from the latent") {
  ScenarioConfig cfg = small_config();
  cfg.class_separation = 0.0;
  cfg.n_train = 3000;
  const Scenario sc = generate_scenario(cfg);
  // Nearest class-mean on the true latent: chance level when centers coincide.
  const Tensor& h = sc.train[0].true_latent;
  const auto& y = sc.train[0].label_index;
  const std::size_t n = y.size(), d = h.rows();
  std::vector<std::vector<double>> mean(3, std::vector<double>(d, 0.0));
  std::vector<double> count(3, 0.0);
  for (std::size_t j = 0; j < n / 2; ++j) {
    count[y[j]] += 1;
    for (std::size_t r = 0; r < d; ++r) mean[y[j]][r] += h.at(r, j);
  }
  for (int c = 0; c < 3; ++c)
    for (auto& v : mean[c]) v /= count[c];
  std::size_t hits = 0;
  for (std::size_t j = n / 2; j < n; ++j) {
    std::size_t best = 0;
    double bd = INFINITY;
    for (std::size_t c = 0; c < 3; ++c) {
      double s = 0.0;
      for (std::size_t r = 0; r < d; ++r) s += (h.at(r, j) - mean[c][r]) * (h.at(r, j) - mean[c][r]);
      if (s < bd) bd = s, best = c;
    }
    hits += best == y[j];
  }
  CHECK(static_cast<double>(hits) / static_cast<double>(n - n / 2) < 0.42);
}
