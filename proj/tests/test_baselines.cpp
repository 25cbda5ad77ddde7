#include <cmath>
#include <numeric>

#include "doctest.h"
#include "rfusion/baselines.hpp"
#include "rfusion/error.hpp"
#include "rfusion/simdata.hpp"
#include "support.hpp"

using namespace rfusion;
using rfusion::testing::random_simplex;

namespace {

SensorReport report(std::vector<double> p) { return {std::move(p), 1.0, 0}; }

double total(const std::vector<double>& p) { return std::accumulate(p.begin(), p.end(), 0.0); }

}  // namespace

TEST_CASE("baseline weights") {
  CHECK_NOTHROW((BaselineWeights{{0.25, 0.75}}.validate()));
  CHECK_THROWS_AS((BaselineWeights{{0.5, 0.6}}.validate()), ContractError);
  CHECK_THROWS_AS((BaselineWeights{{-0.5, 1.5}}.validate()), ContractError);
  const double acc[] = {0.9, 0.6, 0.0};
  const auto w = BaselineWeights::from_accuracies(acc);
  CHECK(w.w[0] == doctest::Approx(0.6));
  CHECK(w.w[2] == 0.0);
}

TEST_CASE("similar fusion examples") {
  const std::vector<SensorReport> same{report({0.25, 0.75}), report({0.25, 0.75})};
  const auto s = similar_fusion(same, BaselineWeights::uniform(2));
  CHECK(s.probs[0] == doctest::Approx(0.25).epsilon(1e-15));

  const std::vector<SensorReport> opposite{report({0.8, 0.2}), report({0.2, 0.8})};
  const auto o = similar_fusion(opposite, BaselineWeights::uniform(2));
  CHECK(o.probs[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(o.probs[1] == doctest::Approx(0.5).epsilon(1e-15));

  const std::vector<SensorReport> mixed{report({0.25, 0.75}), report({0.6, 0.4})};
  CHECK(similar_fusion(mixed, {{1.0, 0.0}}).probs == mixed[0].probs);

  const auto arith = similar_fusion(opposite, {{0.75, 0.25}}, KlDirection::report_first);
  CHECK(arith.probs[0] == doctest::Approx(0.65).epsilon(1e-15));

  const std::vector<SensorReport> zeros{report({1.0, 0.0}), report({0.0, 1.0})};
  CHECK_THROWS_AS(similar_fusion(zeros, BaselineWeights::uniform(2)), ContractError);
}

TEST_CASE("dissimilar fusion examples") {
  const std::vector<SensorReport> uniform{report({0.5, 0.5})};
  DissimilarDiagnostics diag;
  const auto u = dissimilar_fusion(uniform, {{1.0}}, &diag);
  CHECK(u.probs[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(std::fabs(diag.lambda) < 1e-12);

  const std::vector<SensorReport> same{report({0.1, 0.6, 0.3}), report({0.1, 0.6, 0.3})};
  const auto s = dissimilar_fusion(same, BaselineWeights::uniform(2));
  CHECK(s.probs[1] > s.probs[2]);
  CHECK(s.probs[2] > s.probs[0]);

  const std::vector<SensorReport> with_zero{report({0.0, 1.0}), report({0.5, 0.5})};
  dissimilar_fusion(with_zero, BaselineWeights::uniform(2), &diag);
  CHECK(diag.floored == 1);
}

TEST_CASE("dissimilar fusion satisfies its stationarity conditions") {
  CounterRng rng(19);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t L = 1 + trial % 4, I = 2 + trial % 4;
    std::vector<SensorReport> r;
    for (std::size_t l = 0; l < L; ++l) r.push_back(report(random_simplex(rng, I)));
    BaselineWeights w{random_simplex(rng, L)};
    const auto p = dissimilar_fusion(r, w);
    CHECK(std::fabs(total(p.probs) - 1.0) < 1e-10);
    CHECK(dissimilar_kkt_residual(r, w, p.probs) < 1e-8);
  }
}

TEST_CASE("dempster shafer examples") {
  const std::vector<SensorReport> det{report({1.0, 0.0}), report({1.0, 0.0})};
  CHECK(dempster_shafer(det)->probs == std::vector<double>{1.0, 0.0});
  const std::vector<SensorReport> conflict{report({1.0, 0.0}), report({0.0, 1.0})};
  CHECK_FALSE(dempster_shafer(conflict).has_value());
  const std::vector<SensorReport> hand{report({0.8, 0.2}), report({0.6, 0.4})};
  const auto f = *dempster_shafer(hand);
  CHECK(std::fabs(f.probs[0] - 0.48 / 0.56) < 1e-12);
  CHECK(std::fabs(f.probs[1] - 0.08 / 0.56) < 1e-12);
}

TEST_CASE("dempster shafer equals unnormalized-exponent geometric fusion") {
  CounterRng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    const std::vector<SensorReport> r{report(random_simplex(rng, 3)), report(random_simplex(rng, 3))};
    const auto ds = *dempster_shafer(r);
    std::vector<double> g(3);
    for (std::size_t i = 0; i < 3; ++i) g[i] = r[0].probs[i] * r[1].probs[i];
    const double s = total(g);
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::fabs(ds.probs[i] - g[i] / s) < 1e-15);
  }
}

TEST_CASE("baseline outputs are probability vectors") {
  CounterRng rng(29);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<SensorReport> r{report(random_simplex(rng, 4)), report(random_simplex(rng, 4)),
                                report(random_simplex(rng, 4))};
    const BaselineWeights w{random_simplex(rng, 3)};
    for (const auto& out : {similar_fusion(r, w), dissimilar_fusion(r, w), *dempster_shafer(r)}) {
      for (double p : out.probs) CHECK(p >= 0.0);
      CHECK(std::fabs(total(out.probs) - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("concat classifier") {
  ScenarioConfig cfg;
  cfg.modalities = 2;
  cfg.obs_dims = {20, 24};
  cfg.private_dims = {0, 0};
  cfg.view_noise = {0.5, 0.5};
  cfg.latent_dim = 4;
  cfg.n_train = 300;
  cfg.n_test = 200;
  const Scenario sc = generate_scenario(cfg);

  ConcatClassifier zero;
  zero.w = Tensor::zeros({3, 44});
  zero.b = Tensor::zeros({3});
  zero.dims = {20, 24};
  for (double p : zero.probabilities(sc.test).to_vector()) CHECK(p == doctest::Approx(1.0 / 3.0));

  ConcatOptions opt;
  opt.epochs = 30;
  const auto c = ConcatClassifier::train(sc.train, opt);
  const Tensor p = c.probabilities(sc.test);
  std::size_t hits = 0;
  for (std::size_t j = 0; j < p.cols(); ++j) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < 3; ++i)
      if (p.at(i, j) > p.at(best, j)) best = i;
    hits += best == sc.test[0].label_index[j];
  }
  CHECK(static_cast<double>(hits) / static_cast<double>(p.cols()) > 0.6);

  const std::vector<SensorBatch> one{sc.test[0]};
  CHECK_THROWS_AS(c.probabilities(one), DimensionError);
}
