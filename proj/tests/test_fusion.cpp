#include <cmath>
#include <numeric>

#include "doctest.h"
#include "rfusion/error.hpp"
#include "rfusion/fusion.hpp"
#include "support.hpp"

using namespace rfusion;
using rfusion::testing::random_simplex;

namespace {

SensorReport report(std::vector<double> p, double doc) { return {std::move(p), doc, 0}; }

// Fused probabilities by walking every outcome tuple independently of the
// library's own iteration order.
FusedReport enumerate_fused(const std::vector<AugmentedReport>& aug, double rho) {
  const std::size_t L = aug.size(), K = aug[0].probs.size(), unc = K - 1;
  const Coupling mx = max_mi_coupling(aug);
  FusedReport f;
  f.probs.assign(unc, 0.0);
  double all_unc = 0.0;
  std::size_t total = 1;
  for (std::size_t l = 0; l < L; ++l) total *= K;
  std::vector<std::size_t> t(L);
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t c = code;
    for (std::size_t l = L; l-- > 0;) {
      t[l] = c % K;
      c /= K;
    }
    double prod = 1.0;
    for (std::size_t l = 0; l < L; ++l) prod *= aug[l].probs[t[l]];
    const double m = rho * mx.mass(t) + (1.0 - rho) * prod;
    bool none = true, agree = true;
    std::size_t obj = 0;
    for (auto a : t) {
      if (a == unc) continue;
      if (none) obj = a, none = false;
      else if (a != obj) agree = false;
    }
    if (none) all_unc += m;
    else if (agree) f.probs[obj] += m;
  }
  f.doc_f = 1.0 - all_unc;
  return f;
}

}  // namespace

TEST_CASE("augment examples") {
  const auto a = augment(report({0.6, 0.4}, 0.5));
  CHECK(a.probs[0] == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(a.probs[1] == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(a.probs[2] == 0.5);
  const auto one = augment(report({0.25, 0.75}, 1.0));
  CHECK(one.probs == std::vector<double>{0.25, 0.75, 0.0});
  const auto zero = augment(report({0.25, 0.75}, 0.0));
  CHECK(zero.probs == std::vector<double>{0.0, 0.0, 1.0});
  CHECK_THROWS_AS(augment(report({0.5, 0.5}, 1.5)), ContractError);
  CHECK_THROWS_AS(augment(report({0.5, 0.6}, 1.0)), ContractError);
}

TEST_CASE("min-MI coupling examples") {
  const std::vector<AugmentedReport> half{{{0.5, 0.5}}, {{0.5, 0.5}}};
  const Coupling c = min_mi_coupling(half);
  for (double m : c.dense()) CHECK(m == 0.25);
  const std::vector<AugmentedReport> r{{{0.3, 0.2, 0.5}}, {{0.6, 0.1, 0.3}}};
  const Coupling d = min_mi_coupling(r);
  const std::size_t t[] = {0, 0};
  CHECK(d.mass(t) == doctest::Approx(0.18).epsilon(1e-15));
  const std::vector<AugmentedReport> z{{{0.0, 0.4, 0.6}}, {{0.6, 0.1, 0.3}}};
  for (std::size_t b = 0; b < 3; ++b) {
    const std::size_t u[] = {0, b};
    CHECK(min_mi_coupling(z).mass(u) == 0.0);
  }
  CHECK(d.mutual_information() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("max-MI coupling examples") {
  const std::vector<AugmentedReport> same{{{0.2, 0.3, 0.5}}, {{0.2, 0.3, 0.5}}};
  const Coupling c = max_mi_coupling(same);
  double h = 0.0;
  for (double p : same[0].probs) h -= p * std::log(p);
  CHECK(c.mutual_information() == doctest::Approx(h).epsilon(1e-12));
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b) {
      const std::size_t t[] = {a, b};
      if (a != b) CHECK(c.mass(t) == 0.0);
    }

  const std::vector<AugmentedReport> det{{{1.0, 0.0, 0.0}}, {{0.2, 0.3, 0.5}}};
  const Coupling d = max_mi_coupling(det);
  CHECK(d.mutual_information() == doctest::Approx(0.0).epsilon(1e-12));
  for (std::size_t b = 0; b < 3; ++b) {
    const std::size_t t[] = {0, b};
    CHECK(d.mass(t) == doctest::Approx(det[1].probs[b]).epsilon(1e-15));
  }

  const std::vector<AugmentedReport> pair{{{0.7, 0.3}}, {{0.6, 0.4}}};
  const Coupling g = greedy_diagonal_coupling(pair);
  const std::size_t d00[] = {0, 0}, d11[] = {1, 1}, d01[] = {0, 1};
  CHECK(g.mass(d00) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(g.mass(d11) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(g.mass(d01) == doctest::Approx(0.1).epsilon(1e-14));
}

TEST_CASE("max-MI beats the diagonal-first greedy on anti-aligned marginals") {
  const std::vector<AugmentedReport> r{{{0.9, 0.1}}, {{0.1, 0.9}}};
  const double greedy = greedy_diagonal_coupling(r).mutual_information();
  const double best = max_mi_coupling(r).mutual_information();
  CHECK(best > greedy + 0.2);
  // The anti-diagonal coupling is a perfect dependence: MI = H(0.9, 0.1).
  CHECK(best == doctest::Approx(-(0.9 * std::log(0.9) + 0.1 * std::log(0.1))).epsilon(1e-12));
}

TEST_CASE("couplings reproduce their marginals") {
  CounterRng rng(31);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t L = 2 + trial % 3, I = 2 + trial % 2;
    std::vector<AugmentedReport> aug;
    for (std::size_t l = 0; l < L; ++l) aug.push_back(augment(report(random_simplex(rng, I), rng.uniform())));
    for (const Coupling& c : {max_mi_coupling(aug), min_mi_coupling(aug)}) {
      CHECK(c.total() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(c.min_mass() >= 0.0);
      for (std::size_t l = 0; l < L; ++l) {
        const auto m = c.marginal(l);
        for (std::size_t a = 0; a <= I; ++a) CHECK(std::fabs(m[a] - aug[l].probs[a]) <= 1e-9);
      }
    }
  }
}

TEST_CASE("blend endpoints and rho range") {
  const std::vector<AugmentedReport> r{{{0.3, 0.2, 0.5}}, {{0.6, 0.1, 0.3}}};
  const Coupling mx = max_mi_coupling(r), mn = min_mi_coupling(r);
  CHECK(blend(mx, mn, 0.0).dense() == mn.dense());
  CHECK(blend(mx, mn, 1.0).dense() == mx.dense());
  const auto half = blend(mx, mn, 0.5).dense();
  for (std::size_t i = 0; i < half.size(); ++i) {
    CHECK(half[i] == doctest::Approx(0.5 * (mx.dense()[i] + mn.dense()[i])).epsilon(1e-15));
  }
  CHECK_THROWS_AS(blend(mx, mn, 1.2), ContractError);
  CHECK_THROWS_AS(blend(mx, mn, -0.1), ContractError);
}

TEST_CASE("fuse examples") {
  const std::vector<SensorReport> sure{report({0.7, 0.3}, 1.0), report({0.4, 0.6}, 1.0)};
  const auto f = fuse_reports(sure, 0.0);
  CHECK(f.probs[0] == doctest::Approx(0.28).epsilon(1e-15));
  CHECK(f.probs[1] == doctest::Approx(0.18).epsilon(1e-15));
  CHECK(f.doc_f == 1.0);

  const std::vector<SensorReport> unsure{report({0.7, 0.3}, 0.8), report({0.4, 0.6}, 0.3)};
  CHECK(fuse_reports(unsure, 0.0).doc_f == doctest::Approx(1.0 - 0.2 * 0.7).epsilon(1e-15));
}

TEST_CASE("fuse matches tuple enumeration for three sensors") {
  CounterRng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<AugmentedReport> aug;
    for (int l = 0; l < 3; ++l) aug.push_back(augment(report(random_simplex(rng, 2), rng.uniform())));
    const double rho = rng.uniform();
    const auto got = fuse(blend(max_mi_coupling(aug), min_mi_coupling(aug), rho));
    const auto want = enumerate_fused(aug, rho);
    CHECK(std::fabs(got.doc_f - want.doc_f) <= 1e-12);
    for (std::size_t i = 0; i < 2; ++i) CHECK(std::fabs(got.probs[i] - want.probs[i]) <= 1e-12);
  }
}

TEST_CASE("fuse is affine in rho and respects its bounds") {
  CounterRng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<AugmentedReport> aug;
    for (int l = 0; l < 2; ++l) aug.push_back(augment(report(random_simplex(rng, 3), rng.uniform())));
    const Coupling mx = max_mi_coupling(aug), mn = min_mi_coupling(aug);
    const double rho = rng.uniform();
    const auto mid = fuse(blend(mx, mn, rho));
    const auto a = fuse(mx), b = fuse(mn);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(std::fabs(mid.probs[i] - (rho * a.probs[i] + (1 - rho) * b.probs[i])) <= 1e-12);
      CHECK(mid.probs[i] >= 0.0);
      CHECK(mid.probs[i] <= mid.doc_f + 1e-15);
    }
    CHECK(mid.doc_f >= 0.0);
    CHECK(mid.doc_f <= 1.0);
  }
}

TEST_CASE("full confidence: fused mass equals agreement mass") {
  CounterRng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<AugmentedReport> aug;
    for (int l = 0; l < 2; ++l) aug.push_back(augment(report(random_simplex(rng, 3), 1.0)));
    const Coupling c = blend(max_mi_coupling(aug), min_mi_coupling(aug), rng.uniform());
    const auto f = fuse(c);
    double disagree = 0.0;
    c.for_each([&](std::span<const std::size_t> t, double m) {
      if (t[0] != t[1]) disagree += m;
    });
    const double s = std::accumulate(f.probs.begin(), f.probs.end(), 0.0);
    CHECK(s <= 1.0 + 1e-12);
    CHECK(std::fabs(1.0 - s - disagree) <= 1e-12);
  }
}

TEST_CASE("renormalization shares out disagreement mass") {
  const std::vector<SensorReport> r{report({0.7, 0.3}, 0.9), report({0.2, 0.8}, 0.6)};
  std::vector<AugmentedReport> aug{augment(r[0]), augment(r[1])};
  const Coupling c = blend(max_mi_coupling(aug), min_mi_coupling(aug), 0.25);
  const auto raw = fuse(c), norm = fuse(c, true);
  CHECK(std::accumulate(norm.probs.begin(), norm.probs.end(), 0.0) == doctest::Approx(norm.doc_f));
  CHECK(norm.probs[0] / norm.probs[1] == doctest::Approx(raw.probs[0] / raw.probs[1]));
}

TEST_CASE("decide examples") {
  CHECK(decide({{0.7, 0.2}, 0.9}) == 0u);
  CHECK(decide({{0.4, 0.4}, 0.8}) == 0u);
  CHECK_FALSE(decide({{0.0, 0.0}, 0.0}).has_value());
}

TEST_CASE("sparse couplings for more than two sensors") {
  const std::vector<AugmentedReport> r{{{0.5, 0.5}}, {{0.5, 0.5}}, {{1.0, 0.0}}};
  const Coupling c = min_mi_coupling(r);
  CHECK_FALSE(c.is_dense());
  std::size_t cells = 0;
  c.for_each([&](std::span<const std::size_t>, double) { ++cells; });
  CHECK(cells == 4);
}

TEST_CASE("rho estimator") {
  const std::vector<std::vector<std::size_t>> same{{0, 1, 2, 0, 1}, {0, 1, 2, 0, 1}};
  CHECK(estimate_rho(same, 3) == doctest::Approx(1.0));
  const std::vector<std::vector<std::size_t>> anti{{0, 1, 0, 1}, {1, 0, 1, 0}};
  CHECK(estimate_rho(anti, 2) == 0.0);
}
