#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "rfusion/rng.hpp"
#include "rfusion/tensor.hpp"

namespace rfusion::testing {

inline Tensor random_matrix(CounterRng& rng, std::size_t r, std::size_t c, double sd = 1.0,
                            bool grad = false) {
  std::vector<double> v(r * c);
  for (auto& x : v) x = rng.normal(0.0, sd);
  return Tensor::matrix(r, c, std::move(v), grad);
}

inline std::vector<double> random_simplex(CounterRng& rng, std::size_t n) {
  std::vector<double> p(n);
  double s = 0.0;
  for (auto& x : p) {
    x = -std::log(1.0 - rng.uniform());
    s += x;
  }
  for (auto& x : p) x /= s;
  return p;
}

/// Largest relative mismatch between the reverse-mode gradient of f and
/// central differences over every entry of `params`. The denominator is
/// floored at `floor` so entries whose true gradient is ~0 are compared in
/// absolute terms.
inline double gradient_mismatch(const std::function<Tensor()>& f, std::vector<Tensor> params,
                                double h = 1e-5, double floor = 1e-4) {
  for (auto& p : params) p.zero_grad();
  backward(f());
  std::vector<std::vector<double>> analytic;
  for (auto& p : params) {
    auto g = p.grad();
    analytic.emplace_back(g.begin(), g.end());
  }
  double worst = 0.0;
  NoGradGuard guard;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto data = params[k].mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double x0 = data[i];
      data[i] = x0 + h;
      const double up = f().item();
      data[i] = x0 - h;
      const double down = f().item();
      data[i] = x0;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[k][i];
      const double denom = std::max({std::fabs(a), std::fabs(numeric), floor});
      worst = std::max(worst, std::fabs(a - numeric) / denom);
    }
  }
  for (auto& p : params) p.zero_grad();
  return worst;
}

}  // namespace rfusion::testing
