#include "rfusion/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "rfusion/error.hpp"
#include "rfusion/objective.hpp"
#include "rfusion/rng.hpp"

namespace rfusion {

namespace {

constexpr double kFloor = 1e-9;

std::size_t check_inputs(std::span<const SensorReport> reports, const BaselineWeights& w) {
  if (reports.empty()) throw ContractError("fusion baseline needs at least one report");
  w.validate();
  if (w.w.size() != reports.size()) {
    throw DimensionError("fusion baseline: " + std::to_string(w.w.size()) + " weights for " +
                         std::to_string(reports.size()) + " reports");
  }
  const std::size_t I = reports[0].probs.size();
  for (const auto& r : reports) {
    r.validate();
    if (r.probs.size() != I) throw DimensionError("fusion baseline: reports disagree on the number of objects");
  }
  return I;
}

std::vector<double> stationarity_terms(std::span<const SensorReport> reports, const BaselineWeights& w,
                                       std::size_t* floored) {
  const std::size_t I = reports[0].probs.size();
  std::vector<double> c(I, 0.0);
  for (std::size_t l = 0; l < reports.size(); ++l)
    for (std::size_t i = 0; i < I; ++i) {
      double p = reports[l].probs[i];
      if (p < kFloor) {
        p = kFloor;
        if (floored) ++*floored;
      }
      c[i] += w.w[l] / p;
    }
  return c;
}

}  // namespace

void BaselineWeights::validate() const {
  if (w.empty()) throw ContractError("baseline weights are empty");
  double s = 0.0;
  for (double x : w) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw ContractError("baseline weights must be finite and >= 0");
    s += x;
  }
  if (std::fabs(s - 1.0) > 1e-9) throw ContractError("baseline weights must sum to 1");
}

BaselineWeights BaselineWeights::uniform(std::size_t modalities) {
  if (modalities == 0) throw ContractError("no modalities");
  return {std::vector<double>(modalities, 1.0 / static_cast<double>(modalities))};
}

BaselineWeights BaselineWeights::from_accuracies(std::span<const double> acc) {
  const double s = std::accumulate(acc.begin(), acc.end(), 0.0);
  if (!(s > 0.0)) return uniform(acc.size());
  BaselineWeights out;
  for (double a : acc) out.w.push_back(a / s);
  return out;
}

SensorReport similar_fusion(std::span<const SensorReport> reports, const BaselineWeights& w,
                            KlDirection direction) {
  const std::size_t I = check_inputs(reports, w);
  SensorReport out;
  out.probs.assign(I, direction == KlDirection::fused_first ? 1.0 : 0.0);
  for (std::size_t l = 0; l < reports.size(); ++l) {
    if (w.w[l] == 0.0) continue;
    for (std::size_t i = 0; i < I; ++i) {
      const double p = reports[l].probs[i];
      if (direction == KlDirection::fused_first) out.probs[i] *= w.w[l] == 1.0 ? p : std::pow(p, w.w[l]);
      else out.probs[i] += w.w[l] * p;
    }
  }
  const double s = std::accumulate(out.probs.begin(), out.probs.end(), 0.0);
  if (!(s > 0.0)) throw ContractError("similar fusion: every object has zero mass in some report");
  if (s != 1.0) {
    for (auto& p : out.probs) p /= s;
  }
  return out;
}

SensorReport dissimilar_fusion(std::span<const SensorReport> reports, const BaselineWeights& w,
                               DissimilarDiagnostics* diagnostics) {
  check_inputs(reports, w);
  std::size_t floored = 0;
  const auto c = stationarity_terms(reports, w, &floored);
  const double cmin = *std::min_element(c.begin(), c.end());
  auto total = [&](double lambda) {
    double s = 0.0;
    for (double ci : c) s += 1.0 / (lambda + ci);
    return s;
  };
  // total() falls from +inf at -cmin to at most 1 at I - cmin.
  double lo = -cmin, hi = static_cast<double>(c.size()) - cmin;
  if (!(total(hi) <= 1.0) || !std::isfinite(cmin)) {
    std::ostringstream msg;
    msg << "dissimilar fusion: bisection bracket failed (cmin=" << cmin << ", sum at upper end="
        << total(hi) << ")";
    throw NumericError(msg.str());
  }
  std::size_t iter = 0;
  for (; iter < 2000; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (total(mid) > 1.0) lo = mid;
    else hi = mid;
  }
  const double lambda = std::fabs(total(lo) - 1.0) < std::fabs(total(hi) - 1.0) && lo > -cmin ? lo : hi;
  SensorReport out;
  for (double ci : c) out.probs.push_back(1.0 / (lambda + ci));
  if (diagnostics) {
    diagnostics->floored = floored;
    diagnostics->lambda = lambda;
    diagnostics->sum_error = std::fabs(total(lambda) - 1.0);
    diagnostics->iterations = iter;
  }
  return out;
}

double dissimilar_kkt_residual(std::span<const SensorReport> reports, const BaselineWeights& w,
                               std::span<const double> p) {
  check_inputs(reports, w);
  const auto c = stationarity_terms(reports, w, nullptr);
  if (p.size() != c.size()) throw DimensionError("kkt residual: length mismatch");
  double lambda = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) lambda += 1.0 / p[i] - c[i];
  lambda /= static_cast<double>(c.size());
  double r = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) r = std::max(r, std::fabs(c[i] - 1.0 / p[i] + lambda));
  return r;
}

std::optional<SensorReport> dempster_shafer(std::span<const SensorReport> reports) {
  if (reports.empty()) throw ContractError("dempster_shafer needs at least one report");
  const std::size_t I = reports[0].probs.size();
  for (const auto& r : reports) {
    r.validate();
    if (r.probs.size() != I) throw DimensionError("dempster_shafer: reports disagree on the number of objects");
  }
  SensorReport out;
  out.probs.assign(I, 1.0);
  for (const auto& r : reports)
    for (std::size_t i = 0; i < I; ++i) out.probs[i] *= r.probs[i];
  const double agree = std::accumulate(out.probs.begin(), out.probs.end(), 0.0);  // 1 - K
  if (!(agree > 0.0)) return std::nullopt;
  for (auto& p : out.probs) p /= agree;
  return out;
}

Tensor concat_features(std::span<const SensorBatch> batches) {
  require_aligned(batches);
  if (batches.empty()) throw ContractError("concat_features: no modalities");
  const std::size_t n = batches[0].size();
  std::size_t rows = 0;
  for (const auto& b : batches) rows += b.dim();
  std::vector<double> v;
  v.reserve(rows * n);
  for (const auto& b : batches) {
    const auto d = b.x.data();
    v.insert(v.end(), d.begin(), d.end());
  }
  return Tensor::matrix(rows, n, std::move(v));
}

ConcatClassifier ConcatClassifier::train(std::span<const SensorBatch> batches, const ConcatOptions& options) {
  const Tensor x = concat_features(batches);
  const std::size_t rows = x.rows(), n = x.cols(), I = batches[0].classes();
  if (options.batch_size == 0) throw ContractError("concat classifier: batch size must be positive");
  ConcatClassifier c;
  for (const auto& b : batches) c.dims.push_back(b.dim());
  c.w = Tensor::zeros({I, rows}, true);
  c.b = Tensor::zeros({I}, true);
  const Tensor params[] = {c.w, c.b};
  const CounterRng root(options.seed, "concat");
  std::vector<std::size_t> order(n);
  for (std::size_t e = 0; e < options.epochs; ++e) {
    std::iota(order.begin(), order.end(), 0);
    CounterRng rng = root.split(e);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t start = 0; start < n; start += options.batch_size) {
      const std::size_t end = std::min(n, start + options.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const Tensor xb = gather_columns(x, idx);
      const Tensor yb = gather_columns(batches[0].labels, idx);
      const Tensor probs = softmax_columns(add_columnwise(matmul(c.w, xb), c.b));
      const Tensor loss = scale(cross_entropy(probs, yb), 1.0 / static_cast<double>(idx.size()));
      backward(loss);
      sgd_step(params, options.learning_rate);
    }
  }
  c.w.set_requires_grad(false);
  c.b.set_requires_grad(false);
  return c;
}

Tensor ConcatClassifier::probabilities(std::span<const SensorBatch> batches) const {
  if (batches.size() != dims.size()) {
    throw DimensionError("concat classifier trained on " + std::to_string(dims.size()) +
                         " modalities, got " + std::to_string(batches.size()));
  }
  for (std::size_t l = 0; l < dims.size(); ++l) {
    if (batches[l].dim() != dims[l]) {
      throw DimensionError("concat classifier: modality " + std::to_string(l + 1) + " has dimension " +
                           std::to_string(batches[l].dim()) + ", trained on " + std::to_string(dims[l]));
    }
  }
  NoGradGuard guard;
  return softmax_columns(add_columnwise(matmul(w, concat_features(batches)), b));
}

SensorReport ConcatClassifier::report(std::span<const std::vector<double>> features) const {
  if (features.size() != dims.size()) throw DimensionError("concat classifier: wrong number of modalities");
  std::vector<double> stacked;
  for (std::size_t l = 0; l < dims.size(); ++l) {
    if (features[l].size() != dims[l]) throw DimensionError("concat classifier: feature length mismatch");
    stacked.insert(stacked.end(), features[l].begin(), features[l].end());
  }
  NoGradGuard guard;
  const Tensor p = softmax_columns(
      add_columnwise(matmul(w, Tensor::matrix(stacked.size(), 1, stacked)), b));
  return {p.to_vector(), 1.0, 0};
}

}  // namespace rfusion
