#include "rfusion/failure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "rfusion/error.hpp"
#include "rfusion/kernels.hpp"
#include "rfusion/objective.hpp"
#include "rfusion/parallel.hpp"
#include "rfusion/rng.hpp"

namespace rfusion {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<double> column(const Tensor& m, std::size_t c) {
  const std::size_t rows = m.rows(), n = m.cols();
  std::vector<double> out(rows);
  const auto d = m.data();
  for (std::size_t r = 0; r < rows; ++r) out[r] = d[r * n + c];
  return out;
}

double sqdist(std::span<const double> a, std::span<const double> b) {
  return kernels::active().sqdist(a.data(), b.data(), a.size());
}

// Condensed upper-triangle distance matrix.
class Condensed {
 public:
  explicit Condensed(std::size_t n) : n_(n), d_(n * (n - 1) / 2) {}
  double& operator()(std::size_t i, std::size_t j) {
    if (i > j) std::swap(i, j);
    return d_[i * n_ - i * (i + 1) / 2 + (j - i - 1)];
  }

 private:
  std::size_t n_;
  std::vector<double> d_;
};

}  // namespace

Linkage parse_linkage(std::string_view name) {
  if (name == "single") return Linkage::single;
  if (name == "average") return Linkage::average;
  throw ConfigError("unknown linkage '" + std::string(name) + "' (single|average)");
}

std::string_view linkage_name(Linkage linkage) {
  return linkage == Linkage::single ? "single" : "average";
}

DetectorKind parse_detector(std::string_view name) {
  if (name == "clustering") return DetectorKind::clustering;
  if (name == "tracking") return DetectorKind::tracking;
  throw ConfigError("unknown detector '" + std::string(name) + "' (clustering|tracking)");
}

std::string_view detector_name(DetectorKind kind) {
  return kind == DetectorKind::clustering ? "clustering" : "tracking";
}

std::string_view tracking_outcome_name(TrackingOutcome outcome) {
  switch (outcome) {
    case TrackingOutcome::decided: return "decided";
    case TrackingOutcome::inconsistent: return "inconsistent";
    case TrackingOutcome::indeterminate: return "indeterminate";
  }
  return "decided";
}

ClusterTree build_tree(const Tensor& h, Linkage linkage) {
  if (h.rank() != 2 || h.cols() < 2) {
    throw ContractError("build_tree needs a [d x n] matrix with at least 2 columns");
  }
  const std::size_t dim = h.rows(), n = h.cols();
  ClusterTree tree;
  tree.linkage = linkage;
  tree.dim = dim;
  tree.leaves = n;
  tree.points.resize(n * dim);
  const auto hd = h.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < dim; ++r) tree.points[i * dim + r] = hd[r * n + i];

  Condensed dist(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      dist(i, j) = std::sqrt(sqdist({&tree.points[i * dim], dim}, {&tree.points[j * dim], dim}));
    }

  // Nearest-neighbour chain; slot a keeps the merged cluster, slot b retires.
  std::vector<std::size_t> size(n, 1);
  std::vector<char> active(n, 1);
  struct Raw {
    std::size_t a, b;
    double d;
  };
  std::vector<Raw> raw;
  raw.reserve(n - 1);
  std::vector<std::size_t> chain;
  std::size_t remaining = n;
  while (remaining > 1) {
    if (chain.empty()) {
      std::size_t first = 0;
      while (!active[first]) ++first;
      chain.push_back(first);
    }
    const std::size_t a = chain.back();
    std::size_t best = n;
    double best_d = kInf;
    if (chain.size() >= 2) {
      best = chain[chain.size() - 2];
      best_d = dist(a, best);
    }
    for (std::size_t k = 0; k < n; ++k) {
      if (!active[k] || k == a) continue;
      const double dk = dist(a, k);
      if (dk < best_d) {
        best_d = dk;
        best = k;
      }
    }
    if (chain.size() >= 2 && best == chain[chain.size() - 2]) {
      chain.pop_back();
      chain.pop_back();
      const std::size_t keep = std::min(a, best), gone = std::max(a, best);
      raw.push_back({keep, gone, best_d});
      for (std::size_t k = 0; k < n; ++k) {
        if (!active[k] || k == keep || k == gone) continue;
        const double dk = dist(keep, k), dg = dist(gone, k);
        dist(keep, k) = linkage == Linkage::single
                            ? std::min(dk, dg)
                            : (static_cast<double>(size[keep]) * dk + static_cast<double>(size[gone]) * dg) /
                                  static_cast<double>(size[keep] + size[gone]);
      }
      size[keep] += size[gone];
      active[gone] = 0;
      --remaining;
    } else {
      chain.push_back(best);
    }
  }

  std::stable_sort(raw.begin(), raw.end(), [](const Raw& x, const Raw& y) { return x.d < y.d; });

  // Relabel slots to node ids in merge order.
  std::vector<std::size_t> parent(n), node_of(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::iota(node_of.begin(), node_of.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  const std::size_t nodes = 2 * n - 1;
  tree.centroids.assign(nodes * dim, 0.0);
  std::copy(tree.points.begin(), tree.points.end(), tree.centroids.begin());
  tree.born.assign(nodes, 0);
  tree.died.assign(nodes, n);
  std::vector<std::size_t> node_size(nodes, 1);
  for (std::size_t k = 0; k < raw.size(); ++k) {
    const std::size_t ra = find(raw[k].a), rb = find(raw[k].b);
    const std::size_t na = node_of[ra], nb = node_of[rb], id = n + k;
    const std::size_t sa = node_size[na], sb = node_size[nb];
    tree.merges.push_back({std::min(na, nb), std::max(na, nb), raw[k].d, sa + sb});
    node_size[id] = sa + sb;
    for (std::size_t r = 0; r < dim; ++r) {
      tree.centroids[id * dim + r] =
          (static_cast<double>(sa) * tree.centroids[na * dim + r] +
           static_cast<double>(sb) * tree.centroids[nb * dim + r]) /
          static_cast<double>(sa + sb);
    }
    tree.born[id] = k + 1;
    tree.died[na] = tree.died[nb] = k + 1;
    parent[rb] = ra;
    node_of[ra] = id;
  }
  return tree;
}

ClusterTree build_tree_subsampled(const Tensor& h, Linkage linkage, std::size_t max_points,
                                  std::uint64_t seed) {
  if (h.rank() != 2) throw ContractError("build_tree needs a [d x n] matrix");
  const std::size_t n = h.cols();
  if (max_points < 2) throw ContractError("tree subsample needs at least 2 points");
  if (n <= max_points) return build_tree(h, linkage);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  CounterRng rng(seed, "tree_subsample");
  for (std::size_t i = 0; i < max_points; ++i) {
    std::swap(idx[i], idx[i + rng.below(n - i)]);
  }
  idx.resize(max_points);
  std::sort(idx.begin(), idx.end());
  return build_tree(gather_columns(h, idx), linkage);
}

JoinInfo join_level(const ClusterTree& tree, std::span<const double> query) {
  if (query.size() != tree.dim) {
    throw DimensionError("damage_probability: query has " + std::to_string(query.size()) +
                         " entries, tree has dimension " + std::to_string(tree.dim));
  }
  const std::size_t levels = tree.levels();
  std::vector<double> ladder(levels);
  for (std::size_t v = 0; v < levels; ++v) ladder[v] = tree.level_distance(v);
  auto first_reaching = [&](double delta) {
    return static_cast<std::size_t>(std::lower_bound(ladder.begin(), ladder.end(), delta) - ladder.begin());
  };

  JoinInfo info;
  std::size_t lev = levels;  // none
  const std::size_t dim = tree.dim;
  if (tree.linkage == Linkage::single) {
    double best = kInf;
    for (std::size_t i = 0; i < tree.leaves; ++i) {
      best = std::min(best, sqdist(query, {&tree.points[i * dim], dim}));
    }
    info.distance = std::sqrt(best);
    lev = first_reaching(info.distance);
  } else {
    const std::size_t nodes = tree.born.size();
    info.distance = kInf;
    for (std::size_t k = 0; k < nodes; ++k) {
      const double delta = std::sqrt(sqdist(query, {&tree.centroids[k * dim], dim}));
      const std::size_t v = std::max(tree.born[k], first_reaching(delta));
      if (v < tree.died[k] && v < levels && (v < lev || (v == lev && delta < info.distance))) {
        lev = v;
        info.distance = delta;
      }
    }
    if (lev == levels) {
      info.distance = std::sqrt(sqdist(query, {&tree.centroids[(nodes - 1) * dim], dim}));
    }
  }
  const double dmax = tree.max_distance();
  if (lev >= levels) {
    info.level = levels;
    info.p_d = 1.0;
  } else {
    info.level = lev;
    info.p_d = dmax > 0.0 ? std::clamp(ladder[lev] / dmax, 0.0, 1.0) : 0.0;
  }
  return info;
}

double damage_probability(const ClusterTree& tree, std::span<const double> query) {
  return join_level(tree, query).p_d;
}

std::vector<double> damage_probabilities(const ClusterTree& tree, const Tensor& h) {
  if (h.rank() != 2 || h.rows() != tree.dim) {
    throw DimensionError("damage_probabilities: expected " + std::to_string(tree.dim) +
                         "-row estimates, got " + shape_str(h.shape()));
  }
  std::vector<double> out(h.cols());
  parallel_for(h.cols(), [&](std::size_t c) { out[c] = damage_probability(tree, column(h, c)); });
  return out;
}

std::size_t tracking_quota(std::size_t modalities) {
  return modalities % 2 == 1 ? (modalities - 1) / 2 : modalities / 2 - 1;
}

DamageAssessment track_cross_sensor(std::span<const std::vector<double>> h, double threshold) {
  const std::size_t L = h.size();
  DamageAssessment out;
  out.detector = DetectorKind::tracking;
  out.threshold = threshold;
  out.damaged.assign(L, 0);
  out.far_votes.assign(L, 0);
  if (L < 2) throw ContractError("tracking needs at least two modalities");
  for (const auto& v : h) {
    if (v.size() != h[0].size()) throw DimensionError("tracking: hidden estimates differ in length");
  }
  std::vector<double> d2(L * L, 0.0);
  for (std::size_t a = 0; a < L; ++a)
    for (std::size_t b = a + 1; b < L; ++b) d2[a * L + b] = d2[b * L + a] = sqdist(h[a], h[b]);
  for (std::size_t m = 0; m < L; ++m)
    for (std::size_t l = 0; l < L; ++l)
      if (l != m && d2[m * L + l] > threshold) ++out.far_votes[m];
  if (L == 2) {
    out.outcome = TrackingOutcome::indeterminate;
    return out;
  }
  const std::size_t quota = tracking_quota(L);
  bool any_suspect = false;
  std::vector<std::size_t> flagged;
  for (std::size_t m = 0; m < L; ++m) {
    if (out.far_votes[m] < quota) continue;
    any_suspect = true;
    std::size_t near_pairs = 0;
    for (std::size_t j = 0; j < L; ++j)
      for (std::size_t l = j + 1; l < L; ++l)
        if (j != m && l != m && d2[j * L + l] < threshold) ++near_pairs;
    if (near_pairs >= quota) flagged.push_back(m);
  }
  if (any_suspect && flagged.empty()) {
    out.outcome = TrackingOutcome::inconsistent;
    return out;
  }
  if (flagged.size() > quota) {
    std::stable_sort(flagged.begin(), flagged.end(), [&](std::size_t x, std::size_t y) {
      return out.far_votes[x] > out.far_votes[y];
    });
    if (out.far_votes[flagged[quota - 1]] == out.far_votes[flagged[quota]]) {
      out.outcome = TrackingOutcome::inconsistent;
      return out;
    }
    flagged.resize(quota);
  }
  for (auto m : flagged) out.damaged[m] = 1;
  return out;
}

DamageAssessment assess_clustering(const ClusterTree& tree, std::span<const std::vector<double>> h,
                                   double threshold) {
  DamageAssessment out;
  out.detector = DetectorKind::clustering;
  out.threshold = threshold;
  for (const auto& v : h) {
    const JoinInfo j = join_level(tree, v);
    out.p_d.push_back(j.p_d);
    out.join_level.push_back(j.level);
    out.damaged.push_back(j.p_d > threshold ? 1 : 0);
  }
  return out;
}

ThresholdChoice youden_threshold(std::span<const double> positives, std::span<const double> negatives) {
  if (positives.empty() || negatives.empty()) {
    throw ContractError("threshold calibration needs both damaged and intact samples");
  }
  std::vector<double> pos(positives.begin(), positives.end()), neg(negatives.begin(), negatives.end());
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  std::vector<double> all(pos);
  all.insert(all.end(), neg.begin(), neg.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());

  auto rate_above = [](const std::vector<double>& v, double t) {
    const auto it = std::upper_bound(v.begin(), v.end(), t);
    return static_cast<double>(v.end() - it) / static_cast<double>(v.size());
  };
  ThresholdChoice best;
  best.j = -kInf;
  for (std::size_t i = 0; i + 1 < all.size(); ++i) {
    const double t = 0.5 * (all[i] + all[i + 1]);
    const double tpr = rate_above(pos, t), fpr = rate_above(neg, t);
    if (tpr - fpr > best.j) best = {t, tpr - fpr, tpr, fpr, false};
  }
  if (!(best.j > 0.0)) {
    const double t = 0.5 * (all.front() + all.back());
    best = {t, 0.0, rate_above(pos, t), rate_above(neg, t), true};
    best.j = best.tpr - best.fpr;
  }
  return best;
}

const CalibrationEntry& CalibrationTable::lookup(double snr_estimate) const {
  if (entries.empty()) throw ContractError("empty threshold table");
  const CalibrationEntry* best = &entries.front();
  double gap = kInf;
  for (const auto& e : entries) {
    const double g = std::fabs(e.snr_estimate - snr_estimate);
    if (g < gap) {
      gap = g;
      best = &e;
    }
  }
  return *best;
}

std::vector<double> sample_snr_estimates(std::span<const SensorBatch> batches) {
  require_aligned(batches);
  const std::size_t n = batches.empty() ? 0 : batches[0].size();
  std::vector<double> out(n, kInf);
  for (const auto& b : batches) {
    for (std::size_t s = 0; s < n; ++s) out[s] = std::min(out[s], estimate_snr_db(column(b.x, s)));
  }
  return out;
}

CalibrationTable calibrate_threshold(const ModelBundle& bundle, const ClusterTree& tree,
                                     std::span<const SensorBatch> train,
                                     std::span<const double> snr_grid,
                                     const CalibrationOptions& options) {
  require_aligned(train);
  const std::size_t L = train.size();
  if (L < 2) throw ContractError("calibration needs at least two modalities");
  const std::size_t n = train[0].size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (n > options.max_samples) {
    CounterRng rng(options.seed, "calibration_subsample");
    for (std::size_t i = 0; i < options.max_samples; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
    idx.resize(options.max_samples);
    std::sort(idx.begin(), idx.end());
  }
  std::vector<SensorBatch> clean;
  for (const auto& b : train) clean.push_back(b.subset(idx));
  const auto h_clean = hidden_estimates(bundle, clean);
  std::vector<std::vector<double>> pd_clean(L);
  for (std::size_t l = 0; l < L; ++l) pd_clean[l] = damage_probabilities(tree, h_clean[l]);

  CalibrationTable table;
  const CounterRng root(options.seed, "calibration");
  for (std::size_t g = 0; g < snr_grid.size(); ++g) {
    const double snr = snr_grid[g];
    if (!std::isfinite(snr)) continue;
    std::vector<double> pd_pos, pd_neg, tr_pos, tr_neg, keys;
    for (std::size_t l = 0; l < L; ++l) {
      std::vector<SensorBatch> bad = clean;
      bad[l] = inject_failure(clean[l], options.mode, snr, root.split(g).split(l).key());
      const Tensor h_bad = hidden_estimate(bundle, l, bad[l].x);
      const auto pd = damage_probabilities(tree, h_bad);
      pd_pos.insert(pd_pos.end(), pd.begin(), pd.end());
      for (std::size_t m = 0; m < L; ++m)
        if (m != l) pd_neg.insert(pd_neg.end(), pd_clean[m].begin(), pd_clean[m].end());
      for (std::size_t s = 0; s < idx.size(); ++s) {
        const auto hb = column(h_bad, s);
        for (std::size_t m = 0; m < L; ++m) {
          if (m == l) continue;
          const auto hm = column(h_clean[m], s);
          tr_pos.push_back(sqdist(hb, hm));
          for (std::size_t k = m + 1; k < L; ++k) {
            if (k != l) tr_neg.push_back(sqdist(hm, column(h_clean[k], s)));
          }
        }
      }
      const auto est = sample_snr_estimates(bad);
      keys.insert(keys.end(), est.begin(), est.end());
    }
    CalibrationEntry e;
    e.snr_db = snr;
    double key = 0.0;
    std::size_t finite = 0;
    for (double k : keys) {
      if (std::isfinite(k)) {
        key += k;
        ++finite;
      }
    }
    e.snr_estimate = finite > 0 ? key / static_cast<double>(finite) : snr;
    e.clustering = youden_threshold(pd_pos, pd_neg);
    if (!tr_neg.empty()) e.tracking = youden_threshold(tr_pos, tr_neg);
    else e.tracking = {0.0, 0.0, 0.0, 0.0, true};
    table.entries.push_back(e);
  }
  if (table.entries.empty()) throw ContractError("calibration grid has no finite SNR");
  return table;
}

double adaptive_doc(double p_d, double acc_train) {
  if (!(p_d >= 0.0 && p_d <= 1.0) || !(acc_train >= 0.0 && acc_train <= 1.0)) {
    throw ContractError("adaptive_doc: p_D and accuracy must lie in [0, 1]");
  }
  return (1.0 - p_d) * acc_train;
}

std::optional<std::vector<double>> reconstruct_features(const SelectionMatrix& s,
                                                        std::span<const Survivor> survivors) {
  const std::size_t dh = s.s.cols(), df = s.s.rows();
  double wsum = 0.0;
  for (const auto& sv : survivors) {
    if (sv.h.size() != dh) {
      throw DimensionError("reconstruct_features: survivor estimate has " + std::to_string(sv.h.size()) +
                           " entries, selection expects " + std::to_string(dh));
    }
    if (!(sv.doc >= 0.0)) throw ContractError("reconstruct_features: negative DoC");
    wsum += sv.doc;
  }
  if (!(wsum > 0.0)) return std::nullopt;
  std::vector<double> mean(dh, 0.0);
  for (const auto& sv : survivors)
    for (std::size_t k = 0; k < dh; ++k) mean[k] += sv.doc / wsum * sv.h[k];
  std::vector<double> f(df, 0.0);
  const auto sd = s.s.data();
  for (std::size_t i = 0; i < df; ++i)
    for (std::size_t k = 0; k < dh; ++k) f[i] += sd[i * dh + k] * mean[k];
  return f;
}

}  // namespace rfusion
