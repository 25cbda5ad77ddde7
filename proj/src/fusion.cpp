#include "rfusion/fusion.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>

#include "rfusion/error.hpp"

namespace rfusion {

namespace {

constexpr double kSumTol = 1e-9;

double entropy_term(double m) { return m > 0.0 ? -m * std::log(m) : 0.0; }

void check_reports(std::span<const AugmentedReport> reports) {
  if (reports.size() < 2) throw ContractError("a coupling needs at least two reports");
  const std::size_t k = reports.front().probs.size();
  if (k < 2) throw ContractError("augmented reports need at least one object plus unc");
  for (const auto& r : reports) {
    if (r.probs.size() != k) {
      throw DimensionError("reports disagree on the number of objects: " +
                           std::to_string(k - 1) + " vs " + std::to_string(r.probs.size() - 1));
    }
  }
}

void check_marginals(const Coupling& c, std::span<const AugmentedReport> reports) {
  for (std::size_t l = 0; l < reports.size(); ++l) {
    const auto m = c.marginal(l);
    for (std::size_t a = 0; a < m.size(); ++a) {
      if (std::fabs(m[a] - reports[l].probs[a]) > kSumTol) {
        throw Error("max-MI coupling: marginal " + std::to_string(l) + " drifted by " +
                    std::to_string(m[a] - reports[l].probs[a]));
      }
    }
  }
}

// Repeatedly match the largest remaining mass of every modality.
void greedy_fill(Coupling& c, std::vector<std::vector<double>>& rem) {
  const std::size_t L = rem.size(), K = rem.front().size();
  Coupling::Tuple t(L);
  for (std::size_t iter = 0; iter <= L * K; ++iter) {
    double m = 1.0;
    for (std::size_t l = 0; l < L; ++l) {
      t[l] = static_cast<std::size_t>(std::max_element(rem[l].begin(), rem[l].end()) - rem[l].begin());
      m = std::min(m, rem[l][t[l]]);
    }
    if (!(m > 0.0)) break;
    c.add(t, m);
    for (std::size_t l = 0; l < L; ++l) {
      rem[l][t[l]] = rem[l][t[l]] == m ? 0.0 : std::max(0.0, rem[l][t[l]] - m);
    }
  }
}

std::vector<std::vector<double>> remaining(std::span<const AugmentedReport> reports) {
  std::vector<std::vector<double>> rem;
  for (const auto& r : reports) rem.push_back(r.probs);
  return rem;
}

// Spanning trees of K_{K,K} with a leaf-peeling schedule. Every vertex of the
// transportation polytope with K x K cells is supported on such a tree, so
// evaluating all of them finds the exact minimum of the (concave) joint
// entropy, i.e. the exact maximum of the mutual information.
struct PeelStep {
  std::size_t cell;
  std::size_t from;  // node whose remaining mass fixes the flow
  std::size_t to;
};
using PeelPlan = std::vector<PeelStep>;

std::vector<PeelPlan> spanning_trees(std::size_t K) {
  std::vector<PeelPlan> plans;
  const std::size_t cells = K * K, edges = 2 * K - 1, nodes = 2 * K;
  std::vector<std::size_t> pick(edges);
  std::iota(pick.begin(), pick.end(), 0);
  for (;;) {
    std::vector<std::size_t> parent(nodes);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    bool tree = true;
    for (auto e : pick) {
      const std::size_t a = find(e / K), b = find(K + e % K);
      if (a == b) {
        tree = false;
        break;
      }
      parent[a] = b;
    }
    if (tree) {
      PeelPlan plan;
      std::vector<std::size_t> live(pick.begin(), pick.end());
      while (!live.empty()) {
        std::vector<std::size_t> degree(nodes, 0);
        for (auto e : live) {
          ++degree[e / K];
          ++degree[K + e % K];
        }
        std::size_t leaf = 0;
        while (degree[leaf] != 1) ++leaf;
        for (std::size_t i = 0; i < live.size(); ++i) {
          const std::size_t e = live[i], r = e / K, col = K + e % K;
          if (r == leaf || col == leaf) {
            plan.push_back({e, leaf, r == leaf ? col : r});
            live.erase(live.begin() + static_cast<std::ptrdiff_t>(i));
            break;
          }
        }
      }
      plans.push_back(std::move(plan));
    }
    // next combination
    std::size_t i = edges;
    while (i > 0 && pick[i - 1] == cells - edges + i - 1) --i;
    if (i == 0) break;
    ++pick[i - 1];
    for (std::size_t j = i; j < edges; ++j) pick[j] = pick[j - 1] + 1;
  }
  return plans;
}

constexpr std::size_t kExactMaxOutcomes = 4;

const std::vector<PeelPlan>& tree_plans(std::size_t K) {
  static const std::array<std::vector<PeelPlan>, kExactMaxOutcomes + 1> cache = [] {
    std::array<std::vector<PeelPlan>, kExactMaxOutcomes + 1> c;
    for (std::size_t k = 2; k <= kExactMaxOutcomes; ++k) c[k] = spanning_trees(k);
    return c;
  }();
  return cache[K];
}

std::optional<Coupling> exact_two_modality(std::span<const AugmentedReport> reports) {
  const std::size_t K = reports[0].probs.size();
  if (K > kExactMaxOutcomes) return std::nullopt;
  std::vector<double> supply(2 * K), flow(K * K), best;
  double best_h = 0.0;
  for (const auto& plan : tree_plans(K)) {
    for (std::size_t a = 0; a < K; ++a) {
      supply[a] = reports[0].probs[a];
      supply[K + a] = reports[1].probs[a];
    }
    bool feasible = true;
    double h = 0.0;
    for (const auto& s : plan) {
      const double f = supply[s.from];
      if (f < -1e-12) {
        feasible = false;
        break;
      }
      const double fc = std::max(0.0, f);
      flow[s.cell] = fc;
      supply[s.from] = 0.0;
      supply[s.to] -= fc;
      h += entropy_term(fc);
    }
    if (!feasible) continue;
    if (best.empty() || h < best_h) {
      best_h = h;
      best.assign(K * K, 0.0);
      for (const auto& s : plan) best[s.cell] = flow[s.cell];
    }
  }
  if (best.empty()) return std::nullopt;
  Coupling c(2, K);
  std::size_t t[2];
  for (t[0] = 0; t[0] < K; ++t[0])
    for (t[1] = 0; t[1] < K; ++t[1]) c.add(t, best[t[0] * K + t[1]]);
  return c;
}

Coupling pure_greedy_coupling(std::span<const AugmentedReport> reports) {
  Coupling c(reports.size(), reports[0].probs.size());
  auto rem = remaining(reports);
  greedy_fill(c, rem);
  return c;
}

}  // namespace

void SensorReport::validate() const {
  if (probs.empty()) throw ContractError("sensor report has no objects");
  double s = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw ContractError("sensor report probabilities must be finite and >= 0");
    s += p;
  }
  if (std::fabs(s - 1.0) > kSumTol) {
    throw ContractError("sensor report probabilities sum to " + std::to_string(s));
  }
  if (!(doc >= 0.0 && doc <= 1.0)) throw ContractError("degree of confidence must lie in [0, 1]");
}

Coupling::Coupling(std::size_t modalities, std::size_t outcomes) : L_(modalities), K_(outcomes) {
  if (L_ < 2) throw ContractError("a coupling needs at least two modalities");
  if (K_ < 2) throw ContractError("a coupling needs at least two outcomes");
  if (L_ == 2) dense_.assign(K_ * K_, 0.0);
}

double Coupling::mass(std::span<const std::size_t> tuple) const {
  if (tuple.size() != L_) throw DimensionError("coupling tuple has the wrong length");
  if (is_dense()) return dense_[tuple[0] * K_ + tuple[1]];
  const auto it = sparse_.find(Tuple(tuple.begin(), tuple.end()));
  return it == sparse_.end() ? 0.0 : it->second;
}

void Coupling::add(std::span<const std::size_t> tuple, double m) {
  if (tuple.size() != L_) throw DimensionError("coupling tuple has the wrong length");
  for (auto a : tuple) {
    if (a >= K_) throw ContractError("coupling outcome index out of range");
  }
  if (is_dense()) {
    dense_[tuple[0] * K_ + tuple[1]] += m;
  } else if (m != 0.0) {
    sparse_[Tuple(tuple.begin(), tuple.end())] += m;
  }
}

std::vector<double> Coupling::marginal(std::size_t l) const {
  if (l >= L_) throw ContractError("marginal index out of range");
  std::vector<double> out(K_, 0.0);
  for_each([&](std::span<const std::size_t> t, double m) { out[t[l]] += m; });
  return out;
}

double Coupling::total() const {
  double s = 0.0;
  for_each([&](std::span<const std::size_t>, double m) { s += m; });
  return s;
}

double Coupling::min_mass() const {
  double lo = 0.0;
  bool first = true;
  for_each([&](std::span<const std::size_t>, double m) {
    lo = first ? m : std::min(lo, m);
    first = false;
  });
  return lo;
}

double Coupling::mutual_information() const {
  double h = 0.0;
  for (std::size_t l = 0; l < L_; ++l)
    for (double m : marginal(l)) h += entropy_term(m);
  for_each([&](std::span<const std::size_t>, double m) { h -= entropy_term(m); });
  return h;
}

AugmentedReport augment(const SensorReport& report) {
  report.validate();
  const double s = std::accumulate(report.probs.begin(), report.probs.end(), 0.0);
  AugmentedReport a;
  a.probs.reserve(report.probs.size() + 1);
  for (double p : report.probs) a.probs.push_back(report.doc * (p / s));
  a.probs.push_back(1.0 - report.doc);
  return a;
}

Coupling min_mi_coupling(std::span<const AugmentedReport> reports) {
  check_reports(reports);
  const std::size_t L = reports.size(), K = reports[0].probs.size();
  Coupling c(L, K);
  Coupling::Tuple t(L, 0);
  for (;;) {
    double m = 1.0;
    for (std::size_t l = 0; l < L; ++l) m *= reports[l].probs[t[l]];
    c.add(t, m);
    std::size_t l = L;
    while (l > 0 && ++t[l - 1] == K) t[--l] = 0;
    if (l == 0) break;
  }
  return c;
}

Coupling greedy_diagonal_coupling(std::span<const AugmentedReport> reports) {
  check_reports(reports);
  const std::size_t L = reports.size(), K = reports[0].probs.size();
  Coupling c(L, K);
  auto rem = remaining(reports);
  for (std::size_t a = 0; a < K; ++a) {
    double m = 1.0;
    for (std::size_t l = 0; l < L; ++l) m = std::min(m, rem[l][a]);
    if (!(m > 0.0)) continue;
    c.add(Coupling::Tuple(L, a), m);
    for (std::size_t l = 0; l < L; ++l) rem[l][a] = rem[l][a] == m ? 0.0 : std::max(0.0, rem[l][a] - m);
  }
  greedy_fill(c, rem);
  return c;
}

Coupling max_mi_coupling(std::span<const AugmentedReport> reports) {
  check_reports(reports);
  Coupling best = greedy_diagonal_coupling(reports);
  double best_mi = best.mutual_information();
  auto consider = [&](Coupling c) {
    const double mi = c.mutual_information();
    if (mi > best_mi + 1e-12) {
      best = std::move(c);
      best_mi = mi;
    }
  };
  consider(pure_greedy_coupling(reports));
  if (reports.size() == 2) {
    if (auto exact = exact_two_modality(reports)) consider(std::move(*exact));
  }
  check_marginals(best, reports);
  return best;
}

Coupling blend(const Coupling& max_c, const Coupling& min_c, double rho) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw ContractError("rho must lie in [0, 1]");
  if (max_c.modalities() != min_c.modalities() || max_c.outcomes() != min_c.outcomes()) {
    throw DimensionError("blend: couplings have different shapes");
  }
  Coupling out(max_c.modalities(), max_c.outcomes());
  if (out.is_dense()) {
    const auto& a = max_c.dense();
    const auto& b = min_c.dense();
    const std::size_t K = out.outcomes();
    std::size_t t[2];
    for (t[0] = 0; t[0] < K; ++t[0])
      for (t[1] = 0; t[1] < K; ++t[1]) {
        const std::size_t i = t[0] * K + t[1];
        out.add(t, rho * a[i] + (1.0 - rho) * b[i]);
      }
    return out;
  }
  max_c.for_each([&](std::span<const std::size_t> t, double m) { out.add(t, rho * m); });
  min_c.for_each([&](std::span<const std::size_t> t, double m) { out.add(t, (1.0 - rho) * m); });
  return out;
}

FusedReport fuse(const Coupling& coupling, bool renormalize) {
  const std::size_t unc = coupling.outcomes() - 1;
  FusedReport f;
  f.probs.assign(unc, 0.0);
  double all_unc = 0.0;
  coupling.for_each([&](std::span<const std::size_t> t, double m) {
    std::size_t obj = unc;
    for (auto a : t) {
      if (a == unc) continue;
      if (obj == unc) {
        obj = a;
      } else if (a != obj) {
        return;  // disagreement: no object receives this mass
      }
    }
    if (obj == unc) all_unc += m;
    else f.probs[obj] += m;
  });
  f.doc_f = std::clamp(1.0 - all_unc, 0.0, 1.0);
  if (renormalize) {
    const double s = std::accumulate(f.probs.begin(), f.probs.end(), 0.0);
    if (s > 0.0) {
      for (auto& p : f.probs) p *= f.doc_f / s;
    }
  }
  return f;
}

std::optional<std::size_t> decide(const FusedReport& fused) {
  if (fused.probs.empty()) throw ContractError("decide: empty fused report");
  const auto it = std::max_element(fused.probs.begin(), fused.probs.end());
  if (!(*it > 0.0)) return std::nullopt;
  return static_cast<std::size_t>(it - fused.probs.begin());
}

FusedReport fuse_reports(std::span<const SensorReport> reports, double rho, bool renormalize) {
  std::vector<AugmentedReport> aug;
  aug.reserve(reports.size());
  for (const auto& r : reports) aug.push_back(augment(r));
  return fuse(blend(max_mi_coupling(aug), min_mi_coupling(aug), rho), renormalize);
}

double estimate_rho(const std::vector<std::vector<std::size_t>>& decisions, std::size_t classes) {
  const std::size_t L = decisions.size();
  if (L < 2) throw ContractError("estimate_rho needs at least two modalities");
  const std::size_t n = decisions[0].size();
  for (const auto& d : decisions) {
    if (d.size() != n) throw DimensionError("estimate_rho: modalities have different sample counts");
  }
  if (n < 2) return 0.0;
  double total = 0.0;
  std::size_t terms = 0;
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t m = l + 1; m < L; ++m)
      for (std::size_t i = 0; i < classes; ++i) {
        double sa = 0, sb = 0, sab = 0;
        for (std::size_t s = 0; s < n; ++s) {
          const double a = decisions[l][s] == i, b = decisions[m][s] == i;
          sa += a;
          sb += b;
          sab += a * b;
        }
        const double N = static_cast<double>(n);
        const double va = sa / N * (1 - sa / N), vb = sb / N * (1 - sb / N);
        if (va <= 0.0 || vb <= 0.0) continue;
        total += (sab / N - sa / N * sb / N) / std::sqrt(va * vb);
        ++terms;
      }
  return terms == 0 ? 0.0 : std::clamp(total / static_cast<double>(terms), 0.0, 1.0);
}

}  // namespace rfusion
