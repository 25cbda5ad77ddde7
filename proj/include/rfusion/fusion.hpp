#pragma once

// Event-driven fusion of per-sensor class reports that carry an explicit
// "uncertain" outcome. Reports are joined through a coupling blended between
// independence and maximal dependence.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <vector>

namespace rfusion {

struct SensorReport {
  std::vector<double> probs;  // length I, sums to 1
  double doc = 1.0;           // degree of confidence in [0, 1]
  std::size_t modality = 0;

  void validate() const;  // ContractError
};

/// probs scaled by doc, followed by the uncertain mass 1 - doc (last entry).
struct AugmentedReport {
  std::vector<double> probs;  // length I + 1

  std::size_t classes() const { return probs.size() - 1; }
  double unc() const { return probs.back(); }
};

struct FusedReport {
  std::vector<double> probs;  // length I, each in [0, doc_f]
  double doc_f = 0.0;
};

/// Joint mass over outcome tuples (a^1..a^L), a^l in {0..I-1, I = unc}.
/// Dense for two modalities, a sorted sparse map otherwise.
class Coupling {
 public:
  using Tuple = std::vector<std::size_t>;

  Coupling(std::size_t modalities, std::size_t outcomes);

  std::size_t modalities() const { return L_; }
  std::size_t outcomes() const { return K_; }  // I + 1
  bool is_dense() const { return L_ == 2; }

  double mass(std::span<const std::size_t> tuple) const;
  void add(std::span<const std::size_t> tuple, double m);

  /// Visits stored cells in lexicographic tuple order.
  template <class F>
  void for_each(F&& f) const {
    if (is_dense()) {
      Tuple t(2);
      for (t[0] = 0; t[0] < K_; ++t[0])
        for (t[1] = 0; t[1] < K_; ++t[1]) f(std::span<const std::size_t>(t), dense_[t[0] * K_ + t[1]]);
    } else {
      for (const auto& [t, m] : sparse_) f(std::span<const std::size_t>(t), m);
    }
  }

  std::vector<double> marginal(std::size_t l) const;
  double total() const;
  double min_mass() const;
  /// Sum of marginal entropies minus joint entropy, in nats (the mutual
  /// information for L = 2).
  double mutual_information() const;

  /// Dense (I+1) x (I+1) view, L = 2 only.
  const std::vector<double>& dense() const { return dense_; }

 private:
  std::size_t L_, K_;
  std::vector<double> dense_;
  std::map<Tuple, double> sparse_;
};

AugmentedReport augment(const SensorReport& report);

/// Product coupling: zero mutual information.
Coupling min_mi_coupling(std::span<const AugmentedReport> reports);

/// A coupling with the given marginals and large mutual information. Candidates:
/// diagonal-first allocation followed by largest-remaining matching, the pure
/// largest-remaining matching, and (two modalities, at most 4 outcomes) every
/// vertex of the transportation polytope. The highest-MI candidate wins; ties
/// keep the diagonal-first one. Throws Error if marginals drift by > 1e-9.
Coupling max_mi_coupling(std::span<const AugmentedReport> reports);

/// Only the diagonal-first greedy allocation.
Coupling greedy_diagonal_coupling(std::span<const AugmentedReport> reports);

/// rho * max_c + (1 - rho) * min_c cell-wise.
Coupling blend(const Coupling& max_c, const Coupling& min_c, double rho);

/// P^f(o_i) = mass of tuples whose non-unc coordinates all equal o_i (at least
/// one non-unc); DoC^f = 1 - mass(all unc). With `renormalize`, the
/// disagreement mass is shared out proportionally so the probs sum to DoC^f.
FusedReport fuse(const Coupling& coupling, bool renormalize = false);

/// Argmax with ties to the lowest index; nullopt (abstain) when all are zero.
std::optional<std::size_t> decide(const FusedReport& fused);

/// augment -> couplings -> blend -> fuse.
FusedReport fuse_reports(std::span<const SensorReport> reports, double rho,
                         bool renormalize = false);

/// Experimental: mean over modality pairs and classes of the Pearson
/// correlation between the per-class decision indicators, clipped to [0, 1].
/// decisions[l][n] is modality l's class decision for sample n.
double estimate_rho(const std::vector<std::vector<std::size_t>>& decisions, std::size_t classes);

}  // namespace rfusion
