#pragma once

// Damage detection in the hidden space: an agglomerative cluster tree over
// training estimates yields a damage probability p_D, cross-sensor tracking
// votes on pairwise deviations, and thresholds are calibrated per SNR.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rfusion/batch.hpp"
#include "rfusion/nets.hpp"
#include "rfusion/simdata.hpp"
#include "rfusion/tensor.hpp"

namespace rfusion {

enum class Linkage { single, average };

Linkage parse_linkage(std::string_view name);
std::string_view linkage_name(Linkage linkage);

/// One agglomeration step. Leaves are 0..n-1; merge k creates node n + k.
struct Merge {
  std::size_t a = 0, b = 0;
  double distance = 0.0;
  std::size_t size = 0;
};

struct ClusterTree {
  Linkage linkage = Linkage::average;
  std::size_t dim = 0;
  std::size_t leaves = 0;
  std::vector<Merge> merges;      // non-decreasing distance, n - 1 entries
  std::vector<double> points;     // leaves x dim, row-major
  std::vector<double> centroids;  // (2n - 1) x dim, node order
  std::vector<std::size_t> born;  // level at which each node appears
  std::vector<std::size_t> died;  // level at which it is merged (n for the root)

  /// d_v for v = 0..n-1, with d_0 = 0.
  double level_distance(std::size_t v) const { return v == 0 ? 0.0 : merges[v - 1].distance; }
  double max_distance() const { return merges.empty() ? 0.0 : merges.back().distance; }
  std::size_t levels() const { return merges.size() + 1; }
};

/// Agglomerative clustering of the columns of h [d x n] under Euclidean point
/// distance (nearest-neighbour chain with Lance-Williams updates).
ClusterTree build_tree(const Tensor& h, Linkage linkage);

/// As build_tree, on a seeded uniform subsample of at most `max_points` columns.
ClusterTree build_tree_subsampled(const Tensor& h, Linkage linkage, std::size_t max_points,
                                  std::uint64_t seed);

struct JoinInfo {
  std::size_t level = 0;     // lev
  double distance = 0.0;     // distance to the nearest point or centroid that joins
  double p_d = 0.0;
};

/// lev = the smallest level v whose cut-off d_v reaches the query's distance to
/// the nearest training point (single) or to the centroid of a cluster alive at
/// v (average); p_D = d_lev / max_v d_v, or 1 when no level reaches it.
JoinInfo join_level(const ClusterTree& tree, std::span<const double> query);
double damage_probability(const ClusterTree& tree, std::span<const double> query);

/// p_D of every column of h [d x B].
std::vector<double> damage_probabilities(const ClusterTree& tree, const Tensor& h);

enum class DetectorKind { clustering, tracking };

DetectorKind parse_detector(std::string_view name);
std::string_view detector_name(DetectorKind kind);

enum class TrackingOutcome {
  decided,        // the flags (possibly none) follow from the rule
  inconsistent,   // someone collected enough far votes but no survivor consensus
  indeterminate,  // two modalities: the vote quota is degenerate
};

std::string_view tracking_outcome_name(TrackingOutcome outcome);

struct DamageAssessment {
  DetectorKind detector = DetectorKind::clustering;
  double threshold = 0.0;
  std::vector<double> p_d;                  // clustering only
  std::vector<std::size_t> join_level;      // clustering only
  std::vector<std::uint8_t> damaged;
  std::vector<std::size_t> far_votes;       // tracking only
  TrackingOutcome outcome = TrackingOutcome::decided;
};

/// Vote quota: (L - 1) / 2 for odd L, L / 2 - 1 for even L.
std::size_t tracking_quota(std::size_t modalities);

/// Sensor m is flagged when at least `quota` others sit farther than T
/// (squared distance) and at least `quota` unordered pairs of the remaining
/// sensors sit closer than T. If more than `quota` sensors qualify, only those
/// with the most far votes are kept; a tie there is reported as inconsistent.
DamageAssessment track_cross_sensor(std::span<const std::vector<double>> h, double threshold);

/// damaged[l] = p_D(h[l]) > threshold.
DamageAssessment assess_clustering(const ClusterTree& tree, std::span<const std::vector<double>> h,
                                   double threshold);

struct ThresholdChoice {
  double threshold = 0.0;
  double j = 0.0;  // TPR - FPR
  double tpr = 0.0;
  double fpr = 0.0;
  bool low_confidence = false;
};

/// Threshold maximizing Youden's J for the rule "positive iff score > T", over
/// midpoints between consecutive distinct scores. Ties keep the lowest T. When
/// no threshold beats J = 0 the midpoint of the pooled range is returned and
/// flagged low-confidence.
ThresholdChoice youden_threshold(std::span<const double> positives, std::span<const double> negatives);

struct CalibrationEntry {
  double snr_db = 0.0;        // injected
  double snr_estimate = 0.0;  // mean estimated SNR of the corrupted samples (lookup key)
  ThresholdChoice clustering;
  ThresholdChoice tracking;   // on squared pairwise hidden distances
};

struct CalibrationTable {
  std::vector<CalibrationEntry> entries;

  /// Nearest entry by estimated SNR. ContractError when empty.
  const CalibrationEntry& lookup(double snr_estimate) const;
};

struct CalibrationOptions {
  std::size_t max_samples = 400;  // training samples per (snr, modality) condition
  FailureMode mode = FailureMode::noise;
  std::uint64_t seed = 1;
};

/// For every finite grid SNR and every modality in turn, corrupts that modality
/// on (a subsample of) the training split, and picks the thresholds that best
/// separate the corrupted modality from the intact ones.
CalibrationTable calibrate_threshold(const ModelBundle& bundle, const ClusterTree& tree,
                                     std::span<const SensorBatch> train,
                                     std::span<const double> snr_grid,
                                     const CalibrationOptions& options);

/// Per sample, the minimum over modalities of estimate_snr_db of its raw
/// observation: the lookup key for the threshold table.
std::vector<double> sample_snr_estimates(std::span<const SensorBatch> batches);

/// (1 - p_D) * acc_train; both in [0, 1].
double adaptive_doc(double p_d, double acc_train);

struct Survivor {
  std::vector<double> h;  // hidden estimate of a surviving modality
  double doc = 0.0;
};

/// S^l applied to the DoC-weighted mean of the survivors' hidden estimates.
/// nullopt when there are no survivors or their DoCs sum to zero.
std::optional<std::vector<double>> reconstruct_features(const SelectionMatrix& s,
                                                        std::span<const Survivor> survivors);

}  // namespace rfusion
