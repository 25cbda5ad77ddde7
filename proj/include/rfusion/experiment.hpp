#pragma once

// Experiment pipelines behind the command line: dataset generation, training
// with per-epoch traces, the robustness sweep over (SNR, damaged set) cells,
// threshold calibration and the toy-shape study. Every output directory gets
// the resolved configuration next to its CSV files.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rfusion/baselines.hpp"
#include "rfusion/config.hpp"
#include "rfusion/failure.hpp"
#include "rfusion/nets.hpp"
#include "rfusion/objective.hpp"
#include "rfusion/simdata.hpp"

namespace rfusion {

/// Bumped whenever a CSV header or a column's meaning changes.
inline constexpr int kCsvSchemaVersion = 1;

std::vector<std::string> losses_csv_header(std::size_t modalities);
std::vector<std::string> eval_csv_header();
std::vector<std::string> assessment_csv_header(std::size_t modalities);
std::vector<std::string> calibration_csv_header();
std::vector<std::string> toyshapes_csv_header();

/// DimensionError unless the checkpoint was built for this dataset's
/// modalities, observation sizes and classes.
void require_compatible(const ModelBundle& bundle, const Scenario& scenario);

/// Everything the sweep needs that does not depend on the cell.
struct EvalContext {
  ClusterTree tree;
  CalibrationTable table;
  double rho = 0.25;
  std::vector<double> acc_train;
  BaselineWeights weights;
  ConcatClassifier concat;
};

/// Splits the training samples: a seeded `calibration_holdout` share is used
/// for threshold calibration, the rest for the cluster tree. Trains the
/// concatenation baseline and, if requested, estimates rho.
EvalContext prepare_evaluation(const RunConfig& cfg, const ModelBundle& bundle, const Scenario& scenario);

struct EvalRow {
  std::string method;
  double snr_db = 0.0;
  std::string damaged;
  double accuracy = 0.0;
  std::optional<double> mean_doc_f;
  std::optional<double> detection_tpr, detection_fpr;
  std::uint64_t seed = 0;
};

struct DetectionCounts {
  std::size_t tp = 0, fn = 0, fp = 0, tn = 0;

  std::optional<double> tpr() const;
  std::optional<double> fpr() const;
};

struct TrackingCounts {
  std::size_t decided = 0;
  std::size_t correct = 0;  // decided, and flags exactly the damaged set
  std::size_t inconsistent = 0;
  std::size_t indeterminate = 0;
};

struct AssessmentRow {
  std::size_t sample = 0;
  std::vector<double> p_d;
  std::vector<std::uint8_t> flags;  // the configured detector's verdicts
  double threshold = 0.0;
  std::string outcome;
};

struct CellResult {
  double snr_db = 0.0;
  std::vector<std::size_t> damaged;
  std::vector<EvalRow> rows;  // method order is fixed
  std::vector<AssessmentRow> assessments;
  DetectionCounts clustering;  // both detectors are always scored
  TrackingCounts tracking;
};

/// Corrupts the damaged modalities of the test split at `snr_db` (+inf keeps
/// them clean), then scores every method. Methods: proposed_adaptive,
/// proposed_prior, similar, dissimilar, dempster_shafer, concat, single_1..L.
CellResult evaluate_cell(const RunConfig& cfg, const ModelBundle& bundle, const Scenario& scenario,
                         const EvalContext& ctx, double snr_db, const std::vector<std::size_t>& damaged);

/// All cells of the configured grid, in grid order (SNR outer, set inner).
std::vector<CellResult> evaluate_grid(const RunConfig& cfg, const ModelBundle& bundle, const Scenario& scenario,
                                      const EvalContext& ctx);

/// Trains `cfg.epochs` further epochs. Calls `on_epoch` after each one.
/// On a non-finite loss the bundle is left at the last good epoch and the
/// NumericError names the failing epoch.
TrainState train_model(const RunConfig& cfg, ModelBundle& bundle, const Scenario& scenario,
                       const std::function<void(const ModelBundle&, const TrainState&)>& on_epoch = {});

// Commands. Each creates `out` and writes the resolved config there.
void cmd_simulate(const RunConfig& cfg, const std::filesystem::path& out);
void cmd_train(const RunConfig& cfg, const std::filesystem::path& dataset, const std::filesystem::path& out,
               const std::optional<std::filesystem::path>& resume);
void cmd_evaluate(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                  const std::filesystem::path& dataset, const std::filesystem::path& out);
void cmd_calibrate(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                   const std::filesystem::path& dataset, const std::filesystem::path& out);
void cmd_toyshapes(const RunConfig& cfg, const std::filesystem::path& out);

}  // namespace rfusion
