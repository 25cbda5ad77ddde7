#include "rfusion/experiment.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>

#include "rfusion/error.hpp"
#include "rfusion/fusion.hpp"
#include "rfusion/parallel.hpp"
#include "rfusion/persist.hpp"
#include "rfusion/report.hpp"
#include "rfusion/rng.hpp"
#include "rfusion/text.hpp"
#include "rfusion/toyshapes.hpp"

namespace fs = std::filesystem;

namespace rfusion {

// ---------------------------------------------------------------------------
// CSV schemas

std::vector<std::string> losses_csv_header(std::size_t modalities) {
  std::vector<std::string> h{"epoch", "wasserstein", "commutation", "linf1", "xent", "pairwise_dist_sum"};
  for (std::size_t l = 1; l <= modalities; ++l) h.push_back("acc_modality_" + std::to_string(l));
  return h;
}

std::vector<std::string> eval_csv_header() {
  return {"method", "snr_db", "damaged", "accuracy", "mean_doc_f", "detection_tpr", "detection_fpr", "seed"};
}

std::vector<std::string> assessment_csv_header(std::size_t modalities) {
  std::vector<std::string> h{"snr_db", "damaged", "sample", "detector", "threshold"};
  for (std::size_t l = 1; l <= modalities; ++l) h.push_back("p_d_" + std::to_string(l));
  for (std::size_t l = 1; l <= modalities; ++l) h.push_back("flag_" + std::to_string(l));
  h.push_back("outcome");
  return h;
}

std::vector<std::string> calibration_csv_header() {
  return {"snr_db",           "snr_estimate",      "clustering_threshold", "clustering_j",
          "clustering_tpr",   "clustering_fpr",    "clustering_low_confidence",
          "tracking_threshold", "tracking_j",      "tracking_tpr",         "tracking_fpr",
          "tracking_low_confidence"};
}

std::vector<std::string> toyshapes_csv_header() {
  return {"task", "source", "target", "coverage", "mean_abs_r2_minus_1", "violation", "final_loss", "seed"};
}

namespace {

std::string opt_number(const std::optional<double>& x) { return x ? format_number(*x) : std::string(); }

std::size_t argmax(std::span<const double> p) {
  return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

std::vector<double> column_of(const Tensor& m, std::size_t c) {
  const std::size_t r = m.rows(), n = m.cols();
  std::vector<double> out(r);
  const auto d = m.data();
  for (std::size_t i = 0; i < r; ++i) out[i] = d[i * n + c];
  return out;
}

void prepare_output(const fs::path& out, const RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw DataError("cannot create output directory " + out.string());
  write_text(out / "resolved_config.ini",
             "# csv schema " + std::to_string(kCsvSchemaVersion) + "\n" + render_config(cfg));
}

std::vector<double> training_accuracy(const ModelBundle& bundle, const Scenario& s) {
  if (bundle.acc_train.size() == bundle.modalities()) return bundle.acc_train;
  std::vector<double> acc;
  for (std::size_t l = 0; l < bundle.modalities(); ++l) {
    acc.push_back(accuracy(modality_probabilities(bundle, l, s.train[l].x), s.train[l].label_index));
  }
  return acc;
}

// The cluster tree and the threshold table are built from disjoint parts of
// the training split, so thresholds are chosen on estimates the tree never saw.
std::pair<ClusterTree, CalibrationTable> build_detection(const RunConfig& cfg, const ModelBundle& bundle,
                                                         const Scenario& s) {
  const std::size_t n = s.train[0].size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  CounterRng rng(cfg.seed, "holdout");
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  const auto held = static_cast<std::size_t>(std::llround(cfg.calibration_holdout * static_cast<double>(n)));
  if (held == 0 || held >= n) throw ConfigError("failure.calibration_holdout leaves an empty split");
  std::vector<std::size_t> calib(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(held));
  std::vector<std::size_t> tree_idx(order.begin() + static_cast<std::ptrdiff_t>(held), order.end());
  std::sort(calib.begin(), calib.end());
  std::sort(tree_idx.begin(), tree_idx.end());

  std::vector<SensorBatch> calib_batches, tree_batches;
  for (const auto& b : s.train) {
    calib_batches.push_back(b.subset(calib));
    tree_batches.push_back(b.subset(tree_idx));
  }
  // Pool the clean estimates of every modality into one [d_H x L*N] matrix.
  const auto hs = hidden_estimates(bundle, tree_batches);
  const std::size_t d = bundle.arch.hidden_dim, m = tree_idx.size(), L = hs.size();
  std::vector<double> pooled(d * L * m);
  for (std::size_t l = 0; l < L; ++l) {
    const auto h = hs[l].data();
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < m; ++j) pooled[i * L * m + l * m + j] = h[i * m + j];
  }
  auto tree = build_tree_subsampled(Tensor::matrix(d, L * m, std::move(pooled)), cfg.linkage, cfg.tree_points,
                                    CounterRng(cfg.seed, "tree").key());
  CalibrationOptions opt;
  opt.max_samples = cfg.calibration_samples;
  opt.mode = cfg.failure_mode;
  opt.seed = cfg.seed;
  auto table = calibrate_threshold(bundle, tree, calib_batches, cfg.calibration_snr, opt);
  return {std::move(tree), std::move(table)};
}

SensorBatch corrupt(const RunConfig& cfg, const SensorBatch& b, double snr_db, std::size_t l) {
  if (std::isinf(snr_db) && snr_db > 0) return b;
  const auto key = CounterRng(cfg.seed, "corrupt").split(std::bit_cast<std::uint64_t>(snr_db)).split(l).key();
  if (cfg.failure_mode == FailureMode::noise) return inject_noise(b, snr_db, key);
  return inject_failure(b, cfg.failure_mode, snr_db, key);
}

}  // namespace

std::optional<double> DetectionCounts::tpr() const {
  if (tp + fn == 0) return std::nullopt;
  return static_cast<double>(tp) / static_cast<double>(tp + fn);
}

std::optional<double> DetectionCounts::fpr() const {
  if (fp + tn == 0) return std::nullopt;
  return static_cast<double>(fp) / static_cast<double>(fp + tn);
}

void require_compatible(const ModelBundle& bundle, const Scenario& s) {
  const auto& a = bundle.arch;
  if (a.obs_dims.size() != s.train.size()) {
    throw DimensionError("checkpoint has " + std::to_string(a.obs_dims.size()) + " modalities, dataset has " +
                         std::to_string(s.train.size()));
  }
  for (std::size_t l = 0; l < a.obs_dims.size(); ++l) {
    if (a.obs_dims[l] != s.train[l].dim() || a.obs_dims[l] != s.test[l].dim()) {
      throw DimensionError("modality " + std::to_string(l + 1) + ": checkpoint expects " +
                           std::to_string(a.obs_dims[l]) + " rows, dataset has " +
                           std::to_string(s.train[l].dim()));
    }
  }
  if (a.classes != s.config.classes) {
    throw DimensionError("checkpoint has " + std::to_string(a.classes) + " classes, dataset has " +
                         std::to_string(s.config.classes));
  }
}

EvalContext prepare_evaluation(const RunConfig& cfg, const ModelBundle& bundle, const Scenario& s) {
  require_compatible(bundle, s);
  EvalContext ctx;
  ConcatOptions co = cfg.concat;
  co.seed = cfg.seed;
  ctx.concat = ConcatClassifier::train(s.train, co);

  NoGradGuard guard;
  std::tie(ctx.tree, ctx.table) = build_detection(cfg, bundle, s);
  ctx.acc_train = training_accuracy(bundle, s);
  ctx.weights = BaselineWeights::from_accuracies(ctx.acc_train);
  ctx.rho = cfg.rho;
  if (cfg.estimate_rho) {
    std::vector<std::vector<std::size_t>> decisions;
    for (std::size_t l = 0; l < bundle.modalities(); ++l) {
      const Tensor p = modality_probabilities(bundle, l, s.train[l].x);
      std::vector<std::size_t> d;
      for (std::size_t c = 0; c < p.cols(); ++c) d.push_back(argmax(column_of(p, c)));
      decisions.push_back(std::move(d));
    }
    ctx.rho = estimate_rho(decisions, s.config.classes);
  }
  return ctx;
}

CellResult evaluate_cell(const RunConfig& cfg, const ModelBundle& bundle, const Scenario& s, const EvalContext& ctx,
                         double snr_db, const std::vector<std::size_t>& damaged) {
  require_compatible(bundle, s);
  NoGradGuard guard;
  const std::size_t L = bundle.modalities(), I = s.config.classes;
  CellResult cell;
  cell.snr_db = snr_db;
  cell.damaged = damaged;

  std::vector<SensorBatch> batches = s.test;
  std::vector<std::uint8_t> truly(L, 0);
  for (auto l : damaged) {
    batches[l] = corrupt(cfg, batches[l], snr_db, l);
    truly[l] = !(std::isinf(snr_db) && snr_db > 0);
  }
  const std::size_t n = batches[0].size();
  const auto& labels = batches[0].label_index;

  std::vector<Tensor> h(L), probs(L);
  std::vector<std::vector<double>> p_d(L);
  for (std::size_t l = 0; l < L; ++l) {
    h[l] = hidden_estimate(bundle, l, batches[l].x);
    probs[l] = modality_probabilities(bundle, l, batches[l].x);
    p_d[l] = damage_probabilities(ctx.tree, h[l]);
  }
  const auto snr_est = sample_snr_estimates(batches);

  std::size_t hit_adaptive = 0, hit_prior = 0, hit_similar = 0, hit_dissimilar = 0, hit_ds = 0;
  double doc_adaptive = 0.0, doc_prior = 0.0;
  std::vector<std::size_t> hit_single(L, 0);
  DetectionCounts chosen;
  for (std::size_t t = 0; t < n; ++t) {
    const auto& entry = ctx.table.lookup(snr_est[t]);
    std::vector<std::vector<double>> ht(L), pt(L);
    for (std::size_t l = 0; l < L; ++l) {
      ht[l] = column_of(h[l], t);
      pt[l] = column_of(probs[l], t);
    }

    std::vector<std::uint8_t> cluster_flags(L);
    for (std::size_t l = 0; l < L; ++l) cluster_flags[l] = p_d[l][t] > entry.clustering.threshold;
    const auto track = track_cross_sensor(ht, entry.tracking.threshold);
    for (std::size_t l = 0; l < L; ++l) {
      auto& c = cell.clustering;
      if (truly[l]) (cluster_flags[l] ? c.tp : c.fn)++;
      else (cluster_flags[l] ? c.fp : c.tn)++;
    }
    switch (track.outcome) {
      case TrackingOutcome::decided:
        cell.tracking.decided++;
        if (std::equal(track.damaged.begin(), track.damaged.end(), truly.begin())) cell.tracking.correct++;
        break;
      case TrackingOutcome::inconsistent: cell.tracking.inconsistent++; break;
      case TrackingOutcome::indeterminate: cell.tracking.indeterminate++; break;
    }

    const bool use_tracking = cfg.detector == DetectorKind::tracking;
    const auto& flags = use_tracking ? track.damaged : cluster_flags;
    for (std::size_t l = 0; l < L; ++l) {
      if (truly[l]) (flags[l] ? chosen.tp : chosen.fn)++;
      else (flags[l] ? chosen.fp : chosen.tn)++;
    }

    // Proposed, adaptive DoC: flagged sensors speak through features rebuilt
    // from the survivors and keep their own (low) confidence.
    std::vector<double> doc(L);
    for (std::size_t l = 0; l < L; ++l) {
      const double pd = use_tracking ? (flags[l] ? 1.0 : 0.0) : p_d[l][t];
      doc[l] = adaptive_doc(pd, ctx.acc_train[l]);
    }
    std::vector<SensorReport> adaptive;
    for (std::size_t l = 0; l < L; ++l) {
      SensorReport r{pt[l], doc[l], l};
      if (flags[l] && cfg.reconstruct) {
        std::vector<Survivor> survivors;
        for (std::size_t m = 0; m < L; ++m)
          if (!flags[m]) survivors.push_back({ht[m], doc[m]});
        const auto f = reconstruct_features(bundle.selections[l], survivors);
        if (f) {
          r.probs = classify(bundle.classifiers[l], Tensor::matrix(f->size(), 1, *f)).to_vector();
        } else {
          r.doc = 0.0;
        }
      }
      adaptive.push_back(std::move(r));
    }
    const auto fa = fuse_reports(adaptive, ctx.rho, cfg.renormalize);
    const auto da = decide(fa);
    hit_adaptive += da && *da == labels[t];
    doc_adaptive += fa.doc_f;

    // Proposed, prior-only DoC: no knowledge of the sensors' condition.
    std::vector<SensorReport> prior, plain;
    for (std::size_t l = 0; l < L; ++l) {
      prior.push_back({pt[l], ctx.acc_train[l], l});
      plain.push_back({pt[l], 1.0, l});
    }
    const auto fp = fuse_reports(prior, ctx.rho, cfg.renormalize);
    const auto dp = decide(fp);
    hit_prior += dp && *dp == labels[t];
    doc_prior += fp.doc_f;

    hit_similar += argmax(similar_fusion(plain, ctx.weights).probs) == labels[t];
    hit_dissimilar += argmax(dissimilar_fusion(plain, ctx.weights).probs) == labels[t];
    const auto ds = dempster_shafer(plain);
    hit_ds += ds && argmax(ds->probs) == labels[t];
    for (std::size_t l = 0; l < L; ++l) hit_single[l] += argmax(pt[l]) == labels[t];

    AssessmentRow a;
    a.sample = t;
    for (std::size_t l = 0; l < L; ++l) a.p_d.push_back(p_d[l][t]);
    a.flags = flags;
    a.threshold = use_tracking ? entry.tracking.threshold : entry.clustering.threshold;
    a.outcome = use_tracking ? std::string(tracking_outcome_name(track.outcome)) : "decided";
    cell.assessments.push_back(std::move(a));
  }

  std::size_t hit_concat = 0;
  const Tensor pc = ctx.concat.probabilities(batches);
  for (std::size_t t = 0; t < n; ++t) hit_concat += argmax(column_of(pc, t)) == labels[t];

  const double nd = n ? static_cast<double>(n) : 1.0;
  const std::string set = damaged_set_name(damaged);
  auto row = [&](std::string method, std::size_t hits) {
    EvalRow r;
    r.method = std::move(method);
    r.snr_db = snr_db;
    r.damaged = set;
    r.accuracy = static_cast<double>(hits) / nd;
    r.seed = cfg.seed;
    return r;
  };
  auto ra = row("proposed_adaptive", hit_adaptive);
  ra.mean_doc_f = doc_adaptive / nd;
  ra.detection_tpr = chosen.tpr();
  ra.detection_fpr = chosen.fpr();
  cell.rows.push_back(ra);
  auto rp = row("proposed_prior", hit_prior);
  rp.mean_doc_f = doc_prior / nd;
  cell.rows.push_back(rp);
  cell.rows.push_back(row("similar", hit_similar));
  cell.rows.push_back(row("dissimilar", hit_dissimilar));
  cell.rows.push_back(row("dempster_shafer", hit_ds));
  cell.rows.push_back(row("concat", hit_concat));
  for (std::size_t l = 0; l < L; ++l) cell.rows.push_back(row("single_" + std::to_string(l + 1), hit_single[l]));
  (void)I;
  return cell;
}

std::vector<CellResult> evaluate_grid(const RunConfig& cfg, const ModelBundle& bundle, const Scenario& s,
                                      const EvalContext& ctx) {
  std::vector<std::pair<double, std::vector<std::size_t>>> cells;
  for (double snr : cfg.snr_grid)
    for (const auto& set : cfg.damaged_sets) cells.emplace_back(snr, set);
  std::vector<CellResult> out(cells.size());
  parallel_for(
      cells.size(), [&](std::size_t i) { out[i] = evaluate_cell(cfg, bundle, s, ctx, cells[i].first, cells[i].second); },
      cfg.threads);
  return out;
}

TrainState train_model(const RunConfig& cfg, ModelBundle& bundle, const Scenario& s,
                       const std::function<void(const ModelBundle&, const TrainState&)>& on_epoch) {
  require_compatible(bundle, s);
  TrainState state;
  state.epoch = bundle.epochs_trained;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    ModelBundle last_good = bundle.clone();
    try {
      state = train_epoch(bundle, s.train, bundle.weights, std::move(state));
      const double latest[] = {state.wasserstein.back(), state.commutation.back(), state.linf1.back(),
                               state.xent.back(), state.pairwise_dist_sum.back()};
      for (double v : latest) {
        if (!std::isfinite(v)) throw NumericError("epoch " + std::to_string(last_good.epochs_trained + 1) + ": non-finite loss");
      }
    } catch (const NumericError&) {
      bundle = std::move(last_good);
      throw;
    }
    if (on_epoch) on_epoch(bundle, state);
  }
  return state;
}

// ---------------------------------------------------------------------------
// Commands

void cmd_simulate(const RunConfig& cfg, const fs::path& out) {
  prepare_output(out, cfg);
  save_dataset(out / "dataset.bin", generate_scenario(cfg.scenario));
}

namespace {

void write_losses(const fs::path& out, const TrainState& st, std::size_t first_epoch, std::size_t L) {
  std::ostringstream csv;
  CsvWriter w(csv, losses_csv_header(L));
  std::vector<double> epochs;
  for (std::size_t i = 0; i < st.xent.size(); ++i) {
    const std::size_t e = first_epoch + i + 1;
    epochs.push_back(static_cast<double>(e));
    std::vector<std::string> r{format_number(std::uint64_t{e}), format_number(st.wasserstein[i]),
                               format_number(st.commutation[i]), format_number(st.linf1[i]),
                               format_number(st.xent[i]), format_number(st.pairwise_dist_sum[i])};
    for (double a : st.acc[i]) r.push_back(format_number(a));
    w.row(r);
  }
  write_text(out / "losses.csv", csv.str());

  Plot losses{"Optimization losses", "epoch", "value", {}, 640, 420, false};
  losses.series.push_back({"wasserstein", epochs, st.wasserstein, false});
  losses.series.push_back({"commutation", epochs, st.commutation, false});
  losses.series.push_back({"linf1", epochs, st.linf1, false});
  losses.series.push_back({"xent", epochs, st.xent, false});
  write_svg(out / "losses.svg", losses);

  Plot dist{"Sum of pairwise hidden distances", "epoch", "distance", {}, 640, 420, false};
  dist.series.push_back({"pairwise_dist_sum", epochs, st.pairwise_dist_sum, false});
  write_svg(out / "pairwise_distance.svg", dist);

  Plot acc{"Training accuracy", "epoch", "accuracy", {}, 640, 420, false};
  for (std::size_t l = 0; l < L; ++l) {
    PlotSeries ps{"modality " + std::to_string(l + 1), epochs, {}, false};
    for (const auto& a : st.acc) ps.y.push_back(a[l]);
    acc.series.push_back(std::move(ps));
  }
  write_svg(out / "train_accuracy.svg", acc);
}

}  // namespace

void cmd_train(const RunConfig& cfg, const fs::path& dataset, const fs::path& out,
               const std::optional<fs::path>& resume) {
  const Scenario s = load_dataset(dataset);
  ModelBundle bundle = resume ? load_checkpoint(*resume) : init_params(cfg.arch, cfg.seed, cfg.weights);
  require_compatible(bundle, s);
  bundle.rho = cfg.rho;
  prepare_output(out, cfg);
  const std::size_t first = bundle.epochs_trained;
  TrainState partial;
  try {
    const auto st = train_model(cfg, bundle, s, [&](const ModelBundle&, const TrainState& st) { partial = st; });
    save_checkpoint(out / "checkpoint.bin", bundle);
    write_losses(out, st, first, bundle.modalities());
  } catch (const NumericError& e) {
    save_checkpoint(out / "checkpoint.bin", bundle);
    write_losses(out, partial, first, bundle.modalities());
    throw NumericError(std::string(e.what()) + "; last good checkpoint (" + std::to_string(bundle.epochs_trained) +
                       " epochs) saved to " + (out / "checkpoint.bin").string());
  }
}

void cmd_evaluate(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& dataset, const fs::path& out) {
  const ModelBundle bundle = load_checkpoint(checkpoint);
  const Scenario s = load_dataset(dataset);
  require_compatible(bundle, s);
  prepare_output(out, cfg);
  const std::size_t L = bundle.modalities();

  std::vector<CellResult> cells;
  if (!cfg.snr_grid.empty() && !cfg.damaged_sets.empty()) {
    const EvalContext ctx = prepare_evaluation(cfg, bundle, s);
    cells = evaluate_grid(cfg, bundle, s, ctx);
  }

  // Single serialized writer, in grid order.
  std::ostringstream eval, assess;
  CsvWriter ew(eval, eval_csv_header());
  CsvWriter aw(assess, assessment_csv_header(L));
  for (const auto& c : cells) {
    for (const auto& r : c.rows) {
      ew.row({r.method, format_number(r.snr_db), r.damaged, format_number(r.accuracy), opt_number(r.mean_doc_f),
              opt_number(r.detection_tpr), opt_number(r.detection_fpr), format_number(r.seed)});
    }
    const std::string set = damaged_set_name(c.damaged);
    for (const auto& a : c.assessments) {
      std::vector<std::string> f{format_number(c.snr_db), set, format_number(std::uint64_t{a.sample}),
                                 std::string(detector_name(cfg.detector)), format_number(a.threshold)};
      for (double p : a.p_d) f.push_back(format_number(p));
      for (auto fl : a.flags) f.push_back(fl ? "1" : "0");
      f.push_back(a.outcome);
      aw.row(f);
    }
  }
  write_text(out / "eval.csv", eval.str());
  write_text(out / "assessments.csv", assess.str());

  // Accuracy against SNR, averaged over damaged sets; the clean column is not drawn.
  Plot plot{"Accuracy under sensor damage", "SNR (dB)", "accuracy", {}, 720, 440, false};
  if (!cells.empty()) {
    const std::size_t methods = cells[0].rows.size();
    for (std::size_t m = 0; m < methods; ++m) {
      PlotSeries ps{cells[0].rows[m].method, {}, {}, false};
      for (double snr : cfg.snr_grid) {
        double acc = 0.0;
        std::size_t k = 0;
        for (const auto& c : cells)
          if (c.snr_db == snr) acc += c.rows[m].accuracy, ++k;
        ps.x.push_back(snr);
        ps.y.push_back(k ? acc / static_cast<double>(k) : NAN);
      }
      plot.series.push_back(std::move(ps));
    }
  }
  write_svg(out / "accuracy_vs_snr.svg", plot);
}

void cmd_calibrate(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& dataset, const fs::path& out) {
  const ModelBundle bundle = load_checkpoint(checkpoint);
  const Scenario s = load_dataset(dataset);
  require_compatible(bundle, s);
  prepare_output(out, cfg);
  NoGradGuard guard;
  const auto [tree, table] = build_detection(cfg, bundle, s);
  std::ostringstream csv;
  CsvWriter w(csv, calibration_csv_header());
  auto choice = [](const ThresholdChoice& c) {
    return std::vector<std::string>{format_number(c.threshold), format_number(c.j), format_number(c.tpr),
                                    format_number(c.fpr), c.low_confidence ? "1" : "0"};
  };
  for (const auto& e : table.entries) {
    std::vector<std::string> r{format_number(e.snr_db), format_number(e.snr_estimate)};
    for (auto& f : choice(e.clustering)) r.push_back(f);
    for (auto& f : choice(e.tracking)) r.push_back(f);
    w.row(r);
  }
  write_text(out / "calibration.csv", csv.str());
}

void cmd_toyshapes(const RunConfig& cfg, const fs::path& out) {
  prepare_output(out, cfg);
  const auto tasks = default_toy_tasks(cfg.toy.epsilon);
  std::vector<ToyResult> results(tasks.size());
  parallel_for(tasks.size(), [&](std::size_t i) { results[i] = run_toy_task(tasks[i], cfg.toy, cfg.seed); },
               cfg.threads);

  std::ostringstream csv;
  CsvWriter w(csv, toyshapes_csv_header());
  for (const auto& r : results) {
    w.row({r.task.name(), r.task.source.name(), r.task.target.name(), format_number(r.coverage),
           format_number(r.mean_abs_r2), format_number(r.violation), format_number(r.final_loss),
           format_number(cfg.seed)});
    Plot p{r.task.source.name() + " to " + r.task.target.name(), "x", "y", {}, 520, 420, true};
    const auto target = sample_shape(r.task.target, cfg.toy.eval_samples, CounterRng(cfg.seed, "toy/plot").key());
    PlotSeries ts{"target", {}, {}, true}, gs{"generated", {}, {}, true};
    for (std::size_t i = 0; i < target.rows(); ++i) {
      ts.x.push_back(target.at(i, 0));
      ts.y.push_back(target.at(i, 1));
    }
    for (std::size_t i = 0; i < r.generated.rows(); ++i) {
      gs.x.push_back(r.generated.at(i, 0));
      gs.y.push_back(r.generated.at(i, 1));
    }
    p.series.push_back(std::move(ts));
    p.series.push_back(std::move(gs));
    write_svg(out / ("toy_" + r.task.name() + ".svg"), p);
  }
  write_text(out / "toyshapes.csv", csv.str());
}

}  // namespace rfusion
