#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ssac/checkpoint.hpp"
#include "ssac/dataset.hpp"
#include "ssac/kvconfig.hpp"
#include "ssac/metrics.hpp"
#include "ssac/trainer.hpp"

namespace ssac {
inline namespace SSAC_ABI {

// Workbench commands behind the `ssac` executable. Each writes its artifacts
// under an output directory and a short summary to `log`.

/// Train config from an optional file, then `overrides` on top. An empty
/// path means defaults.
TrainConfig resolve_train_config(const std::string& config_path, const std::vector<KeyValueEntry>& overrides);

std::string cmd_gen(const std::string& config_path, const std::string& out_dir, std::uint64_t seed, int threads,
                    std::ostream& log);

struct TrainOutputs {
  std::string best_checkpoint;   // out_dir/best.ckpt
  std::string final_checkpoint;  // out_dir/final.ckpt
  std::string log_path;          // out_dir/train.log
  TrainResult result;
};

/// Trains on the manifest's train split, selects on val. The baseline head
/// is chosen with `head = linear` in the config.
TrainOutputs cmd_train(const std::string& manifest_path, const TrainConfig& cfg, const std::string& out_dir,
                       std::ostream& log);

/// Writes out_dir/report_<split>.json and out_dir/predictions_<split>.csv.
MetricsReport cmd_eval(const std::string& checkpoint_path, const std::string& manifest_path, const std::string& split,
                       const std::string& out_dir, std::ostream& log);

struct DetectionReport {
  double auroc = 0;
  double threshold = 0;
  double quantile = 0.99;
  std::size_t known = 0;
  std::size_t fresh = 0;
  /// Fraction of new-type samples above the threshold.
  double detection_rate = 0;
  /// Fraction of known test samples above the threshold.
  double false_alarm_rate = 0;
};

/// Known-class test scores against the new-type pool. The threshold is the
/// q-quantile of validation scores. Writes out_dir/detect.json and
/// out_dir/scores.csv.
DetectionReport cmd_detect(const std::string& checkpoint_path, const std::string& manifest_path,
                           const std::string& out_dir, double q, std::ostream& log);

struct RunRecord {
  int replication = 0;
  std::uint64_t master_seed = 0;
  std::uint64_t split_seed = 0;
  std::uint64_t train_seed = 0;
  std::vector<std::pair<std::string, std::string>> config;
  MetricsReport subspace;  // test split, includes auroc
  MetricsReport baseline;
  std::string subspace_report;
  std::string baseline_report;
  std::string subspace_checkpoint;
  std::string baseline_checkpoint;
};

struct MetricSummary {
  std::string metric;
  MeanStd subspace;
  MeanStd baseline;
  SignTestResult sign;  // subspace superior to baseline
};

struct ReplicationReport {
  std::vector<RunRecord> runs;
  std::vector<MetricSummary> summary;  // acc, ba, precision, recall, f1, auroc
};

/// Per-metric mean, sample std and the one-sided sign test over runs.
std::vector<MetricSummary> aggregate_runs(const std::vector<RunRecord>& runs);

/// For r in [0, R): re-split the manifest's pool with seed
/// derive_seed(base_seed, r), train the subspace model and the linear
/// baseline, evaluate both on the test split. Writes out_dir/rep_<r>/ and
/// out_dir/aggregate.json. Replications run on up to `threads` workers.
ReplicationReport cmd_replicate(const std::string& manifest_path, int replications, std::uint64_t base_seed,
                                const TrainConfig& cfg, const std::string& out_dir, int threads, std::ostream& log);

struct SweepRow {
  std::size_t k = 0;
  MetricsReport test;
  bool best = false;
};

/// One training run per k (same split and seed). Writes out_dir/sweep_k.csv
/// with columns k,acc,ba,precision,recall,f1,auroc,best.
std::vector<SweepRow> cmd_sweep_k(const std::string& manifest_path, const std::vector<std::size_t>& values,
                                  const TrainConfig& cfg, const std::string& out_dir, int threads, std::ostream& log);

/// CSV: id,label,f_0..f_{p-1},d_0..d_{C-1},d_own,d_nearest. For new-type
/// rows d_own is nan and d_nearest is the minimum over all classes.
std::string cmd_export_repr(const std::string& checkpoint_path, const std::string& manifest_path,
                            const std::string& split, const std::string& out_path, std::ostream& log);

/// Report JSON as written by cmd_eval.
std::string report_json(const MetricsReport& r, const std::vector<std::string>& class_names, const std::string& split);

}  // namespace SSAC_ABI
}  // namespace ssac
