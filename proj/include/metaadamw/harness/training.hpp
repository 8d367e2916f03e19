#pragma once

#include <cstddef>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "metaadamw/harness/config.hpp"
#include "metaadamw/harness/tasks.hpp"
#include "metaadamw/meta_update.hpp"

namespace metaadamw::harness {

/// Stops once the monitored value has failed to strictly improve for
/// `patience` consecutive epochs.
class EarlyStopping {
 public:
  EarlyStopping(std::size_t patience, bool higher_is_better);

  /// Records one epoch; true means stop now.
  bool update(double value);
  std::size_t best_epoch() const { return best_epoch_; }
  double best() const { return best_; }
  std::size_t epochs() const { return epochs_; }

 private:
  std::size_t patience_;
  bool higher_;
  double best_;
  std::size_t best_epoch_ = 0;
  std::size_t epochs_ = 0;
  std::size_t stale_ = 0;
};

/// One epoch of one split. Timing columns are per-epoch seconds and are only
/// filled on the train row.
struct EpochRecord {
  std::size_t epoch = 0;
  Split split = Split::train;
  double loss = 0.0;
  double metric = 0.0;
  double cum_seconds = 0.0;
  double t_base = 0.0;
  double t_feat = 0.0;
  double t_attn = 0.0;
  double t_meta = 0.0;
  /// Measured wall time of all training steps this epoch (not written).
  double step_seconds = 0.0;
};

struct TrainingResult {
  RunConfig config;
  std::vector<std::string> group_labels;
  std::vector<EpochRecord> epochs;
  std::vector<MetaRecord> meta;
  std::size_t steps = 0;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double best_metric = std::numeric_limits<double>::quiet_NaN();
  double best_loss = std::numeric_limits<double>::quiet_NaN();
  double total_seconds = 0.0;
  double total_t_meta = 0.0;
  std::size_t meta_skipped = 0;
  bool aborted = false;
  std::string diagnostic;
  std::vector<std::string> warnings;
};

struct RunOptions {
  /// Artifacts are written here when set; nothing touches disk otherwise.
  std::filesystem::path out_dir;
  bool write_checkpoints = true;
};

/// The training loop. Per step: gradient, then adamw_step or
/// meta_adamw_step; meta_update every k_meta steps once warmup is over.
/// Per epoch: validation and early stopping.
TrainingResult run_training(const RunConfig& cfg, const RunOptions& options = {});

std::string metrics_csv(const TrainingResult& result);
std::string meta_trace_csv(const TrainingResult& result);
std::string manifest_json(const TrainingResult& result);

/// $METAADAMW_OUT or "runs".
std::filesystem::path output_root();

}  // namespace metaadamw::harness
