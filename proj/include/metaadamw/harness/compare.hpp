#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "metaadamw/harness/config.hpp"
#include "metaadamw/harness/tasks.hpp"

namespace metaadamw::harness {

/// Relative change of `candidate` over `baseline` in percent, signed so that
/// positive means the candidate is better: (b - c) / b for losses and
/// perplexity, (c - b) / b for accuracy.
double improvement_percent(double baseline, double candidate, bool higher_is_better);

/// (candidate - baseline) / baseline in percent; negative means faster.
double overhead_percent(double baseline_seconds, double candidate_seconds);

double median(std::vector<double> values);

struct ComparisonRow {
  std::uint64_t seed = 0;
  double adamw_metric = 0.0;
  double meta_metric = 0.0;
  double adamw_seconds = 0.0;
  double meta_seconds = 0.0;
  double improvement = 0.0;
  double overhead = 0.0;
  /// Empty on success.
  std::string error;
};

struct ComparisonSummary {
  std::string task;
  MetricKind metric = MetricKind::mse;
  std::vector<ComparisonRow> rows;
  double median_adamw = 0.0;
  double median_meta = 0.0;
  double median_adamw_seconds = 0.0;
  double median_meta_seconds = 0.0;
  /// Between the medians.
  double improvement = 0.0;
  double overhead = 0.0;
};

/// AdamW and MetaAdamW on the same base configuration, one pair per seed.
/// Runs that throw are recorded in their row and left out of the medians.
/// Each run's artifacts go under `out_dir` when it is set.
ComparisonSummary run_comparison(const RunConfig& base, const std::vector<std::uint64_t>& seeds,
                                 const std::filesystem::path& out_dir = {});

std::string comparison_csv(const ComparisonSummary& summary);

/// Grid file: `grid.<key> = v1 | v2 | ...` lines name the axes, `seeds = a,b`
/// the seeds, and every other line is a config key for the baseline.
struct GridSpec {
  RunConfig base;
  std::vector<std::uint64_t> seeds{0};
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;
};

/// Keys allowed as ablation axes.
const std::vector<std::string>& ablation_axes();

GridSpec parse_grid(std::string_view text);

struct AblationRow {
  std::size_t cell = 0;
  std::vector<std::string> values;
  std::uint64_t seed = 0;
  double metric = 0.0;
  double baseline_metric = 0.0;
  double delta_percent = 0.0;
  std::size_t epochs = 0;
  double seconds = 0.0;
  std::string error;
};

struct AblationResult {
  std::vector<std::string> axis_names;
  MetricKind metric = MetricKind::mse;
  std::vector<AblationRow> rows;
};

/// Every cell of the Cartesian product for every seed, each against the
/// baseline configuration run with the same seed.
AblationResult run_ablation(const GridSpec& grid, const std::filesystem::path& out_dir = {});

std::string ablation_csv(const AblationResult& result);

std::vector<std::uint64_t> parse_seed_list(std::string_view text);

}  // namespace metaadamw::harness
