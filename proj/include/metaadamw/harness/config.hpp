#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "metaadamw/features.hpp"
#include "metaadamw/grouping.hpp"
#include "metaadamw/meta_update.hpp"
#include "metaadamw/modulation.hpp"
#include "metaadamw/optimizer.hpp"

namespace metaadamw::harness {

enum class OptimizerKind { adamw, meta_adamw };

std::string_view to_string(OptimizerKind kind);

/// `off` writes zeros in every timing column so repeated runs produce
/// byte-identical files.
enum class Clock { wall, off };

struct RunConfig {
  std::string task = "sine";
  std::string preset;
  OptimizerKind optimizer = OptimizerKind::meta_adamw;
  OptConfig opt;
  MetaConfig meta;
  /// When false the network never learns and MetaAdamW stays at its initial
  /// (identity) modulation.
  bool meta_updates = true;
  GroupingStrategy grouping = GroupingStrategy::fine_grained;
  FeatureOptions features;
  /// Encoder size, ranges and gating. feature_dim, groups and
  /// embedding_width are filled in from the task at run time.
  ModulationConfig modulation;
  std::array<double, 3> priorities{1.0, 1.0, 1.0};
  /// Expected feature width; 0 skips the check.
  std::size_t feature_dim = 0;
  std::uint64_t seed = 0;
  std::size_t max_epochs = 30;
  std::size_t patience = 2;
  std::size_t batch_size = 32;
  std::size_t meta_batch_size = 32;
  std::size_t val_batch_size = 64;
  Clock clock = Clock::wall;

  void validate() const;
};

/// Every accepted key, in the order to_text writes them.
const std::vector<std::string>& config_keys();

/// Throws std::invalid_argument for unknown keys and malformed values.
void set_key(RunConfig& cfg, std::string_view key, std::string_view value);

/// Flat `key = value` lines; `#` starts a comment. A `preset` line is applied
/// before any other key regardless of where it appears.
RunConfig parse_config(std::string_view text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path);

/// Canonical form: every key, one per line. parse_config(to_text(c)) == c.
std::string to_text(const RunConfig& cfg);

bool operator==(const RunConfig& a, const RunConfig& b);

const std::vector<std::string>& preset_names();
/// Per-task settings from the published tuning table, bound to a desk-scale
/// task: etth1 -> sine, wikitext2 and multi30k -> charlm, cifar10 and
/// imdb -> spirals.
void apply_preset(RunConfig& cfg, std::string_view name);

/// Task id or preset name -> base configuration.
RunConfig config_for(std::string_view task_or_preset);

/// Shortest round-trip decimal form; "nan", "inf", "-inf" for the rest.
std::string format_double(double x);
double parse_double(std::string_view text);

}  // namespace metaadamw::harness
