#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "metaadamw/grouping.hpp"
#include "metaadamw/model.hpp"

namespace metaadamw {

struct AdamState;

enum class FeatureVersion { basic, basic_plus, enhanced };

std::string_view to_string(FeatureVersion version);
FeatureVersion parse_feature_version(std::string_view text);

struct FeatureOptions {
  FeatureVersion version = FeatureVersion::basic;
  bool use_v_norms = true;
  bool include_time = true;
  /// Standardize the statistical columns across groups.
  bool normalized = false;
  /// Learnable per-group embedding appended by the enhanced version.
  std::size_t embedding_width = 4;
};

/// Column count produced by extract_features for these options.
std::size_t feature_dim(const FeatureOptions& options);

struct FeatureMatrix {
  /// (G, D).
  Tensor values;
  FeatureVersion version = FeatureVersion::basic;
  std::vector<std::string> columns;
  /// Leading columns holding group statistics; the time and embedding
  /// columns follow.
  std::size_t statistical_columns = 0;
  std::int64_t time_step = 0;
};

constexpr double kSparsityThreshold = 1e-8;

/// min(1, log(1 + t) / log(1 + 1e6)).
double time_feature(std::int64_t t);

/// Per-group statistics of gradients, optimizer moments and weights. For
/// the enhanced version `embedding` must be a (G, embedding_width) table;
/// its rows are appended without detaching, so gradients reach it.
FeatureMatrix extract_features(const Model& model, const std::vector<ParamGroup>& groups,
                               std::span<const Tensor> grads, const AdamState& state,
                               std::int64_t t, const FeatureOptions& options,
                               const Tensor& embedding = {});

/// (x - mean) / (std + 1e-8) per statistical column, population std across
/// groups. Remaining columns pass through.
FeatureMatrix normalize_features(const FeatureMatrix& f);

/// Scales column j by sigmoid(logits_j). Returns the gated matrix and the
/// penalty l1_weight * sum_j sigmoid(logits_j).
std::pair<FeatureMatrix, Tensor> apply_gate(const FeatureMatrix& f, const Tensor& logits,
                                            double l1_weight);

}  // namespace metaadamw
