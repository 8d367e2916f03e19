#pragma once

#include <compare>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "metaadamw/model.hpp"

namespace metaadamw {

enum class DepthBucket { shallow, middle, deep };

std::string_view to_string(DepthBucket bucket);

/// Bucket of depth_index / max(1, depth_count - 1): below 1/3 is shallow,
/// below 2/3 middle, the rest deep.
DepthBucket depth_bucket(std::size_t depth_index, std::size_t depth_count);

struct GroupKey {
  LayerType layer_type = LayerType::other;
  DepthBucket bucket = DepthBucket::shallow;
  bool is_bias = false;

  auto operator<=>(const GroupKey&) const = default;
};

struct ParamGroup {
  std::size_t index = 0;
  GroupKey key;
  /// Indices into Model::parameters(), ascending.
  std::vector<std::size_t> members;
  /// Short label such as "attention/deep/weight" or "native0".
  std::string label;
};

enum class GroupingStrategy { fine_grained, native };

/// Groups are ordered by key and never empty. With `native`, each entry of
/// `partition` (lists of parameter indices) becomes one group; an empty
/// partition means a single group holding everything.
std::vector<ParamGroup> build_groups(const Model& model, GroupingStrategy strategy,
                                     const std::vector<std::vector<std::size_t>>& partition = {});

/// Member gradients flattened and concatenated in member order. Stays
/// differentiable when the gradients are.
Tensor group_gradient(const ParamGroup& group, std::span<const Tensor> grads);

std::size_t group_weight_count(const ParamGroup& group, const Model& model);

}  // namespace metaadamw
