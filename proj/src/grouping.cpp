#include "metaadamw/grouping.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace metaadamw {

std::string_view to_string(DepthBucket bucket) {
  switch (bucket) {
    case DepthBucket::shallow: return "shallow";
    case DepthBucket::middle: return "middle";
    case DepthBucket::deep: return "deep";
  }
  return "shallow";
}

DepthBucket depth_bucket(std::size_t depth_index, std::size_t depth_count) {
  // d = index / span compared with 1/3 and 2/3 in integers.
  const std::size_t span = std::max<std::size_t>(1, depth_count > 0 ? depth_count - 1 : 0);
  if (3 * depth_index < span) return DepthBucket::shallow;
  if (3 * depth_index < 2 * span) return DepthBucket::middle;
  return DepthBucket::deep;
}

std::vector<ParamGroup> build_groups(const Model& model, GroupingStrategy strategy,
                                     const std::vector<std::vector<std::size_t>>& partition) {
  const auto& params = model.parameters();
  if (params.empty()) throw std::invalid_argument("build_groups: model has no parameters");

  std::vector<ParamGroup> groups;
  if (strategy == GroupingStrategy::fine_grained) {
    std::map<GroupKey, std::vector<std::size_t>> by_key;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& m = params[i].meta;
      by_key[{m.layer_type, depth_bucket(m.depth_index, model.depth_count()), m.is_bias}].push_back(i);
    }
    for (auto& [key, members] : by_key) {
      std::string label = std::string(to_string(key.layer_type)) + "/" +
                          std::string(to_string(key.bucket)) + (key.is_bias ? "/bias" : "/weight");
      groups.push_back({groups.size(), key, std::move(members), std::move(label)});
    }
    return groups;
  }

  if (partition.empty()) {
    std::vector<std::size_t> all(params.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    groups.push_back({0, {}, std::move(all), "native0"});
    return groups;
  }
  std::vector<int> seen(params.size(), 0);
  for (const auto& part : partition) {
    if (part.empty()) throw std::invalid_argument("build_groups: empty partition cell");
    std::vector<std::size_t> members = part;
    std::sort(members.begin(), members.end());
    for (auto i : members) {
      if (i >= params.size()) throw std::invalid_argument("build_groups: partition index out of range");
      if (seen[i]++) throw std::invalid_argument("build_groups: parameter listed twice in partition");
    }
    groups.push_back({groups.size(), {}, std::move(members), "native" + std::to_string(groups.size())});
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
    throw std::invalid_argument("build_groups: partition does not cover every parameter");
  }
  return groups;
}

Tensor group_gradient(const ParamGroup& group, std::span<const Tensor> grads) {
  std::vector<Tensor> parts;
  parts.reserve(group.members.size());
  for (auto i : group.members) {
    if (i >= grads.size() || !grads[i].defined()) {
      throw std::invalid_argument("group_gradient: missing gradient for member " + std::to_string(i));
    }
    parts.push_back(flatten(grads[i]));
  }
  if (parts.size() == 1) return parts.front();
  return concat(parts, 0);
}

std::size_t group_weight_count(const ParamGroup& group, const Model& model) {
  std::size_t n = 0;
  for (auto i : group.members) n += model.parameters()[i].value.size();
  return n;
}

}  // namespace metaadamw
