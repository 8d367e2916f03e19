#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "metaadamw/grouping.hpp"

using namespace metaadamw;

namespace {

bool has_key(const std::vector<ParamGroup>& groups, GroupKey key) {
  return std::any_of(groups.begin(), groups.end(), [&](const ParamGroup& g) { return g.key == key; });
}

void expect_partition(const std::vector<ParamGroup>& groups, const Model& m) {
  std::set<std::size_t> seen;
  std::size_t total = 0;
  for (const auto& g : groups) {
    EXPECT_FALSE(g.members.empty());
    for (auto i : g.members) EXPECT_TRUE(seen.insert(i).second) << "parameter " << i << " twice";
    total += g.members.size();
  }
  EXPECT_EQ(total, m.parameters().size());
}

}  // namespace

TEST(DepthBucket, ThirdsOfNormalizedDepth) {
  EXPECT_EQ(depth_bucket(0, 4), DepthBucket::shallow);
  EXPECT_EQ(depth_bucket(1, 4), DepthBucket::middle);  // exactly 1/3
  EXPECT_EQ(depth_bucket(2, 4), DepthBucket::deep);    // exactly 2/3
  EXPECT_EQ(depth_bucket(3, 4), DepthBucket::deep);
  EXPECT_EQ(depth_bucket(0, 1), DepthBucket::shallow);
  EXPECT_EQ(depth_bucket(2, 7), DepthBucket::middle);
}

TEST(Grouping, TransformerKeys) {
  const auto m = build_tiny_transformer(8, 2, 2, 3, 1);
  const auto groups = build_groups(*m, GroupingStrategy::fine_grained);
  EXPECT_TRUE(has_key(groups, {LayerType::embedding, DepthBucket::shallow, false}));
  EXPECT_TRUE(has_key(groups, {LayerType::attention, DepthBucket::deep, false}));
  expect_partition(groups, *m);
  for (std::size_t i = 0; i < groups.size(); ++i) {
    EXPECT_EQ(groups[i].index, i);
    if (i > 0) EXPECT_LT(groups[i - 1].key, groups[i].key);
  }
}

TEST(Grouping, SingleLayerMlpIsAllShallow) {
  const auto m = build_mlp({3, 2}, 1);
  const auto groups = build_groups(*m, GroupingStrategy::fine_grained);
  ASSERT_EQ(groups.size(), 2u);
  for (const auto& g : groups) EXPECT_EQ(g.key.bucket, DepthBucket::shallow);
}

TEST(Grouping, ThreeLayerMlpHasSixGroups) {
  const auto m = build_mlp({2, 8, 8, 1}, 1);
  const auto groups = build_groups(*m, GroupingStrategy::fine_grained);
  EXPECT_EQ(groups.size(), 6u);
  expect_partition(groups, *m);
}

TEST(Grouping, NativeDefaultIsOneGroup) {
  const auto m = build_tiny_transformer(8, 1, 2, 3, 1);
  const auto groups = build_groups(*m, GroupingStrategy::native);
  ASSERT_EQ(groups.size(), 1u);
  EXPECT_EQ(groups[0].members.size(), m->parameters().size());
}

TEST(Grouping, NativePartitionIsValidated) {
  const auto m = build_mlp({2, 3, 1}, 1);
  const auto groups = build_groups(*m, GroupingStrategy::native, {{0, 1}, {3, 2}});
  ASSERT_EQ(groups.size(), 2u);
  EXPECT_EQ(groups[1].members, (std::vector<std::size_t>{2, 3}));
  EXPECT_THROW(build_groups(*m, GroupingStrategy::native, {{0, 1}, {1, 2, 3}}), std::invalid_argument);
  EXPECT_THROW(build_groups(*m, GroupingStrategy::native, {{0, 1}, {2}}), std::invalid_argument);
  EXPECT_THROW(build_groups(*m, GroupingStrategy::native, {{0, 1, 2, 9}}), std::invalid_argument);
}

TEST(Grouping, StableAcrossBuilds) {
  const auto a = build_groups(*build_tiny_transformer(8, 2, 2, 3, 5), GroupingStrategy::fine_grained);
  const auto b = build_groups(*build_tiny_transformer(8, 2, 2, 3, 5), GroupingStrategy::fine_grained);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].key, b[i].key);
    EXPECT_EQ(a[i].members, b[i].members);
  }
}

TEST(GroupGradient, ConcatenatesMembers) {
  ParamGroup g{0, {}, {0, 1}, "x"};
  const std::vector<Tensor> grads{Tensor::vector({1, 2}), Tensor::vector({3})};
  EXPECT_EQ(group_gradient(g, grads).to_vector(), (std::vector<double>{1, 2, 3}));
  const std::vector<Tensor> zeros{Tensor::zeros({2, 2}), Tensor::zeros({3})};
  const Tensor z = group_gradient(g, zeros);
  EXPECT_EQ(z.size(), 7u);
  for (double v : z.data()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(group_gradient(g, std::vector<Tensor>{Tensor::vector({1})}), std::invalid_argument);
}

TEST(GroupGradient, SquaredNormIsSumOfMemberSquaredNorms) {
  Rng rng(3);
  std::vector<Tensor> grads;
  for (std::size_t n : {4u, 1u, 6u}) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    grads.push_back(Tensor::vector(v));
  }
  ParamGroup g{0, {}, {0, 1, 2}, "x"};
  const Tensor flat = group_gradient(g, grads);
  double members = 0.0;
  for (const auto& t : grads) members += sum(square(t)).item();
  EXPECT_NEAR(sum(square(flat)).item(), members, 1e-12);
}

namespace {

class EmptyModel final : public Model {
 public:
  EmptyModel() : Model(1, LossKind::mse) {}
  Tensor forward(std::span<const Tensor>, const Batch& b) const override { return b.inputs; }

 protected:
  std::unique_ptr<Model> copy() const override { return std::make_unique<EmptyModel>(*this); }
};

}  // namespace

TEST(Grouping, RejectsParameterlessModel) {
  EmptyModel m;
  EXPECT_THROW(build_groups(m, GroupingStrategy::fine_grained), std::invalid_argument);
  EXPECT_THROW(build_groups(m, GroupingStrategy::native), std::invalid_argument);
}
