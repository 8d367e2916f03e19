#include <gtest/gtest.h>

#include <cmath>

#include "metaadamw/autodiff.hpp"
#include "metaadamw/features.hpp"
#include "metaadamw/optimizer.hpp"

using namespace metaadamw;

namespace {

struct Rig {
  std::unique_ptr<Model> model = build_mlp({3, 4, 2}, 11);
  std::vector<ParamGroup> groups = build_groups(*model, GroupingStrategy::fine_grained);
  AdamState state = AdamState::zeros_like(*model);
  std::vector<Tensor> grads;

  Rig() {
    Rng rng(4);
    for (const auto& p : model->parameters()) {
      std::vector<double> g(p.value.size());
      for (auto& x : g) x = rng.normal();
      grads.push_back(Tensor(p.value.shape(), g));
    }
  }

  std::size_t column(const FeatureMatrix& f, const std::string& name) const {
    for (std::size_t j = 0; j < f.columns.size(); ++j) {
      if (f.columns[j] == name) return j;
    }
    ADD_FAILURE() << "no column " << name;
    return 0;
  }
};

double at(const FeatureMatrix& f, std::size_t r, std::size_t c) { return f.values[r * f.values.dim(1) + c]; }

}  // namespace

TEST(Features, DimensionsPerVersion) {
  FeatureOptions o;
  EXPECT_EQ(feature_dim(o), 6u);
  o.version = FeatureVersion::basic_plus;
  EXPECT_EQ(feature_dim(o), 11u);
  o.version = FeatureVersion::enhanced;
  EXPECT_EQ(feature_dim(o), 15u);
  o.version = FeatureVersion::basic;
  o.use_v_norms = false;
  o.include_time = false;
  EXPECT_EQ(feature_dim(o), 4u);

  Rig s;
  for (auto v : {FeatureVersion::basic, FeatureVersion::basic_plus}) {
    FeatureOptions opt;
    opt.version = v;
    const auto f = extract_features(*s.model, s.groups, s.grads, s.state, 3, opt);
    EXPECT_EQ(f.values.shape(), (Shape{s.groups.size(), feature_dim(opt)}));
    EXPECT_EQ(f.columns.size(), feature_dim(opt));
  }
}

TEST(Features, FreshStateHasZeroMomentumAndCosine) {
  Rig s;
  const auto f = extract_features(*s.model, s.groups, s.grads, s.state, 0, {});
  for (std::size_t g = 0; g < s.groups.size(); ++g) {
    EXPECT_EQ(at(f, g, s.column(f, "momentum_norm")), 0.0);
    EXPECT_EQ(at(f, g, s.column(f, "grad_momentum_cos")), 0.0);
    EXPECT_EQ(at(f, g, s.column(f, "time")), 0.0);
    EXPECT_GT(at(f, g, s.column(f, "grad_norm")), 0.0);
  }
}

TEST(Features, SingleMemberGroupsHaveZeroSpread) {
  Rig s;
  FeatureOptions o;
  o.version = FeatureVersion::basic_plus;
  const auto f = extract_features(*s.model, s.groups, s.grads, s.state, 5, o);
  for (std::size_t g = 0; g < s.groups.size(); ++g) {
    ASSERT_EQ(s.groups[g].members.size(), 1u);
    for (std::size_t j = 5; j < 10; ++j) EXPECT_EQ(at(f, g, j), 0.0) << f.columns[j];
  }
}

TEST(Features, ParallelMomentumGivesUnitCosine) {
  Rig s;
  for (std::size_t i = 0; i < s.grads.size(); ++i) s.state.m[i] = s.grads[i] * 0.5;
  const auto f = extract_features(*s.model, s.groups, s.grads, s.state, 1, {});
  for (std::size_t g = 0; g < s.groups.size(); ++g) {
    EXPECT_NEAR(at(f, g, s.column(f, "grad_momentum_cos")), 1.0, 1e-15);
  }
}

TEST(Features, PureFunctionOfInputs) {
  Rig s;
  FeatureOptions o;
  o.version = FeatureVersion::enhanced;
  const Tensor emb = Tensor::ones({s.groups.size(), 4});
  const auto a = extract_features(*s.model, s.groups, s.grads, s.state, 7, o, emb);
  const auto b = extract_features(*s.model, s.groups, s.grads, s.state, 7, o, emb);
  EXPECT_EQ(a.values.to_vector(), b.values.to_vector());
  EXPECT_EQ(a.values.dim(1), 15u);
  for (std::size_t g = 0; g < s.groups.size(); ++g) {
    EXPECT_EQ(at(a, g, s.column(a, "bias_ratio")), s.groups[g].key.is_bias ? 1.0 : 0.0);
    EXPECT_GE(at(a, g, s.column(a, "grad_sparsity")), 0.0);
    EXPECT_EQ(at(a, g, s.column(a, "momentum_sparsity")), 1.0);
  }
  EXPECT_THROW(extract_features(*s.model, s.groups, s.grads, s.state, 7, o), ShapeError);
}

TEST(Features, StatisticsAreNonNegativeExceptCosine) {
  Rig s;
  s.state.m = s.grads;
  for (auto& x : s.state.m) x = x * -1.0;
  FeatureOptions o;
  o.version = FeatureVersion::basic_plus;
  const auto f = extract_features(*s.model, s.groups, s.grads, s.state, 10, o);
  for (std::size_t g = 0; g < s.groups.size(); ++g) {
    for (std::size_t j = 0; j < f.columns.size(); ++j) {
      if (f.columns[j] == "grad_momentum_cos_mean") {
        EXPECT_NEAR(at(f, g, j), -1.0, 1e-15);
      } else {
        EXPECT_GE(at(f, g, j), 0.0);
      }
    }
  }
}

TEST(Features, TimeFeatureIsLogCompressedAndCapped) {
  EXPECT_EQ(time_feature(0), 0.0);
  EXPECT_NEAR(time_feature(1000000), 1.0, 1e-15);
  EXPECT_EQ(time_feature(50000000), 1.0);
  EXPECT_NEAR(time_feature(999), std::log(1000.0) / std::log(1000001.0), 1e-15);
  EXPECT_THROW(time_feature(-1), std::invalid_argument);
}

TEST(Features, RejectsBadInputs) {
  Rig s;
  EXPECT_THROW(extract_features(*s.model, s.groups, s.grads, s.state, -1, {}), std::invalid_argument);
  AdamState empty;
  EXPECT_THROW(extract_features(*s.model, s.groups, s.grads, empty, 0, {}), std::invalid_argument);
}

FeatureMatrix matrix_of(std::size_t rows, std::size_t cols, std::vector<double> v, std::size_t stats) {
  FeatureMatrix f;
  f.values = Tensor({rows, cols}, std::move(v));
  f.statistical_columns = stats;
  for (std::size_t j = 0; j < cols; ++j) f.columns.push_back("c" + std::to_string(j));
  return f;
}

TEST(Normalize, StandardizesStatisticalColumnsOnly) {
  const auto f = normalize_features(matrix_of(3, 3, {1, 5, 0.1, 2, 5, 0.1, 3, 5, 0.1}, 2));
  const double z = std::sqrt(1.5);
  EXPECT_NEAR(f.values[0], -z, 1e-7);
  EXPECT_NEAR(f.values[3], 0.0, 1e-15);
  EXPECT_NEAR(f.values[6], z, 1e-7);
  EXPECT_NEAR(z, 1.2247, 1e-4);
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_EQ(f.values[r * 3 + 1], 0.0);
    EXPECT_EQ(f.values[r * 3 + 2], 0.1);
  }
}

TEST(Normalize, SingleGroupBecomesZero) {
  const auto f = normalize_features(matrix_of(1, 3, {4, -2, 0.7}, 2));
  EXPECT_EQ(f.values.to_vector(), (std::vector<double>{0, 0, 0.7}));
}

TEST(Normalize, ColumnsHaveZeroMeanUnitStd) {
  Rng rng(8);
  std::vector<double> v(6 * 4);
  for (auto& x : v) x = rng.uniform(0, 10);
  const auto f = normalize_features(matrix_of(6, 4, v, 4));
  const Tensor mu = mean(f.values, 0, false);
  const Tensor var = variance(f.values, 0, false);
  for (std::size_t j = 0; j < 4; ++j) {
    EXPECT_NEAR(mu[j], 0.0, 1e-12);
    EXPECT_NEAR(std::sqrt(var[j]), 1.0, 1e-7);
  }
}

TEST(Gate, ClosedAndOpenLimits) {
  const auto f = matrix_of(2, 3, {1, 2, 3, 4, 5, 6}, 3);
  const auto [half, p0] = apply_gate(f, Tensor::zeros({3}), 0.1);
  EXPECT_EQ(half.values.to_vector(), (std::vector<double>{0.5, 1, 1.5, 2, 2.5, 3}));
  EXPECT_NEAR(p0.item(), 0.15, 1e-15);
  const auto [same, p1] = apply_gate(f, Tensor::full({3}, 1e3), 0.1);
  EXPECT_EQ(same.values.to_vector(), f.values.to_vector());
  EXPECT_NEAR(p1.item(), 0.3, 1e-15);
  EXPECT_THROW(apply_gate(f, Tensor::zeros({4}), 0.1), ShapeError);
}

TEST(Gate, PenaltyReferenceValue) {
  const auto f = matrix_of(1, 6, {1, 1, 1, 1, 1, 1}, 6);
  const auto [gated, penalty] = apply_gate(f, Tensor::full({6}, 2.0), 1e-3);
  EXPECT_NEAR(penalty.item(), 6 * 1e-3 / (1 + std::exp(-2.0)), 1e-15);
  EXPECT_NEAR(penalty.item(), 0.005285, 1e-6);
}

TEST(Gate, GradientReachesLogits) {
  const auto f = matrix_of(2, 2, {1, 2, 3, 4}, 2);
  Tensor logits = Tensor::vector({0.3, -0.4}, true);
  const auto [gated, penalty] = apply_gate(f, logits, 0.5);
  const Tensor g = grad(sum(gated.values) + penalty, {logits})[0];
  for (std::size_t j = 0; j < 2; ++j) {
    const double s = 1.0 / (1.0 + std::exp(-logits[j]));
    const double col = j == 0 ? 4.0 : 6.0;
    EXPECT_NEAR(g[j], (col + 0.5) * s * (1 - s), 1e-14);
  }
}
