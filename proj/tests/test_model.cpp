#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "metaadamw/autodiff.hpp"
#include "metaadamw/model.hpp"

using namespace metaadamw;

TEST(Mlp, LayoutFollowsLayerSizes) {
  const auto m = build_mlp({2, 8, 1}, 1);
  const auto& p = m->parameters();
  ASSERT_EQ(p.size(), 4u);
  EXPECT_EQ(p[0].value.shape(), (Shape{2, 8}));
  EXPECT_EQ(p[1].value.shape(), (Shape{8}));
  EXPECT_EQ(p[2].value.shape(), (Shape{8, 1}));
  EXPECT_EQ(p[3].value.shape(), (Shape{1}));
  EXPECT_EQ(m->depth_count(), 2u);
  EXPECT_FALSE(p[0].meta.is_bias);
  EXPECT_TRUE(p[1].meta.is_bias);
  EXPECT_EQ(p[2].meta.depth_index, 1u);
  for (const auto& x : p) EXPECT_EQ(x.meta.layer_type, LayerType::feed_forward);
}

TEST(Mlp, SameSeedSameWeights) {
  const auto a = build_mlp({3, 5, 2}, 9);
  const auto b = build_mlp({3, 5, 2}, 9);
  const auto c = build_mlp({3, 5, 2}, 10);
  for (std::size_t i = 0; i < a->parameters().size(); ++i) {
    EXPECT_EQ(a->parameters()[i].value.to_vector(), b->parameters()[i].value.to_vector());
  }
  EXPECT_NE(a->parameters()[0].value.to_vector(), c->parameters()[0].value.to_vector());
}

TEST(Mlp, ZeroWeightsGiveMeanSquaredTarget) {
  auto m = build_mlp({4, 4}, 2);
  m->parameters()[0].value.assign(std::vector<double>(16, 0.0));
  m->parameters()[1].value.assign(std::vector<double>(4, 0.0));
  Batch b;
  b.inputs = Tensor::zeros({3, 4});
  b.targets = Tensor::matrix(3, 4, {1, 2, 3, 4, 0, 0, -1, 2, 0.5, 0, 0, 1});
  double expected = 0.0;
  for (double y : b.targets.data()) expected += y * y;
  expected /= 12.0;
  EXPECT_NEAR(m->loss(b).item(), expected, 1e-15);
}

TEST(Mlp, RejectsBadSizes) {
  EXPECT_THROW(build_mlp({}, 1), std::invalid_argument);
  EXPECT_THROW(build_mlp({3}, 1), std::invalid_argument);
  EXPECT_THROW(build_mlp({3, 0, 1}, 1), std::invalid_argument);
}

TEST(Loss, RegressionAndCrossEntropyReferenceValues) {
  const Tensor y = Tensor::matrix(2, 1, {0.3, -1.2});
  EXPECT_EQ(mse_loss(y, y).item(), 0.0);
  EXPECT_NEAR(cross_entropy(Tensor::zeros({3, 7}), {0, 3, 6}).item(), std::log(7.0), 1e-15);
  EXPECT_NEAR(cross_entropy(Tensor::matrix(1, 2, {2.0, 0.0}), {0}).item(),
              std::log1p(std::exp(-2.0)), 1e-15);
  EXPECT_NEAR(std::log1p(std::exp(-2.0)), 0.1269, 1e-4);
  EXPECT_THROW(mse_loss(y, Tensor::zeros({1, 2})), ShapeError);
  EXPECT_THROW(cross_entropy(Tensor::zeros({2, 3}), {0}), ShapeError);
  EXPECT_THROW(cross_entropy(Tensor::zeros({1, 3}), {3}), ShapeError);
}

TEST(Transformer, EveryParameterIsTaggedOnce) {
  const auto m = build_tiny_transformer(8, 2, 2, 3, 1);
  std::map<LayerType, int> counts;
  for (const auto& p : m->parameters()) {
    counts[p.meta.layer_type]++;
    EXPECT_LT(p.meta.depth_index, m->depth_count());
  }
  EXPECT_EQ(counts[LayerType::attention], 2 * 4 * 2);
  EXPECT_EQ(counts[LayerType::embedding], 2);
  EXPECT_EQ(counts[LayerType::other], 2);
  EXPECT_EQ(m->depth_count(), 4u);
  for (const auto& p : m->parameters()) {
    if (p.meta.layer_type == LayerType::embedding) EXPECT_EQ(p.meta.depth_index, 0u);
    if (p.meta.name.rfind("layer1.", 0) == 0) EXPECT_EQ(p.meta.depth_index, 2u);
  }
}

TEST(Transformer, RejectsIndivisibleHeads) {
  EXPECT_THROW(build_tiny_transformer(6, 1, 4, 2, 1), std::invalid_argument);
}

Batch token_batch(std::vector<std::size_t> tokens, std::vector<std::size_t> labels, std::size_t rows,
                  std::size_t cols) {
  Batch b;
  b.tokens = std::move(tokens);
  b.labels = std::move(labels);
  b.rows = rows;
  b.cols = cols;
  return b;
}

TEST(Transformer, IdenticalTokensGiveFiniteLoss) {
  const auto m = build_tiny_transformer(8, 2, 2, 5, 3, TransformerMode::language_model);
  const auto b = token_batch(std::vector<std::size_t>(12, 2), std::vector<std::size_t>(12, 2), 2, 6);
  EXPECT_TRUE(std::isfinite(m->loss(b).item()));
}

TEST(Transformer, CausalMaskHidesFutureTokens) {
  const auto m = build_tiny_transformer(8, 2, 2, 7, 4, TransformerMode::language_model);
  std::vector<std::size_t> a{1, 4, 2, 6, 0, 3, 5, 2};
  std::vector<std::size_t> b = a;
  std::swap(b[4], b[7]);
  std::swap(b[5], b[6]);
  const auto la = m->forward(m->values(), token_batch(a, a, 1, 8));
  const auto lb = m->forward(m->values(), token_batch(b, b, 1, 8));
  for (std::size_t i = 0; i < 4 * 7; ++i) EXPECT_EQ(la[i], lb[i]) << i;
  bool differs = false;
  for (std::size_t i = 4 * 7; i < 8 * 7; ++i) differs = differs || la[i] != lb[i];
  EXPECT_TRUE(differs);
}

TEST(Transformer, ForecastShapesAndErrors) {
  const auto m = build_tiny_transformer(8, 1, 2, 3, 5);
  Batch b;
  b.inputs = Tensor::ones({4, 6, 3});
  b.targets = Tensor::zeros({4, 1});
  EXPECT_EQ(m->forward(m->values(), b).shape(), (Shape{4, 1}));
  b.inputs = Tensor::ones({4, 6, 2});
  EXPECT_THROW(m->loss(b), ShapeError);
}

double fd_model_error(const Model& m, const Batch& b) {
  const auto params = m.values();
  const auto analytic = grad(m.loss(b), params);
  double worst = 0.0;
  std::vector<double> all_a, all_n;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor num = finite_difference_gradient(
        [&](const Tensor& x) {
          NoGradGuard ng;
          auto p = params;
          p[i] = x;
          return m.loss_with(p, b).item();
        },
        params[i].detach());
    for (double v : analytic[i].data()) all_a.push_back(v);
    for (double v : num.data()) all_n.push_back(v);
  }
  worst = max_relative_error(Tensor({all_a.size()}, all_a), Tensor({all_n.size()}, all_n));
  return worst;
}

TEST(Transformer, GradientsMatchFiniteDifferences) {
  TransformerConfig cfg;
  cfg.d_model = 4;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.vocab_or_features = 3;
  const auto m = build_tiny_transformer(cfg, 8);
  EXPECT_LE(m->weight_count(), 500u);
  Rng rng(5);
  std::vector<double> x(2 * 5 * 3), y(2);
  for (auto& v : x) v = rng.normal();
  for (auto& v : y) v = rng.normal();
  Batch b;
  b.inputs = Tensor({2, 5, 3}, x);
  b.targets = Tensor({2, 1}, y);
  EXPECT_LT(fd_model_error(*m, b), 1e-6);

  cfg.mode = TransformerMode::language_model;
  cfg.vocab_or_features = 5;
  const auto lm = build_tiny_transformer(cfg, 9);
  EXPECT_LE(lm->weight_count(), 500u);
  EXPECT_LT(fd_model_error(*lm, token_batch({0, 3, 1, 4, 2, 2, 1, 0}, {3, 1, 4, 2, 2, 1, 0, 3}, 2, 4)),
            1e-6);
}

TEST(Model, CloneIsIndependent) {
  auto m = build_mlp({2, 3, 1}, 4);
  auto c = m->clone();
  c->parameters()[0].value.assign(std::vector<double>(6, 0.0));
  EXPECT_NE(m->parameters()[0].value.to_vector(), c->parameters()[0].value.to_vector());
  EXPECT_EQ(m->parameters()[2].value.to_vector(), c->parameters()[2].value.to_vector());
}
