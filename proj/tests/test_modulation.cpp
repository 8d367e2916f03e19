#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "metaadamw/checkpoint.hpp"
#include "metaadamw/modulation.hpp"

using namespace metaadamw;

namespace {

Tensor random_features(Rng& rng, std::size_t g, std::size_t d, double scale = 1.0) {
  std::vector<double> v(g * d);
  for (auto& x : v) x = scale * rng.normal();
  return Tensor({g, d}, std::move(v));
}

}  // namespace

TEST(Modulation, ZeroHeadIsIdentity) {
  ModulationNetwork net({}, 1);
  Rng rng(2);
  const auto f = net.modulate(random_features(rng, 5, 6, 3.0));
  for (std::size_t g = 0; g < 5; ++g) {
    EXPECT_EQ(f.alpha[g], 1.0);
    EXPECT_EQ(f.beta[g], 1.0);
    EXPECT_EQ(f.lambda1[g], 0.5);
    EXPECT_EQ(f.lambda2[g], 0.5);
  }
}

TEST(Modulation, InvertedSquashing) {
  ModulationNetwork net({}, 1);
  auto& bias = net.weights()[net.weights().size() - 1].value;
  bias.assign(std::vector<double>{std::log(3.0), 0.0, 0.0, 0.0});
  Rng rng(2);
  const auto f = net.modulate(random_features(rng, 3, 6));
  for (std::size_t g = 0; g < 3; ++g) EXPECT_NEAR(f.alpha[g], 1.25, 1e-15);
}

TEST(Modulation, SaturatedRawStaysInsideOpenInterval) {
  ModulationNetwork net({}, 1);
  auto& bias = net.weights().back().value;
  Rng rng(3);
  bias.assign(std::vector<double>{1e4, -1e4, 1e4, -1e4});
  auto f = net.modulate(random_features(rng, 2, 6));
  EXPECT_LT(f.alpha[0], 1.5);
  EXPECT_GT(f.alpha[0], 1.5 - 1e-12);
  EXPECT_GT(f.beta[0], 0.5);
  EXPECT_LT(f.lambda1[0], 1.0);
  EXPECT_GT(f.lambda2[0], 0.0);
}

TEST(Modulation, RowPermutationEquivariance) {
  ModulationConfig cfg;
  cfg.n_layers = 2;
  cfg.n_heads = 3;
  ModulationNetwork net(cfg, 5);
  net.randomize_head(6, 1.0);
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t g = 2 + rng.below(7);
    const Tensor f = random_features(rng, g, 6, 2.0);
    std::vector<std::size_t> perm(g);
    for (std::size_t i = 0; i < g; ++i) perm[i] = i;
    rng.shuffle(perm);
    const Tensor fp = embedding(f, perm);
    const auto a = net.modulate(f);
    const auto b = net.modulate(fp);
    for (std::size_t i = 0; i < g; ++i) {
      EXPECT_EQ(b.alpha[i], a.alpha[perm[i]]);
      EXPECT_EQ(b.beta[i], a.beta[perm[i]]);
      EXPECT_EQ(b.lambda1[i], a.lambda1[perm[i]]);
      EXPECT_EQ(b.lambda2[i], a.lambda2[perm[i]]);
    }
  }
}

TEST(Modulation, RejectsMismatchedFeatures) {
  ModulationNetwork net({}, 1);
  EXPECT_THROW(net.modulate(Tensor::zeros({3, 5})), ShapeError);
  EXPECT_THROW(net.modulate(Tensor::zeros({0, 6})), ShapeError);
  ModulationConfig bad;
  bad.n_heads = 4;
  EXPECT_THROW(ModulationNetwork(bad, 1), std::invalid_argument);
}

TEST(Modulation, HeadPerDimensionIsAllowed) {
  ModulationConfig cfg;
  cfg.n_heads = 6;
  ModulationNetwork net(cfg, 1);
  Rng rng(1);
  EXPECT_NO_THROW(net.modulate(random_features(rng, 4, 6)));
}

TEST(Modulation, DeepEncodersAreFlagged) {
  ModulationConfig cfg;
  cfg.n_layers = 128;
  EXPECT_EQ(cfg.warnings().size(), 1u);
  cfg.n_layers = 8;
  EXPECT_TRUE(cfg.warnings().empty());
}

TEST(Checkpoint, RoundTripIsBitExactAndDeterministic) {
  ModulationConfig cfg;
  cfg.gating = true;
  cfg.groups = 3;
  cfg.embedding_width = 4;
  cfg.feature_dim = 15;
  cfg.n_heads = 3;
  ModulationNetwork net(cfg, 21);
  net.randomize_head(22, 0.7);
  const std::string blob = net.serialize(17);
  EXPECT_EQ(blob, net.serialize(17));
  const ModulationNetwork back = ModulationNetwork::deserialize(blob);
  ASSERT_EQ(back.weights().size(), net.weights().size());
  for (std::size_t i = 0; i < net.weights().size(); ++i) {
    const auto a = net.weights()[i].value.data();
    const auto b = back.weights()[i].value.data();
    ASSERT_EQ(a.size(), b.size());
    EXPECT_EQ(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)), 0);
  }
  EXPECT_EQ(back.config().gating, true);
  EXPECT_EQ(back.config().embedding_width, 4u);
}

TEST(Checkpoint, RejectsAlteredVersionAndTruncation) {
  ModulationNetwork net({}, 3);
  std::string blob = net.serialize();
  std::string bumped = blob;
  bumped[8] = static_cast<char>(kCheckpointVersion + 1);
  try {
    ModulationNetwork::deserialize(bumped);
    FAIL() << "version change accepted";
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
  EXPECT_THROW(ModulationNetwork::deserialize(blob.substr(0, blob.size() - 3)), CheckpointError);
  EXPECT_THROW(ModulationNetwork::deserialize(blob.substr(0, 20)), CheckpointError);
  EXPECT_THROW(ModulationNetwork::deserialize("not a checkpoint"), CheckpointError);
}
