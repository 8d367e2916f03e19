#include <gtest/gtest.h>

#include <cmath>

#include "metaadamw/autodiff.hpp"
#include "metaadamw/harness/gradcheck.hpp"
#include "metaadamw/numeric.hpp"
#include "metaadamw/ops.hpp"

using namespace metaadamw;

TEST(Ops, MatmulOfOnesCountsInnerExtent) {
  const Tensor a = Tensor::ones({2, 3});
  const Tensor b = Tensor::ones({3, 2});
  const Tensor c = matmul(a, b);
  ASSERT_EQ(c.shape(), (Shape{2, 2}));
  for (double v : c.data()) EXPECT_EQ(v, 3.0);
}

TEST(Ops, SigmoidAtZeroIsHalf) { EXPECT_EQ(sigmoid(Tensor::scalar(0.0)).item(), 0.5); }

TEST(Ops, CosineOfVectorWithItselfIsOne) {
  const Tensor x = Tensor::vector({0.3, -2.0, 5.5, 1e-3});
  EXPECT_NEAR(cosine_similarity(x, x).item(), 1.0, 1e-15);
}

TEST(Ops, CosineWithZeroVectorIsZero) {
  EXPECT_EQ(cosine_similarity(Tensor::vector({0, 0}), Tensor::vector({1, 2})).item(), 0.0);
}

TEST(Ops, BroadcastingFollowsTrailingAxes) {
  const Tensor a = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  const Tensor row = Tensor::vector({10, 20, 30});
  const Tensor col = Tensor::matrix(2, 1, {100, 200});
  EXPECT_EQ((a + row).to_vector(), (std::vector<double>{11, 22, 33, 14, 25, 36}));
  EXPECT_EQ((a + col).to_vector(), (std::vector<double>{101, 102, 103, 204, 205, 206}));
  EXPECT_EQ(sum_to(a, {1, 3}).to_vector(), (std::vector<double>{5, 7, 9}));
}

TEST(Ops, SoftmaxRowsSumToOneAndLogSoftmaxAgrees) {
  const Tensor x = Tensor::matrix(2, 3, {1, 2, 3, -1, 0, 50});
  const Tensor y = softmax(x);
  const Tensor ly = log_softmax(x);
  for (std::size_t r = 0; r < 2; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
      s += y[r * 3 + j];
      EXPECT_NEAR(std::log(y[r * 3 + j] + 1e-300), ly[r * 3 + j], 1e-9);
    }
    EXPECT_NEAR(s, 1.0, 1e-15);
  }
}

TEST(Ops, LayerNormStandardizesRows) {
  const Tensor x = Tensor::matrix(1, 4, {1, 2, 3, 4});
  const Tensor y = layer_norm(x, Tensor::ones({4}), Tensor::zeros({4}), 0.0);
  EXPECT_NEAR(mean(y).item(), 0.0, 1e-15);
  EXPECT_NEAR(variance(y).item(), 1.0, 1e-12);
}

TEST(Ops, ErrorsOnBadShapesAndDomains) {
  EXPECT_THROW(add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), ShapeError);
  EXPECT_THROW(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
  EXPECT_THROW(log(Tensor::vector({1.0, -1.0})), NumericError);
  EXPECT_THROW(log(Tensor::vector({0.0})), NumericError);
  EXPECT_THROW(sqrt(Tensor::vector({-0.5})), NumericError);
  EXPECT_THROW(div(Tensor::vector({1.0}), Tensor::vector({0.0})), NumericError);
  EXPECT_THROW(exp(Tensor::vector({1e4})), NumericError);
  EXPECT_THROW(embedding(Tensor::zeros({3, 2}), {3}), ShapeError);
}

TEST(ExactSum, IsOrderIndependentAndCorrectlyRounded) {
  std::vector<double> v{1e16, 1.0, -1e16, 1e-3, 3.0, -2.5e-4};
  const double reference = exact_sum(v);
  EXPECT_EQ(reference, 4.0 + 1e-3 - 2.5e-4);
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    rng.shuffle(v);
    EXPECT_EQ(exact_sum(v), reference);
  }
  EXPECT_EQ(exact_sum(std::vector<double>{}), 0.0);
  const std::vector<double> tricky{1.0, 1e100, 1.0, -1e100};
  EXPECT_EQ(exact_sum(tricky), 2.0);
}

TEST(Grad, PowerRule) {
  Tensor x = Tensor::scalar(3.0, true);
  EXPECT_EQ(grad(x * x, {x})[0].item(), 6.0);
}

TEST(Grad, SigmoidSlopeAtZero) {
  Tensor x = Tensor::scalar(0.0, true);
  EXPECT_EQ(grad(sigmoid(x), {x})[0].item(), 0.25);
}

TEST(Grad, GradientOfSquaredGradientNorm) {
  // d/dx (3x^2)^2 = 36 x^3, which is 36 at x = 1.
  Tensor x = Tensor::scalar(1.0, true);
  const Tensor dx = grad(pow(x, 3.0), {x}, {.create_graph = true})[0];
  EXPECT_TRUE(dx.requires_grad());
  const Tensor d2 = grad(square(dx), {x})[0];
  EXPECT_NEAR(d2.item(), 36.0, 1e-12);
  const Tensor fd = finite_difference_gradient(
      [](const Tensor& t) {
        const double v = t.item();
        return std::pow(3.0 * v * v, 2.0);
      },
      Tensor::scalar(1.0));
  EXPECT_NEAR(fd.item(), 36.0, 1e-6);
}

TEST(Grad, NonParticipantsGetZeros) {
  Tensor x = Tensor::vector({1.0, 2.0}, true);
  Tensor unused = Tensor::matrix(2, 2, {1, 2, 3, 4}, true);
  const auto g = grad(sum(x), {x, unused});
  EXPECT_EQ(g[0].to_vector(), (std::vector<double>{1, 1}));
  EXPECT_EQ(g[1].shape(), (Shape{2, 2}));
  for (double v : g[1].data()) EXPECT_EQ(v, 0.0);
}

TEST(Grad, AccumulatesOverMultipleUses) {
  Tensor x = Tensor::scalar(2.0, true);
  const Tensor y = x * x * x + x;  // 3x^2 + 1 = 13
  EXPECT_EQ(grad(y, {x})[0].item(), 13.0);
}

TEST(Grad, SubgradientConventionsAtZero) {
  Tensor x = Tensor::vector({0.0, 0.0}, true);
  EXPECT_EQ(grad(sum(abs(x)), {x})[0].to_vector(), (std::vector<double>{0, 0}));
  EXPECT_EQ(grad(sum(relu(x)), {x})[0].to_vector(), (std::vector<double>{0, 0}));
}

TEST(Grad, RejectsNonScalarOutput) {
  Tensor x = Tensor::vector({1.0, 2.0}, true);
  EXPECT_THROW(grad(x * 2.0, {x}), GraphError);
}

TEST(Grad, ReleasedGraphCannotBeReused) {
  Tensor x = Tensor::scalar(1.5, true);
  const Tensor y = exp(x) * x;
  grad(y, {x});
  EXPECT_THROW(grad(y, {x}), GraphError);

  const Tensor z = exp(x) * x;
  grad(z, {x}, {.create_graph = false, .retain_graph = true});
  EXPECT_NO_THROW(grad(z, {x}));
}

TEST(Grad, WithRespectToInteriorNode) {
  Tensor x = Tensor::scalar(0.5, true);
  const Tensor h = x * 4.0;
  const Tensor y = square(h);
  EXPECT_EQ(grad(y, {h})[0].item(), 4.0);
}

TEST(Grad, NoGradModeRecordsNothing) {
  Tensor x = Tensor::scalar(1.0, true);
  NoGradGuard guard;
  const Tensor y = x * 3.0;
  EXPECT_FALSE(y.requires_grad());
}

TEST(FiniteDifference, SquareAtTwo) {
  const Tensor g = finite_difference_gradient(
      [](const Tensor& t) { return t.item() * t.item(); }, Tensor::scalar(2.0), 1e-5);
  EXPECT_NEAR(g.item(), 4.0, 1e-9);
}

TEST(FiniteDifference, SumOfSigmoidAtZeros) {
  const Tensor g = finite_difference_gradient(
      [](const Tensor& t) { return sum(sigmoid(t)).item(); }, Tensor::zeros({3}), 1e-5);
  for (double v : g.data()) EXPECT_NEAR(v, 0.25, 1e-10);
}

TEST(FiniteDifference, RejectsBadInputs) {
  auto f = [](const Tensor& t) { return t.item(); };
  EXPECT_THROW(finite_difference_gradient(f, Tensor::scalar(1.0), 0.0), std::invalid_argument);
  EXPECT_THROW(finite_difference_gradient([](const Tensor&) { return NAN; }, Tensor::scalar(1.0)),
               NumericError);
}

TEST(GradCheck, EveryPrimitiveMatchesFiniteDifferences) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto report = harness::run_primitive_suite(seed, 1e-5);
    EXPECT_TRUE(report.passed()) << harness::format_report(report);
  }
}

TEST(GradCheck, RandomTenNodeGraphs) {
  const auto report = harness::run_random_graph_suite(60, 11, 10, 1e-6);
  EXPECT_TRUE(report.passed()) << harness::format_report(report);
}

TEST(GradCheck, SecondOrderPathMatchesFiniteDifferences) {
  const auto report = harness::run_second_order_suite(5, 1e-4);
  EXPECT_TRUE(report.passed()) << harness::format_report(report);
}

TEST(GradCheck, InjectedSigmoidSignBugIsReportedByName) {
  debug::inject_backward_fault("sigmoid");
  const auto report = harness::run_primitive_suite(1, 1e-5);
  debug::clear_backward_faults();
  const auto failing = report.failing_names();
  EXPECT_NE(std::find(failing.begin(), failing.end(), "sigmoid"), failing.end());
  EXPECT_EQ(std::find(failing.begin(), failing.end(), "tanh"), failing.end());
}

TEST(Determinism, IdenticalInputsGiveIdenticalBits) {
  auto run = [] {
    Rng rng(42);
    std::vector<double> v(12);
    for (auto& x : v) x = rng.normal();
    Tensor x = Tensor::matrix(3, 4, v, true);
    const Tensor y = sum(square(softmax(matmul(x, transpose(x))))) + sum(tanh(x));
    return grad(y, {x})[0].to_vector();
  };
  EXPECT_EQ(run(), run());
}
