#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mstnet/ops.hpp"
#include "mstnet/parameters.hpp"
#include "support.hpp"

using namespace mstnet;
using mstnet::oracles::random_tensor;

namespace {

Tensor<float> mat(Shape s, std::vector<float> v) { return Tensor<float>(std::move(s), std::move(v)); }

}  // namespace

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  auto out = matmul(mat({2, 2}, {1, 0, 0, 1}), mat({2, 2}, {1, 2, 3, 4}));
  EXPECT_EQ(out.values(), (std::vector<float>{1, 2, 3, 4}));
}

TEST(Matmul, HandComputedProduct) {
  auto out = matmul(mat({2, 2}, {1, 2, 3, 4}), mat({2, 1}, {5, 6}));
  EXPECT_EQ(out.shape(), (Shape{2, 1}));
  EXPECT_EQ(out.values(), (std::vector<float>{17, 39}));
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(mat({2, 3}, std::vector<float>(6)), mat({2, 2}, std::vector<float>(4)));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[2x2]"), std::string::npos) << msg;
  }
}

TEST(Matmul, GradientOfSumMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  auto a = random_tensor({4, 3}, rng), b = random_tensor({3, 2}, rng);
  EXPECT_LT(oracles::gradient_error({a, b}, [&] { return sum(matmul(a, b)); }), 1e-3);
}

TEST(Softmax, UniformOnZeros) {
  auto s = softmax(mat({3}, {0, 0, 0}), 0);
  for (float v : s.data()) EXPECT_FLOAT_EQ(v, 1.0f / 3);
}

TEST(Softmax, LargeEqualInputsDoNotOverflow) {
  auto s = softmax(mat({2}, {1000, 1000}), 0);
  EXPECT_EQ(s[0], 0.5f);
  EXPECT_EQ(s[1], 0.5f);
}

TEST(Softmax, LogIntegersGiveProportionalWeights) {
  auto s = softmax(Tensor<double>({3}, {std::log(1.0), std::log(2.0), std::log(3.0)}), 0);
  EXPECT_NEAR(s[0], 1.0 / 6, 1e-15);
  EXPECT_NEAR(s[1], 2.0 / 6, 1e-15);
  EXPECT_NEAR(s[2], 3.0 / 6, 1e-15);
}

TEST(Softmax, RowsArePositiveAndSumToOne) {
  std::mt19937_64 rng(3);
  auto x = random_tensor({4, 7}, rng, false, -20, 20);
  auto s = softmax(x, 1);
  for (std::size_t i = 0; i < 4; ++i) {
    double total = 0;
    for (std::size_t j = 0; j < 7; ++j) {
      EXPECT_GT(s[i * 7 + j], 0.0);
      total += s[i * 7 + j];
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Conv2d, UnitKernelIsIdentity) {
  std::mt19937_64 rng(1);
  auto x = random_tensor({1, 5, 4}, rng, false);
  auto k = Tensor<double>({1, 1, 1, 1}, std::vector<double>{1.0});
  EXPECT_EQ(conv2d(x, k).values(), x.values());
}

TEST(Conv2d, AllOnesCountsOverlaps) {
  auto out = conv2d(Tensor<float>::full({1, 3, 3}, 1), Tensor<float>::full({1, 1, 3, 3}, 1));
  EXPECT_EQ(out.values(), (std::vector<float>{4, 6, 4, 6, 9, 6, 4, 6, 4}));
}

TEST(Conv2d, CrossCorrelationDoesNotFlipKernel) {
  // Kernel with a single 1 at the right tap reads x[i][j+1].
  auto x = mat({1, 1, 3}, {1, 2, 3});
  auto k = mat({1, 1, 1, 3}, {0, 0, 1});
  EXPECT_EQ(conv2d(x, k).values(), (std::vector<float>{2, 3, 0}));
}

TEST(Conv2d, EvenKernelIsConfigError) {
  EXPECT_THROW(conv2d(Tensor<float>({1, 4, 4}), Tensor<float>({1, 1, 2, 3})), ConfigError);
}

TEST(Conv2d, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  auto x = random_tensor({1, 4, 4}, rng), k = random_tensor({1, 1, 3, 3}, rng);
  oracles::Projector p(1);
  EXPECT_LT(oracles::gradient_error({x, k}, [&] { return p(conv2d(x, k)); }), 1e-3);
}

TEST(Conv3d, UnitKernelIsIdentity) {
  std::mt19937_64 rng(2);
  auto x = random_tensor({1, 3, 2, 4}, rng, false);
  EXPECT_EQ(conv3d(x, Tensor<double>({1, 1, 1, 1, 1}, std::vector<double>{1.0})).values(), x.values());
}

TEST(Conv3d, AllOnesCenterIs27) {
  auto out =
      conv3d(Tensor<float>::full({1, 3, 3, 3}, 1), Tensor<float>::full({1, 1, 3, 3, 3}, 1));
  EXPECT_EQ(out[13], 27.0f);
  EXPECT_EQ(out[0], 8.0f);
}

TEST(Conv3d, EvenKernelIsConfigError) {
  EXPECT_THROW(conv3d(Tensor<float>({1, 4, 4, 4}), Tensor<float>({1, 1, 3, 3, 4})), ConfigError);
}

TEST(Conv3d, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(6);
  auto x = random_tensor({1, 3, 4, 4}, rng), k = random_tensor({1, 1, 3, 3, 3}, rng);
  oracles::Projector p(2);
  EXPECT_LT(oracles::gradient_error({x, k}, [&] { return p(conv3d(x, k)); }), 1e-3);
}

TEST(LayerNorm, ConstantVectorNormalizesToZero) {
  auto y = layer_norm(Tensor<float>::full({1, 5}, 3.0f), Tensor<float>::full({5}, 1),
                      Tensor<float>({5}));
  for (float v : y.data()) EXPECT_EQ(v, 0.0f);
}

TEST(LayerNorm, PlusMinusOneIsFixedPoint) {
  auto y = layer_norm(Tensor<double>({2}, {1, -1}), Tensor<double>::full({2}, 1),
                      Tensor<double>({2}));
  // Variance 1 plus eps 1e-5 leaves the values just inside +-1.
  EXPECT_NEAR(y[0], 1.0, 1e-5);
  EXPECT_NEAR(y[1], -1.0, 1e-5);
}

TEST(LayerNorm, RandomInputHasZeroMeanUnitVariance) {
  std::mt19937_64 rng(16);
  auto x = random_tensor({1, 16}, rng, false, -5, 5);
  auto y = layer_norm(x, Tensor<double>::full({16}, 1), Tensor<double>({16}));
  double mean = 0, var = 0;
  for (double v : y.data()) mean += v / 16;
  for (double v : y.data()) var += (v - mean) * (v - mean) / 16;
  EXPECT_LT(std::abs(mean), 1e-6);
  EXPECT_NEAR(var, 1.0, 1e-4);
}

TEST(LayerNorm, WidthOneIsRejected) {
  EXPECT_THROW(layer_norm(Tensor<float>({3, 1}), Tensor<float>({1}), Tensor<float>({1})),
               DimensionError);
}

TEST(Backward, SumGivesUnitGradient) {
  Tensor<float> x({2, 3}, true);
  Tape<float> tape;
  TapeScope<float> scope(tape);
  backward(sum(x));
  for (float g : x.grad()) EXPECT_EQ(g, 1.0f);
}

TEST(Backward, SumOfSquaresGivesTwiceX) {
  Tensor<float> x({3}, {1, 2, 3}, true);
  Tape<float> tape;
  TapeScope<float> scope(tape);
  backward(sum(mul(x, x)));
  EXPECT_EQ(std::vector<float>(x.grad().begin(), x.grad().end()), (std::vector<float>{2, 4, 6}));
}

TEST(Backward, NonScalarLossIsRejected) {
  Tensor<float> x({3}, true);
  Tape<float> tape;
  TapeScope<float> scope(tape);
  EXPECT_THROW(backward(scale(x, 2.0f)), TapeError);
}

TEST(Backward, SecondCallWithoutResetIsRejected) {
  Tensor<float> x({3}, true);
  Tape<float> tape;
  TapeScope<float> scope(tape);
  auto loss = sum(x);
  backward(loss);
  EXPECT_THROW(backward(loss), TapeError);
  tape.reset();
  EXPECT_EQ(tape.size(), 0u);
  auto again = sum(x);
  EXPECT_NO_THROW(backward(again));
  EXPECT_EQ(x.grad()[0], 2.0f);  // gradients accumulate across tapes
}

TEST(Backward, WithoutActiveTapeIsRejected) {
  Tensor<float> x({3}, true);
  EXPECT_THROW(backward(sum(x)), TapeError);
}

TEST(Backward, ResetReleasesIntermediates) {
  Tensor<float> x({3}, true);
  std::weak_ptr<Node<float>> weak;
  Tape<float> tape;
  {
    TapeScope<float> scope(tape);
    auto y = scale(x, 2.0f);
    weak = y.node_ptr();
  }
  EXPECT_FALSE(weak.expired());
  tape.reset();
  EXPECT_TRUE(weak.expired());
}

TEST(Backward, EveryRecordedNodeGetsAGradient) {
  Tensor<float> x({2}, {1, 2}, true);
  Tape<float> tape;
  TapeScope<float> scope(tape);
  auto a = scale(x, 3.0f);
  auto b = gelu(a);
  backward(sum(b));
  EXPECT_TRUE(a.has_grad());
  EXPECT_TRUE(b.has_grad());
  EXPECT_TRUE(x.has_grad());
}

TEST(Backward, OpsOffTheTapeRecordNothing) {
  Tensor<float> x({2}, true);
  auto y = scale(x, 2.0f);
  EXPECT_FALSE(y.requires_grad());
  Tape<float> tape;
  TapeScope<float> scope(tape);
  auto z = scale(Tensor<float>({2}), 2.0f);
  EXPECT_EQ(tape.size(), 0u);
}

TEST(Ops, OutputsNeverAliasInputs) {
  Tensor<float> x({2, 3}, {1, 2, 3, 4, 5, 6});
  for (const auto& out : {reshape(x, {3, 2}), transpose(x), scale(x, 1.0f),
                          dropout(x, 0.1f, nullptr), concat<float>({x}, 0)}) {
    EXPECT_NE(out.node(), x.node());
    EXPECT_NE(out.data().data(), x.data().data());
  }
}

TEST(Dropout, InvertedScalingAndRate) {
  std::mt19937_64 rng(4);
  auto x = Tensor<double>::full({20000}, 1.0);
  auto y = dropout(x, 0.1, &rng);
  std::size_t zeros = 0;
  for (double v : y.data()) {
    if (v == 0) ++zeros;
    else EXPECT_DOUBLE_EQ(v, 1.0 / 0.9);
  }
  EXPECT_NEAR(static_cast<double>(zeros) / 20000, 0.1, 0.01);
}

TEST(Dropout, IdentityWithoutRng) {
  Tensor<float> x({3}, {1, 2, 3});
  EXPECT_EQ(dropout(x, 0.1f, nullptr).values(), x.values());
}

TEST(CrossEntropy, UniformLogitsGiveLogThree) {
  EXPECT_NEAR(cross_entropy(Tensor<double>({3}), 2).item(), std::log(3.0), 1e-15);
}

TEST(Gradients, EveryPrimitiveMatchesFiniteDifferences) {
  for (const auto& check : oracles::primitive_gradient_checks()) {
    EXPECT_LT(check.run(), 1e-4) << check.name;
  }
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Tensor<double> w({2}, {1.0, -1.0}, true);
  Adam<double> opt({{"w", w}}, AdamOptions{0.01});
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    tape.backward(sum(mul(w, Tensor<double>({2}, {3.0, -0.5}))));
  }
  opt.step();
  // Bias-corrected first step is lr * g / (|g| + eps).
  EXPECT_NEAR(w[0], 1.0 - 0.01, 1e-8);
  EXPECT_NEAR(w[1], -1.0 + 0.01, 1e-8);
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(Adam, IdenticalSeedsGiveBitIdenticalParameters) {
  auto run = [] {
    std::mt19937_64 rng(21);
    auto w = glorot<float>({4, 3}, 4, 3, rng);
    auto x = glorot<float>({5, 4}, 5, 4, rng);
    Adam<float> opt({{"w", w}}, AdamOptions{});
    for (int step = 0; step < 20; ++step) {
      opt.zero_grad();
      Tape<float> tape;
      TapeScope<float> scope(tape);
      tape.backward(sum(gelu(matmul(x, w))));
      opt.step();
    }
    return w.values();
  };
  EXPECT_EQ(run(), run());
}
