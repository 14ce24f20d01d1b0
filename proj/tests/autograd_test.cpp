#include <gtest/gtest.h>

#include <random>

#include "masa/core/autograd.hpp"
#include "masa/core/error.hpp"
#include "masa/core/ops.hpp"
#include "masa/train/gradcheck.hpp"
#include "oracles.hpp"

namespace masa {
namespace {

TEST(Backward, SumGivesOnes) {
  const Tensor a = Tensor::from({2, 2}, {1, -2, 3, 0.5}, true);
  backward(sum(a));
  EXPECT_EQ(a.grad_tensor().values(), Tensor::ones({2, 2}).values());
}

TEST(Backward, SquareGivesTwiceInput) {
  const Tensor a = Tensor::from({3}, {1, -2, 0.25}, true);
  backward(sum(hadamard(a, a)));
  EXPECT_EQ(a.grad_tensor().values(), (std::vector<double>{2, -4, 0.5}));
}

TEST(Backward, AttentionChainMatchesFiniteDifferences) {
  std::mt19937_64 rng(1);
  auto fn = [](const std::vector<Tensor>& in) {
    return sum(matmul(softmax_last(matmul(in[0], transpose(in[1]))), in[2]));
  };
  const GradcheckResult r = finite_diff_gradcheck(
      fn, {testing::random_tensor(rng, {3, 2}, -2, 2), testing::random_tensor(rng, {3, 2}, -2, 2),
           testing::random_tensor(rng, {3, 2}, -2, 2)});
  EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(Backward, NonScalarLossIsRejected) {
  const Tensor a = Tensor::ones({2}, true);
  EXPECT_THROW(backward(scale(a, 2.0)), UsageError);
}

TEST(Backward, DetachedLossIsRejected) {
  const Tensor a = Tensor::ones({2});
  EXPECT_THROW(backward(sum(a)), UsageError);
  const Tensor b = Tensor::ones({2}, true);
  EXPECT_THROW(backward(sum(b).detach()), UsageError);
}

TEST(Backward, SecondReplayIsRejected) {
  const Tensor a = Tensor::ones({2}, true);
  const Tensor loss = sum(scale(a, 3.0));
  backward(loss);
  EXPECT_THROW(backward(loss), UsageError);
  EXPECT_EQ(a.grad_tensor().values(), (std::vector<double>{3, 3}));
}

TEST(Backward, SharedSubexpressionAccumulatesOnce) {
  const Tensor a = Tensor::from({2}, {1, 2}, true);
  const Tensor b = scale(a, 2.0);
  backward(sum(add(b, b)));
  EXPECT_EQ(a.grad_tensor().values(), (std::vector<double>{4, 4}));
}

TEST(Backward, LeafGradientsAccumulateAcrossGraphsUntilZeroed) {
  Tensor a = Tensor::ones({2}, true);
  backward(sum(a));
  backward(sum(a));
  EXPECT_EQ(a.grad_tensor().values(), (std::vector<double>{2, 2}));
  a.zero_grad();
  EXPECT_FALSE(a.has_grad());
}

TEST(Backward, EveryTrackedLeafReceivesGradient) {
  std::mt19937_64 rng(2);
  const Tensor x = testing::random_tensor(rng, {3, 4}, -1, 1, true);
  const Tensor w = testing::random_tensor(rng, {4, 2}, -1, 1, true);
  const Tensor frozen = testing::random_tensor(rng, {3, 2});
  backward(sum(hadamard(matmul(x, w), frozen)));
  EXPECT_TRUE(x.has_grad());
  EXPECT_TRUE(w.has_grad());
  EXPECT_FALSE(frozen.has_grad());
}

TEST(GradTape, OrdersNodesFromLossToLeaves) {
  const Tensor a = Tensor::ones({2}, true);
  const Tensor loss = sum(gelu(scale(a, 2.0)));
  const auto tape = grad_tape(loss);
  ASSERT_EQ(tape.size(), 3u);
  EXPECT_EQ(tape[0]->name, "sum");
  EXPECT_EQ(tape[1]->name, "gelu");
  EXPECT_EQ(tape[2]->name, "scale");
}

TEST(NoGrad, GuardSuppressesRecording) {
  const Tensor a = Tensor::ones({2}, true);
  {
    NoGradGuard guard;
    EXPECT_FALSE(sum(a).requires_grad());
  }
  EXPECT_TRUE(sum(a).requires_grad());
}

TEST(Gradcheck, LinearFunctionIsExact) {
  std::mt19937_64 rng(3);
  const Tensor coeffs = testing::random_tensor(rng, {6});
  const GradcheckResult r = finite_diff_gradcheck(
      [&](const std::vector<Tensor>& in) { return sum(hadamard(in[0], coeffs)); },
      {testing::random_tensor(rng, {6})}, GradcheckOptions{.eps = 1e-3});
  // No truncation error for a linear function, so a wide step only shrinks rounding.
  EXPECT_LT(r.max_rel_error, 1e-10);
  EXPECT_EQ(r.checked, 6u);
}

TEST(Gradcheck, NonScalarClosureIsRejected) {
  EXPECT_THROW(finite_diff_gradcheck([](const std::vector<Tensor>& in) { return scale(in[0], 1.0); },
                                     {Tensor::ones({2})}),
               UsageError);
}

TEST(Gradcheck, DetectsAWrongAdjoint) {
  // An op whose recorded adjoint is off by a factor of two must fail the check.
  auto broken = [](const std::vector<Tensor>& in) {
    const Tensor x = in[0];
    std::vector<double> y(x.values());
    for (double& v : y) v = v * v;
    return sum(make_result("broken_square", x.shape(), y, {x}, [x](const detail::TensorImpl& o) {
      auto g = detail::grad_buffer(x);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * 4.0 * x.values()[i];
    }));
  };
  const GradcheckResult r = finite_diff_gradcheck(broken, {Tensor::from({2}, {0.7, -1.3})});
  EXPECT_GT(r.max_rel_error, 0.4);
}

}  // namespace
}  // namespace masa
