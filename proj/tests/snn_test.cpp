// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "spikesal/snn.hpp"

using namespace spikesal;

namespace {

LIFState state_of(double u, double theta = 1.0, double reset = 0.0) {
  return {Tensor::full({1}, u), theta, reset};
}

}  // namespace

TEST(Lif, FiresAndResets) {
  auto r = lif_step(state_of(0.0), Tensor::full({1}, 1.2));
  EXPECT_EQ(r.spikes.item(), 1.0);
  EXPECT_EQ(r.state.U.item(), 0.0);
}

TEST(Lif, IntegratesBelowThreshold) {
  auto r = lif_step(state_of(0.3), Tensor::full({1}, 0.4));
  EXPECT_EQ(r.spikes.item(), 0.0);
  EXPECT_DOUBLE_EQ(r.state.U.item(), 0.7);
}

TEST(Lif, NoDecayWithoutInput) {
  auto r = lif_step(state_of(0.3), Tensor::full({1}, 0.4));
  const double held = r.state.U.item();
  for (int k = 0; k < 50; ++k) {
    r = lif_step(r.state, Tensor::zeros({1}));
    EXPECT_EQ(r.spikes.item(), 0.0);
    EXPECT_EQ(r.state.U.item(), held);
  }
}

TEST(Lif, ThresholdIsStrict) {
  auto r = lif_step(state_of(0.5), Tensor::full({1}, 0.5));
  EXPECT_EQ(r.spikes.item(), 0.0);
  EXPECT_EQ(r.state.U.item(), 1.0);
}

TEST(Lif, OptionalLeak) {
  auto r = lif_step(state_of(0.8), Tensor::zeros({1}), 0.5);
  EXPECT_DOUBLE_EQ(r.state.U.item(), 0.4);
}

TEST(Lif, ResetExactnessProperty) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-2.0, 2.0), th(0.1, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double theta = th(rng), reset = u(rng) * 0.3;
    Tensor U = Tensor::uniform({4, 5}, rng, -2.0, 2.0);
    Tensor I = Tensor::uniform({4, 5}, rng, -2.0, 2.0);
    auto r = lif_step({U, theta, reset}, I);
    for (std::size_t k = 0; k < 20; ++k) {
      const double integrated = U.data()[k] + I.data()[k];
      if (integrated > theta) {
        EXPECT_EQ(r.spikes.data()[k], 1.0);
        EXPECT_EQ(r.state.U.data()[k], reset);
      } else {
        EXPECT_EQ(r.spikes.data()[k], 0.0);
        EXPECT_EQ(r.state.U.data()[k], integrated);
      }
    }
  }
}

TEST(Lif, ShapeMismatch) {
  EXPECT_THROW(lif_step(LIFState::zeros({2, 3}), Tensor::zeros({3, 2})), ShapeError);
}

TEST(Lif, SurrogateGradientReachesCurrent) {
  Tensor I = Tensor::from({3}, {0.9, 1.2, 3.0});
  I.set_requires_grad(true);
  auto r = lif_step(LIFState::zeros({3}), I);
  sum(r.spikes).backward();
  // Rectangular surrogate of half-width 0.5 has height 1.
  EXPECT_DOUBLE_EQ(I.grad()[0], 1.0);
  EXPECT_DOUBLE_EQ(I.grad()[1], 1.0);
  EXPECT_DOUBLE_EQ(I.grad()[2], 0.0);
}

TEST(Lif, OverTimeCarriesState) {
  Tensor x = Tensor::from({4, 1}, {0.6, 0.6, 0.6, 0.6});
  Tensor s = lif_over_time(x, {});
  EXPECT_EQ(std::vector<double>(s.data().begin(), s.data().end()), (std::vector<double>{0, 1, 0, 1}));
}

TEST(Cbs, BinaryOutputAndShape) {
  std::mt19937_64 rng(1);
  CbsBlock block(8, 16, true, false, {}, rng);
  Tensor x = Tensor::randn({5, 2, 8, 32, 32}, rng);
  Tensor spikes;
  Tensor y = block.forward(x, true, &spikes);
  EXPECT_EQ(y.shape(), (Shape{5, 2, 16, 16, 16}));
  std::size_t ones = 0;
  for (double v : spikes.data()) {
    ASSERT_TRUE(v == 0.0 || v == 1.0);
    ones += v == 1.0;
  }
  EXPECT_GT(ones, 0u);
  for (double v : y.data()) ASSERT_TRUE(v == 0.0 || v == 1.0);
}

TEST(Cbs, FirstStepMatchesSingleStep) {
  std::mt19937_64 rng(2);
  CbsBlock block(3, 6, true, false, {}, rng);
  Tensor frame = Tensor::randn({1, 2, 3, 8, 8}, rng);
  // Eval mode: batch statistics would otherwise differ in the last bits.
  Tensor one = block.forward(frame, false);
  Tensor two = block.forward(concat({frame, frame}, 0), false);
  Tensor first = select(two, 0);
  auto a = one.data();
  auto b = first.data();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Cbs, CausalAcrossTime) {
  std::mt19937_64 rng(3);
  CbsBlock block(2, 4, true, false, {}, rng);
  Tensor x = Tensor::randn({4, 1, 2, 8, 8}, rng);
  Tensor base = block.forward(x, false);
  for (std::size_t t = 0; t < 4; ++t) {
    Tensor y = x.clone();
    auto d = y.mutable_data();
    const std::size_t per = d.size() / 4;
    for (std::size_t i = t * per; i < (t + 1) * per; ++i) d[i] += 3.0;
    Tensor out = block.forward(y, false);
    for (std::size_t s = 0; s < t; ++s) {
      Tensor ta = select(base, s), tb = select(out, s);
      auto a = ta.data();
      auto b = tb.data();
      for (std::size_t i = 0; i < a.size(); ++i) ASSERT_EQ(a[i], b[i]) << "step " << s << " changed by step " << t;
    }
  }
}

TEST(Cbs, OddDimsRejected) {
  std::mt19937_64 rng(4);
  CbsBlock block(1, 2, true, false, {}, rng);
  EXPECT_THROW(block.forward(Tensor::zeros({1, 1, 1, 7, 8}), true), ShapeError);
}

TEST(Cbs, SpikingInputCountsAccumulates) {
  std::mt19937_64 rng(5);
  CbsBlock block(2, 4, true, true, {}, rng);
  Tensor x = Tensor::zeros({1, 1, 2, 4, 4});
  x.mutable_data()[0] = 1.0;  // a single active input at a corner
  OpCounter counter;
  {
    OpCounterScope scope(counter);
    block.forward(x, false);
  }
  EXPECT_EQ(counter.multiply_accumulates, 0u);
  // A corner pixel is read by 4 output positions of a padded 3x3 kernel.
  EXPECT_EQ(counter.accumulates, 4u * 4u);
}

TEST(Pyramid, ShapesForBaseEight) {
  std::mt19937_64 rng(6);
  Pyramid p(8, {}, rng);
  auto f = build_pyramid(Tensor::randn({1, 1, 8, 32, 32}, rng), p, true);
  EXPECT_EQ(f.levels[3].shape(), (Shape{1, 1, 128, 2, 2}));
}

TEST(Pyramid, ShapesForBaseFour) {
  std::mt19937_64 rng(7);
  Pyramid p(4, {}, rng);
  auto f = build_pyramid(Tensor::randn({1, 1, 4, 64, 64}, rng), p, true);
  EXPECT_EQ(f.levels[0].shape(), (Shape{1, 1, 8, 32, 32}));
  EXPECT_EQ(f.levels[1].shape(), (Shape{1, 1, 16, 16, 16}));
}

TEST(Pyramid, ShapeContractProperty) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<std::size_t> small(1, 2), mult(1, 3);
  for (int trial = 0; trial < 8; ++trial) {
    const std::size_t T = small(rng), B = small(rng), C = small(rng);
    const std::size_t H = 16 * mult(rng), W = 16 * mult(rng);
    Pyramid p(C, {}, rng);
    auto f = build_pyramid(Tensor::randn({T, B, C, H, W}, rng), p, trial % 2 == 0);
    for (std::size_t i = 0; i < 4; ++i) {
      const std::size_t scale = std::size_t{1} << (i + 1);
      EXPECT_EQ(f.levels[i].shape(), (Shape{T, B, C * scale, H / scale, W / scale}));
    }
  }
}

TEST(Pyramid, IndivisibleRejected) {
  std::mt19937_64 rng(9);
  Pyramid p(2, {}, rng);
  EXPECT_THROW(build_pyramid(Tensor::zeros({1, 1, 2, 24, 32}), p, true), ShapeError);
}

TEST(Pyramid, GradientFlowsToInput) {
  std::mt19937_64 rng(10);
  Pyramid p(4, {}, rng);
  Tensor f0 = Tensor::randn({2, 2, 4, 32, 32}, rng);
  f0.set_requires_grad(true);
  auto f = build_pyramid(f0, p, true);
  Tensor probe = Tensor::randn(f.levels[3].shape(), rng);
  sum(mul(f.levels[3], probe)).backward();
  double norm = 0.0;
  for (double g : f0.grad()) norm += g * g;
  EXPECT_GT(std::sqrt(norm), 0.0);
  for (const auto& w : p.parameters()) EXPECT_FALSE(w.grad().empty());
}

TEST(Pyramid, ParameterNames) {
  std::mt19937_64 rng(11);
  Pyramid p(2, {}, rng);
  auto names = p.state();
  EXPECT_EQ(names.front().first, "down1.conv.weight");
  EXPECT_EQ(names.size(), 4u * 5u);
}
