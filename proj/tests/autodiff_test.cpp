// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <cstring>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "spikesal/checkpoint.hpp"
#include "op_catalog.hpp"
#include "spikesal/grad_check.hpp"
#include "spikesal/module.hpp"
#include "spikesal/ops.hpp"
#include "spikesal/parallel.hpp"

using namespace spikesal;

namespace {

std::vector<double> vec(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

double max_rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(std::abs(b[i]), 1e-300));
  }
  return worst;
}

Tensor param(Tensor t) {
  t.set_requires_grad(true);
  return t;
}

}  // namespace

TEST(Tensor, ShapeInvariantEnforced) {
  EXPECT_THROW(Tensor::from({2, 3}, std::vector<double>(5)), ShapeError);
  Tensor t = Tensor::zeros({2, 3, 4});
  EXPECT_EQ(t.numel(), 24u);
  EXPECT_TRUE(t.grad().empty());
}

TEST(Conv2d, OnesKernelOnOnesSumsToNine) {
  Tensor x = Tensor::ones({1, 1, 3, 3});
  Tensor w = Tensor::ones({1, 1, 3, 3});
  Tensor y = conv2d(x, w, Tensor(), 1, 0);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(y.item(), 9.0);
}

TEST(Conv2d, UnitKernelIsIdentity) {
  std::mt19937_64 rng(1);
  Tensor x = Tensor::randn({2, 1, 4, 5}, rng);
  Tensor y = conv2d(x, Tensor::ones({1, 1, 1, 1}), Tensor(), 1, 0);
  EXPECT_EQ(vec(y), vec(x));
}

TEST(Conv2d, MatchesDirectSummationOracle) {
  std::mt19937_64 rng(7);
  Tensor x = Tensor::randn({1, 2, 5, 5}, rng);
  Tensor w = Tensor::randn({3, 2, 3, 3}, rng);
  Tensor b = Tensor::randn({3}, rng);
  Tensor y = conv2d(x, w, b, 2, 0);
  ASSERT_EQ(y.shape(), (Shape{1, 3, 2, 2}));
  auto ref = oracle::conv2d(vec(x), 1, 2, 5, 5, vec(w), 3, 3, 2, 0, 1, vec(b));
  EXPECT_LT(max_rel_err(vec(y), ref), 1e-12);

  Tensor yp = conv2d(x, w, b, 2, 1);
  auto refp = oracle::conv2d(vec(x), 1, 2, 5, 5, vec(w), 3, 3, 2, 1, 1, vec(b));
  EXPECT_LT(max_rel_err(vec(yp), refp), 1e-12);
}

TEST(Conv2d, ShapeErrorNamesDimension) {
  Tensor x = Tensor::zeros({1, 3, 5, 5});
  Tensor w = Tensor::zeros({2, 2, 3, 3});
  try {
    conv2d(x, w, Tensor(), 1, 0);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("dim 1"), std::string::npos) << e.what();
  }
}

TEST(DwConv2d, PerChannelIdentityKernels) {
  std::mt19937_64 rng(3);
  Tensor x = Tensor::randn({2, 3, 6, 6}, rng);
  Tensor w = Tensor::zeros({3, 1, 3, 3});
  for (std::size_t c = 0; c < 3; ++c) w.mutable_data()[c * 9 + 4] = 1.0;
  EXPECT_EQ(vec(dwconv2d(x, w, 1, 1)), vec(x));
}

TEST(DwConv2d, ChannelsNeverMix) {
  std::mt19937_64 rng(4);
  Tensor x = Tensor::randn({1, 4, 6, 6}, rng);
  Tensor w = Tensor::randn({4, 1, 3, 3}, rng);
  auto before = vec(dwconv2d(x, w, 1, 1));
  Tensor x2 = x.clone();
  for (std::size_t i = 0; i < 36; ++i) x2.mutable_data()[i] += 0.37 * static_cast<double>(i % 5);
  auto after = vec(dwconv2d(x2, w, 1, 1));
  for (std::size_t i = 36; i < before.size(); ++i) ASSERT_EQ(before[i], after[i]) << "index " << i;
}

TEST(DwConv2d, MatchesGroupedOracle) {
  std::mt19937_64 rng(5);
  Tensor x = Tensor::randn({1, 3, 8, 8}, rng);
  Tensor w = Tensor::randn({3, 1, 3, 3}, rng);
  auto ref = oracle::conv2d(vec(x), 1, 3, 8, 8, vec(w), 3, 3, 1, 1, 3);
  EXPECT_LT(max_rel_err(vec(dwconv2d(x, w, 1, 1)), ref), 1e-12);
}

TEST(DwConv2d, RejectsChannelMismatch) {
  EXPECT_THROW(dwconv2d(Tensor::zeros({1, 3, 4, 4}), Tensor::zeros({2, 1, 3, 3}), 1, 1), ShapeError);
}

TEST(Heaviside, StrictThreshold) {
  const double thr = 0.7;
  EXPECT_EQ(heaviside_surrogate(Tensor::scalar(thr + 0.2), thr).item(), 1.0);
  EXPECT_EQ(heaviside_surrogate(Tensor::scalar(thr), thr).item(), 0.0);
}

TEST(Heaviside, RectangularPseudoDerivative) {
  SurrogateSpec spec{SurrogateKind::kRectangular, 0.5};
  EXPECT_DOUBLE_EQ(surrogate_derivative(0.0, spec), 1.0);
  EXPECT_EQ(surrogate_derivative(1.0, spec), 0.0);

  Tensor u = param(Tensor::from({2}, {1.0, 2.0}));
  heaviside_surrogate(u, 1.0, spec).backward(Tensor::ones({2}));
  EXPECT_DOUBLE_EQ(u.grad()[0], 1.0);
  EXPECT_EQ(u.grad()[1], 0.0);
}

TEST(Heaviside, BinaryForwardAndCompactBackward) {
  std::mt19937_64 rng(11);
  for (auto kind : {SurrogateKind::kRectangular, SurrogateKind::kArctan}) {
    SurrogateSpec spec{kind, 0.5};
    Tensor u = param(Tensor::randn({500}, rng, 2.0));
    Tensor s = heaviside_surrogate(u, 0.3, spec);
    for (double v : s.data()) ASSERT_TRUE(v == 0.0 || v == 1.0);
    s.backward(Tensor::ones({500}));
    if (kind == SurrogateKind::kRectangular) {
      for (std::size_t i = 0; i < 500; ++i) {
        if (std::abs(u[i] - 0.3) >= 0.5) ASSERT_EQ(u.grad()[i], 0.0);
      }
    }
  }
}

TEST(CoreOps, SoftmaxOfEqualRowIsUniform) {
  Tensor y = softmax(Tensor::full({1, 4}, 3.0));
  for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(CoreOps, SoftmaxRowsSumToOne) {
  std::mt19937_64 rng(2);
  Tensor y = softmax(Tensor::randn({7, 13}, rng, 5.0));
  for (std::size_t r = 0; r < 7; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 13; ++c) s += y[r * 13 + c];
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(CoreOps, MseOfIdenticalInputsIsZeroWithZeroGradient) {
  std::mt19937_64 rng(3);
  Tensor x = param(Tensor::randn({3, 4}, rng));
  Tensor loss = mse(x, x);
  EXPECT_EQ(loss.item(), 0.0);
  loss.backward();
  for (double g : x.grad()) EXPECT_EQ(g, 0.0);
}

TEST(CoreOps, BatchNormEvalWithUnitStatsIsIdentity) {
  std::mt19937_64 rng(4);
  Tensor x = Tensor::randn({2, 3, 4, 4}, rng);
  BatchNorm2d bn(3, 0.1, 0.0);
  EXPECT_EQ(vec(bn.forward(x, false)), vec(x));
}

TEST(CoreOps, BatchNormTrainingNormalisesAndTracksStats) {
  std::mt19937_64 rng(5);
  Tensor x = add_scalar(Tensor::randn({4, 2, 3, 3}, rng, 2.0), 1.5);
  BatchNorm2d bn(2);
  Tensor y = bn.forward(x, true);
  for (std::size_t c = 0; c < 2; ++c) {
    double s = 0.0, ss = 0.0;
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t i = 0; i < 9; ++i) {
        const double v = y[(b * 2 + c) * 9 + i];
        s += v;
        ss += v * v;
      }
    EXPECT_NEAR(s / 36.0, 0.0, 1e-12);
    EXPECT_NEAR(ss / 36.0, 1.0, 1e-4);
    EXPECT_NE(bn.running_mean[c], 0.0);
  }
}

TEST(CoreOps, BceClampsInsteadOfNaN) {
  Tensor p = Tensor::from({4}, {0.0, 1.0, 1.0, 0.0});
  Tensor g = Tensor::from({4}, {1.0, 0.0, 1.0, 0.0});
  const double v = bce(p, g).item();
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_GT(v, 0.0);
}

TEST(CoreOps, MaxpoolTieGoesToFirstIndex) {
  Tensor x = param(Tensor::from({1, 1, 2, 2}, {1.0, 1.0, 1.0, 1.0}));
  maxpool2d(x, 2, 2).backward(Tensor::ones({1, 1, 1, 1}));
  EXPECT_EQ(vec(x.grad_tensor()), (std::vector<double>{1.0, 0.0, 0.0, 0.0}));
}

TEST(CoreOps, UpsampleBilinearPreservesConstants) {
  Tensor y = upsample_bilinear(Tensor::full({1, 2, 3, 3}, 0.25), 2);
  ASSERT_EQ(y.shape(), (Shape{1, 2, 6, 6}));
  for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(CoreOps, MatmulShapeMismatch) {
  EXPECT_THROW(matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2})), ShapeError);
}

TEST(GradCheck, LinearOpIsExact) {
  std::mt19937_64 rng(8);
  Tensor w = Tensor::randn({5}, rng);
  Tensor x = param(Tensor::randn({5}, rng));
  auto report = grad_check("w*x", [&](const std::vector<Tensor>& in) { return mul(w, in[0]); }, {x});
  EXPECT_LT(report.max_rel_error, 1e-8) << report.describe();
}

TEST(GradCheck, Conv2dRandomInput) {
  std::mt19937_64 rng(9);
  Tensor x = param(Tensor::randn({1, 2, 6, 6}, rng));
  Tensor w = param(Tensor::randn({3, 2, 3, 3}, rng));
  Tensor b = param(Tensor::randn({3}, rng));
  auto report = grad_check(
      "conv2d", [](const std::vector<Tensor>& in) { return conv2d(in[0], in[1], in[2], 1, 1); }, {x, w, b},
      1e-5, 1e-4);
  EXPECT_TRUE(report.passed) << report.describe();
}

TEST(GradCheck, SoftmaxMseComposite) {
  std::mt19937_64 rng(10);
  Tensor x = param(Tensor::randn({5}, rng));
  Tensor target = Tensor::uniform({5}, rng, 0.0, 1.0);
  auto report = grad_check(
      "softmax+mse", [&](const std::vector<Tensor>& in) { return mse(softmax(in[0]), target); }, {x});
  EXPECT_TRUE(report.passed) << report.describe();
}

TEST(GradCheck, EveryCatalogueOpAtRandomPoints) {
  std::mt19937_64 rng(12);
  for (const auto& op : testing_support::op_catalog()) {
    for (int point = 0; point < 10; ++point) {
      const auto report = op.check(rng);
      ASSERT_TRUE(report.passed) << report.describe();
    }
  }
}

TEST(GradCheck, ReportsFailureWithOpAndIndex) {
  // Wrong backward on purpose: claims derivative 0 for x^2.
  auto broken = [](const std::vector<Tensor>& in) {
    const Tensor& x = in[0];
    std::vector<double> v(x.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = x[i] * x[i];
    return Tensor::make_result(x.shape(), v, {x}, "broken_square", [x](const Tensor&) {
      return std::vector<Tensor>{Tensor::zeros(x.shape())};
    });
  };
  Tensor x = param(Tensor::from({3}, {1.0, 2.0, 3.0}));
  auto report = grad_check("broken_square", broken, {x});
  EXPECT_FALSE(report.passed);
  EXPECT_NE(report.describe().find("broken_square"), std::string::npos);
  EXPECT_NE(report.describe().find("element"), std::string::npos);
}

TEST(Backward, SumOfLossesIsSumOfGradients) {
  std::mt19937_64 rng(12);
  Tensor x = param(Tensor::randn({2, 1, 4, 4}, rng));
  Tensor w = param(Tensor::randn({2, 1, 3, 3}, rng));
  auto l1 = [&] { return mean(square(conv2d(x, w, Tensor(), 1, 1))); };
  auto l2 = [&] { return sum(sigmoid(x)); };
  l1().backward();
  auto g1 = vec(x.grad_tensor());
  x.zero_grad();
  w.zero_grad();
  l2().backward();
  auto g2 = vec(x.grad_tensor());
  x.zero_grad();
  w.zero_grad();
  add(l1(), l2()).backward();
  auto g12 = vec(x.grad_tensor());
  for (std::size_t i = 0; i < g12.size(); ++i) EXPECT_NEAR(g12[i], g1[i] + g2[i], 1e-12);
}

TEST(Backward, ConcatThenSplitIsIdentity) {
  std::mt19937_64 rng(13);
  Tensor a = param(Tensor::randn({2, 3, 2}, rng));
  Tensor b = param(Tensor::randn({2, 1, 2}, rng));
  auto parts = split(concat({a, b}, 1), 1, {3, 1});
  EXPECT_EQ(vec(parts[0]), vec(a));
  EXPECT_EQ(vec(parts[1]), vec(b));
  Tensor wa = Tensor::randn({2, 3, 2}, rng);
  Tensor wb = Tensor::randn({2, 1, 2}, rng);
  add(sum(mul(parts[0], wa)), sum(mul(parts[1], wb))).backward();
  EXPECT_EQ(vec(a.grad_tensor()), vec(wa));
  EXPECT_EQ(vec(b.grad_tensor()), vec(wb));
}

TEST(Backward, EachNodeVisitedOnce) {
  int calls = 0;
  Tensor x = param(Tensor::from({2}, {1.0, 2.0}));
  auto counted = [&calls](const Tensor& in) {
    return Tensor::make_result(in.shape(), {in.data().begin(), in.data().end()}, {in}, "counted",
                               [&calls](const Tensor& g) {
                                 ++calls;
                                 return std::vector<Tensor>{g};
                               });
  };
  Tensor shared = counted(x);
  // Diamond: shared feeds two branches that rejoin.
  Tensor loss = sum(add(mul_scalar(shared, 2.0), mul_scalar(shared, 3.0)));
  loss.backward();
  EXPECT_EQ(calls, 1);
  EXPECT_EQ(vec(x.grad_tensor()), (std::vector<double>{5.0, 5.0}));
  auto order = topological_order(loss);
  std::set<Node*> unique(order.begin(), order.end());
  EXPECT_EQ(unique.size(), order.size());
}

TEST(Backward, SecondOrderThroughConvMatchesFiniteDifferences) {
  // h(w) = sum((d/dx <v, conv(x,w)>)^2) depends on w through the gradient.
  std::mt19937_64 rng(14);
  Tensor x = param(Tensor::randn({1, 1, 5, 5}, rng));
  Tensor w = param(Tensor::randn({2, 1, 3, 3}, rng));
  Tensor v = Tensor::randn({1, 2, 3, 3}, rng);
  auto h = [&](const Tensor& weight, bool graph) {
    Tensor out = sum(mul(leaky_relu(conv2d(x, weight, Tensor(), 1, 0), 0.2), v));
    Tensor gx = gradients(out, {x}, graph)[0];
    return sum(square(gx));
  };
  Tensor analytic = gradients(h(w, true), {w})[0];
  const double eps = 1e-6;
  for (std::size_t k = 0; k < w.numel(); ++k) {
    const double saved = w[k];
    w.mutable_data()[k] = saved + eps;
    const double plus = h(w, false).item();
    w.mutable_data()[k] = saved - eps;
    const double minus = h(w, false).item();
    w.mutable_data()[k] = saved;
    EXPECT_NEAR(analytic[k], (plus - minus) / (2 * eps), 1e-5 * std::max(1.0, std::abs(analytic[k])));
  }
}

TEST(Backward, HigherOrderThroughUnsupportedOpThrows) {
  Tensor x = param(Tensor::from({1, 1, 2, 2}, {1.0, 2.0, 3.0, 4.0}));
  Tensor y = sum(maxpool2d(x, 2, 2));
  EXPECT_THROW(gradients(y, {x}, true), AutodiffError);
}

TEST(Parallel, ConvResultsIndependentOfWorkerCount) {
  std::mt19937_64 rng(15);
  Tensor x = param(Tensor::randn({5, 3, 8, 8}, rng));
  Tensor w = param(Tensor::randn({4, 3, 3, 3}, rng));
  auto run = [&](std::size_t threads) {
    set_num_threads(threads);
    x.zero_grad();
    w.zero_grad();
    Tensor y = conv2d(x, w, Tensor(), 1, 1);
    sum(square(y)).backward();
    auto out = vec(y);
    auto gx = vec(x.grad_tensor());
    auto gw = vec(w.grad_tensor());
    out.insert(out.end(), gx.begin(), gx.end());
    out.insert(out.end(), gw.begin(), gw.end());
    return out;
  };
  auto serial = run(1);
  auto threaded = run(4);
  set_num_threads(1);
  EXPECT_EQ(serial, threaded);
}

TEST(Checkpoint, RoundTripPreservesNamesShapesAndBits) {
  std::mt19937_64 rng(16);
  NamedTensors entries{{"a.weight", Tensor::randn({2, 3}, rng)},
                       {"b", Tensor::scalar(-0.0)},
                       {"c.bias", Tensor::randn({4, 1, 2}, rng)}};
  std::stringstream buf;
  write_checkpoint(buf, entries);
  auto back = read_checkpoint(buf);
  ASSERT_EQ(back.size(), entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    EXPECT_EQ(back[i].first, entries[i].first);
    EXPECT_EQ(back[i].second.shape(), entries[i].second.shape());
    EXPECT_EQ(std::memcmp(back[i].second.data().data(), entries[i].second.data().data(),
                          entries[i].second.numel() * sizeof(double)),
              0);
  }
}

TEST(Checkpoint, ByteLayoutIsLittleEndian) {
  std::stringstream buf;
  write_checkpoint(buf, {{"x", Tensor::from({1}, {1.0})}});
  const std::string bytes = buf.str();
  // magic(8) version(4) count(4) namelen(4) name(1) rank(4) dim(8) value(8)
  ASSERT_EQ(bytes.size(), 8u + 4 + 4 + 4 + 1 + 4 + 8 + 8);
  EXPECT_EQ(bytes.substr(0, 7), "SPKCKPT");
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 1);
  EXPECT_EQ(static_cast<unsigned char>(bytes[12]), 1);
  // 1.0 = 0x3FF0000000000000, last byte 0x3F, second-to-last 0xF0
  EXPECT_EQ(static_cast<unsigned char>(bytes[bytes.size() - 1]), 0x3F);
  EXPECT_EQ(static_cast<unsigned char>(bytes[bytes.size() - 2]), 0xF0);
}

TEST(Checkpoint, RejectsCorruptInput) {
  std::stringstream bad("NOTACKPT........");
  EXPECT_THROW(read_checkpoint(bad), CheckpointError);
  std::stringstream buf;
  write_checkpoint(buf, {{"x", Tensor::zeros({8})}});
  std::stringstream truncated(buf.str().substr(0, buf.str().size() - 3));
  EXPECT_THROW(read_checkpoint(truncated), CheckpointError);
}

TEST(Adam, StepMovesAgainstGradient) {
  Tensor p = param(Tensor::from({2}, {1.0, -1.0}));
  Adam opt({p}, AdamOptions{0.1, 0.9, 0.999, 1e-8, 0.0});
  sum(square(p)).backward();
  opt.step();
  EXPECT_NEAR(p[0], 0.9, 1e-9);
  EXPECT_NEAR(p[1], -0.9, 1e-9);
}
