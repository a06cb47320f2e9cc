// SPDX-License-Identifier: Apache-2.0
//
// Every differentiable op with a generator of valid random inputs. Inputs are
// kept a margin away from kinks (relu, maximum, clamp bounds, pooling ties)
// so central differences see a smooth function.

#pragma once

#include <algorithm>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "spikesal/grad_check.hpp"
#include "spikesal/ops.hpp"

namespace testing_support {

struct OpCase {
  std::string name;
  std::function<spikesal::GradCheckReport(std::mt19937_64&)> check;
};

inline spikesal::Tensor leaf(spikesal::Tensor t) {
  t.set_requires_grad(true);
  return t;
}

inline spikesal::Tensor uniform_leaf(spikesal::Shape s, std::mt19937_64& rng, double lo, double hi) {
  return leaf(spikesal::Tensor::uniform(std::move(s), rng, lo, hi));
}

/// Values in +-[margin, 2] with random sign.
inline spikesal::Tensor away_from_zero(spikesal::Shape s, std::mt19937_64& rng, double margin = 0.05) {
  spikesal::Tensor t = spikesal::Tensor::uniform(std::move(s), rng, margin, 2.0);
  std::bernoulli_distribution sign(0.5);
  for (double& v : t.mutable_data()) {
    if (sign(rng)) v = -v;
  }
  return leaf(t);
}

/// Distinct values spaced at least 0.05 apart, in random order.
inline spikesal::Tensor distinct(spikesal::Shape s, std::mt19937_64& rng) {
  spikesal::Tensor t = spikesal::Tensor::zeros(std::move(s));
  auto d = t.mutable_data();
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; i < d.size(); ++i) d[order[i]] = -1.0 + 0.05 * static_cast<double>(i);
  return leaf(t);
}

inline std::vector<OpCase> op_catalog() {
  using namespace spikesal;
  using In = const std::vector<Tensor>&;
  auto gc = [](const std::string& name, OpUnderTest op, std::vector<Tensor> inputs) {
    return grad_check(name, op, std::move(inputs), 1e-5, 1e-4);
  };
  auto u = [](Shape s, std::mt19937_64& rng, double lo = -2.0, double hi = 2.0) {
    return uniform_leaf(std::move(s), rng, lo, hi);
  };

  std::vector<OpCase> ops;
  auto add_case = [&](std::string name, std::function<GradCheckReport(std::mt19937_64&)> fn) {
    ops.push_back({std::move(name), std::move(fn)});
  };

  add_case("add", [=](auto& r) { return gc("add", [](In x) { return add(x[0], x[1]); }, {u({3, 4}, r), u({4}, r)}); });
  add_case("sub", [=](auto& r) { return gc("sub", [](In x) { return sub(x[0], x[1]); }, {u({3, 1}, r), u({3, 4}, r)}); });
  add_case("mul", [=](auto& r) { return gc("mul", [](In x) { return mul(x[0], x[1]); }, {u({2, 3}, r), u({2, 3}, r)}); });
  add_case("div", [=](auto& r) {
    return gc("div", [](In x) { return div(x[0], x[1]); }, {u({2, 3}, r), away_from_zero({2, 3}, r, 0.5)});
  });
  add_case("maximum", [=](auto& r) {
    Tensor a = u({2, 5}, r);
    Tensor gap = away_from_zero({2, 5}, r, 0.05);
    Tensor b = Tensor::zeros({2, 5});
    for (std::size_t i = 0; i < 10; ++i) b.mutable_data()[i] = a[i] + gap[i];
    return gc("maximum", [](In x) { return maximum(x[0], x[1]); }, {a, leaf(b)});
  });
  add_case("neg", [=](auto& r) { return gc("neg", [](In x) { return neg(x[0]); }, {u({6}, r)}); });
  add_case("add_scalar", [=](auto& r) { return gc("add_scalar", [](In x) { return add_scalar(x[0], 1.5); }, {u({6}, r)}); });
  add_case("mul_scalar", [=](auto& r) { return gc("mul_scalar", [](In x) { return mul_scalar(x[0], -2.5); }, {u({6}, r)}); });
  add_case("square", [=](auto& r) { return gc("square", [](In x) { return square(x[0]); }, {u({6}, r)}); });
  add_case("sqrt", [=](auto& r) { return gc("sqrt", [](In x) { return sqrt(x[0]); }, {u({6}, r, 0.2, 3.0)}); });
  add_case("exp", [=](auto& r) { return gc("exp", [](In x) { return exp(x[0]); }, {u({6}, r)}); });
  add_case("log", [=](auto& r) { return gc("log", [](In x) { return log(x[0]); }, {u({6}, r, 0.2, 3.0)}); });
  add_case("sigmoid", [=](auto& r) { return gc("sigmoid", [](In x) { return sigmoid(x[0]); }, {u({6}, r, -4.0, 4.0)}); });
  add_case("relu", [=](auto& r) { return gc("relu", [](In x) { return relu(x[0]); }, {away_from_zero({8}, r)}); });
  add_case("leaky_relu", [=](auto& r) {
    return gc("leaky_relu", [](In x) { return leaky_relu(x[0], 0.2); }, {away_from_zero({8}, r)});
  });
  add_case("clamp", [=](auto& r) {
    // Bounds at +-1; |x - 1| and |x + 1| kept >= 0.05.
    Tensor x = u({8}, r);
    for (double& v : x.mutable_data()) {
      if (std::abs(std::abs(v) - 1.0) < 0.05) v = v > 0 ? 0.9 : -0.9;
    }
    return gc("clamp", [](In in) { return clamp(in[0], -1.0, 1.0); }, {x});
  });
  add_case("broadcast_to", [=](auto& r) {
    return gc("broadcast_to", [](In x) { return broadcast_to(x[0], {2, 3, 4}); }, {u({3, 1}, r)});
  });
  add_case("sum_to", [=](auto& r) { return gc("sum_to", [](In x) { return sum_to(x[0], {1, 4}); }, {u({3, 4}, r)}); });
  add_case("sum", [=](auto& r) { return gc("sum", [](In x) { return sum(x[0]); }, {u({3, 4}, r)}); });
  add_case("mean", [=](auto& r) { return gc("mean", [](In x) { return mean(x[0]); }, {u({3, 4}, r)}); });
  add_case("sum_dim", [=](auto& r) {
    return gc("sum_dim", [](In x) { return sum_dim(x[0], 1, false); }, {u({2, 3, 4}, r)});
  });
  add_case("mean_dim", [=](auto& r) {
    return gc("mean_dim", [](In x) { return mean_dim(x[0], 2, true); }, {u({2, 3, 4}, r)});
  });
  add_case("reshape", [=](auto& r) { return gc("reshape", [](In x) { return reshape(x[0], {4, 3}); }, {u({2, 6}, r)}); });
  add_case("permute", [=](auto& r) {
    return gc("permute", [](In x) { return permute(x[0], {2, 0, 1}); }, {u({2, 3, 4}, r)});
  });
  add_case("transpose", [=](auto& r) {
    return gc("transpose", [](In x) { return transpose(x[0], 0, 2); }, {u({2, 3, 4}, r)});
  });
  add_case("concat", [=](auto& r) {
    return gc("concat", [](In x) { return concat({x[0], x[1]}, 1); }, {u({2, 3}, r), u({2, 2}, r)});
  });
  add_case("slice", [=](auto& r) { return gc("slice", [](In x) { return slice(x[0], 1, 1, 2); }, {u({3, 4}, r)}); });
  add_case("split", [=](auto& r) {
    return gc("split", [](In x) {
      auto parts = split(x[0], 0, {1, 3});
      return concat({mul_scalar(parts[1], 2.0), square(parts[0])}, 0);
    }, {u({4, 2}, r)});
  });
  add_case("select", [=](auto& r) { return gc("select", [](In x) { return select(x[0], 1); }, {u({3, 4}, r)}); });
  add_case("stack", [=](auto& r) {
    return gc("stack", [](In x) { return stack({x[0], x[1]}); }, {u({2, 3}, r), u({2, 3}, r)});
  });
  add_case("matmul", [=](auto& r) {
    return gc("matmul", [](In x) { return matmul(x[0], x[1]); }, {u({3, 4}, r), u({4, 2}, r)});
  });
  add_case("softmax", [=](auto& r) { return gc("softmax", [](In x) { return softmax(x[0]); }, {u({3, 5}, r)}); });
  add_case("conv2d", [=](auto& r) {
    return gc("conv2d", [](In x) { return conv2d(x[0], x[1], x[2], 1, 1); },
              {u({2, 2, 5, 5}, r), u({3, 2, 3, 3}, r), u({3}, r)});
  });
  add_case("conv2d_strided", [=](auto& r) {
    return gc("conv2d_strided", [](In x) { return conv2d(x[0], x[1], Tensor(), 2, 0); },
              {u({1, 2, 6, 6}, r), u({2, 2, 2, 2}, r)});
  });
  add_case("conv2d_grouped", [=](auto& r) {
    return gc("conv2d_grouped", [](In x) { return conv2d(x[0], x[1], x[2], ConvParams{1, 1, 2}); },
              {u({1, 4, 4, 4}, r), u({2, 2, 3, 3}, r), u({2}, r)});
  });
  add_case("dwconv2d", [=](auto& r) {
    return gc("dwconv2d", [](In x) { return dwconv2d(x[0], x[1], 1, 1); }, {u({2, 3, 4, 4}, r), u({3, 1, 3, 3}, r)});
  });
  add_case("batchnorm2d_train", [=](auto& r) {
    return gc("batchnorm2d_train", [](In x) {
      std::vector<double> rm(2, 0.0), rv(2, 1.0);
      return batchnorm2d(x[0], x[1], x[2], rm, rv, true);
    }, {u({3, 2, 3, 3}, r), u({2}, r, 0.5, 2.0), u({2}, r)});
  });
  add_case("batchnorm2d_eval", [=](auto& r) {
    std::uniform_real_distribution<double> m(-1.0, 1.0), v(0.5, 2.0);
    const std::vector<double> rm0 = {m(r), m(r)}, rv0 = {v(r), v(r)};
    return gc("batchnorm2d_eval", [rm0, rv0](In x) {
      std::vector<double> rm = rm0, rv = rv0;
      return batchnorm2d(x[0], x[1], x[2], rm, rv, false);
    }, {u({2, 2, 3, 3}, r), u({2}, r, 0.5, 2.0), u({2}, r)});
  });
  add_case("maxpool2d", [=](auto& r) {
    return gc("maxpool2d", [](In x) { return maxpool2d(x[0], 2, 2); }, {distinct({1, 2, 4, 4}, r)});
  });
  add_case("upsample_bilinear", [=](auto& r) {
    return gc("upsample_bilinear", [](In x) { return upsample_bilinear(x[0], 2); }, {u({1, 2, 3, 3}, r)});
  });
  add_case("mse", [=](auto& r) { return gc("mse", [](In x) { return mse(x[0], x[1]); }, {u({2, 5}, r), u({2, 5}, r)}); });
  add_case("bce", [=](auto& r) {
    return gc("bce", [](In x) { return bce(x[0], x[1]); }, {u({2, 5}, r, 0.05, 0.95), u({2, 5}, r, 0.0, 1.0)});
  });
  return ops;
}

}  // namespace testing_support
