// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "spikesal/tensor.hpp"

namespace spikesal {

// ---------------------------------------------------------------------------
// Elementwise and broadcasting arithmetic. Binary ops follow numpy
// broadcasting (trailing dimensions aligned, size-1 dimensions stretched).

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
/// Elementwise max; ties send the gradient to `a`.
Tensor maximum(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& x);
Tensor add_scalar(const Tensor& x, double c);
Tensor mul_scalar(const Tensor& x, double c);
Tensor square(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double negative_slope);
/// Gradient passes only where lo <= x <= hi.
Tensor clamp(const Tensor& x, double lo, double hi);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& x) { return neg(x); }

Shape broadcast_shapes(const Shape& a, const Shape& b);
Tensor broadcast_to(const Tensor& x, const Shape& shape);
/// Sums `x` down to `shape`; the adjoint of broadcast_to.
Tensor sum_to(const Tensor& x, const Shape& shape);

// ---------------------------------------------------------------------------
// Reductions and layout.

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum_dim(const Tensor& x, std::size_t dim, bool keepdim = false);
Tensor mean_dim(const Tensor& x, std::size_t dim, bool keepdim = false);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& order);
Tensor transpose(const Tensor& x, std::size_t dim0, std::size_t dim1);

Tensor concat(const std::vector<Tensor>& parts, std::size_t dim);
Tensor slice(const Tensor& x, std::size_t dim, std::size_t start, std::size_t length);
std::vector<Tensor> split(const Tensor& x, std::size_t dim, const std::vector<std::size_t>& sizes);
/// x[index] along dim 0, with that dimension removed.
Tensor select(const Tensor& x, std::size_t index);
/// Stacks equally shaped tensors along a new leading dimension.
Tensor stack(const std::vector<Tensor>& parts);

// ---------------------------------------------------------------------------
// Linear algebra and normalisation.

/// [..., M, K] x [..., K, N] -> [..., M, N]; leading dimensions must match.
Tensor matmul(const Tensor& a, const Tensor& b);
/// Softmax over the last axis.
Tensor softmax(const Tensor& x);

// ---------------------------------------------------------------------------
// Convolution family. All take NCHW inputs.

struct ConvParams {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
};

/// weight: [C_out, C_in / groups, kh, kw]; bias: optional [C_out].
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding);
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, ConvParams params);
/// Depthwise convolution: weight [C, 1, k, k], one filter per channel.
Tensor dwconv2d(const Tensor& input, const Tensor& weight, std::size_t stride, std::size_t padding);

namespace detail {
/// Gradient of conv2d with respect to its input, itself differentiable.
Tensor conv2d_input_grad(const Tensor& grad_out, const Tensor& weight, const Shape& input_shape,
                         ConvParams params);
/// Gradient of conv2d with respect to its weight, itself differentiable.
Tensor conv2d_weight_grad(const Tensor& input, const Tensor& grad_out, const Shape& weight_shape,
                          ConvParams params);
}  // namespace detail

/// Batch normalisation over (N, H, W) per channel. In training mode the
/// batch statistics normalise and the running buffers are updated with
/// `momentum` (unbiased variance); in eval mode the running buffers are used.
Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   std::span<double> running_mean, std::span<double> running_var, bool training,
                   double momentum = 0.1, double eps = 1e-5);

/// Max pooling; the first maximal element in row-major window order gets the gradient.
Tensor maxpool2d(const Tensor& x, std::size_t kernel, std::size_t stride);

/// Bilinear upsampling by an integer factor (half-pixel centres, edge clamped).
Tensor upsample_bilinear(const Tensor& x, std::size_t factor);

// ---------------------------------------------------------------------------
// Spiking nonlinearity.

enum class SurrogateKind { kRectangular, kArctan };

struct SurrogateSpec {
  SurrogateKind kind = SurrogateKind::kRectangular;
  double width = 0.5;
};

/// Pseudo-derivative used in place of the Heaviside derivative at
/// distance `x` from the threshold.
double surrogate_derivative(double x, const SurrogateSpec& spec);

/// Forward: 1 where u > threshold (strict), 0 elsewhere. Backward: the
/// surrogate pseudo-derivative evaluated at u - threshold.
Tensor heaviside_surrogate(const Tensor& u, double threshold, const SurrogateSpec& spec = {});

// ---------------------------------------------------------------------------
// Losses.

Tensor mse(const Tensor& a, const Tensor& b);
/// Mean binary cross entropy on probabilities clamped to [eps, 1 - eps].
Tensor bce(const Tensor& prob, const Tensor& target, double eps = 1e-7);

// ---------------------------------------------------------------------------
// Operation counting used by the energy estimator. While a counter is
// installed on the calling thread, conv2d and matmul record their work.
// Convolutions issued inside a SpikeDrivenScope count one accumulate per
// nonzero input tap and output channel; everything else counts dense
// multiply-accumulates.

struct OpCounter {
  std::uint64_t accumulates = 0;
  std::uint64_t multiply_accumulates = 0;
};

class OpCounterScope {
 public:
  explicit OpCounterScope(OpCounter& counter);
  ~OpCounterScope();
  OpCounterScope(const OpCounterScope&) = delete;
  OpCounterScope& operator=(const OpCounterScope&) = delete;

 private:
  OpCounter* previous_;
};

class SpikeDrivenScope {
 public:
  SpikeDrivenScope();
  ~SpikeDrivenScope();
  SpikeDrivenScope(const SpikeDrivenScope&) = delete;
  SpikeDrivenScope& operator=(const SpikeDrivenScope&) = delete;

 private:
  bool previous_;
};

}  // namespace spikesal
