// SPDX-License-Identifier: Apache-2.0
#include "spikesal/snn.hpp"

#include <optional>

namespace spikesal {

LIFState LIFState::zeros(Shape shape, const LifConfig& config) {
  return {Tensor::zeros(std::move(shape)), config.threshold, config.reset};
}

LifStep lif_step(const LIFState& state, const Tensor& current, double leak, const SurrogateSpec& surrogate) {
  if (state.U.shape() != current.shape()) {
    throw ShapeError("lif_step", "current " + to_string(current.shape()) + " does not match potential " +
                                     to_string(state.U.shape()));
  }
  if (!(state.U_theta > 0.0)) throw ShapeError("lif_step", "threshold must be positive");
  Tensor u = leak == 1.0 ? add(state.U, current) : add(mul_scalar(state.U, leak), current);
  Tensor s = heaviside_surrogate(u, state.U_theta, surrogate);
  Tensor v = mul(u, add_scalar(neg(s), 1.0));
  if (state.V_reset != 0.0) v = add(v, mul_scalar(s, state.V_reset));
  return {s, {v, state.U_theta, state.V_reset}};
}

Tensor lif_over_time(const Tensor& x, const LifConfig& config) {
  if (x.ndim() < 1) throw ShapeError("lif_over_time", "input needs a leading time axis");
  const std::size_t T = x.dim(0);
  Shape step_shape(x.shape().begin() + 1, x.shape().end());
  LIFState state = LIFState::zeros(step_shape, config);
  std::vector<Tensor> out;
  out.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    auto r = lif_step(state, select(x, t), config.leak, config.surrogate);
    out.push_back(r.spikes);
    state = std::move(r.state);
  }
  return stack(out);
}

CbsBlock::CbsBlock(std::size_t in_ch, std::size_t out_ch, bool p, bool spiking, const LifConfig& l,
                   std::mt19937_64& rng)
    : conv(in_ch, out_ch, 3, ConvParams{1, 1, 1}, false, rng), bn(out_ch), lif(l), pool(p), spiking_input(spiking) {}

Tensor CbsBlock::forward(const Tensor& x, bool training, Tensor* lif_out) const {
  if (x.ndim() != 5) throw ShapeError("cbs_block", "expected [T,B,C,H,W], got " + to_string(x.shape()));
  const std::size_t T = x.dim(0), B = x.dim(1), C = x.dim(2), H = x.dim(3), W = x.dim(4);
  if (pool && (H % 2 != 0 || W % 2 != 0)) {
    throw ShapeError("cbs_block", "spatial dims " + std::to_string(H) + "x" + std::to_string(W) +
                                      " must be even for 2x2 pooling");
  }
  if (C != conv.weight.dim(1)) {
    throw ShapeError("cbs_block", "input has " + std::to_string(C) + " channels, block expects " +
                                      std::to_string(conv.weight.dim(1)));
  }
  Tensor flat = reshape(x, {T * B, C, H, W});
  Tensor y;
  {
    std::optional<SpikeDrivenScope> spike_scope;
    if (spiking_input) spike_scope.emplace();
    y = conv.forward(flat);
  }
  y = bn.forward(y, training);
  const std::size_t Co = y.dim(1);
  Tensor s = lif_over_time(reshape(y, {T, B, Co, H, W}), lif);
  if (lif_out) *lif_out = s;
  if (!pool) return s;
  Tensor p = maxpool2d(reshape(s, {T * B, Co, H, W}), 2, 2);
  return reshape(p, {T, B, Co, H / 2, W / 2});
}

void CbsBlock::collect(const std::string& prefix, NamedTensors& p, NamedTensors& b) const {
  conv.collect(join_name(prefix, "conv"), p, b);
  bn.collect(join_name(prefix, "bn"), p, b);
}

Tensor cbs_block(const Tensor& x, const CbsBlock& params, bool training) { return params.forward(x, training); }

Pyramid::Pyramid(std::size_t c, const LifConfig& lif, std::mt19937_64& rng) {
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    blocks[i] = CbsBlock(c << i, c << (i + 1), true, true, lif, rng);
  }
}

void Pyramid::collect(const std::string& prefix, NamedTensors& p, NamedTensors& b) const {
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    blocks[i].collect(join_name(prefix, "down" + std::to_string(i + 1)), p, b);
  }
}

PyramidFeatures build_pyramid(const Tensor& f0, const Pyramid& params, bool training) {
  if (f0.ndim() != 5) throw ShapeError("build_pyramid", "expected [T,B,C,H,W], got " + to_string(f0.shape()));
  if (f0.dim(3) % 16 != 0 || f0.dim(4) % 16 != 0) {
    throw ShapeError("build_pyramid", "spatial dims " + std::to_string(f0.dim(3)) + "x" +
                                          std::to_string(f0.dim(4)) + " must be divisible by 16");
  }
  PyramidFeatures out;
  Tensor x = f0;
  for (std::size_t i = 0; i < 4; ++i) {
    x = params.blocks[i].forward(x, training);
    out.levels[i] = x;
  }
  return out;
}

}  // namespace spikesal
