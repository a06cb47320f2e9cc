// SPDX-License-Identifier: Apache-2.0
#pragma once

// Spiking building blocks. Activations are time-major: [T, B, C, H, W].

#include <array>
#include <random>

#include "spikesal/module.hpp"

namespace spikesal {

struct LifConfig {
  double threshold = 1.0;
  double reset = 0.0;
  /// Multiplies the carried potential before integration; 1 disables leak.
  double leak = 1.0;
  SurrogateSpec surrogate;
};

struct LIFState {
  Tensor U;
  double U_theta = 1.0;
  double V_reset = 0.0;

  static LIFState zeros(Shape shape, const LifConfig& config = {});
};

struct LifStep {
  Tensor spikes;
  LIFState state;
};

/// U' = leak * U + current; spikes = [U' > U_theta];
/// V = U' * (1 - spikes) + V_reset * spikes.
LifStep lif_step(const LIFState& state, const Tensor& current, double leak = 1.0,
                 const SurrogateSpec& surrogate = {});

/// Runs a zero-initialised LIF population over the leading axis of `x`.
Tensor lif_over_time(const Tensor& x, const LifConfig& config);

/// Conv3x3 -> BatchNorm -> LIF (state carried over T) -> optional 2x2 max-pool.
class CbsBlock : public Module {
 public:
  CbsBlock() = default;
  CbsBlock(std::size_t in_ch, std::size_t out_ch, bool pool, bool spiking_input, const LifConfig& lif,
           std::mt19937_64& rng);

  /// x: [T, B, C, H, W]. `lif_out` (optional) receives the pre-pool spikes.
  Tensor forward(const Tensor& x, bool training, Tensor* lif_out = nullptr) const;
  void collect(const std::string& prefix, NamedTensors& params, NamedTensors& buffers) const override;

  Conv2d conv;
  BatchNorm2d bn;
  LifConfig lif;
  bool pool = true;
  bool spiking_input = true;  // conv work is counted as accumulates
};

Tensor cbs_block(const Tensor& x, const CbsBlock& params, bool training);

struct PyramidFeatures {
  std::array<Tensor, 4> levels;  // F1..F4
};

/// Four pooling CBS blocks, each doubling channels.
class Pyramid : public Module {
 public:
  Pyramid() = default;
  Pyramid(std::size_t base_channels, const LifConfig& lif, std::mt19937_64& rng);

  void collect(const std::string& prefix, NamedTensors& params, NamedTensors& buffers) const override;

  std::array<CbsBlock, 4> blocks;
};

/// f0: [T, B, C, H, W] with H and W divisible by 16.
PyramidFeatures build_pyramid(const Tensor& f0, const Pyramid& params, bool training);

}  // namespace spikesal
