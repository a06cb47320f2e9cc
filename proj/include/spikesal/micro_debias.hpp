// SPDX-License-Identifier: Apache-2.0
#pragma once

// Cross-time-step attention on the deepest pyramid level, the fusion
// variants used in ablations, and the skip decoder producing saliency logits.

#include <random>
#include <string>
#include <vector>

#include "spikesal/module.hpp"
#include "spikesal/snn.hpp"

namespace spikesal {

enum class Fusion { kOr, kAdd, kSota };

std::string to_string(Fusion f);
/// Accepts "or", "add", "sota" (case-insensitive).
Fusion parse_fusion(const std::string& name);

struct AttentionConfig {
  std::size_t heads = 4;
  Fusion fusion = Fusion::kSota;
  bool use_dwconv_projections = true;  // false: pointwise 1x1 projections
};

/// Intermediate tensors of one attention call, for inspection.
struct AttentionTrace {
  Tensor q, k, v;        // [B, heads, N, d]
  Tensor weights;        // [B, heads, N, N], rows sum to 1
  Tensor attention;      // attention term reshaped to [B, C, H, W]
  Tensor with_residual;  // attention + projected residual
};

/// Parameters of the micro-debias block for a C-channel feature map.
/// Default initialisation: random q/k/v projections, identity residual
/// projection and a zero last MLP layer, so out = attention + input.
class SmBlock : public Module {
 public:
  SmBlock() = default;
  SmBlock(std::size_t channels, const AttentionConfig& config, std::mt19937_64& rng);

  void collect(const std::string& prefix, NamedTensors& params, NamedTensors& buffers) const override;

  AttentionConfig config;
  Conv2d q_proj, k_proj, v_proj;
  Conv2d residual;
  Conv2d mlp_in, mlp_out;
};

/// q from `cur`, k and v from `next`; multi-head scaled dot-product over the
/// H*W tokens; result + residual(cur), then + MLP of that sum.
Tensor cross_step_attention(const Tensor& cur, const Tensor& next, const SmBlock& params,
                            AttentionTrace* trace = nullptr);

/// f4: [T, B, C, H, W]. Step t pairs with step t + 1; the last step (and a
/// single-step input) pairs with itself. `traces` receives one entry per step
/// for SOTA fusion.
Tensor sm_forward(const Tensor& f4, const SmBlock& params, std::vector<AttentionTrace>* traces = nullptr);

/// Skip decoder: four (upsample x2, concat skip, conv3x3, ReLU) stages with
/// widths [8C, 4C, 2C, C], then a 1x1 head to one logit channel.
class RefineDecoder : public Module {
 public:
  RefineDecoder() = default;
  RefineDecoder(std::size_t base_channels, std::mt19937_64& rng);

  void collect(const std::string& prefix, NamedTensors& params, NamedTensors& buffers) const override;

  std::size_t base_channels = 0;
  std::array<Conv2d, 4> stages;
  Conv2d head;
};

/// sm_out: [T, B, 16C, H/16, W/16]; skips F1..F4 and the full-resolution
/// stem feature f0 [T, B, C, H, W]. Returns logits [T, B, 1, H, W].
Tensor refine_decode(const Tensor& sm_out, const PyramidFeatures& skips, const Tensor& f0,
                     const RefineDecoder& params);

struct ModelConfig {
  std::size_t base_channels = 8;
  AttentionConfig attention;
  bool use_sm = true;  // false: F4 goes to the decoder unchanged
  LifConfig lif;
};

/// The saliency generator: stem CBS (no pooling) -> pyramid -> micro-debias
/// -> skip decoder.
class SaliencyNet : public Module {
 public:
  SaliencyNet() = default;
  SaliencyNet(const ModelConfig& config, std::uint64_t seed);

  /// frames: [T, B, 1, H, W] in [0, 1]. Returns logits [T, B, 1, H, W].
  Tensor forward(const Tensor& frames, bool training) const;
  /// Mean over T of the per-step sigmoid maps: [B, 1, H, W].
  Tensor predict(const Tensor& frames, bool training) const;

  void collect(const std::string& prefix, NamedTensors& params, NamedTensors& buffers) const override;

  ModelConfig config;
  CbsBlock stem;
  Pyramid pyramid;
  SmBlock sm;
  RefineDecoder decoder;
};

/// Mean over the leading axis of sigmoid(logits).
Tensor readout(const Tensor& logits);

}  // namespace spikesal
