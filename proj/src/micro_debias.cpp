// SPDX-License-Identifier: Apache-2.0
#include "spikesal/micro_debias.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace spikesal {

std::string to_string(Fusion f) {
  switch (f) {
    case Fusion::kOr:
      return "or";
    case Fusion::kAdd:
      return "add";
    case Fusion::kSota:
      return "sota";
  }
  return "unknown";
}

Fusion parse_fusion(const std::string& name) {
  std::string s = name;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "or") return Fusion::kOr;
  if (s == "add") return Fusion::kAdd;
  if (s == "sota") return Fusion::kSota;
  throw std::invalid_argument("unknown fusion '" + name + "' (expected or, add or sota)");
}

namespace {

Conv2d projection(std::size_t c, bool depthwise, std::mt19937_64& rng) {
  return depthwise ? Conv2d(c, c, 3, ConvParams{1, 1, c}, false, rng) : Conv2d(c, c, 1, ConvParams{}, false, rng);
}

Tensor identity_kernel(std::size_t c) {
  Tensor w = Tensor::zeros({c, c, 1, 1});
  auto d = w.mutable_data();
  for (std::size_t i = 0; i < c; ++i) d[i * c + i] = 1.0;
  w.set_requires_grad(true);
  return w;
}

Tensor zeros_param(Shape shape) {
  Tensor t = Tensor::zeros(std::move(shape));
  t.set_requires_grad(true);
  return t;
}

// [B, C, H, W] -> [B, heads, N, d]
Tensor to_heads(const Tensor& x, std::size_t heads) {
  const std::size_t B = x.dim(0), C = x.dim(1), N = x.dim(2) * x.dim(3);
  return permute(reshape(x, {B, heads, C / heads, N}), {0, 1, 3, 2});
}

}  // namespace

SmBlock::SmBlock(std::size_t c, const AttentionConfig& cfg, std::mt19937_64& rng) : config(cfg) {
  if (cfg.heads == 0 || c % cfg.heads != 0) {
    throw ShapeError("sm_block", std::to_string(c) + " channels not divisible by " + std::to_string(cfg.heads) +
                                     " heads");
  }
  q_proj = projection(c, cfg.use_dwconv_projections, rng);
  k_proj = projection(c, cfg.use_dwconv_projections, rng);
  v_proj = projection(c, cfg.use_dwconv_projections, rng);
  residual.weight = identity_kernel(c);
  mlp_in = Conv2d(c, c, 1, ConvParams{}, true, rng);
  mlp_out.weight = zeros_param({c, c, 1, 1});
  mlp_out.bias = zeros_param({c});
}

void SmBlock::collect(const std::string& prefix, NamedTensors& p, NamedTensors& b) const {
  q_proj.collect(join_name(prefix, "q"), p, b);
  k_proj.collect(join_name(prefix, "k"), p, b);
  v_proj.collect(join_name(prefix, "v"), p, b);
  residual.collect(join_name(prefix, "residual"), p, b);
  mlp_in.collect(join_name(prefix, "mlp_in"), p, b);
  mlp_out.collect(join_name(prefix, "mlp_out"), p, b);
}

Tensor cross_step_attention(const Tensor& cur, const Tensor& next, const SmBlock& params, AttentionTrace* trace) {
  if (cur.ndim() != 4 || cur.shape() != next.shape()) {
    throw ShapeError("cross_step_attention", "cur " + to_string(cur.shape()) + " and next " +
                                                 to_string(next.shape()) + " must be equal [B,C,H,W]");
  }
  const std::size_t heads = params.config.heads;
  const std::size_t C = cur.dim(1);
  if (C % heads != 0 || C != params.residual.weight.dim(0)) {
    throw ShapeError("cross_step_attention", "input has " + std::to_string(C) + " channels, block built for " +
                                                 std::to_string(params.residual.weight.dim(0)) + " with " +
                                                 std::to_string(heads) + " heads");
  }
  Tensor q, k, v, res;
  {
    // Projections read spike maps.
    SpikeDrivenScope spikes;
    q = to_heads(params.q_proj.forward(cur), heads);
    k = to_heads(params.k_proj.forward(next), heads);
    v = to_heads(params.v_proj.forward(next), heads);
    res = params.residual.forward(cur);
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(C / heads));
  Tensor weights = softmax(mul_scalar(matmul(q, transpose(k, 2, 3)), scale));
  Tensor att = reshape(permute(matmul(weights, v), {0, 1, 3, 2}), cur.shape());
  Tensor out1 = add(att, res);
  Tensor out = add(out1, params.mlp_out.forward(relu(params.mlp_in.forward(out1))));
  if (trace) *trace = {q, k, v, weights, att, out1};
  return out;
}

Tensor sm_forward(const Tensor& f4, const SmBlock& params, std::vector<AttentionTrace>* traces) {
  if (f4.ndim() != 5 || f4.dim(0) == 0) {
    throw ShapeError("sm_forward", "expected [T,B,C,H,W] with T >= 1, got " + to_string(f4.shape()));
  }
  const std::size_t T = f4.dim(0);
  std::vector<Tensor> steps(T);
  for (std::size_t t = 0; t < T; ++t) steps[t] = select(f4, t);
  if (traces) traces->assign(T, {});
  std::vector<Tensor> out(T);
  for (std::size_t t = 0; t < T; ++t) {
    const Tensor& cur = steps[t];
    const Tensor& next = steps[t + 1 < T ? t + 1 : t];
    switch (params.config.fusion) {
      case Fusion::kOr:
        out[t] = maximum(heaviside_surrogate(cur, 0.5), heaviside_surrogate(next, 0.5));
        break;
      case Fusion::kAdd:
        out[t] = add(cur, next);
        break;
      case Fusion::kSota:
        out[t] = cross_step_attention(cur, next, params, traces ? &(*traces)[t] : nullptr);
        break;
    }
  }
  return stack(out);
}

RefineDecoder::RefineDecoder(std::size_t c, std::mt19937_64& rng) : base_channels(c) {
  std::size_t prev = 16 * c;
  for (std::size_t i = 0; i < 4; ++i) {
    const std::size_t skip = (8 * c) >> i;  // F3, F2, F1, F0
    const std::size_t width = (8 * c) >> i;
    stages[i] = Conv2d(prev + skip, width, 3, ConvParams{1, 1, 1}, true, rng);
    prev = width;
  }
  head = Conv2d(c, 1, 1, ConvParams{}, true, rng);
}

void RefineDecoder::collect(const std::string& prefix, NamedTensors& p, NamedTensors& b) const {
  for (std::size_t i = 0; i < stages.size(); ++i) stages[i].collect(join_name(prefix, "up" + std::to_string(i + 1)), p, b);
  head.collect(join_name(prefix, "head"), p, b);
}

Tensor refine_decode(const Tensor& sm_out, const PyramidFeatures& skips, const Tensor& f0,
                     const RefineDecoder& params) {
  if (sm_out.ndim() != 5) throw ShapeError("refine_decode", "expected [T,B,C,H,W], got " + to_string(sm_out.shape()));
  const std::size_t T = sm_out.dim(0), B = sm_out.dim(1);
  auto flat = [&](const Tensor& x) { return reshape(x, {T * B, x.dim(2), x.dim(3), x.dim(4)}); };
  const Tensor* skip_for[4] = {&skips.levels[2], &skips.levels[1], &skips.levels[0], &f0};
  Tensor x = flat(sm_out);
  for (std::size_t i = 0; i < 4; ++i) {
    const Tensor& s = *skip_for[i];
    if (s.ndim() != 5 || s.dim(0) != T || s.dim(1) != B || s.dim(3) != 2 * x.dim(2) || s.dim(4) != 2 * x.dim(3)) {
      throw ShapeError("refine_decode", "skip " + std::to_string(i) + " has shape " + to_string(s.shape()) +
                                            ", incompatible with feature " + to_string(x.shape()));
    }
    Tensor up = concat({upsample_bilinear(x, 2), flat(s)}, 1);
    if (up.dim(1) != params.stages[i].weight.dim(1)) {
      throw ShapeError("refine_decode", "stage " + std::to_string(i + 1) + " expects " +
                                            std::to_string(params.stages[i].weight.dim(1)) + " channels, got " +
                                            std::to_string(up.dim(1)));
    }
    x = relu(params.stages[i].forward(up));
  }
  Tensor logits = params.head.forward(x);
  return reshape(logits, {T, B, 1, logits.dim(2), logits.dim(3)});
}

SaliencyNet::SaliencyNet(const ModelConfig& cfg, std::uint64_t seed) : config(cfg) {
  std::mt19937_64 rng(seed);
  const std::size_t c = cfg.base_channels;
  stem = CbsBlock(1, c, false, false, cfg.lif, rng);
  pyramid = Pyramid(c, cfg.lif, rng);
  sm = SmBlock(16 * c, cfg.attention, rng);
  decoder = RefineDecoder(c, rng);
}

Tensor SaliencyNet::forward(const Tensor& frames, bool training) const {
  if (frames.ndim() != 5 || frames.dim(2) != 1) {
    throw ShapeError("saliency_net", "expected frames [T,B,1,H,W], got " + to_string(frames.shape()));
  }
  Tensor f0 = stem.forward(frames, training);
  PyramidFeatures pyr = build_pyramid(f0, pyramid, training);
  Tensor deep = config.use_sm ? sm_forward(pyr.levels[3], sm) : pyr.levels[3];
  return refine_decode(deep, pyr, f0, decoder);
}

Tensor SaliencyNet::predict(const Tensor& frames, bool training) const { return readout(forward(frames, training)); }

void SaliencyNet::collect(const std::string& prefix, NamedTensors& p, NamedTensors& b) const {
  stem.collect(join_name(prefix, "stem"), p, b);
  pyramid.collect(join_name(prefix, "pyramid"), p, b);
  if (config.use_sm && config.attention.fusion == Fusion::kSota) sm.collect(join_name(prefix, "sm"), p, b);
  decoder.collect(join_name(prefix, "decoder"), p, b);
}

Tensor readout(const Tensor& logits) { return mean_dim(sigmoid(logits), 0); }

}  // namespace spikesal
