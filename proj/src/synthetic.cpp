// SPDX-License-Identifier: Apache-2.0
#include "spikesal/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace spikesal {

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::kConstantLight:
      return "constant-light";
    case Scenario::kBrightnessRamp:
      return "brightness-ramp";
    case Scenario::kShadowOcclusion:
      return "shadow-occlusion";
  }
  return "unknown";
}

Scenario parse_scenario(const std::string& name) {
  if (name == "constant-light") return Scenario::kConstantLight;
  if (name == "brightness-ramp") return Scenario::kBrightnessRamp;
  if (name == "shadow-occlusion") return Scenario::kShadowOcclusion;
  throw ParameterError("unknown scenario '" + name +
                       "' (expected constant-light, brightness-ramp or shadow-occlusion)");
}

double ramp_factor(std::size_t tick, std::size_t num_ticks, const SyntheticOptions& o) {
  if (num_ticks <= 1) return 1.0;
  const double progress = static_cast<double>(tick) / static_cast<double>(num_ticks - 1);
  const double frac = o.ramp_fraction > 0.0 ? std::min(1.0, progress / o.ramp_fraction) : 1.0;
  return 1.0 - (1.0 - o.ramp_floor) * frac;
}

namespace {

struct Shape {
  bool disc = false;
  double hx = 0, hy = 0;  // half extents (radius for a disc)
  double cx0 = 0, cy0 = 0, vx = 0, vy = 0;

  bool contains(double px, double py, std::size_t tick) const {
    const double dx = px - (cx0 + vx * static_cast<double>(tick));
    const double dy = py - (cy0 + vy * static_cast<double>(tick));
    if (disc) return dx * dx + dy * dy <= hx * hx;
    return std::abs(dx) <= hx && std::abs(dy) <= hy;
  }
};

// Picks a start coordinate so the whole trajectory stays inside [half, extent - half].
double place(std::mt19937_64& rng, double half, double extent, double& v, double span) {
  double lo = half - std::min(0.0, v * span);
  double hi = extent - half - std::max(0.0, v * span);
  if (lo > hi) {
    v = 0.0;
    lo = half;
    hi = extent - half;
  }
  return std::uniform_real_distribution<double>(lo, std::max(lo, hi))(rng);
}

SyntheticSample make_one(Scenario scenario, std::uint64_t seed, std::size_t index, SyntheticSize size,
                         const SyntheticOptions& o) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t W = size.width, H = size.height, T = size.num_ticks;
  const double span = static_cast<double>(T - 1);
  const std::size_t hi_extent = std::min(o.max_shape, std::min(W, H));

  Shape s;
  s.disc = unit(rng) < 0.5;
  std::uniform_int_distribution<std::size_t> extent(o.min_shape, std::max(o.min_shape, hi_extent));
  s.hx = static_cast<double>(extent(rng)) / 2.0;
  s.hy = s.disc ? s.hx : static_cast<double>(extent(rng)) / 2.0;
  std::uniform_real_distribution<double> speed(-o.max_speed, o.max_speed);
  s.vx = speed(rng);
  s.vy = speed(rng);
  s.cx0 = place(rng, s.hx, static_cast<double>(W), s.vx, span);
  s.cy0 = place(rng, s.hy, static_cast<double>(H), s.vy, span);

  const double two_pi = 2.0 * std::numbers::pi;
  const double bg_fx = 1.0 + 3.0 * unit(rng), bg_fy = 1.0 + 3.0 * unit(rng), bg_phase = two_pi * unit(rng);
  const double fg_fx = 2.0 + 4.0 * unit(rng), fg_fy = 2.0 + 4.0 * unit(rng), fg_phase = two_pi * unit(rng);
  const double shadow_phase = two_pi * unit(rng);
  std::normal_distribution<double> noise(0.0, o.noise_std);

  SyntheticSample out;
  out.scenario = scenario;
  out.index = index;
  out.clip = IntensityClip(W, H, T);
  out.masks.assign(T, GroundTruthMask{W, H, std::vector<std::uint8_t>(W * H, 0)});
  for (std::size_t t = 0; t < T; ++t) {
    const double factor = scenario == Scenario::kBrightnessRamp ? ramp_factor(t, T, o) : 1.0;
    // Shadow edge oscillates across the shape so different ticks hide different parts.
    const double edge = s.cx0 + s.vx * static_cast<double>(t) +
                        s.hx * std::sin(two_pi * 2.0 * static_cast<double>(t) / std::max(1.0, span + 1.0) +
                                        shadow_phase);
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
        const bool inside = s.contains(px, py, t);
        out.masks[t].pixels[y * W + x] = inside ? 1 : 0;
        double v;
        if (inside) {
          v = o.background + o.contrast +
              o.texture_amplitude * std::sin(two_pi * (fg_fx * px / W + fg_fy * py / H) + fg_phase);
        } else {
          v = o.background + o.texture_amplitude * std::sin(two_pi * (bg_fx * px / W + bg_fy * py / H) + bg_phase);
        }
        v = std::clamp(v + noise(rng), 0.0, 1.0) * factor;
        if (scenario == Scenario::kShadowOcclusion && px < edge) v = 0.0;
        out.clip.at(t, y, x) = v;
      }
    }
  }
  return out;
}

}  // namespace

std::vector<SyntheticSample> make_synthetic_dataset(const std::vector<Scenario>& scenarios, std::uint64_t seed,
                                                    SyntheticSize size, std::size_t count,
                                                    const SyntheticOptions& options) {
  if (count == 0) throw ParameterError("make_synthetic_dataset: count must be at least 1");
  if (scenarios.empty()) throw ParameterError("make_synthetic_dataset: scenario list is empty");
  if (size.width == 0 || size.height == 0 || size.num_ticks == 0) {
    throw ParameterError("make_synthetic_dataset: width, height and num_ticks must be positive");
  }
  if (options.min_shape == 0 || options.min_shape > options.max_shape) {
    throw ParameterError("make_synthetic_dataset: need 0 < min_shape <= max_shape");
  }
  if (options.min_shape > std::min(size.width, size.height)) {
    throw ParameterError("make_synthetic_dataset: shape of " + std::to_string(options.min_shape) +
                         " px is larger than the " + std::to_string(size.width) + "x" +
                         std::to_string(size.height) + " frame");
  }
  if (options.ramp_floor < 0.0 || options.ramp_floor > 1.0) {
    throw ParameterError("make_synthetic_dataset: ramp_floor must be in [0, 1]");
  }
  std::vector<SyntheticSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(make_one(scenarios[i % scenarios.size()], seed, i, size, options));
  }
  return out;
}

}  // namespace spikesal
