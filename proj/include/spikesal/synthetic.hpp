// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spikesal/spike_stream.hpp"

namespace spikesal {

enum class Scenario { kConstantLight, kBrightnessRamp, kShadowOcclusion };

std::string to_string(Scenario s);
/// Accepts "constant-light", "brightness-ramp", "shadow-occlusion".
Scenario parse_scenario(const std::string& name);

struct GroundTruthMask {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // 0 or 1, row-major
};

struct SyntheticSize {
  std::size_t width = 32;
  std::size_t height = 32;
  std::size_t num_ticks = 40;
};

struct SyntheticOptions {
  double background = 0.25;         // mean background luminance
  double contrast = 0.45;           // shape luminance minus background
  double texture_amplitude = 0.06;  // sinusoidal texture on both regions
  double noise_std = 0.04;          // per-pixel, per-tick Gaussian noise
  double ramp_floor = 0.15;         // brightness-ramp end factor
  double ramp_fraction = 0.75;      // fraction of the clip over which the ramp descends
  std::size_t min_shape = 8;        // shape extent in pixels
  std::size_t max_shape = 14;
  double max_speed = 0.2;  // pixels per tick along each axis
};

struct SyntheticSample {
  IntensityClip clip;
  std::vector<GroundTruthMask> masks;  // one per tick
  Scenario scenario = Scenario::kConstantLight;
  std::size_t index = 0;
};

/// Builds `count` clips, cycling through `scenarios`. Each holds a
/// translating rectangle or disc over a textured background. Output depends
/// only on the arguments.
std::vector<SyntheticSample> make_synthetic_dataset(const std::vector<Scenario>& scenarios, std::uint64_t seed,
                                                    SyntheticSize size, std::size_t count,
                                                    const SyntheticOptions& options = {});

/// Brightness factor applied at `tick` in the ramp scenario.
double ramp_factor(std::size_t tick, std::size_t num_ticks, const SyntheticOptions& options);

}  // namespace spikesal
