// SPDX-License-Identifier: Apache-2.0
#pragma once

// Recorded spike clips with per-tick masks, their on-disk layout, and the
// conversion into network inputs (TFI frames at T ticks) and targets.
//
// Dataset directory:
//   manifest.json            {"format": "spikesal-dataset", "version": 1,
//                             "theta": .., "width": .., "height": ..,
//                             "num_ticks": .., "samples": [{"id", "label",
//                             "stream", "masks"}]}
//   sample_NNNN.spk          spike stream
//   sample_NNNN_masks.spk    per-tick binary masks in the same bit format
//                            ("masks" is null when absent)

#include <cstddef>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "spikesal/spike_stream.hpp"
#include "spikesal/synthetic.hpp"
#include "spikesal/tensor.hpp"

namespace spikesal {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RecordedSample {
  std::size_t id = 0;
  std::string label;                 // class used in per-class analyses
  SpikeStream spikes;
  std::optional<SpikeStream> masks;  // one binary frame per tick
};

/// Simulates each clip at `theta` and packs its masks.
std::vector<RecordedSample> record_samples(const std::vector<SyntheticSample>& samples, double theta);

struct Dataset {
  double theta = 1.0;
  std::vector<RecordedSample> samples;
};

void save_dataset(const std::filesystem::path& dir, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& dir);

struct InputOptions {
  std::size_t time_steps = 1;
  std::size_t frame_stride = 2;           // ticks between consecutive steps
  double max_gray = 255.0;                // TFI scale, divided out again
  std::optional<std::size_t> target_tick;  // default num_ticks / 2
};

/// One network input: frames at ticks target - (T-1-t)*stride for t < T,
/// each TFI-reconstructed and scaled to [0, 1]; the mask is the target tick's.
struct Example {
  std::size_t id = 0;
  std::string label;
  Tensor frames;  // [T, 1, H, W]
  Tensor mask;    // [1, H, W]; undefined when the sample has no masks
};

std::vector<Example> make_examples(const std::vector<RecordedSample>& samples, const InputOptions& options);

/// [T, B, 1, H, W] for the listed examples.
Tensor batch_frames(const std::vector<Example>& examples, const std::vector<std::size_t>& indices);
/// [B, 1, H, W]; every listed example must have a mask.
Tensor batch_masks(const std::vector<Example>& examples, const std::vector<std::size_t>& indices);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

/// The last round(n * fraction) examples (at least one when n >= 2 and
/// fraction > 0) are held out; order is kept so every class appears in both
/// halves when classes cycle.
Split split_examples(std::size_t n, double validation_fraction);

}  // namespace spikesal
