// SPDX-License-Identifier: Apache-2.0
#include "spikesal/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"
#include "spikesal/ops.hpp"

namespace spikesal {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string sample_stem(std::size_t id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sample_%04zu", id);
  return buf;
}

}  // namespace

std::vector<RecordedSample> record_samples(const std::vector<SyntheticSample>& samples, double theta) {
  std::vector<RecordedSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    RecordedSample r;
    r.id = s.index;
    r.label = to_string(s.scenario);
    r.spikes = simulate_spikes(s.clip, theta);
    SpikeStream masks(s.clip.width, s.clip.height, s.clip.num_ticks);
    for (std::size_t t = 0; t < s.masks.size(); ++t) {
      for (std::size_t y = 0; y < s.clip.height; ++y) {
        for (std::size_t x = 0; x < s.clip.width; ++x) {
          if (s.masks[t].pixels[y * s.clip.width + x]) masks.set(t, y, x, true);
        }
      }
    }
    r.masks = std::move(masks);
    out.push_back(std::move(r));
  }
  return out;
}

void save_dataset(const fs::path& dir, const Dataset& dataset) {
  if (dataset.samples.empty()) throw DatasetError("save_dataset: no samples");
  fs::create_directories(dir);
  const auto& first = dataset.samples.front().spikes;
  json manifest = {{"format", "spikesal-dataset"},
                   {"version", 1},
                   {"theta", dataset.theta},
                   {"width", first.width()},
                   {"height", first.height()},
                   {"num_ticks", first.num_ticks()},
                   {"samples", json::array()}};
  for (const auto& s : dataset.samples) {
    const std::string stem = sample_stem(s.id);
    save_spike_stream((dir / (stem + ".spk")).string(), s.spikes);
    json entry = {{"id", s.id}, {"label", s.label}, {"stream", stem + ".spk"}, {"masks", nullptr}};
    if (s.masks) {
      save_spike_stream((dir / (stem + "_masks.spk")).string(), *s.masks);
      entry["masks"] = stem + "_masks.spk";
    }
    manifest["samples"].push_back(entry);
  }
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << "\n";
  if (!out) throw DatasetError("save_dataset: cannot write " + (dir / "manifest.json").string());
}

Dataset load_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw DatasetError("load_dataset: missing " + manifest_path.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw DatasetError("load_dataset: " + manifest_path.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != "spikesal-dataset" || manifest.value("version", 0) != 1) {
    throw DatasetError("load_dataset: " + manifest_path.string() + " is not a version 1 dataset manifest");
  }
  Dataset d;
  try {
    d.theta = manifest.at("theta").get<double>();
    for (const auto& e : manifest.at("samples")) {
      RecordedSample s;
      s.id = e.at("id").get<std::size_t>();
      s.label = e.at("label").get<std::string>();
      s.spikes = load_spike_stream((dir / e.at("stream").get<std::string>()).string());
      if (!e.at("masks").is_null()) s.masks = load_spike_stream((dir / e.at("masks").get<std::string>()).string());
      if (s.masks && (s.masks->width() != s.spikes.width() || s.masks->height() != s.spikes.height() ||
                      s.masks->num_ticks() != s.spikes.num_ticks())) {
        throw DatasetError("load_dataset: sample " + std::to_string(s.id) + " masks do not match its stream");
      }
      d.samples.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw DatasetError("load_dataset: " + manifest_path.string() + ": " + e.what());
  }
  if (d.samples.empty()) throw DatasetError("load_dataset: " + manifest_path.string() + " lists no samples");
  return d;
}

std::vector<Example> make_examples(const std::vector<RecordedSample>& samples, const InputOptions& opt) {
  if (opt.time_steps == 0) throw DatasetError("make_examples: time_steps must be at least 1");
  if (!(opt.max_gray > 0.0)) throw DatasetError("make_examples: max_gray must be positive");
  std::vector<Example> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    const std::size_t ticks = s.spikes.num_ticks();
    const std::size_t W = s.spikes.width(), H = s.spikes.height();
    const std::size_t target = opt.target_tick.value_or(ticks / 2);
    const std::size_t span = (opt.time_steps - 1) * opt.frame_stride;
    if (target >= ticks || target < span) {
      throw DatasetError("make_examples: sample " + std::to_string(s.id) + " has " + std::to_string(ticks) +
                         " ticks, too few for target tick " + std::to_string(target) + " with " +
                         std::to_string(opt.time_steps) + " steps of stride " + std::to_string(opt.frame_stride));
    }
    std::vector<std::size_t> at(opt.time_steps);
    for (std::size_t t = 0; t < opt.time_steps; ++t) at[t] = target - span + t * opt.frame_stride;
    const auto frames = tfi_reconstruct_many(s.spikes, at, opt.max_gray);
    std::vector<double> values;
    values.reserve(opt.time_steps * W * H);
    for (const auto& f : frames) {
      for (double v : f.values) values.push_back(std::min(1.0, v / opt.max_gray));
    }
    Example e;
    e.id = s.id;
    e.label = s.label;
    e.frames = Tensor::from({opt.time_steps, 1, H, W}, std::move(values));
    if (s.masks) {
      const auto bits = s.masks->frame(target);
      e.mask = Tensor::from({1, H, W}, std::vector<double>(bits.begin(), bits.end()));
    }
    out.push_back(std::move(e));
  }
  return out;
}

Tensor batch_frames(const std::vector<Example>& examples, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw DatasetError("batch_frames: empty batch");
  std::vector<Tensor> parts;
  parts.reserve(indices.size());
  for (auto i : indices) parts.push_back(examples.at(i).frames);
  return permute(stack(parts), {1, 0, 2, 3, 4});
}

Tensor batch_masks(const std::vector<Example>& examples, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw DatasetError("batch_masks: empty batch");
  std::vector<Tensor> parts;
  parts.reserve(indices.size());
  for (auto i : indices) {
    const auto& e = examples.at(i);
    if (!e.mask.defined()) throw DatasetError("batch_masks: sample " + std::to_string(e.id) + " has no mask");
    parts.push_back(e.mask);
  }
  return stack(parts);
}

Split split_examples(std::size_t n, double validation_fraction) {
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw DatasetError("split_examples: validation fraction must be in [0, 1)");
  }
  auto held = static_cast<std::size_t>(std::lround(static_cast<double>(n) * validation_fraction));
  if (validation_fraction > 0.0 && n >= 2) held = std::max<std::size_t>(held, 1);
  held = std::min(held, n > 0 ? n - 1 : 0);
  Split s;
  for (std::size_t i = 0; i < n; ++i) (i < n - held ? s.train : s.validation).push_back(i);
  return s;
}

}  // namespace spikesal
