// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>
#include <tuple>

#include "CLI11.hpp"
#include "plot.hpp"
#include "spikesal/checkpoint.hpp"
#include "spikesal/image_io.hpp"
#include "spikesal/parallel.hpp"
#include "spikesal/spike_stream.hpp"
#include "spikesal/synthetic.hpp"

namespace spikesal::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Flag plumbing. Each flag writes to its own storage; after parsing, only
// flags actually given are applied on top of the file config.

class Overrides {
 public:
  template <class T>
  CLI::Option* option(CLI::App* app, const std::string& name, const std::string& desc,
                      std::function<void(RunConfig&, const T&)> apply) {
    auto store = std::make_shared<T>();
    CLI::Option* opt = app->add_option(name, *store, desc);
    entries_.push_back({opt, [store, apply](RunConfig& c) { apply(c, *store); }});
    return opt;
  }

  CLI::Option* flag(CLI::App* app, const std::string& name, const std::string& desc,
                    std::function<void(RunConfig&)> apply) {
    CLI::Option* opt = app->add_flag(name, desc);
    entries_.push_back({opt, std::move(apply)});
    return opt;
  }

  void apply(RunConfig& cfg) const {
    for (const auto& [opt, fn] : entries_) {
      if (opt->count() > 0) fn(cfg);
    }
  }

 private:
  std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&)>>> entries_;
};

void add_path_flags(Overrides& o, CLI::App* app, bool dataset, bool out, bool checkpoint) {
  if (dataset) {
    o.option<std::string>(app, "--dataset", "dataset directory",
                          [](RunConfig& c, const std::string& v) { c.dataset = v; });
  }
  if (out) {
    o.option<std::string>(app, "--out", "output directory", [](RunConfig& c, const std::string& v) { c.out = v; });
  }
  if (checkpoint) {
    o.option<std::string>(app, "--checkpoint", "model checkpoint",
                          [](RunConfig& c, const std::string& v) { c.checkpoint = v; });
  }
}

void add_model_flags(Overrides& o, CLI::App* app) {
  o.option<std::string>(app, "--fusion", "or | add | sota",
                        [](RunConfig& c, const std::string& v) { c.model.attention.fusion = parse_fusion(v); });
  o.flag(app, "--no-dwconv", "pointwise instead of depthwise q/k/v projections",
         [](RunConfig& c) { c.model.attention.use_dwconv_projections = false; });
  o.flag(app, "--no-sm", "bypass the cross-step attention block", [](RunConfig& c) { c.model.use_sm = false; });
  o.option<std::size_t>(app, "--base-channels", "stem width",
                        [](RunConfig& c, const std::size_t& v) { c.model.base_channels = v; });
  o.option<std::size_t>(app, "--heads", "attention heads",
                        [](RunConfig& c, const std::size_t& v) { c.model.attention.heads = v; });
}

void add_input_flags(Overrides& o, CLI::App* app) {
  o.option<std::size_t>(app, "--time-steps", "network time steps T",
                        [](RunConfig& c, const std::size_t& v) { c.train.time_steps = v; });
  o.option<std::size_t>(app, "--frame-stride", "ticks between consecutive steps",
                        [](RunConfig& c, const std::size_t& v) { c.inputs.frame_stride = v; });
  o.option<std::size_t>(app, "--target-tick", "tick whose mask is the target",
                        [](RunConfig& c, const std::size_t& v) { c.inputs.target_tick = v; });
}

void add_train_flags(Overrides& o, CLI::App* app) {
  o.option<std::size_t>(app, "--epochs", "training epochs",
                        [](RunConfig& c, const std::size_t& v) { c.train.epochs = v; });
  o.option<double>(app, "--alpha", "weight of BCE + IoU + SSIM",
                   [](RunConfig& c, const double& v) { c.train.alpha = v; });
  o.option<std::string>(app, "--distance", "em | ed | kl | js",
                        [](RunConfig& c, const std::string& v) { c.train.distance = parse_distance(v); });
  o.flag(app, "--no-sg", "drop the distribution term", [](RunConfig& c) { c.train.use_sg = false; });
  o.option<std::uint64_t>(app, "--seed", "initialisation and shuffling seed",
                          [](RunConfig& c, const std::uint64_t& v) { c.train.seed = v; });
  o.option<double>(app, "--lr", "learning rate", [](RunConfig& c, const double& v) { c.train.lr = v; });
  o.option<double>(app, "--weight-decay", "generator weight decay",
                   [](RunConfig& c, const double& v) { c.train.weight_decay = v; });
  o.option<std::size_t>(app, "--batch-size", "batch size",
                        [](RunConfig& c, const std::size_t& v) { c.train.batch_size = v; });
  o.option<double>(app, "--penalty-coef", "critic gradient penalty weight",
                   [](RunConfig& c, const double& v) { c.train.penalty_coef = v; });
  o.option<std::size_t>(app, "--critic-ratio", "critic steps per generator step",
                        [](RunConfig& c, const std::size_t& v) { c.train.critic_ratio = v; });
  o.option<std::size_t>(app, "--critic-channels", "critic width",
                        [](RunConfig& c, const std::size_t& v) { c.train.critic_channels = v; });
  o.option<double>(app, "--validation-fraction", "held-out fraction",
                   [](RunConfig& c, const double& v) { c.train.validation_fraction = v; });
}

// ---------------------------------------------------------------------------
// Files.

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

fs::path require_out_dir(const RunConfig& cfg) {
  if (cfg.out.empty()) throw ConfigError("--out is required");
  std::error_code ec;
  fs::create_directories(cfg.out, ec);
  if (ec || !fs::is_directory(cfg.out)) throw IoError("cannot create output directory " + cfg.out);
  return cfg.out;
}

void require_dataset(const RunConfig& cfg) {
  if (cfg.dataset.empty()) throw ConfigError("--dataset is required");
  if (!fs::is_regular_file(fs::path(cfg.dataset) / "manifest.json")) {
    throw IoError("no dataset manifest in " + cfg.dataset);
  }
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw ConfigError(what + " is required");
  if (!fs::is_regular_file(path)) throw IoError(what + " not found: " + path);
}

std::vector<Example> load_examples(const RunConfig& cfg) {
  const Dataset ds = load_dataset(cfg.dataset);
  InputOptions in = cfg.inputs;
  in.time_steps = cfg.train.time_steps;
  return make_examples(ds.samples, in);
}

// The network input size is whatever the dataset holds.
void adopt_input_size(const std::vector<Example>& examples, RunConfig& cfg) {
  if (!examples.empty()) cfg.train.input_size = examples.front().frames.dim(3);
}

SaliencyNet load_model(const RunConfig& cfg) {
  SaliencyNet model(cfg.model, cfg.train.seed);
  if (!cfg.checkpoint.empty()) model.load_state(load_checkpoint(cfg.checkpoint));
  return model;
}

// ---------------------------------------------------------------------------
// Commands.

int cmd_simulate(const RunConfig& cfg, const std::string& input, std::ostream& out) {
  if (!fs::is_directory(input)) throw IoError("input frame directory not found: " + input);
  if (cfg.out.empty()) throw ConfigError("--out is required");
  const IntensityClip clip = load_clip_dir(input);
  const SpikeStream stream = simulate_spikes(clip, cfg.theta);
  const fs::path path(cfg.out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_spike_stream(cfg.out, stream);
  write_json(path.string() + ".config.json", to_json(cfg));
  std::size_t spikes = 0;
  for (std::size_t y = 0; y < stream.height(); ++y) {
    for (std::size_t x = 0; x < stream.width(); ++x) spikes += stream.count(y, x);
  }
  out << json{{"width", stream.width()}, {"height", stream.height()}, {"num_ticks", stream.num_ticks()},
              {"spikes", spikes}}
             .dump()
      << "\n";
  return kOk;
}

int cmd_reconstruct(const RunConfig& cfg, const std::string& spk, const std::vector<std::size_t>& ticks_in,
                    const std::string& format, std::ostream& out) {
  require_file(spk, "--spk");
  if (format != "pgm" && format != "png") throw ConfigError("--format must be pgm or png");
  const SpikeStream stream = load_spike_stream(spk);
  std::vector<std::size_t> ticks = ticks_in;
  if (ticks.empty()) {
    for (std::size_t t = 0; t < stream.num_ticks(); ++t) ticks.push_back(t);
  }
  for (std::size_t t : ticks) {
    if (t >= stream.num_ticks()) {
      throw ConfigError("--tick " + std::to_string(t) + " outside [0, " + std::to_string(stream.num_ticks()) + ")");
    }
  }
  const fs::path dir = require_out_dir(cfg);
  const auto frames = tfi_reconstruct_many(stream, ticks, cfg.inputs.max_gray);
  json written = json::array();
  for (std::size_t i = 0; i < ticks.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%06zu.%s", ticks[i], format.c_str());
    const auto& f = frames[i];
    write_gray_image((dir / name).string(), to_gray8(f.width, f.height, f.values, f.max_gray));
    written.push_back(name);
  }
  write_json(dir / "config.json", to_json(cfg));
  out << json{{"frames", written}}.dump() << "\n";
  return kOk;
}

int cmd_gen_data(const RunConfig& cfg, std::ostream& out) {
  std::vector<Scenario> scenarios;
  for (const auto& s : cfg.scenarios) scenarios.push_back(parse_scenario(s));
  if (scenarios.empty()) throw ConfigError("at least one scenario is required");
  const fs::path dir = require_out_dir(cfg);
  const auto synthetic = make_synthetic_dataset(scenarios, cfg.train.seed, cfg.size, cfg.count);
  Dataset ds;
  ds.theta = cfg.theta;
  ds.samples = record_samples(synthetic, cfg.theta);
  save_dataset(dir, ds);
  write_json(dir / "config.json", to_json(cfg));
  out << json{{"samples", ds.samples.size()}, {"out", dir.string()}}.dump() << "\n";
  return kOk;
}

int cmd_train(RunConfig cfg, std::ostream& out) {
  cfg.train.validate();
  require_dataset(cfg);
  if (!cfg.checkpoint.empty()) require_file(cfg.checkpoint, "--checkpoint");
  const fs::path dir = require_out_dir(cfg);
  const auto examples = load_examples(cfg);
  adopt_input_size(examples, cfg);

  SaliencyNet model = load_model(cfg);
  ConvCritic critic = initial_critic(cfg.train);
  write_json(dir / "config.json", to_json(cfg));
  std::ofstream log(dir / "train_log.jsonl", std::ios::binary);
  if (!log) throw IoError("cannot write " + (dir / "train_log.jsonl").string());
  const TrainResult result = train(model, critic, examples, cfg.train, [&](const EpochLog& e) {
    log << to_json(e).dump() << "\n";
    log.flush();
    json line = {{"epoch", e.epoch}, {"loss", e.generator.total}};
    if (e.validation) line["val_mae"] = e.validation->mae;
    out << line.dump() << "\n";
  });

  save_checkpoint(dir / "model.ckpt", model.state());
  save_checkpoint(dir / "critic.ckpt", critic.state());
  const auto& held_out = result.split.validation;
  const MetricsReport report = held_out.empty() ? evaluate(model, examples) : evaluate(model, examples, &held_out);
  json metrics = to_json(report);
  metrics["split"] = held_out.empty() ? "all" : "validation";
  write_json(dir / "metrics.json", metrics);
  return kOk;
}

int cmd_eval(const RunConfig& cfg, std::ostream& out) {
  require_dataset(cfg);
  require_file(cfg.checkpoint, "--checkpoint");
  const auto examples = load_examples(cfg);
  const SaliencyNet model = load_model(cfg);
  const json report = to_json(evaluate(model, examples));
  if (!cfg.out.empty()) {
    const fs::path dir = require_out_dir(cfg);
    write_json(dir / "metrics.json", report);
    write_json(dir / "config.json", to_json(cfg));
  }
  out << report.dump() << "\n";
  return kOk;
}

int cmd_energy(const RunConfig& cfg, std::ostream& out) {
  require_dataset(cfg);
  if (!cfg.checkpoint.empty()) require_file(cfg.checkpoint, "--checkpoint");
  const auto examples = load_examples(cfg);
  if (examples.empty()) throw DatasetError("dataset has no samples");
  const SaliencyNet model = load_model(cfg);
  json per_sample = json::array();
  double acs = 0.0, macs = 0.0, mj = 0.0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const EnergyReport r = energy_estimate(model, batch_frames(examples, {i}));
    json j = to_json(r);
    j["id"] = examples[i].id;
    per_sample.push_back(j);
    acs += static_cast<double>(r.accumulates);
    macs += static_cast<double>(r.multiply_accumulates);
    mj += r.energy_mj;
  }
  const double n = static_cast<double>(examples.size());
  const json report = {{"time_steps", cfg.train.time_steps},
                       {"samples", examples.size()},
                       {"accumulate_pj", kAccumulatePicojoules},
                       {"multiply_accumulate_pj", kMultiplyAccumulatePicojoules},
                       {"mean_accumulates", acs / n},
                       {"mean_multiply_accumulates", macs / n},
                       {"mean_energy_mj", mj / n},
                       {"per_sample", per_sample}};
  if (!cfg.out.empty()) {
    const fs::path dir = require_out_dir(cfg);
    write_json(dir / "energy.json", report);
    write_json(dir / "config.json", to_json(cfg));
  }
  out << json{{"time_steps", cfg.train.time_steps}, {"mean_energy_mj", mj / n}}.dump() << "\n";
  return kOk;
}

struct AblationRow {
  std::string grid;
  Fusion fusion;
  DistanceKind distance;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

int cmd_ablate(RunConfig cfg, const std::string& grid, const std::vector<std::uint64_t>& seeds_in,
               std::ostream& out) {
  cfg.train.validate();
  if (grid != "fusion" && grid != "distance" && grid != "all") {
    throw ConfigError("--grid must be fusion, distance or all");
  }
  require_dataset(cfg);
  const fs::path dir = require_out_dir(cfg);
  const auto examples = load_examples(cfg);
  adopt_input_size(examples, cfg);
  const std::vector<std::uint64_t> seeds = seeds_in.empty() ? std::vector<std::uint64_t>{cfg.train.seed} : seeds_in;

  std::vector<AblationRow> rows;
  if (grid != "distance") {
    for (Fusion f : {Fusion::kOr, Fusion::kAdd, Fusion::kSota}) rows.push_back({"fusion", f, DistanceKind::kEm});
  }
  if (grid != "fusion") {
    for (DistanceKind d : {DistanceKind::kEm, DistanceKind::kEd, DistanceKind::kKl, DistanceKind::kJs}) {
      rows.push_back({"distance", Fusion::kSota, d});
    }
  }

  // (fusion, distance) runs shared between grids are trained once.
  std::map<std::tuple<int, int, std::uint64_t>, MetricsReport> cache;
  json results = json::array();
  std::vector<MetricsReport> means;
  for (const auto& row : rows) {
    MetricsReport mean;
    json per_seed = json::array();
    for (std::uint64_t seed : seeds) {
      const auto key = std::make_tuple(static_cast<int>(row.fusion), static_cast<int>(row.distance), seed);
      auto it = cache.find(key);
      if (it == cache.end()) {
        ModelConfig m = cfg.model;
        m.attention.fusion = row.fusion;
        TrainConfig t = cfg.train;
        t.distance = row.distance;
        t.seed = seed;
        FitResult fitted = fit(examples, m, t);
        const auto& held_out = fitted.result.split.validation;
        MetricsReport r = held_out.empty() ? evaluate(fitted.model, examples)
                                           : evaluate(fitted.model, examples, &held_out);
        it = cache.emplace(key, std::move(r)).first;
      }
      const MetricsReport& r = it->second;
      json j = to_json(r);
      j["seed"] = seed;
      per_seed.push_back(j);
      mean.samples = r.samples;
      mean.mae += r.mae;
      mean.mean_f_beta += r.mean_f_beta;
      mean.max_f_beta += r.max_f_beta;
      mean.s_measure += r.s_measure;
      mean.psnr += r.psnr;
      mean.ssim += r.ssim;
      mean.energy_mj += r.energy_mj;
    }
    const double n = static_cast<double>(seeds.size());
    for (double* v : {&mean.mae, &mean.mean_f_beta, &mean.max_f_beta, &mean.s_measure, &mean.psnr, &mean.ssim,
                      &mean.energy_mj}) {
      *v /= n;
    }
    means.push_back(mean);
    json mj = to_json(mean);
    mj.erase("per_class_pixel_ratio");
    results.push_back({{"grid", row.grid},
                       {"fusion", to_string(row.fusion)},
                       {"distance", to_string(row.distance)},
                       {"mean", mj},
                       {"per_seed", per_seed}});
  }

  std::ostringstream md, csv;
  csv << "grid,fusion,distance,mae,mean_f_beta,max_f_beta,s_measure,psnr,ssim,energy_mj\n";
  std::string current;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    const auto& m = means[i];
    if (row.grid != current) {
      current = row.grid;
      if (i > 0) md << "\n";
      md << "## " << (current == "fusion" ? "Fusion" : "Distance") << "\n\n"
         << "| fusion | distance | MAE | mean F | max F | S | PSNR | SSIM | energy (mJ) |\n"
         << "|---|---|---|---|---|---|---|---|---|\n";
    }
    const std::string f = to_string(row.fusion), d = to_string(row.distance);
    md << "| " << f << " | " << d << " | " << fmt(m.mae) << " | " << fmt(m.mean_f_beta) << " | "
       << fmt(m.max_f_beta) << " | " << fmt(m.s_measure) << " | " << fmt(m.psnr) << " | " << fmt(m.ssim) << " | "
       << fmt(m.energy_mj) << " |\n";
    csv << row.grid << ',' << f << ',' << d << ',' << fmt(m.mae) << ',' << fmt(m.mean_f_beta) << ','
        << fmt(m.max_f_beta) << ',' << fmt(m.s_measure) << ',' << fmt(m.psnr) << ',' << fmt(m.ssim) << ','
        << fmt(m.energy_mj) << "\n";
  }
  write_text(dir / "table.md", md.str());
  write_text(dir / "table.csv", csv.str());
  write_json(dir / "results.json", {{"seeds", seeds}, {"rows", results}});
  json echoed = to_json(cfg);
  echoed["ablate"] = {{"grid", grid}, {"seeds", seeds}};
  write_json(dir / "config.json", echoed);
  out << md.str();
  return kOk;
}

double number_or_nan(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key) || !j[key].is_number()) return std::numeric_limits<double>::quiet_NaN();
  return j[key].get<double>();
}

int cmd_plot(const RunConfig& cfg, const std::string& run_dir, std::ostream& out) {
  if (!fs::is_directory(run_dir)) throw IoError("run directory not found: " + run_dir);
  const fs::path log_path = fs::path(run_dir) / "train_log.jsonl";
  const fs::path metrics_path = fs::path(run_dir) / "metrics.json";
  if (!fs::is_regular_file(log_path) && !fs::is_regular_file(metrics_path)) {
    throw IoError("no train_log.jsonl or metrics.json in " + run_dir);
  }
  RunConfig eff = cfg;
  if (eff.out.empty()) eff.out = run_dir;
  const fs::path dir = require_out_dir(eff);
  json written = json::array();

  if (fs::is_regular_file(log_path)) {
    std::ifstream in(log_path);
    Series gen{"generator loss", {}, {}}, critic{"critic loss", {}, {}};
    Series mae{"val MAE", {}, {}}, maxf{"val max F", {}, {}}, sm{"val S", {}, {}};
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json e;
      try {
        e = json::parse(line);
      } catch (const json::exception& ex) {
        throw ConfigError(log_path.string() + ": " + ex.what());
      }
      const double x = number_or_nan(e, "epoch");
      gen.x.push_back(x);
      gen.y.push_back(number_or_nan(e.value("generator", json::object()), "total"));
      critic.x.push_back(x);
      critic.y.push_back(number_or_nan(e.value("critic", json::object()), "loss"));
      const json v = e.contains("validation") ? e["validation"] : json();
      using Field = std::pair<Series*, const char*>;
      for (auto [s, key] : {Field{&mae, "mae"}, Field{&maxf, "max_f_beta"}, Field{&sm, "s_measure"}}) {
        s->x.push_back(x);
        s->y.push_back(number_or_nan(v, key));
      }
    }
    write_text(dir / "loss_curves.svg", line_chart_svg("Training losses", "epoch", {gen, critic}));
    write_text(dir / "validation_curves.svg", line_chart_svg("Validation metrics", "epoch", {mae, maxf, sm}));
    written.push_back("loss_curves.svg");
    written.push_back("validation_curves.svg");
  }
  if (fs::is_regular_file(metrics_path)) {
    const json m = read_json_file(metrics_path);
    std::vector<BarGroup> groups;
    if (m.contains("per_class_pixel_ratio") && m["per_class_pixel_ratio"].is_array()) {
      for (const auto& c : m["per_class_pixel_ratio"]) {
        groups.push_back({c.value("label", std::string("?")),
                          {number_or_nan(c, "predicted_ratio"), number_or_nan(c, "gt_ratio")}});
      }
    }
    write_text(dir / "pixel_ratio.svg",
               bar_chart_svg("Salient pixel ratio per class", {"predicted", "ground truth"}, groups));
    written.push_back("pixel_ratio.svg");
  }
  out << json{{"plots", written}}.dump() << "\n";
  return kOk;
}

void error_line(std::ostream& err, const std::string& kind, const std::string& message) {
  err << json{{"error", kind}, {"message", message}}.dump() << "\n";
}

}  // namespace

// ---------------------------------------------------------------------------
// RunConfig JSON.

json to_json(const RunConfig& c) {
  json j = spikesal::to_json(c.train);
  j["fusion"] = to_string(c.model.attention.fusion);
  j["dwconv"] = c.model.attention.use_dwconv_projections;
  j["use_sm"] = c.model.use_sm;
  j["base_channels"] = c.model.base_channels;
  j["heads"] = c.model.attention.heads;
  j["lif_threshold"] = c.model.lif.threshold;
  j["lif_reset"] = c.model.lif.reset;
  j["lif_leak"] = c.model.lif.leak;
  j["frame_stride"] = c.inputs.frame_stride;
  j["max_gray"] = c.inputs.max_gray;
  j["target_tick"] = c.inputs.target_tick ? json(*c.inputs.target_tick) : json(nullptr);
  j["dataset"] = c.dataset;
  j["out"] = c.out;
  j["checkpoint"] = c.checkpoint;
  j["scenarios"] = c.scenarios;
  j["theta"] = c.theta;
  j["count"] = c.count;
  j["width"] = c.size.width;
  j["height"] = c.size.height;
  j["num_ticks"] = c.size.num_ticks;
  j["threads"] = c.threads;
  j["deterministic"] = c.deterministic;
  return j;
}

void apply_json(const json& j, RunConfig& c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  json train_keys = json::object();
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "fusion") {
        c.model.attention.fusion = parse_fusion(value.get<std::string>());
      } else if (key == "dwconv") {
        c.model.attention.use_dwconv_projections = value.get<bool>();
      } else if (key == "use_sm") {
        c.model.use_sm = value.get<bool>();
      } else if (key == "base_channels") {
        c.model.base_channels = value.get<std::size_t>();
      } else if (key == "heads") {
        c.model.attention.heads = value.get<std::size_t>();
      } else if (key == "lif_threshold") {
        c.model.lif.threshold = value.get<double>();
      } else if (key == "lif_reset") {
        c.model.lif.reset = value.get<double>();
      } else if (key == "lif_leak") {
        c.model.lif.leak = value.get<double>();
      } else if (key == "frame_stride") {
        c.inputs.frame_stride = value.get<std::size_t>();
      } else if (key == "max_gray") {
        c.inputs.max_gray = value.get<double>();
      } else if (key == "target_tick") {
        if (value.is_null()) {
          c.inputs.target_tick.reset();
        } else {
          c.inputs.target_tick = value.get<std::size_t>();
        }
      } else if (key == "dataset") {
        c.dataset = value.get<std::string>();
      } else if (key == "out") {
        c.out = value.get<std::string>();
      } else if (key == "checkpoint") {
        c.checkpoint = value.get<std::string>();
      } else if (key == "scenarios") {
        c.scenarios = value.get<std::vector<std::string>>();
      } else if (key == "theta") {
        c.theta = value.get<double>();
      } else if (key == "count") {
        c.count = value.get<std::size_t>();
      } else if (key == "width") {
        c.size.width = value.get<std::size_t>();
      } else if (key == "height") {
        c.size.height = value.get<std::size_t>();
      } else if (key == "num_ticks") {
        c.size.num_ticks = value.get<std::size_t>();
      } else if (key == "threads") {
        c.threads = value.get<std::size_t>();
      } else if (key == "deterministic") {
        c.deterministic = value.get<bool>();
      } else {
        train_keys[key] = value;
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    } catch (const std::invalid_argument& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  }
  try {
    from_json_strict(train_keys, c.train);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

// ---------------------------------------------------------------------------

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spiking salient object detection toolkit", "spikesal"};
  app.require_subcommand(1);
  Overrides o;
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file (flags override its values)");
  o.option<std::size_t>(&app, "--threads", "worker threads", [](RunConfig& c, const std::size_t& v) { c.threads = v; });
  o.flag(&app, "--deterministic", "serial, bit-reproducible execution",
         [](RunConfig& c) { c.deterministic = true; });

  auto* simulate = app.add_subcommand("simulate", "integrate an intensity clip into a .spk stream");
  std::string input;
  simulate->add_option("--input", input, "directory of PGM/PNG frames")->required();
  o.option<double>(simulate, "--theta", "spike threshold", [](RunConfig& c, const double& v) { c.theta = v; });
  o.option<std::string>(simulate, "--out", "output .spk file", [](RunConfig& c, const std::string& v) { c.out = v; });

  auto* reconstruct = app.add_subcommand("reconstruct", "texture-from-interval frames from a .spk stream");
  std::string spk, format = "pgm";
  std::vector<std::size_t> ticks;
  reconstruct->add_option("--spk", spk, "input .spk file")->required();
  reconstruct->add_option("--tick", ticks, "tick(s) to reconstruct (default: all)")->delimiter(',');
  reconstruct->add_option("--format", format, "pgm | png");
  o.option<double>(reconstruct, "--max-gray", "gray level of a one-tick interval",
                   [](RunConfig& c, const double& v) { c.inputs.max_gray = v; });
  add_path_flags(o, reconstruct, false, true, false);

  auto* gen = app.add_subcommand("gen-data", "synthetic clips with masks as a dataset directory");
  o.option<std::string>(gen, "--scenarios", "comma-separated scenario names", [](RunConfig& c, const std::string& v) {
    c.scenarios.clear();
    std::stringstream ss(v);
    for (std::string item; std::getline(ss, item, ',');) {
      if (!item.empty()) c.scenarios.push_back(item);
    }
  });
  o.option<std::uint64_t>(gen, "--seed", "generator seed",
                          [](RunConfig& c, const std::uint64_t& v) { c.train.seed = v; });
  o.option<std::size_t>(gen, "--count", "number of clips", [](RunConfig& c, const std::size_t& v) { c.count = v; });
  o.option<std::size_t>(gen, "--size", "square frame size", [](RunConfig& c, const std::size_t& v) {
    c.size.width = v;
    c.size.height = v;
  });
  o.option<std::size_t>(gen, "--ticks", "ticks per clip", [](RunConfig& c, const std::size_t& v) { c.size.num_ticks = v; });
  o.option<double>(gen, "--theta", "spike threshold", [](RunConfig& c, const double& v) { c.theta = v; });
  add_path_flags(o, gen, false, true, false);

  auto* train_cmd = app.add_subcommand("train", "train a saliency model");
  add_path_flags(o, train_cmd, true, true, true);
  add_model_flags(o, train_cmd);
  add_input_flags(o, train_cmd);
  add_train_flags(o, train_cmd);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  add_path_flags(o, eval, true, true, true);
  add_model_flags(o, eval);
  add_input_flags(o, eval);
  o.option<std::uint64_t>(eval, "--seed", "initialisation seed",
                          [](RunConfig& c, const std::uint64_t& v) { c.train.seed = v; });

  auto* ablate = app.add_subcommand("ablate", "fusion and distance ablation grids");
  std::string grid = "all";
  std::vector<std::uint64_t> seeds;
  ablate->add_option("--grid", grid, "fusion | distance | all");
  ablate->add_option("--seeds", seeds, "comma-separated seeds (default: --seed)")->delimiter(',');
  add_path_flags(o, ablate, true, true, false);
  add_model_flags(o, ablate);
  add_input_flags(o, ablate);
  add_train_flags(o, ablate);

  auto* energy = app.add_subcommand("energy", "theoretical inference energy");
  add_path_flags(o, energy, true, true, true);
  add_model_flags(o, energy);
  add_input_flags(o, energy);
  o.option<std::uint64_t>(energy, "--seed", "initialisation seed",
                          [](RunConfig& c, const std::uint64_t& v) { c.train.seed = v; });

  auto* plot = app.add_subcommand("plot", "SVG charts from a training run");
  std::string run_dir;
  plot->add_option("--run", run_dir, "training output directory")->required();
  add_path_flags(o, plot, false, true, false);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    error_line(err, "usage", e.what());
    return kUsage;
  }

  try {
    RunConfig cfg;
    // eval and energy pick up the training config stored next to the checkpoint.
    const bool reads_run_config = eval->parsed() || energy->parsed();
    if (config_path.empty() && reads_run_config) {
      RunConfig probe;
      o.apply(probe);
      if (!probe.checkpoint.empty()) {
        const fs::path sibling = fs::path(probe.checkpoint).parent_path() / "config.json";
        if (fs::is_regular_file(sibling)) {
          apply_json(read_json_file(sibling), cfg);
          cfg.out.clear();
        }
      }
    }
    if (!config_path.empty()) apply_json(read_json_file(config_path), cfg);
    o.apply(cfg);
    if (cfg.deterministic) cfg.threads = 1;
    if (cfg.threads == 0) throw ConfigError("threads must be at least 1");
    set_num_threads(cfg.threads);

    if (simulate->parsed()) return cmd_simulate(cfg, input, out);
    if (reconstruct->parsed()) return cmd_reconstruct(cfg, spk, ticks, format, out);
    if (gen->parsed()) return cmd_gen_data(cfg, out);
    if (train_cmd->parsed()) return cmd_train(cfg, out);
    if (eval->parsed()) return cmd_eval(cfg, out);
    if (ablate->parsed()) return cmd_ablate(cfg, grid, seeds, out);
    if (energy->parsed()) return cmd_energy(cfg, out);
    if (plot->parsed()) return cmd_plot(cfg, run_dir, out);
    error_line(err, "usage", "no command given");
    return kUsage;
  } catch (const DivergenceError& e) {
    error_line(err, "divergence", e.what());
    return kDiverged;
  } catch (const ConfigError& e) {
    error_line(err, "config", e.what());
    return kConfig;
  } catch (const IoError& e) {
    error_line(err, "io", e.what());
    return kIo;
  } catch (const DatasetError& e) {
    error_line(err, "io", e.what());
    return kIo;
  } catch (const CheckpointError& e) {
    error_line(err, "io", e.what());
    return kIo;
  } catch (const ImageIoError& e) {
    error_line(err, "io", e.what());
    return kIo;
  } catch (const StreamDecodeError& e) {
    error_line(err, "io", e.what());
    return kIo;
  } catch (const fs::filesystem_error& e) {
    error_line(err, "io", e.what());
    return kIo;
  } catch (const std::invalid_argument& e) {
    error_line(err, "config", e.what());
    return kConfig;
  } catch (const std::exception& e) {
    error_line(err, "error", e.what());
    return kFailure;
  }
}

}  // namespace spikesal::cli
