// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails. Arguments select a subset, e.g. `acceptance 1 6`.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "critic_fit.hpp"
#include "op_catalog.hpp"
#include "oracles.hpp"
#include "spikesal/metrics.hpp"
#include "spikesal/snn.hpp"
#include "spikesal/spike_stream.hpp"
#include "spikesal/train.hpp"

using namespace spikesal;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, a, b, c, d);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. Gradient integrity.

constexpr int kGradPoints = 100;
constexpr double kGradTolerance = 1e-4;
constexpr double kGradBudgetSeconds = 120.0;

Verdict gradient_integrity() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  Verdict v;
  double worst = 0.0;
  std::string worst_op;
  const auto ops = testing_support::op_catalog();
  for (const auto& op : ops) {
    for (int point = 0; point < kGradPoints; ++point) {
      const GradCheckReport r = op.check(rng);
      if (r.max_rel_error > worst) {
        worst = r.max_rel_error;
        worst_op = op.name;
      }
      if (!(r.max_rel_error < kGradTolerance)) {
        v.pass = false;
        v.detail = r.describe();
        return v;
      }
    }
  }
  // The firing function's backward is its declared surrogate, not the
  // derivative of the step, so it is checked against that definition.
  std::size_t surrogate_points = 0;
  for (int point = 0; point < kGradPoints; ++point) {
    Tensor u = testing_support::uniform_leaf({16}, rng, -1.5, 2.5);
    Tensor upstream = Tensor::uniform({16}, rng, -1.0, 1.0);
    const double threshold = 0.5;
    Tensor out = heaviside_surrogate(u, threshold);
    const auto g = gradients(sum(mul(out, upstream)), {u});
    const Tensor gu = g[0];
    for (std::size_t i = 0; i < 16; ++i) {
      const double want = surrogate_derivative(u[i] - threshold, SurrogateSpec{}) * upstream[i];
      if (gu[i] != want) {
        v.pass = false;
        v.detail = "heaviside_surrogate backward differs from its surrogate at element " + std::to_string(i);
        return v;
      }
    }
    ++surrogate_points;
  }
  const double elapsed = seconds_since(t0);
  v.pass = elapsed < kGradBudgetSeconds;
  v.detail = std::to_string(ops.size()) + " ops x " + std::to_string(kGradPoints) + " points, worst rel err " +
             fmt("%.2e", worst) + " (" + worst_op + "), surrogate exact at " + std::to_string(surrogate_points) +
             " points, " + fmt("%.1f s", elapsed);
  return v;
}

// ---------------------------------------------------------------------------
// 2. LIF exactness.

Verdict lif_exactness() {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> uu(-3.0, 3.0), th(0.05, 3.0), rs(-1.0, 1.0);
  const std::size_t tuples = 10000;
  std::size_t fired = 0;
  // Tuples are evaluated in blocks of 100 that share (U_theta, V_reset).
  for (std::size_t block = 0; block < tuples / 100; ++block) {
    const double theta = th(rng), reset = std::min(rs(rng), theta);
    Tensor U = Tensor::zeros({100}), C = Tensor::zeros({100});
    auto du = U.mutable_data(), dc = C.mutable_data();
    for (std::size_t i = 0; i < 100; ++i) {
      du[i] = uu(rng);
      dc[i] = uu(rng);
    }
    const LifStep step = lif_step({U, theta, reset}, C);
    for (std::size_t i = 0; i < 100; ++i) {
      const double integrated = U[i] + C[i];
      const bool fires = integrated > theta;
      fired += fires;
      const double want_v = fires ? reset : integrated;
      if (step.spikes[i] != (fires ? 1.0 : 0.0) || step.state.U[i] != want_v) {
        return {false, fmt("tuple U=%.17g C=%.17g theta=%.17g reset=%.17g", U[i], C[i], theta, reset)};
      }
    }
  }
  return {true, std::to_string(tuples) + " tuples exact, " + std::to_string(fired) + " fired"};
}

// ---------------------------------------------------------------------------
// 3. Spike conservation.

// Integration and the reference sum run in different orders; this slack
// only absorbs that rounding.
constexpr double kConservationSlack = 1e-9;

Verdict spike_conservation() {
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<std::size_t> dim(1, 12), ticks(1, 120);
  std::uniform_real_distribution<double> lum(0.0, 1.0), th(1.0, 4.0);
  std::size_t pixels = 0;
  for (int clip_index = 0; clip_index < 1000; ++clip_index) {
    IntensityClip clip(dim(rng), dim(rng), ticks(rng));
    for (double& v : clip.luminance) v = lum(rng);
    const double theta = th(rng);  // >= max luminance, so at most one spike per tick is ever due
    const SpikeStream s = simulate_spikes(clip, theta);
    for (std::size_t y = 0; y < clip.height; ++y) {
      for (std::size_t x = 0; x < clip.width; ++x) {
        double total = 0.0;
        for (std::size_t t = 0; t < clip.num_ticks; ++t) total += clip.at(t, y, x);
        const double n = static_cast<double>(s.count(y, x));
        if (!(n * theta <= total + kConservationSlack && total < (n + 1.0) * theta + kConservationSlack)) {
          return {false, fmt("clip %.0f: spikes %.0f theta %.17g integral %.17g", clip_index, n, theta, total)};
        }
        ++pixels;
      }
    }
  }
  return {true, "1000 clips, " + std::to_string(pixels) + " pixels within bounds"};
}

// ---------------------------------------------------------------------------
// 4. Codec.

SpikeStream random_stream(std::size_t w, std::size_t h, std::size_t t, std::mt19937_64& rng) {
  SpikeStream s(w, h, t);
  auto bytes = s.packed_mutable();
  for (auto& b : bytes) b = static_cast<std::uint8_t>(rng());
  const std::size_t bits = w * h * t;
  if (bits % 8 != 0) bytes.back() &= static_cast<std::uint8_t>((1u << (bits % 8)) - 1u);
  return s;
}

Verdict codec() {
  std::mt19937_64 rng(404);
  std::uniform_int_distribution<std::size_t> w(1, 400), h(1, 250), t(1, 128);
  std::size_t seeks = 0;
  for (int i = 0; i < 500; ++i) {
    const SpikeStream s = i == 0 ? random_stream(400, 250, 128, rng) : random_stream(w(rng), h(rng), t(rng), rng);
    const auto bytes = encode_stream(s);
    if (!(decode_stream(bytes) == s)) return {false, "round trip differs on stream " + std::to_string(i)};
    std::istringstream in(std::string(bytes.begin(), bytes.end()));
    SpikeStreamReader reader(in);
    std::uniform_int_distribution<std::size_t> tick(0, s.num_ticks() - 1);
    for (int k = 0; k < 3; ++k) {
      const std::size_t at = tick(rng);
      if (reader.read_frame(at) != s.frame(at)) return {false, "seek differs at tick " + std::to_string(at)};
      ++seeks;
    }
  }
  return {true, "500 streams up to 400x250x128 bit-exact, " + std::to_string(seeks) + " seeks match"};
}

// ---------------------------------------------------------------------------
// 5. TFI.

Verdict tfi() {
  const double max_gray = 255.0;
  const double intensity = 1.0 / 32.0;  // dyadic, so accumulation is exact
  std::size_t checked = 0;
  for (int k = 1; k <= 16; ++k) {
    const double theta = k * intensity;
    const std::size_t ticks = 8 * static_cast<std::size_t>(k) + 10;
    const SpikeStream s = simulate_spikes(IntensityClip(3, 2, ticks, intensity), theta);
    // Interior: from the first spike up to the last.
    std::size_t first = ticks, last = 0;
    for (std::size_t t = 0; t < ticks; ++t) {
      if (s.get(t, 0, 0)) {
        first = std::min(first, t);
        last = t;
      }
    }
    if (first >= last) return {false, "fewer than two spikes for k = " + std::to_string(k)};
    const double want = max_gray / k;
    for (std::size_t t = first; t <= last; ++t) {
      for (double v : tfi_reconstruct(s, t, max_gray).values) {
        if (v != want) return {false, fmt("k=%.0f tick %.0f: %.17g != %.17g", k, static_cast<double>(t), v, want)};
        ++checked;
      }
    }
  }
  return {true, "k = 1..16 exact at " + std::to_string(checked) + " interior pixel-ticks"};
}

// ---------------------------------------------------------------------------
// 6. Metric oracles.

constexpr double kMetricTolerance = 1e-10;
constexpr double kSsimTolerance = 1e-6;

Verdict metric_oracles() {
  std::mt19937_64 rng(606);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::bernoulli_distribution fg(0.4);
  double worst = 0.0, worst_ssim = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> p(64), g(64), q(64);
    for (auto& v : p) v = u(rng);
    for (auto& v : g) v = fg(rng) ? 1.0 : 0.0;
    for (auto& v : q) v = u(rng);
    const double errs[] = {std::abs(mae(p, g) - oracle::mae(p, g)),
                           std::abs(mean_f_beta(p, g) - oracle::adaptive_f(p, g)),
                           std::abs(max_f_beta(p, g) - oracle::max_f(p, g)),
                           std::abs(psnr(p, q) - oracle::psnr(p, q))};
    for (double e : errs) worst = std::max(worst, e);
    worst_ssim = std::max(worst_ssim, std::abs(ssim(p, q, 8, 8) - oracle::ssim(p, q, 8, 8)));
  }
  const double worked = f_beta(0.5, 0.5);
  const bool pass = worst < kMetricTolerance && worst_ssim < kSsimTolerance && std::abs(worked - 0.5) < 1e-15;
  return {pass, fmt("200 pairs: worst err %.2e (tol 1e-10), SSIM %.2e (tol 1e-6); F(0.5, 0.5) = %.17g", worst,
                    worst_ssim, worked)};
}

// ---------------------------------------------------------------------------
// 7. Transport oracle and critic.

constexpr double kCriticRelativeError = 0.2;
constexpr std::size_t kCriticSteps = 2000;
constexpr double kCriticBudgetSeconds = 60.0;

Verdict transport() {
  std::vector<std::vector<int>> hists;
  for (int a = 0; a <= 4; ++a)
    for (int b = 0; a + b <= 4; ++b)
      for (int c = 0; a + b + c <= 4; ++c) hists.push_back({a, b, c, 4 - a - b - c});
  std::size_t pairs = 0;
  for (const auto& p : hists) {
    for (const auto& q : hists) {
      std::vector<double> pd(4), qd(4);
      for (int i = 0; i < 4; ++i) {
        pd[i] = p[i] / 4.0;
        qd[i] = q[i] / 4.0;
      }
      if (std::abs(em_exact_1d(pd, qd) - oracle::em_enumerate(p, q) / 4.0) > 1e-12) {
        return {false, "em_exact_1d disagrees with enumeration"};
      }
      ++pairs;
    }
  }

  std::mt19937_64 rng(707);
  std::uniform_int_distribution<std::size_t> bins(2, 12);
  std::uniform_real_distribution<double> mass(0.0, 1.0);
  auto histogram = [&](std::size_t n) {
    std::vector<double> h(n);
    double total = 0.0;
    for (auto& v : h) total += (v = mass(rng));
    for (auto& v : h) v /= total;
    return h;
  };
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = bins(rng);
    const auto a = histogram(n), b = histogram(n), c = histogram(n);
    const double ab = em_exact_1d(a, b), ba = em_exact_1d(b, a), bc = em_exact_1d(b, c), ac = em_exact_1d(a, c);
    const bool ok = em_exact_1d(a, a) == 0.0 && ab > 0.0 && std::abs(ab - ba) <= 1e-12 && ac <= ab + bc + 1e-12;
    if (!ok) return {false, "metric axiom violated on triple " + std::to_string(trial)};
  }

  const auto t0 = Clock::now();
  const std::vector<double> pred = {0.5, 0.5, 0, 0, 0, 0, 0, 0};
  const std::vector<double> target = {0, 0, 0, 0, 0, 0.5, 0.5, 0};
  const auto fit = testing_support::fit_critic_1d(pred, target, kCriticSteps, 7);
  const double elapsed = seconds_since(t0);
  const double rel = std::abs(fit.estimate - fit.exact) / fit.exact;
  const bool pass = rel < kCriticRelativeError && elapsed < kCriticBudgetSeconds;
  return {pass, std::to_string(pairs) + " histogram pairs exact, 1000 triples satisfy the axioms; critic estimate " +
                    fmt("%.4f vs exact %.4f (rel err %.3f) after %.0f steps", fit.estimate, fit.exact, rel,
                        static_cast<double>(kCriticSteps)) +
                    fmt(", %.1f s", elapsed)};
}

// ---------------------------------------------------------------------------
// 8. Directional reproduction.

constexpr std::size_t kDirectionalClips = 64;
constexpr std::size_t kDirectionalSize = 32;
constexpr std::size_t kDirectionalTicks = 40;
constexpr std::uint64_t kDirectionalDataSeed = 1;
constexpr std::size_t kDirectionalEpochs = 100;

double validation_mae(const std::vector<RecordedSample>& recorded, std::size_t T, Fusion fusion, DistanceKind distance,
                      bool use_sg, std::uint64_t seed) {
  InputOptions in;
  in.time_steps = T;
  const auto examples = make_examples(recorded, in);
  ModelConfig m;
  m.attention.fusion = fusion;
  TrainConfig cfg;
  cfg.time_steps = T;
  cfg.epochs = kDirectionalEpochs;
  cfg.seed = seed;
  cfg.distance = distance;
  cfg.use_sg = use_sg;
  cfg.input_size = kDirectionalSize;
  FitResult fitted = fit(examples, m, cfg);
  return evaluate(fitted.model, examples, &fitted.result.split.validation).mae;
}

Verdict directional() {
  const auto synthetic = make_synthetic_dataset(
      {Scenario::kConstantLight, Scenario::kBrightnessRamp, Scenario::kShadowOcclusion}, kDirectionalDataSeed,
      {kDirectionalSize, kDirectionalSize, kDirectionalTicks}, kDirectionalClips);
  const auto recorded = record_samples(synthetic, 1.0);
  const char* names[] = {"a (T5 <= T1)", "b (SG <= no SG)", "c (SOTA <= OR)", "d (EM <= JS)"};
  int votes[4] = {0, 0, 0, 0};
  std::ostringstream detail;
  const std::uint64_t seeds[] = {1, 2, 3};
  for (std::uint64_t seed : seeds) {
    const auto t0 = Clock::now();
    const double full = validation_mae(recorded, 5, Fusion::kSota, DistanceKind::kEm, true, seed);
    const double single = validation_mae(recorded, 1, Fusion::kSota, DistanceKind::kEm, true, seed);
    const double no_sg = validation_mae(recorded, 5, Fusion::kSota, DistanceKind::kEm, false, seed);
    const double or_fusion = validation_mae(recorded, 5, Fusion::kOr, DistanceKind::kEm, true, seed);
    const double js = validation_mae(recorded, 5, Fusion::kSota, DistanceKind::kJs, true, seed);
    const bool holds[] = {full <= single, full <= no_sg, full <= or_fusion, full <= js};
    for (int k = 0; k < 4; ++k) votes[k] += holds[k];
    detail << "seed " << seed
           << fmt(": full %.4f T1 %.4f noSG %.4f ", full, single, no_sg)
           << fmt("OR %.4f JS %.4f", or_fusion, js) << fmt(" (%.0f s); ", seconds_since(t0));
    std::cout << "  [8] seed " << seed << fmt(" full %.4f T1 %.4f noSG %.4f OR %.4f", full, single, no_sg, or_fusion)
              << fmt(" JS %.4f", js) << std::endl;
  }
  Verdict v;
  for (int k = 0; k < 4; ++k) {
    const bool majority = votes[k] >= 2;
    v.pass = v.pass && majority;
    detail << names[k] << " " << votes[k] << "/3" << (majority ? "" : " FAILED") << (k < 3 ? ", " : "");
  }
  v.detail = detail.str();
  return v;
}

// ---------------------------------------------------------------------------
// 9. Energy estimator.

Verdict energy() {
  SaliencyNet net(ModelConfig{}, 3);
  const auto zero = energy_estimate(net, Tensor::zeros({1, 1, 1, 32, 32}));
  if (zero.accumulates != 0) return {false, "zero input counted " + std::to_string(zero.accumulates) + " ACs"};

  // AC count of the first spiking layer against Bernoulli input density.
  const CbsBlock& first = net.pyramid.blocks[0];
  const std::size_t C = first.conv.weight.dim(1);
  std::mt19937_64 rng(909);
  std::vector<double> xs, ys;
  for (int i = 1; i <= 10; ++i) {
    const double density = 0.05 * i;
    std::bernoulli_distribution fire(density);
    Tensor x = Tensor::zeros({1, 1, C, 32, 32});
    for (double& v : x.mutable_data()) v = fire(rng) ? 1.0 : 0.0;
    NoGradGuard ng;
    OpCounter counter;
    OpCounterScope scope(counter);
    first.forward(x, false);
    xs.push_back(density);
    ys.push_back(static_cast<double>(counter.accumulates));
  }
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) mx += xs[i] / n, my += ys[i] / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  const double r2 = sxy * sxy / (sxx * syy);

  const auto synthetic = make_synthetic_dataset({Scenario::kConstantLight}, 1, {32, 32, 40}, 1);
  const auto recorded = record_samples(synthetic, 1.0);
  InputOptions one, five;
  five.time_steps = 5;
  const double e1 = energy_estimate(net, batch_frames(make_examples(recorded, one), {0})).energy_mj;
  const double e5 = energy_estimate(net, batch_frames(make_examples(recorded, five), {0})).energy_mj;
  const double ratio = e5 / e1;
  return {r2 > 0.99 && ratio >= 3.0 && ratio <= 10.0,
          fmt("zero input 0 ACs; AC vs density R^2 = %.6f; T5/T1 energy %.4f / %.4f mJ = %.3f", r2, e5, e1, ratio)};
}

// ---------------------------------------------------------------------------
// 10. Determinism through the command line.

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Verdict determinism() {
  const fs::path root = fs::temp_directory_path() / "spikesal_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  auto run = [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return std::make_pair(code, out.str() + err.str());
  };
  const std::string ds = (root / "ds").string();
  if (run({"gen-data", "--count", "12", "--size", "16", "--ticks", "24", "--seed", "4", "--out", ds}).first != 0) {
    return {false, "gen-data failed"};
  }
  std::vector<std::string> artifacts;
  // Both runs use the same paths so the echoed configs can be compared too.
  const fs::path dir = root / "run";
  for (int attempt = 0; attempt < 2; ++attempt) {
    fs::remove_all(dir);
    const auto t = run({"--deterministic", "train", "--dataset", ds, "--out", (dir / "train").string(), "--epochs",
                        "2", "--time-steps", "2", "--seed", "9"});
    if (t.first != 0) return {false, "train failed: " + t.second};
    const auto e = run({"--deterministic", "eval", "--checkpoint", (dir / "train" / "model.ckpt").string(),
                        "--dataset", ds, "--out", (dir / "eval").string()});
    if (e.first != 0) return {false, "eval failed: " + e.second};
    std::string all = e.second;
    for (const char* f : {"model.ckpt", "critic.ckpt", "train_log.jsonl", "metrics.json", "config.json"}) {
      all += slurp(dir / "train" / f);
    }
    all += slurp(dir / "eval" / "metrics.json");
    artifacts.push_back(all);
  }
  fs::remove_all(root);
  const bool same = artifacts[0] == artifacts[1];
  return {same, same ? "two --deterministic train + eval runs are byte-identical (" +
                           std::to_string(artifacts[0].size()) + " bytes compared)"
                     : "outputs differ between runs"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"gradient integrity", gradient_integrity},
      {"LIF exactness", lif_exactness},
      {"spike conservation", spike_conservation},
      {"codec", codec},
      {"TFI", tfi},
      {"metric oracles", metric_oracles},
      {"transport oracle and critic", transport},
      {"directional reproduction", directional},
      {"energy estimator", energy},
      {"determinism", determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = criteria[k].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failures += !v.pass;
    std::cout << "criterion " << id << " " << (v.pass ? "PASS" : "FAIL") << " " << criteria[k].first << ": "
              << v.detail << fmt(" [%.1f s]", seconds_since(t0)) << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
