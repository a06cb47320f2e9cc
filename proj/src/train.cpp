// SPDX-License-Identifier: Apache-2.0
#include "spikesal/train.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "spikesal/metrics.hpp"
#include "spikesal/parallel.hpp"

namespace spikesal {

using nlohmann::json;

namespace {

constexpr double kIouSmoothing = 1e-7;

Tensor per_sample(const Tensor& x) { return reshape(x, {x.dim(0), x.numel() / x.dim(0)}); }

std::string describe(double v) {
  if (std::isnan(v)) return "nan";
  return v > 0 ? "+inf" : "-inf";
}

void require_finite(std::size_t step, const char* term, double v) {
  if (!std::isfinite(v)) throw DivergenceError(step, term, v);
}

void check_map_batch(const Tensor& t, const char* what) {
  if (t.ndim() != 4 || t.dim(1) != 1) {
    throw ShapeError("joint_loss", std::string(what) + " must be [B,1,H,W], got " + to_string(t.shape()));
  }
}

}  // namespace

DivergenceError::DivergenceError(std::size_t step, std::string term, double value)
    : std::runtime_error("diverged at step " + std::to_string(step) + ": term '" + term + "' is " + describe(value)),
      step_(step),
      term_(std::move(term)) {}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be nonnegative");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (time_steps == 0) throw ConfigError("time_steps must be at least 1");
  if (!(alpha >= 0.0)) throw ConfigError("alpha must be nonnegative");
  if (!(penalty_coef >= 0.0)) throw ConfigError("penalty_coef must be nonnegative");
  if (critic_ratio == 0) throw ConfigError("critic_ratio must be at least 1");
  if (input_size == 0 || input_size % 16 != 0) throw ConfigError("input_size must be a positive multiple of 16");
  if (critic_channels == 0) throw ConfigError("critic_channels must be at least 1");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("validation_fraction must be in [0, 1)");
  }
}

Tensor soft_iou(const Tensor& pred, const Tensor& gt) {
  check_map_batch(pred, "pred");
  Tensor inter = sum_dim(per_sample(mul(pred, gt)), 1);
  Tensor uni = sum_dim(per_sample(sub(add(pred, gt), mul(pred, gt))), 1);
  return mean(div(add_scalar(inter, kIouSmoothing), add_scalar(uni, kIouSmoothing)));
}

Tensor ssim_index(const Tensor& pred, const Tensor& gt) {
  check_map_batch(pred, "pred");
  const std::size_t k = kSsimWindow;
  if (pred.dim(2) < k || pred.dim(3) < k) {
    throw ShapeError("ssim_index", "maps smaller than the SSIM window: " + to_string(pred.shape()));
  }
  const Tensor box = Tensor::full({1, 1, k, k}, 1.0 / static_cast<double>(k * k));
  auto avg = [&](const Tensor& x) { return conv2d(x, box, Tensor(), 1, 0); };
  Tensor mx = avg(pred), my = avg(gt);
  Tensor vx = sub(avg(square(pred)), square(mx));
  Tensor vy = sub(avg(square(gt)), square(my));
  Tensor cxy = sub(avg(mul(pred, gt)), mul(mx, my));
  const double c1 = kSsimK1 * kSsimK1, c2 = kSsimK2 * kSsimK2;
  Tensor num = mul(add_scalar(mul_scalar(mul(mx, my), 2.0), c1), add_scalar(mul_scalar(cxy, 2.0), c2));
  Tensor den = mul(add_scalar(add(square(mx), square(my)), c1), add_scalar(add(vx, vy), c2));
  return mean(div(num, den));
}

Tensor joint_loss(const Tensor& pred, const Tensor& gt, const Tensor& source, const Critic* critic,
                  const TrainConfig& cfg, JointLossTerms* terms) {
  check_map_batch(pred, "pred");
  if (gt.shape() != pred.shape() || source.shape() != pred.shape()) {
    throw ShapeError("joint_loss", "pred " + to_string(pred.shape()) + ", gt " + to_string(gt.shape()) +
                                       " and source " + to_string(source.shape()) + " must match");
  }
  const auto g = gt.data();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(g[i] >= 0.0 && g[i] <= 1.0)) {
      throw InputError("joint_loss: ground truth value " + std::to_string(g[i]) + " at index " + std::to_string(i) +
                       " is outside [0, 1]");
    }
  }
  const Tensor target = gt.detach();
  Tensor bce_t = bce(pred, target);
  Tensor iou_t = add_scalar(neg(soft_iou(pred, target)), 1.0);
  Tensor ssim_t = add_scalar(neg(ssim_index(pred, target)), 1.0);
  Tensor original = add(add(bce_t, iou_t), ssim_t);
  Tensor mse_t = mse(pred, target);
  Tensor loss = add(mul_scalar(original, cfg.alpha), mse_t);
  JointLossTerms t;
  if (cfg.use_sg && cfg.distance == DistanceKind::kEm) {
    if (critic == nullptr) throw InputError("joint_loss: the EM objective needs a critic");
    Tensor d_em = mean(critic_score(*critic, pred, true));
    t.d_em = d_em.item();
    loss = sub(loss, d_em);
  } else if (cfg.use_sg) {
    Tensor d = map_distance(cfg.distance, pred, target);
    t.distance = d.item();
    loss = add(loss, d);
  }
  if (terms) {
    t.bce = bce_t.item();
    t.iou = iou_t.item();
    t.ssim = ssim_t.item();
    t.original = original.item();
    t.mse = mse_t.item();
    t.total = loss.item();
    *terms = t;
  }
  return loss;
}

std::vector<ClassPixelRatio> pixel_ratio_analysis(const std::vector<Tensor>& preds, const std::vector<Tensor>& gts,
                                                  const std::vector<std::string>& labels,
                                                  const std::vector<std::string>& classes,
                                                  std::vector<std::string>* warnings) {
  if (preds.size() != gts.size() || preds.size() != labels.size()) {
    throw InputError("pixel_ratio_analysis: predictions, masks and labels differ in count");
  }
  struct Acc {
    std::size_t n = 0;
    double pred = 0.0, gt = 0.0;
  };
  std::map<std::string, Acc> acc;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto p = preds[i].data();
    const auto g = gts[i].data();
    if (p.size() != g.size() || p.empty()) {
      throw InputError("pixel_ratio_analysis: sample " + std::to_string(i) + " prediction and mask differ in size");
    }
    std::size_t sp = 0, sg = 0;
    for (std::size_t k = 0; k < p.size(); ++k) {
      sp += p[k] >= 0.5;
      sg += g[k] >= 0.5;
    }
    auto& a = acc[labels[i]];
    ++a.n;
    a.pred += static_cast<double>(sp) / static_cast<double>(p.size());
    a.gt += static_cast<double>(sg) / static_cast<double>(g.size());
  }
  std::vector<std::string> order = classes;
  if (order.empty()) {
    for (const auto& [label, _] : acc) order.push_back(label);
  }
  std::vector<ClassPixelRatio> out;
  for (const auto& label : order) {
    auto it = acc.find(label);
    if (it == acc.end()) {
      if (warnings) warnings->push_back("class '" + label + "' has no samples; omitted");
      continue;
    }
    const double n = static_cast<double>(it->second.n);
    out.push_back({label, it->second.n, it->second.pred / n, it->second.gt / n});
  }
  return out;
}

double energy_millijoules(std::uint64_t accumulates, std::uint64_t multiply_accumulates) {
  const double pj = static_cast<double>(accumulates) * kAccumulatePicojoules +
                    static_cast<double>(multiply_accumulates) * kMultiplyAccumulatePicojoules;
  return pj * 1e-9;
}

EnergyReport energy_estimate(const SaliencyNet& model, const Tensor& frames) {
  NoGradGuard no_grad;
  OpCounter counter;
  {
    OpCounterScope scope(counter);
    model.predict(frames, false);
  }
  return {counter.accumulates, counter.multiply_accumulates,
          energy_millijoules(counter.accumulates, counter.multiply_accumulates)};
}

MetricsReport evaluate(const SaliencyNet& model, const std::vector<Example>& examples,
                       const std::vector<std::size_t>* indices, std::vector<Tensor>* predictions) {
  std::vector<std::size_t> order;
  if (indices) {
    order = *indices;
  } else {
    order.resize(examples.size());
    std::iota(order.begin(), order.end(), 0);
  }
  if (order.empty()) throw DatasetError("evaluate: no samples");
  std::string missing;
  for (auto i : order) {
    if (!examples.at(i).mask.defined()) missing += (missing.empty() ? "" : ",") + std::to_string(examples[i].id);
  }
  if (!missing.empty()) throw DatasetError("evaluate: missing ground-truth masks for samples " + missing);

  struct PerSample {
    double mae, mean_f, max_f, s, psnr, ssim, energy;
    Tensor pred;
  };
  std::vector<PerSample> results(order.size());
  parallel_for(order.size(), [&](std::size_t j) {
    const Example& e = examples[order[j]];
    NoGradGuard no_grad;
    OpCounter counter;
    Tensor pred;
    {
      OpCounterScope scope(counter);
      pred = model.predict(batch_frames(examples, {order[j]}), false);
    }
    const auto p = pred.data();
    const auto g = e.mask.data();
    const std::size_t H = e.mask.dim(1), W = e.mask.dim(2);
    results[j] = {mae(p, g),
                  mean_f_beta(p, g),
                  max_f_beta(p, g),
                  s_measure(p, g, W, H),
                  psnr(p, g),
                  ssim(p, g, W, H),
                  energy_millijoules(counter.accumulates, counter.multiply_accumulates),
                  reshape(pred, {1, H, W})};
  });
  MetricsReport r;
  r.samples = order.size();
  std::vector<Tensor> preds, gts;
  std::vector<std::string> labels;
  for (std::size_t j = 0; j < order.size(); ++j) {
    const auto& s = results[j];
    r.mae += s.mae;
    r.mean_f_beta += s.mean_f;
    r.max_f_beta += s.max_f;
    r.s_measure += s.s;
    r.psnr += s.psnr;
    r.ssim += s.ssim;
    r.energy_mj += s.energy;
    preds.push_back(s.pred);
    gts.push_back(examples[order[j]].mask);
    labels.push_back(examples[order[j]].label);
  }
  const double n = static_cast<double>(order.size());
  r.mae /= n;
  r.mean_f_beta /= n;
  r.max_f_beta /= n;
  r.s_measure /= n;
  r.psnr /= n;
  r.ssim /= n;
  r.energy_mj /= n;
  r.per_class_pixel_ratio = pixel_ratio_analysis(preds, gts, labels);
  if (predictions) *predictions = std::move(preds);
  return r;
}

TrainResult train(SaliencyNet& model, Critic& critic, const std::vector<Example>& examples, const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.validate();
  if (examples.empty()) throw DatasetError("train: empty dataset");
  for (const auto& e : examples) {
    if (e.frames.dim(0) != cfg.time_steps || e.frames.dim(2) != cfg.input_size || e.frames.dim(3) != cfg.input_size) {
      throw ConfigError("train: sample " + std::to_string(e.id) + " frames " + to_string(e.frames.shape()) +
                        " do not match time_steps " + std::to_string(cfg.time_steps) + " and input_size " +
                        std::to_string(cfg.input_size));
    }
    if (!e.mask.defined()) throw DatasetError("train: sample " + std::to_string(e.id) + " has no mask");
  }
  TrainResult result;
  result.split = split_examples(examples.size(), cfg.validation_fraction);
  const bool critic_active = cfg.use_sg && cfg.distance == DistanceKind::kEm;

  AdamOptions gen_opt;
  gen_opt.lr = cfg.lr;
  gen_opt.weight_decay = cfg.weight_decay;
  Adam gen_adam(model.parameters(), gen_opt);
  AdamOptions critic_opt;
  critic_opt.lr = cfg.lr;
  critic_opt.beta1 = 0.5;
  critic_opt.beta2 = 0.9;
  critic_opt.weight_decay = 0.0;
  Adam critic_adam(critic.parameters(), critic_opt);

  std::mt19937_64 rng(cfg.seed);
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = result.split.train;
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog log;
    log.epoch = epoch;
    std::size_t batches = 0, critic_steps = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(
                                                               std::min(order.size(), start + cfg.batch_size)));
      ++step;
      Tensor frames = batch_frames(examples, batch);
      Tensor gt = batch_masks(examples, batch);
      Tensor source = mean_dim(frames, 0);

      model.zero_grad();
      Tensor pred = model.predict(frames, true);
      require_finite(step, "prediction", sum(pred.detach()).item());

      if (critic_active) {
        const Tensor fake = pred.detach();
        for (std::size_t r = 0; r < cfg.critic_ratio; ++r) {
          critic_adam.zero_grad();
          FNetTerms ft;
          Tensor closs = f_net_loss(gt, fake, critic, cfg.penalty_coef, rng, &ft);
          require_finite(step, "critic_em_gap", ft.em_gap);
          require_finite(step, "critic_penalty", ft.penalty);
          closs.backward();
          critic_adam.step();
          log.critic_loss += closs.item();
          log.em_gap += ft.em_gap;
          log.penalty += ft.penalty;
          ++critic_steps;
        }
      }

      JointLossTerms jt;
      Tensor loss = joint_loss(pred, gt, source, critic_active ? &critic : nullptr, cfg, &jt);
      require_finite(step, "bce", jt.bce);
      require_finite(step, "iou", jt.iou);
      require_finite(step, "ssim", jt.ssim);
      require_finite(step, "mse", jt.mse);
      require_finite(step, "d_em", jt.d_em);
      require_finite(step, "distance", jt.distance);
      require_finite(step, "total", jt.total);
      critic.zero_grad();
      loss.backward();
      gen_adam.step();

      log.generator.bce += jt.bce;
      log.generator.iou += jt.iou;
      log.generator.ssim += jt.ssim;
      log.generator.original += jt.original;
      log.generator.mse += jt.mse;
      log.generator.d_em += jt.d_em;
      log.generator.distance += jt.distance;
      log.generator.total += jt.total;
      ++batches;
    }
    if (batches > 0) {
      const double b = static_cast<double>(batches);
      auto& g = log.generator;
      for (double* v : {&g.bce, &g.iou, &g.ssim, &g.original, &g.mse, &g.d_em, &g.distance, &g.total}) *v /= b;
    }
    if (critic_steps > 0) {
      const double c = static_cast<double>(critic_steps);
      log.critic_loss /= c;
      log.em_gap /= c;
      log.penalty /= c;
    }
    log.steps = step;
    if (!result.split.validation.empty()) log.validation = evaluate(model, examples, &result.split.validation);
    if (on_epoch) on_epoch(log);
    result.epochs.push_back(std::move(log));
  }
  return result;
}

SaliencyNet initial_model(const ModelConfig& model, const TrainConfig& cfg) { return SaliencyNet(model, cfg.seed); }

ConvCritic initial_critic(const TrainConfig& cfg) {
  std::mt19937_64 rng(cfg.seed ^ 0xc2b2ae3d27d4eb4fULL);
  return ConvCritic(cfg.critic_channels, rng);
}

FitResult fit(const std::vector<Example>& examples, const ModelConfig& model, const TrainConfig& cfg,
              const std::function<void(const EpochLog&)>& on_epoch) {
  FitResult f{initial_model(model, cfg), initial_critic(cfg), {}};
  f.result = train(f.model, f.critic, examples, cfg, on_epoch);
  return f;
}

json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"batch_size", c.batch_size},
          {"time_steps", c.time_steps},
          {"alpha", c.alpha},
          {"penalty_coef", c.penalty_coef},
          {"critic_ratio", c.critic_ratio},
          {"epochs", c.epochs},
          {"seed", c.seed},
          {"input_size", c.input_size},
          {"use_sg", c.use_sg},
          {"distance", to_string(c.distance)},
          {"critic_channels", c.critic_channels},
          {"validation_fraction", c.validation_fraction}};
}

void from_json_strict(const json& j, TrainConfig& c) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "lr") {
        c.lr = value.get<double>();
      } else if (key == "weight_decay") {
        c.weight_decay = value.get<double>();
      } else if (key == "batch_size") {
        c.batch_size = value.get<std::size_t>();
      } else if (key == "time_steps") {
        c.time_steps = value.get<std::size_t>();
      } else if (key == "alpha") {
        c.alpha = value.get<double>();
      } else if (key == "penalty_coef") {
        c.penalty_coef = value.get<double>();
      } else if (key == "critic_ratio") {
        c.critic_ratio = value.get<std::size_t>();
      } else if (key == "epochs") {
        c.epochs = value.get<std::size_t>();
      } else if (key == "seed") {
        c.seed = value.get<std::uint64_t>();
      } else if (key == "input_size") {
        c.input_size = value.get<std::size_t>();
      } else if (key == "use_sg") {
        c.use_sg = value.get<bool>();
      } else if (key == "distance") {
        c.distance = parse_distance(value.get<std::string>());
      } else if (key == "critic_channels") {
        c.critic_channels = value.get<std::size_t>();
      } else if (key == "validation_fraction") {
        c.validation_fraction = value.get<double>();
      } else {
        throw ConfigError("unknown train config key '" + key + "'");
      }
    } catch (const json::exception& e) {
      throw ConfigError("train config key '" + key + "': " + e.what());
    }
  }
}

json to_json(const JointLossTerms& t) {
  return {{"bce", t.bce}, {"iou", t.iou},   {"ssim", t.ssim},         {"original", t.original},
          {"mse", t.mse}, {"d_em", t.d_em}, {"distance", t.distance}, {"total", t.total}};
}

json to_json(const ClassPixelRatio& r) {
  return {{"label", r.label}, {"samples", r.samples}, {"predicted_ratio", r.predicted_ratio}, {"gt_ratio", r.gt_ratio}};
}

json to_json(const MetricsReport& r) {
  json ratios = json::array();
  for (const auto& c : r.per_class_pixel_ratio) ratios.push_back(to_json(c));
  return {{"samples", r.samples},     {"mae", r.mae},   {"mean_f_beta", r.mean_f_beta},
          {"max_f_beta", r.max_f_beta}, {"s_measure", r.s_measure}, {"psnr", r.psnr},
          {"ssim", r.ssim},           {"energy_mj", r.energy_mj}, {"per_class_pixel_ratio", ratios}};
}

json to_json(const EpochLog& e) {
  json j = {{"epoch", e.epoch},
            {"steps", e.steps},
            {"generator", to_json(e.generator)},
            {"critic", {{"loss", e.critic_loss}, {"em_gap", e.em_gap}, {"penalty", e.penalty}}},
            {"validation", nullptr}};
  if (e.validation) j["validation"] = to_json(*e.validation);
  return j;
}

json to_json(const EnergyReport& e) {
  return {{"accumulates", e.accumulates}, {"multiply_accumulates", e.multiply_accumulates}, {"energy_mj", e.energy_mj}};
}

}  // namespace spikesal
