// SPDX-License-Identifier: Apache-2.0
#pragma once

// Joint objective, the alternating critic/generator loop, evaluation,
// per-class pixel ratios and the theoretical energy estimate.

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "spikesal/dataset.hpp"
#include "spikesal/global_debias.hpp"
#include "spikesal/micro_debias.hpp"

namespace spikesal {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Loss went non-finite; the message names the step and the term.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t step, std::string term, double value);
  std::size_t step() const { return step_; }
  const std::string& term() const { return term_; }

 private:
  std::size_t step_;
  std::string term_;
};

struct TrainConfig {
  double lr = 2e-4;
  double weight_decay = 2e-5;
  std::size_t batch_size = 2;
  std::size_t time_steps = 1;
  double alpha = 1.0;  // weight on BCE + IoU + SSIM
  double penalty_coef = 10.0;
  std::size_t critic_ratio = 5;  // critic steps per generator step
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  std::size_t input_size = 32;
  bool use_sg = true;                         // false: no distribution term at all
  DistanceKind distance = DistanceKind::kEm;  // EM uses the critic, others map_distance
  std::size_t critic_channels = 8;
  double validation_fraction = 0.25;

  /// Throws ConfigError naming the first bad field.
  void validate() const;
};

struct JointLossTerms {
  double bce = 0.0;
  double iou = 0.0;   // 1 - soft IoU
  double ssim = 0.0;  // 1 - SSIM
  double original = 0.0;
  double mse = 0.0;
  double d_em = 0.0;      // mean critic score of the prediction (subtracted)
  double distance = 0.0;  // ED/KL/JS term (added)
  double total = 0.0;
};

/// Mean over the batch of sum(p g) / sum(p + g - p g), with 1e-7 added to
/// both sums. pred, gt: [B, 1, H, W].
Tensor soft_iou(const Tensor& pred, const Tensor& gt);

/// Differentiable mean SSIM (same definition as the metric) over the batch.
Tensor ssim_index(const Tensor& pred, const Tensor& gt);

/// alpha * (BCE + 1 - IoU + 1 - SSIM) + MSE(pred, gt) - mean critic(pred),
/// with the critic frozen. When the config selects ED/KL/JS the critic term
/// is replaced by + map_distance(pred, gt); with use_sg off neither is added.
/// `source` only has to match the prediction's shape. gt outside [0, 1] is
/// an InputError.
Tensor joint_loss(const Tensor& pred, const Tensor& gt, const Tensor& source, const Critic* critic,
                  const TrainConfig& cfg, JointLossTerms* terms = nullptr);

struct ClassPixelRatio {
  std::string label;
  std::size_t samples = 0;
  double predicted_ratio = 0.0;  // mean fraction of pixels with pred >= 0.5
  double gt_ratio = 0.0;
};

/// Per-class mean salient-pixel fractions. Classes listed in `classes` with
/// no samples are skipped and reported through `warnings`; an empty
/// `classes` means every label present, in sorted order.
std::vector<ClassPixelRatio> pixel_ratio_analysis(const std::vector<Tensor>& preds, const std::vector<Tensor>& gts,
                                                  const std::vector<std::string>& labels,
                                                  const std::vector<std::string>& classes = {},
                                                  std::vector<std::string>* warnings = nullptr);

inline constexpr double kAccumulatePicojoules = 0.9;
inline constexpr double kMultiplyAccumulatePicojoules = 4.6;

struct EnergyReport {
  std::uint64_t accumulates = 0;
  std::uint64_t multiply_accumulates = 0;
  double energy_mj = 0.0;
};

double energy_millijoules(std::uint64_t accumulates, std::uint64_t multiply_accumulates);

/// Counts the work of one inference pass over frames [T, B, 1, H, W].
EnergyReport energy_estimate(const SaliencyNet& model, const Tensor& frames);

struct MetricsReport {
  std::size_t samples = 0;
  double mae = 0.0;
  double mean_f_beta = 0.0;
  double max_f_beta = 0.0;
  double s_measure = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
  double energy_mj = 0.0;  // mean per sample
  std::vector<ClassPixelRatio> per_class_pixel_ratio;
};

/// Inference (eval mode) on the listed examples, or all when `indices` is
/// null. Every metric is the mean of per-image values; max F_beta is the
/// per-image maximum over thresholds. Samples run in parallel with results
/// reduced in index order. Missing masks: DatasetError listing the ids.
MetricsReport evaluate(const SaliencyNet& model, const std::vector<Example>& examples,
                       const std::vector<std::size_t>* indices = nullptr, std::vector<Tensor>* predictions = nullptr);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  std::size_t steps = 0;  // generator steps so far
  JointLossTerms generator;  // epoch means
  double critic_loss = 0.0;
  double em_gap = 0.0;
  double penalty = 0.0;
  std::optional<MetricsReport> validation;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  Split split;
};

/// Alternating loop: per batch, `critic_ratio` critic steps on f_net_loss
/// against the detached prediction, then one generator step on joint_loss.
/// Only the EM objective updates the critic. Both use Adam; the generator
/// with lr and weight_decay from the config, the critic with the same lr,
/// betas (0.5, 0.9) and no decay. Serial mode is bit-reproducible.
TrainResult train(SaliencyNet& model, Critic& critic, const std::vector<Example>& examples, const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

/// SaliencyNet(model, cfg.seed).
SaliencyNet initial_model(const ModelConfig& model, const TrainConfig& cfg);
/// ConvCritic with cfg.critic_channels, seeded from cfg.seed.
ConvCritic initial_critic(const TrainConfig& cfg);

struct FitResult {
  SaliencyNet model;
  ConvCritic critic;
  TrainResult result;
};

/// initial_model + initial_critic + train.
FitResult fit(const std::vector<Example>& examples, const ModelConfig& model, const TrainConfig& cfg,
              const std::function<void(const EpochLog&)>& on_epoch = {});

nlohmann::json to_json(const TrainConfig& cfg);
/// Fills fields present in `j`; unknown keys are a ConfigError.
void from_json_strict(const nlohmann::json& j, TrainConfig& cfg);
nlohmann::json to_json(const JointLossTerms& t);
nlohmann::json to_json(const ClassPixelRatio& r);
nlohmann::json to_json(const MetricsReport& r);
nlohmann::json to_json(const EpochLog& e);
nlohmann::json to_json(const EnergyReport& e);

}  // namespace spikesal
