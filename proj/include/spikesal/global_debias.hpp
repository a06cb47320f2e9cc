// SPDX-License-Identifier: Apache-2.0
#pragma once

// Critic networks (potentials), the adversarial transport losses and the
// distribution distances used for global alignment of saliency maps.

#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "spikesal/module.hpp"

namespace spikesal {

class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A scalar potential over single-channel maps.
class Critic : public Module {
 public:
  /// x: [N, 1, H, W] -> [N]. With `frozen` the parameters enter the graph
  /// detached, so gradients reach only the input.
  virtual Tensor score(const Tensor& x, bool frozen) const = 0;
  virtual std::string kind() const = 0;
};

/// conv3x3/s2 -> leaky ReLU -> conv3x3/s2 -> leaky ReLU -> spatial mean -> linear.
class ConvCritic : public Critic {
 public:
  ConvCritic(std::size_t channels, std::mt19937_64& rng);
  Tensor score(const Tensor& x, bool frozen) const override;
  std::string kind() const override { return "conv"; }
  void collect(const std::string& prefix, NamedTensors& params, NamedTensors& buffers) const override;

  Conv2d conv1, conv2;
  Linear head;
};

/// Flattened map -> two hidden leaky-ReLU layers -> scalar.
class MlpCritic : public Critic {
 public:
  MlpCritic(std::size_t inputs, std::size_t hidden, std::mt19937_64& rng);
  Tensor score(const Tensor& x, bool frozen) const override;
  std::string kind() const override { return "mlp"; }
  void collect(const std::string& prefix, NamedTensors& params, NamedTensors& buffers) const override;

  Linear l1, l2, l3;
};

/// phi(x) = <w, vec(x)> + b. Zero-initialised.
class LinearCritic : public Critic {
 public:
  explicit LinearCritic(std::size_t inputs);
  Tensor score(const Tensor& x, bool frozen) const override;
  std::string kind() const override { return "linear"; }
  void collect(const std::string& prefix, NamedTensors& params, NamedTensors& buffers) const override;

  Tensor weight;  // [inputs]
  Tensor bias;    // [1]
};

/// Scores a batch [N, 1, H, W] (or one map [1, H, W], giving shape [1]).
/// NaN anywhere in the input is an InputError.
Tensor critic_score(const Critic& critic, const Tensor& maps, bool frozen = false);

/// Per-sample mean squared difference: [N].
Tensor transport_cost(const Tensor& a, const Tensor& b);

/// mean c(source, pred) - mean phi(pred), critic frozen.
Tensor t_net_loss(const Tensor& pred, const Tensor& source, const Critic& critic);

struct FNetTerms {
  double em_gap = 0.0;   // mean phi(target) - mean phi(pred)
  double penalty = 0.0;  // coef * mean (|grad phi(x_hat)| - 1)^2
};

/// -(mean phi(target) - mean phi(pred)) + penalty, with pred detached.
/// Interpolation weights are drawn per sample from `rng`.
Tensor f_net_loss(const Tensor& target, const Tensor& pred, const Critic& critic, double penalty_coef,
                  std::mt19937_64& rng, FNetTerms* terms = nullptr);

/// Exact 1-D earth mover's distance with ground cost |i - j| (bin units).
double em_exact_1d(const std::vector<double>& p, const std::vector<double>& q);

enum class DistanceKind { kEm, kEd, kKl, kJs };

std::string to_string(DistanceKind k);
/// Accepts "em", "ed", "kl", "js" (case-insensitive).
DistanceKind parse_distance(const std::string& name);

inline constexpr double kDistanceSmoothing = 1e-8;

/// Distances between two nonnegative vectors. KL and JS normalise and
/// smooth both inputs by kDistanceSmoothing; ED uses them as given; EM
/// normalises and uses the exact 1-D solver.
double ablation_distance(DistanceKind kind, const std::vector<double>& p, const std::vector<double>& q);

/// Differentiable ED/KL/JS between per-sample normalised maps, averaged over
/// the batch: D(pred || target). EM is critic-based and rejected here.
Tensor map_distance(DistanceKind kind, const Tensor& pred, const Tensor& target);

}  // namespace spikesal
