// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>
#include <string>
#include <vector>

#include "spikesal/checkpoint.hpp"
#include "spikesal/ops.hpp"
#include "spikesal/tensor.hpp"

namespace spikesal {

/// Anything holding trainable parameters and non-trainable buffers.
class Module {
 public:
  virtual ~Module() = default;

  /// Appends "prefix.name" entries for parameters and buffers.
  virtual void collect(const std::string& prefix, NamedTensors& params, NamedTensors& buffers) const = 0;

  std::vector<Tensor> parameters() const;
  NamedTensors named_parameters() const;
  /// Parameters followed by buffers; what a checkpoint stores.
  NamedTensors state() const;
  /// Copies values from `entries` into this module's tensors in place.
  /// Missing or mis-shaped entries are errors; extra entries are ignored.
  void load_state(const NamedTensors& entries);
  void zero_grad();
};

std::string join_name(const std::string& prefix, const std::string& name);

/// Uniform fan-in initialisation: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Tensor init_uniform_fan_in(Shape shape, std::size_t fan_in, std::mt19937_64& rng);

class Conv2d : public Module {
 public:
  Conv2d() = default;
  Conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, ConvParams params, bool bias,
         std::mt19937_64& rng);

  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, NamedTensors& params, NamedTensors& buffers) const override;

  Tensor weight;
  Tensor bias;  // undefined when disabled
  ConvParams params;
};

class BatchNorm2d : public Module {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(std::size_t channels, double momentum = 0.1, double eps = 1e-5);

  Tensor forward(const Tensor& x, bool training) const;
  void collect(const std::string& prefix, NamedTensors& params, NamedTensors& buffers) const override;

  Tensor gamma, beta;
  Tensor running_mean, running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

/// y = x W^T + b for x of shape [N, in].
class Linear : public Module {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, std::mt19937_64& rng);

  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, NamedTensors& params, NamedTensors& buffers) const override;

  Tensor weight;  // [out, in]
  Tensor bias;    // [out]
};

struct AdamOptions {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 2e-5;  // L2 term added to the gradient
};

class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamOptions options);

  /// Updates every parameter that has an accumulated gradient.
  void step();
  void zero_grad();
  std::size_t steps() const { return steps_; }
  const AdamOptions& options() const { return options_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamOptions options_;
  std::size_t steps_ = 0;
};

}  // namespace spikesal
