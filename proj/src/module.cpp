// SPDX-License-Identifier: Apache-2.0
#include "spikesal/module.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace spikesal {

std::string join_name(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

std::vector<Tensor> Module::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

NamedTensors Module::named_parameters() const {
  NamedTensors params, buffers;
  collect("", params, buffers);
  return params;
}

NamedTensors Module::state() const {
  NamedTensors params, buffers;
  collect("", params, buffers);
  params.insert(params.end(), buffers.begin(), buffers.end());
  return params;
}

void Module::load_state(const NamedTensors& entries) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : entries) by_name[name] = &t;
  for (auto& [name, target] : state()) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw CheckpointError("checkpoint is missing '" + name + "'");
    if (it->second->shape() != target.shape()) {
      throw CheckpointError("checkpoint entry '" + name + "' has shape " + to_string(it->second->shape()) +
                            ", expected " + to_string(target.shape()));
    }
    auto src = it->second->data();
    Tensor dst = target;
    std::copy(src.begin(), src.end(), dst.mutable_data().begin());
  }
}

void Module::zero_grad() {
  for (auto& t : parameters()) t.zero_grad();
}

Tensor init_uniform_fan_in(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  Tensor t = Tensor::uniform(std::move(shape), rng, -bound, bound);
  t.set_requires_grad(true);
  return t;
}

Conv2d::Conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, ConvParams p, bool with_bias,
               std::mt19937_64& rng)
    : params(p) {
  const std::size_t fan_in = in_ch / p.groups * kernel * kernel;
  weight = init_uniform_fan_in({out_ch, in_ch / p.groups, kernel, kernel}, fan_in, rng);
  if (with_bias) bias = init_uniform_fan_in({out_ch}, fan_in, rng);
}

Tensor Conv2d::forward(const Tensor& x) const { return conv2d(x, weight, bias, params); }

void Conv2d::collect(const std::string& prefix, NamedTensors& p, NamedTensors&) const {
  p.emplace_back(join_name(prefix, "weight"), weight);
  if (bias.defined()) p.emplace_back(join_name(prefix, "bias"), bias);
}

BatchNorm2d::BatchNorm2d(std::size_t channels, double m, double e)
    : gamma(Tensor::ones({channels})),
      beta(Tensor::zeros({channels})),
      running_mean(Tensor::zeros({channels})),
      running_var(Tensor::ones({channels})),
      momentum(m),
      eps(e) {
  gamma.set_requires_grad(true);
  beta.set_requires_grad(true);
}

Tensor BatchNorm2d::forward(const Tensor& x, bool training) const {
  Tensor rm = running_mean;
  Tensor rv = running_var;
  return batchnorm2d(x, gamma, beta, rm.mutable_data(), rv.mutable_data(), training, momentum, eps);
}

void BatchNorm2d::collect(const std::string& prefix, NamedTensors& p, NamedTensors& b) const {
  p.emplace_back(join_name(prefix, "gamma"), gamma);
  p.emplace_back(join_name(prefix, "beta"), beta);
  b.emplace_back(join_name(prefix, "running_mean"), running_mean);
  b.emplace_back(join_name(prefix, "running_var"), running_var);
}

Linear::Linear(std::size_t in, std::size_t out, std::mt19937_64& rng)
    : weight(init_uniform_fan_in({out, in}, in, rng)), bias(init_uniform_fan_in({out}, in, rng)) {}

Tensor Linear::forward(const Tensor& x) const {
  if (x.ndim() != 2 || x.dim(1) != weight.dim(1)) {
    throw ShapeError("linear", "input " + to_string(x.shape()) + " incompatible with weight " +
                                   to_string(weight.shape()));
  }
  return add(matmul(x, transpose(weight, 0, 1)), bias);
}

void Linear::collect(const std::string& prefix, NamedTensors& p, NamedTensors&) const {
  p.emplace_back(join_name(prefix, "weight"), weight);
  p.emplace_back(join_name(prefix, "bias"), bias);
}

Adam::Adam(std::vector<Tensor> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::step() {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double bc1 = 1.0 - std::pow(options_.beta1, t);
  const double bc2 = 1.0 - std::pow(options_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto grad = params_[i].grad();
    if (grad.empty()) continue;
    auto values = params_[i].mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double g = grad[k] + options_.weight_decay * values[k];
      m[k] = options_.beta1 * m[k] + (1.0 - options_.beta1) * g;
      v[k] = options_.beta2 * v[k] + (1.0 - options_.beta2) * g * g;
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      values[k] -= options_.lr * mhat / (std::sqrt(vhat) + options_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace spikesal
