// SPDX-License-Identifier: Apache-2.0
#include "spikesal/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "spikesal/ops.hpp"

namespace spikesal {

namespace {
thread_local bool g_grad_enabled = true;

std::shared_ptr<Node> new_node(Shape shape, std::vector<double> values) {
  if (numel(shape) != values.size()) {
    throw ShapeError("tensor", "shape " + to_string(shape) + " holds " +
                                   std::to_string(numel(shape)) + " values, got " +
                                   std::to_string(values.size()));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->values = std::make_shared<std::vector<double>>(std::move(values));
  return node;
}

const Node& checked(const std::shared_ptr<Node>& node) {
  if (!node) throw std::logic_error("use of undefined tensor");
  return *node;
}
}  // namespace

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set_enabled(bool on) { g_grad_enabled = on; }

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }
Tensor Tensor::ones(Shape shape) { return full(std::move(shape), 1.0); }

Tensor Tensor::full(Shape shape, double value) {
  const std::size_t n = spikesal::numel(shape);
  return Tensor(new_node(std::move(shape), std::vector<double>(n, value)));
}

Tensor Tensor::scalar(double value) { return Tensor(new_node({}, {value})); }

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  return Tensor(new_node(std::move(shape), std::move(values)));
}

Tensor Tensor::randn(Shape shape, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(spikesal::numel(shape));
  for (auto& x : v) x = dist(rng);
  return from(std::move(shape), std::move(v));
}

Tensor Tensor::uniform(Shape shape, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(spikesal::numel(shape));
  for (auto& x : v) x = dist(rng);
  return from(std::move(shape), std::move(v));
}

const Shape& Tensor::shape() const { return checked(node_).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("dim", "axis " + std::to_string(axis) + " out of range for " + to_string(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return checked(node_).values->size(); }

std::span<const double> Tensor::data() const { return *checked(node_).values; }
std::span<double> Tensor::mutable_data() { return *checked(node_).values; }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item", "tensor of shape " + to_string(shape()) + " is not a scalar");
  return data()[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  if (!is_leaf()) throw AutodiffError("requires_grad can only be set on leaf tensors");
  node_->requires_grad = on;
  return *this;
}

bool Tensor::is_leaf() const { return !checked(node_).backward; }

std::span<const double> Tensor::grad() const { return checked(node_).grad; }

Tensor Tensor::grad_tensor() const {
  const auto& n = checked(node_);
  if (n.grad.empty()) return zeros(n.shape);
  return from(n.shape, n.grad);
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

Tensor Tensor::detach() const {
  auto node = std::make_shared<Node>();
  node->shape = checked(node_).shape;
  node->values = node_->values;
  return Tensor(std::move(node));
}

Tensor Tensor::clone() const { return from(shape(), *checked(node_).values); }

const char* Tensor::op_name() const { return checked(node_).op_name; }

Tensor Tensor::make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                           const char* op_name, BackwardFn backward, bool twice_differentiable) {
  auto node = new_node(std::move(shape), std::move(values));
  node->op_name = op_name;
  const bool track = GradMode::enabled() &&
                     std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
  if (track) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
    node->twice_differentiable = twice_differentiable;
  }
  return Tensor(std::move(node));
}

std::vector<Node*> topological_order(const Tensor& root) {
  std::vector<Node*> order;
  if (!root.requires_grad()) return order;
  std::unordered_map<Node*, bool> state;  // false: on stack, true: done
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  state[root.node()] = false;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].node();
      if (child && child->requires_grad && !state.contains(child)) {
        state[child] = false;
        stack.emplace_back(child, 0);
      }
    } else {
      state[node] = true;
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

namespace {

std::unordered_map<Node*, Tensor> run_backward(const Tensor& root, const Tensor& seed,
                                               bool create_graph) {
  std::unordered_map<Node*, Tensor> grads;
  if (!root.requires_grad()) return grads;
  Tensor start = seed.defined() ? seed : Tensor::ones(root.shape());
  if (start.shape() != root.shape()) {
    throw ShapeError("backward", "seed shape " + to_string(start.shape()) +
                                    " differs from output shape " + to_string(root.shape()));
  }
  grads[root.node()] = start;
  const auto order = topological_order(root);
  GradModeGuard mode(create_graph);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (!node->backward) continue;
    auto found = grads.find(node);
    if (found == grads.end()) continue;
    if (create_graph && !node->twice_differentiable) {
      throw AutodiffError(std::string("op '") + node->op_name +
                          "' does not support higher-order gradients");
    }
    const std::vector<Tensor> input_grads = node->backward(found->second);
    for (std::size_t i = 0; i < node->inputs.size() && i < input_grads.size(); ++i) {
      const Tensor& input = node->inputs[i];
      const Tensor& g = input_grads[i];
      if (!g.defined() || !input.requires_grad()) continue;
      if (g.shape() != input.shape()) {
        throw ShapeError(node->op_name, "backward produced gradient " + to_string(g.shape()) +
                                            " for input " + to_string(input.shape()));
      }
      auto slot = grads.find(input.node());
      if (slot == grads.end()) {
        grads.emplace(input.node(), g);
      } else {
        slot->second = add(slot->second, g);
      }
    }
    // Interior gradients are no longer needed once propagated.
    grads.erase(node);
  }
  return grads;
}

}  // namespace

std::vector<Tensor> gradients(const Tensor& output, const std::vector<Tensor>& wrt, bool create_graph,
                              const Tensor& seed) {
  for (const auto& w : wrt) {
    if (!w.is_leaf()) {
      throw AutodiffError("gradients(): targets must be leaf tensors");
    }
  }
  auto grads = run_backward(output, seed, create_graph);
  std::vector<Tensor> out;
  out.reserve(wrt.size());
  for (const auto& w : wrt) {
    auto it = grads.find(w.node());
    out.push_back(it != grads.end() ? it->second : Tensor::zeros(w.shape()));
  }
  return out;
}

void Tensor::backward() const { backward(Tensor()); }

void Tensor::backward(const Tensor& seed) const {
  if (!seed.defined() && numel() != 1) {
    throw ShapeError("backward", "implicit seed requires a scalar output, got " + to_string(shape()));
  }
  auto grads = run_backward(*this, seed, false);
  for (auto& [node, g] : grads) {
    if (!node->inputs.empty()) continue;
    auto values = g.data();
    if (node->grad.empty()) {
      node->grad.assign(values.begin(), values.end());
    } else {
      for (std::size_t i = 0; i < values.size(); ++i) node->grad[i] += values[i];
    }
  }
}

}  // namespace spikesal
