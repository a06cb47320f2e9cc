// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace spikesal {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Raised when operand shapes are incompatible. The message names the
/// operation and the offending dimension.
class ShapeError : public std::invalid_argument {
 public:
  ShapeError(const std::string& op, const std::string& detail)
      : std::invalid_argument(op + ": " + detail) {}
};

/// Raised when a gradient graph cannot be differentiated as requested.
class AutodiffError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Tensor;
struct Node;

/// Maps the gradient of an op's output to gradients of each of its inputs.
/// An undefined entry means "no gradient for this input".
using BackwardFn = std::function<std::vector<Tensor>(const Tensor& grad_out)>;

/// Thread-local switch controlling whether new ops record graph edges.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool on);
};

class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

class GradModeGuard {
 public:
  explicit GradModeGuard(bool on) : previous_(GradMode::enabled()) { GradMode::set_enabled(on); }
  ~GradModeGuard() { GradMode::set_enabled(previous_); }
  GradModeGuard(const GradModeGuard&) = delete;
  GradModeGuard& operator=(const GradModeGuard&) = delete;

 private:
  bool previous_;
};

/// Dense row-major tensor of doubles and a handle to its node in the
/// reverse-mode graph. Copies share the node; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor ones(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor randn(Shape shape, std::mt19937_64& rng, double stddev = 1.0);
  static Tensor uniform(Shape shape, std::mt19937_64& rng, double lo, double hi);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t ndim() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  /// In-place access for initialisation and optimiser updates. Writes are
  /// visible to every tensor sharing this storage, including detached views.
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t flat_index) const { return data()[flat_index]; }

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const;

  /// Accumulated gradient of a leaf after backward(); empty if none yet.
  std::span<const double> grad() const;
  Tensor grad_tensor() const;
  void zero_grad();

  /// Shares storage, drops graph history.
  Tensor detach() const;
  /// Deep copy of the values with no history.
  Tensor clone() const;

  /// Backpropagates from a scalar, accumulating into leaf gradients.
  void backward() const;
  void backward(const Tensor& seed) const;

  const char* op_name() const;
  Node* node() const { return node_.get(); }
  std::shared_ptr<Node> node_ptr() const { return node_; }

  /// Builds an op result, recording the backward rule when grad mode is on
  /// and any input requires grad. `twice_differentiable` marks rules that
  /// are themselves written in terms of differentiable ops.
  static Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                            const char* op_name, BackwardFn backward,
                            bool twice_differentiable = false);

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;
};

struct Node {
  Shape shape;
  std::shared_ptr<std::vector<double>> values;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<Tensor> inputs;
  BackwardFn backward;
  const char* op_name = "leaf";
  bool twice_differentiable = false;
};

/// Gradients of `output` with respect to each tensor in `wrt`. With
/// `create_graph` the returned gradients are themselves differentiable.
/// Inputs that `output` does not depend on receive zeros.
std::vector<Tensor> gradients(const Tensor& output, const std::vector<Tensor>& wrt,
                              bool create_graph = false, const Tensor& seed = Tensor());

/// Nodes reachable from `root` that require grad, in topological order
/// (inputs before consumers). Each node appears once.
std::vector<Node*> topological_order(const Tensor& root);

}  // namespace spikesal
