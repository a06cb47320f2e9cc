// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "spikesal/tensor.hpp"

namespace spikesal {

struct GradCheckReport {
  std::string op;
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  bool passed = true;

  /// "op: max rel err E at input I element K (analytic A, numeric N)"
  std::string describe() const;
};

using OpUnderTest = std::function<Tensor(const std::vector<Tensor>&)>;

/// Compares reverse-mode gradients of <v, op(inputs)> against central
/// differences, where v is a fixed pseudo-random projection of the output.
/// Only inputs with requires_grad set are perturbed. Relative error is
/// |a - n| / max(|a|, |n|, 1e-3).
GradCheckReport grad_check(const std::string& name, const OpUnderTest& op, std::vector<Tensor> inputs,
                           double epsilon = 1e-5, double tolerance = 1e-4,
                           unsigned long long projection_seed = 0x5eed);

}  // namespace spikesal
