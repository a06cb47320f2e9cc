// SPDX-License-Identifier: Apache-2.0
#include "spikesal/grad_check.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "spikesal/ops.hpp"

namespace spikesal {

std::string GradCheckReport::describe() const {
  std::ostringstream os;
  os << op << ": max rel err " << max_rel_error << " at input " << worst_input << " element "
     << worst_index << " (analytic " << analytic << ", numeric " << numeric << ")";
  return os.str();
}

namespace {
double project(const Tensor& out, const std::vector<double>& v) {
  auto d = out.data();
  double s = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) s += d[i] * v[i];
  return s;
}
}  // namespace

GradCheckReport grad_check(const std::string& name, const OpUnderTest& op, std::vector<Tensor> inputs,
                           double epsilon, double tolerance, unsigned long long projection_seed) {
  GradCheckReport report;
  report.op = name;

  Tensor out = op(inputs);
  std::mt19937_64 rng(projection_seed);
  std::normal_distribution<double> normal;
  std::vector<double> v(out.numel());
  for (auto& x : v) x = normal(rng);
  Tensor projection = Tensor::from(out.shape(), v);

  std::vector<Tensor> targets;
  std::vector<std::size_t> target_index;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].requires_grad()) {
      targets.push_back(inputs[i]);
      target_index.push_back(i);
    }
  }
  const auto analytic = gradients(sum(mul(out, projection)), targets);

  NoGradGuard no_grad;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    auto values = targets[t].mutable_data();
    auto grad = analytic[t].data();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double saved = values[k];
      values[k] = saved + epsilon;
      const double plus = project(op(inputs), v);
      values[k] = saved - epsilon;
      const double minus = project(op(inputs), v);
      values[k] = saved;
      const double numeric = (plus - minus) / (2.0 * epsilon);
      const double denom = std::max({std::abs(grad[k]), std::abs(numeric), 1e-3});
      const double rel = std::abs(grad[k] - numeric) / denom;
      if (rel > report.max_rel_error || !std::isfinite(rel)) {
        report.max_rel_error = std::isfinite(rel) ? rel : INFINITY;
        report.worst_input = target_index[t];
        report.worst_index = k;
        report.analytic = grad[k];
        report.numeric = numeric;
      }
    }
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

}  // namespace spikesal
