// SPDX-License-Identifier: Apache-2.0
#include "spikesal/global_debias.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace spikesal {
namespace {

constexpr double kCriticSlope = 0.2;

Tensor param(const Tensor& t, bool frozen) { return frozen ? t.detach() : t; }

Tensor linear(const Tensor& x, const Linear& l, bool frozen) {
  return add(matmul(x, transpose(param(l.weight, frozen), 0, 1)), param(l.bias, frozen));
}

Tensor conv(const Tensor& x, const Conv2d& c, bool frozen) {
  return conv2d(x, param(c.weight, frozen), param(c.bias, frozen), c.params);
}

void check_maps(const Tensor& x, const char* op) {
  if (x.ndim() != 4 || x.dim(1) != 1) throw ShapeError(op, "expected maps [N,1,H,W], got " + to_string(x.shape()));
}

Tensor flatten(const Tensor& x) { return reshape(x, {x.dim(0), x.numel() / x.dim(0)}); }

}  // namespace

ConvCritic::ConvCritic(std::size_t c, std::mt19937_64& rng)
    : conv1(1, c, 3, ConvParams{2, 1, 1}, true, rng),
      conv2(c, 2 * c, 3, ConvParams{2, 1, 1}, true, rng),
      head(2 * c, 1, rng) {}

Tensor ConvCritic::score(const Tensor& x, bool frozen) const {
  check_maps(x, "conv_critic");
  Tensor h = leaky_relu(conv(x, conv1, frozen), kCriticSlope);
  h = leaky_relu(conv(h, conv2, frozen), kCriticSlope);
  const std::size_t N = h.dim(0), C = h.dim(1);
  Tensor pooled = mean_dim(reshape(h, {N, C, h.dim(2) * h.dim(3)}), 2);
  return reshape(linear(pooled, head, frozen), {N});
}

void ConvCritic::collect(const std::string& prefix, NamedTensors& p, NamedTensors& b) const {
  conv1.collect(join_name(prefix, "conv1"), p, b);
  conv2.collect(join_name(prefix, "conv2"), p, b);
  head.collect(join_name(prefix, "head"), p, b);
}

MlpCritic::MlpCritic(std::size_t inputs, std::size_t hidden, std::mt19937_64& rng)
    : l1(inputs, hidden, rng), l2(hidden, hidden, rng), l3(hidden, 1, rng) {}

Tensor MlpCritic::score(const Tensor& x, bool frozen) const {
  check_maps(x, "mlp_critic");
  Tensor flat = flatten(x);
  if (flat.dim(1) != l1.weight.dim(1)) {
    throw ShapeError("mlp_critic", "map has " + std::to_string(flat.dim(1)) + " pixels, critic expects " +
                                       std::to_string(l1.weight.dim(1)));
  }
  Tensor h = leaky_relu(linear(flat, l1, frozen), kCriticSlope);
  h = leaky_relu(linear(h, l2, frozen), kCriticSlope);
  return reshape(linear(h, l3, frozen), {x.dim(0)});
}

void MlpCritic::collect(const std::string& prefix, NamedTensors& p, NamedTensors& b) const {
  l1.collect(join_name(prefix, "l1"), p, b);
  l2.collect(join_name(prefix, "l2"), p, b);
  l3.collect(join_name(prefix, "l3"), p, b);
}

LinearCritic::LinearCritic(std::size_t inputs) : weight(Tensor::zeros({inputs})), bias(Tensor::zeros({1})) {
  weight.set_requires_grad(true);
  bias.set_requires_grad(true);
}

Tensor LinearCritic::score(const Tensor& x, bool frozen) const {
  check_maps(x, "linear_critic");
  Tensor flat = flatten(x);
  if (flat.dim(1) != weight.dim(0)) {
    throw ShapeError("linear_critic", "map has " + std::to_string(flat.dim(1)) + " pixels, critic expects " +
                                          std::to_string(weight.dim(0)));
  }
  Tensor w = reshape(param(weight, frozen), {weight.dim(0), 1});
  return reshape(add(matmul(flat, w), param(bias, frozen)), {x.dim(0)});
}

void LinearCritic::collect(const std::string& prefix, NamedTensors& p, NamedTensors&) const {
  p.emplace_back(join_name(prefix, "weight"), weight);
  p.emplace_back(join_name(prefix, "bias"), bias);
}

Tensor critic_score(const Critic& critic, const Tensor& maps, bool frozen) {
  for (double v : maps.data()) {
    if (std::isnan(v)) throw InputError("critic_score: input map contains NaN");
  }
  if (maps.ndim() == 3) return critic.score(reshape(maps, {1, maps.dim(0), maps.dim(1), maps.dim(2)}), frozen);
  return critic.score(maps, frozen);
}

Tensor transport_cost(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() || a.ndim() < 1) {
    throw ShapeError("transport_cost", to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  return mean_dim(flatten(square(sub(a, b))), 1);
}

Tensor t_net_loss(const Tensor& pred, const Tensor& source, const Critic& critic) {
  check_maps(pred, "t_net_loss");
  if (pred.shape() != source.shape()) {
    throw ShapeError("t_net_loss", "prediction batch " + to_string(pred.shape()) + " does not match source " +
                                       to_string(source.shape()));
  }
  return sub(mean(transport_cost(source, pred)), mean(critic_score(critic, pred, true)));
}

Tensor f_net_loss(const Tensor& target, const Tensor& pred, const Critic& critic, double penalty_coef,
                  std::mt19937_64& rng, FNetTerms* terms) {
  check_maps(pred, "f_net_loss");
  if (target.shape() != pred.shape()) {
    throw ShapeError("f_net_loss", "target " + to_string(target.shape()) + " does not match prediction " +
                                       to_string(pred.shape()));
  }
  if (!(penalty_coef >= 0.0)) throw InputError("f_net_loss: penalty_coef must be nonnegative");
  const Tensor tgt = target.detach();
  const Tensor fake = pred.detach();
  Tensor gap = sub(mean(critic_score(critic, tgt)), mean(critic_score(critic, fake)));
  Tensor loss = neg(gap);
  double penalty_value = 0.0;
  if (penalty_coef > 0.0) {
    const std::size_t N = pred.dim(0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> eps(N);
    for (auto& e : eps) e = unit(rng);
    Tensor w = Tensor::from({N, 1, 1, 1}, eps);
    Tensor x_hat = add(mul(w, tgt), mul(add_scalar(neg(w), 1.0), fake)).detach();
    // The input gradient is needed even when the caller disabled recording;
    // it only stays differentiable when recording is on.
    const bool record = GradMode::enabled();
    Tensor g;
    {
      GradModeGuard on(true);
      x_hat.set_requires_grad(true);
      g = gradients(sum(critic.score(x_hat, false)), {x_hat}, record)[0];
    }
    // Norm with zero derivative below 1e-30 so a flat critic stays finite.
    Tensor sq = sum_dim(flatten(square(g)), 1);
    Tensor norm = sqrt(maximum(sq, Tensor::full(sq.shape(), 1e-30)));
    Tensor penalty = mul_scalar(mean(square(add_scalar(norm, -1.0))), penalty_coef);
    penalty_value = penalty.item();
    loss = add(loss, penalty);
  }
  if (terms) *terms = {gap.item(), penalty_value};
  return loss;
}

double em_exact_1d(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size() || p.empty()) throw InputError("em_exact_1d: histograms must share a nonzero length");
  double mp = 0.0, mq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < 0.0 || q[i] < 0.0) throw InputError("em_exact_1d: negative mass at bin " + std::to_string(i));
    mp += p[i];
    mq += q[i];
  }
  if (std::abs(mp - mq) > 1e-9) {
    throw InputError("em_exact_1d: unequal mass " + std::to_string(mp) + " vs " + std::to_string(mq));
  }
  double cp = 0.0, cq = 0.0, total = 0.0;
  for (std::size_t i = 0; i + 1 < p.size(); ++i) {
    cp += p[i];
    cq += q[i];
    total += std::abs(cp - cq);
  }
  return total;
}

std::string to_string(DistanceKind k) {
  switch (k) {
    case DistanceKind::kEm:
      return "em";
    case DistanceKind::kEd:
      return "ed";
    case DistanceKind::kKl:
      return "kl";
    case DistanceKind::kJs:
      return "js";
  }
  return "unknown";
}

DistanceKind parse_distance(const std::string& name) {
  std::string s = name;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "em") return DistanceKind::kEm;
  if (s == "ed") return DistanceKind::kEd;
  if (s == "kl") return DistanceKind::kKl;
  if (s == "js") return DistanceKind::kJs;
  throw std::invalid_argument("unknown distance '" + name + "' (expected em, ed, kl or js)");
}

namespace {

std::vector<double> smooth_normalize(const std::vector<double>& p) {
  std::vector<double> out(p.size());
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) total += out[i] = p[i] + kDistanceSmoothing;
  for (auto& v : out) v /= total;
  return out;
}

double kl(const std::vector<double>& p, const std::vector<double>& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += p[i] * std::log(p[i] / q[i]);
  return s;
}

}  // namespace

double ablation_distance(DistanceKind kind, const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size() || p.empty()) throw InputError("ablation_distance: inputs must share a nonzero length");
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < 0.0 || q[i] < 0.0 || std::isnan(p[i]) || std::isnan(q[i])) {
      throw InputError("ablation_distance: negative or NaN entry at " + std::to_string(i));
    }
  }
  switch (kind) {
    case DistanceKind::kEd: {
      double s = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - q[i]) * (p[i] - q[i]);
      return std::sqrt(s);
    }
    case DistanceKind::kKl:
      return kl(smooth_normalize(p), smooth_normalize(q));
    case DistanceKind::kJs: {
      auto a = smooth_normalize(p), b = smooth_normalize(q);
      std::vector<double> m(a.size());
      for (std::size_t i = 0; i < m.size(); ++i) m[i] = 0.5 * (a[i] + b[i]);
      return 0.5 * kl(a, m) + 0.5 * kl(b, m);
    }
    case DistanceKind::kEm: {
      double sp = 0.0, sq = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        sp += p[i];
        sq += q[i];
      }
      if (sp <= 0.0 || sq <= 0.0) throw InputError("ablation_distance: EM needs positive total mass");
      std::vector<double> a(p.size()), b(q.size());
      for (std::size_t i = 0; i < p.size(); ++i) {
        a[i] = p[i] / sp;
        b[i] = q[i] / sq;
      }
      return em_exact_1d(a, b);
    }
  }
  return 0.0;
}

Tensor map_distance(DistanceKind kind, const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape() || pred.ndim() < 2) {
    throw ShapeError("map_distance", to_string(pred.shape()) + " vs " + to_string(target.shape()));
  }
  Tensor p = flatten(pred), q = flatten(target.detach());
  if (kind == DistanceKind::kEd) return mean(sqrt(add_scalar(sum_dim(square(sub(p, q)), 1), 1e-12)));
  auto normalize = [](const Tensor& x) {
    Tensor s = add_scalar(x, kDistanceSmoothing);
    return div(s, sum_dim(s, 1, true));
  };
  Tensor pn = normalize(p), qn = normalize(q);
  auto kl_rows = [](const Tensor& a, const Tensor& b) { return sum_dim(mul(a, sub(log(a), log(b))), 1); };
  switch (kind) {
    case DistanceKind::kKl:
      return mean(kl_rows(pn, qn));
    case DistanceKind::kJs: {
      Tensor m = mul_scalar(add(pn, qn), 0.5);
      return mean(mul_scalar(add(kl_rows(pn, m), kl_rows(qn, m)), 0.5));
    }
    default:
      throw InputError("map_distance: " + to_string(kind) + " is estimated by the critic, not in closed form");
  }
}

}  // namespace spikesal
