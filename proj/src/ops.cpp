// SPDX-License-Identifier: Apache-2.0
#include "spikesal/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "spikesal/parallel.hpp"

namespace spikesal {

namespace {

using Values = std::vector<double>;
using Saved = std::shared_ptr<const Values>;

thread_local OpCounter* t_counter = nullptr;
thread_local bool t_spike_driven = false;

Values copy_values(const Tensor& t) { return Values(t.data().begin(), t.data().end()); }

std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
  return strides;
}

// Flat index into `src_shape` for every element of `dst_shape` under
// broadcasting (src aligned to the trailing dimensions of dst).
std::vector<std::size_t> broadcast_index(const Shape& src_shape, const Shape& dst_shape) {
  const std::size_t n = numel(dst_shape);
  const std::size_t nd = dst_shape.size();
  const std::size_t offset = nd - src_shape.size();
  const auto src_strides = strides_of(src_shape);
  std::vector<std::size_t> eff(nd, 0);
  for (std::size_t d = 0; d < src_shape.size(); ++d) {
    eff[d + offset] = src_shape[d] == 1 ? 0 : src_strides[d];
  }
  std::vector<std::size_t> index(n);
  std::vector<std::size_t> coord(nd, 0);
  std::size_t src = 0;
  for (std::size_t i = 0; i < n; ++i) {
    index[i] = src;
    for (std::size_t d = nd; d-- > 0;) {
      ++coord[d];
      src += eff[d];
      if (coord[d] < dst_shape[d]) break;
      src -= eff[d] * coord[d];
      coord[d] = 0;
    }
  }
  return index;
}

template <typename F>
Tensor unary_map(const Tensor& x, F f, const char* name, BackwardFn backward, bool twice) {
  Values out(x.numel());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return Tensor::make_result(x.shape(), std::move(out), {x}, name, std::move(backward), twice);
}

template <typename F>
Values binary_values(const Tensor& a, const Tensor& b, const Shape& out_shape, F f) {
  const std::size_t n = numel(out_shape);
  Values out(n);
  auto av = a.data();
  auto bv = b.data();
  if (a.shape() == out_shape && b.shape() == out_shape) {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(av[i], bv[i]);
    return out;
  }
  const auto ia = broadcast_index(a.shape(), out_shape);
  const auto ib = broadcast_index(b.shape(), out_shape);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(av[ia[i]], bv[ib[i]]);
  return out;
}

Tensor constant(Shape shape, Values values) { return Tensor::from(std::move(shape), std::move(values)); }

void record_macs(std::uint64_t n) {
  if (t_counter) t_counter->multiply_accumulates += n;
}

}  // namespace

// ---------------------------------------------------------------------------
// Broadcasting.

Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const std::size_t nd = std::max(a.size(), b.size());
  Shape out(nd, 1);
  for (std::size_t i = 0; i < nd; ++i) {
    const std::size_t da = i < nd - a.size() ? 1 : a[i - (nd - a.size())];
    const std::size_t db = i < nd - b.size() ? 1 : b[i - (nd - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("broadcast", "dimension " + std::to_string(i) + " mismatch: " + to_string(a) +
                                        " vs " + to_string(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
  if (x.shape() == shape) return x;
  if (broadcast_shapes(x.shape(), shape) != shape) {
    throw ShapeError("broadcast_to", "cannot broadcast " + to_string(x.shape()) + " to " + to_string(shape));
  }
  const auto index = broadcast_index(x.shape(), shape);
  Values out(index.size());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[index[i]];
  const Shape src = x.shape();
  return Tensor::make_result(
      shape, std::move(out), {x}, "broadcast_to",
      [src](const Tensor& g) { return std::vector<Tensor>{sum_to(g, src)}; }, true);
}

Tensor sum_to(const Tensor& x, const Shape& shape) {
  if (x.shape() == shape) return x;
  if (broadcast_shapes(shape, x.shape()) != x.shape()) {
    throw ShapeError("sum_to", "cannot reduce " + to_string(x.shape()) + " to " + to_string(shape));
  }
  const auto index = broadcast_index(shape, x.shape());
  Values out(numel(shape), 0.0);
  auto in = x.data();
  for (std::size_t i = 0; i < index.size(); ++i) out[index[i]] += in[i];
  const Shape big = x.shape();
  return Tensor::make_result(
      shape, std::move(out), {x}, "sum_to",
      [big](const Tensor& g) { return std::vector<Tensor>{broadcast_to(g, big)}; }, true);
}

// ---------------------------------------------------------------------------
// Binary arithmetic.

Tensor add(const Tensor& a, const Tensor& b) {
  const Shape out_shape = broadcast_shapes(a.shape(), b.shape());
  auto out = binary_values(a, b, out_shape, [](double x, double y) { return x + y; });
  const Shape sa = a.shape(), sb = b.shape();
  return Tensor::make_result(
      out_shape, std::move(out), {a, b}, "add",
      [sa, sb](const Tensor& g) { return std::vector<Tensor>{sum_to(g, sa), sum_to(g, sb)}; }, true);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const Shape out_shape = broadcast_shapes(a.shape(), b.shape());
  auto out = binary_values(a, b, out_shape, [](double x, double y) { return x - y; });
  const Shape sa = a.shape(), sb = b.shape();
  return Tensor::make_result(
      out_shape, std::move(out), {a, b}, "sub",
      [sa, sb](const Tensor& g) { return std::vector<Tensor>{sum_to(g, sa), sum_to(neg(g), sb)}; },
      true);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const Shape out_shape = broadcast_shapes(a.shape(), b.shape());
  auto out = binary_values(a, b, out_shape, [](double x, double y) { return x * y; });
  return Tensor::make_result(
      out_shape, std::move(out), {a, b}, "mul",
      [a, b](const Tensor& g) {
        Tensor ga, gb;
        if (a.requires_grad()) ga = sum_to(mul(g, b), a.shape());
        if (b.requires_grad()) gb = sum_to(mul(g, a), b.shape());
        return std::vector<Tensor>{ga, gb};
      },
      true);
}

Tensor div(const Tensor& a, const Tensor& b) {
  const Shape out_shape = broadcast_shapes(a.shape(), b.shape());
  auto out = binary_values(a, b, out_shape, [](double x, double y) { return x / y; });
  return Tensor::make_result(
      out_shape, std::move(out), {a, b}, "div",
      [a, b](const Tensor& g) {
        Tensor ga, gb;
        if (a.requires_grad()) ga = sum_to(div(g, b), a.shape());
        if (b.requires_grad()) gb = sum_to(neg(div(mul(g, a), mul(b, b))), b.shape());
        return std::vector<Tensor>{ga, gb};
      },
      true);
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  const Shape out_shape = broadcast_shapes(a.shape(), b.shape());
  auto out = binary_values(a, b, out_shape, [](double x, double y) { return x >= y ? x : y; });
  auto mask_a = binary_values(a, b, out_shape, [](double x, double y) { return x >= y ? 1.0 : 0.0; });
  auto mask = std::make_shared<const Values>(std::move(mask_a));
  const Shape sa = a.shape(), sb = b.shape();
  return Tensor::make_result(
      out_shape, std::move(out), {a, b}, "maximum",
      [sa, sb, mask, out_shape](const Tensor& g) {
        Values inv(mask->size());
        for (std::size_t i = 0; i < inv.size(); ++i) inv[i] = 1.0 - (*mask)[i];
        Tensor ma = constant(out_shape, *mask);
        Tensor mb = constant(out_shape, std::move(inv));
        return std::vector<Tensor>{sum_to(mul(g, ma), sa), sum_to(mul(g, mb), sb)};
      },
      true);
}

// ---------------------------------------------------------------------------
// Unary arithmetic.

Tensor neg(const Tensor& x) {
  return unary_map(
      x, [](double v) { return -v; }, "neg",
      [](const Tensor& g) { return std::vector<Tensor>{neg(g)}; }, true);
}

Tensor add_scalar(const Tensor& x, double c) {
  return unary_map(
      x, [c](double v) { return v + c; }, "add_scalar",
      [](const Tensor& g) { return std::vector<Tensor>{g}; }, true);
}

Tensor mul_scalar(const Tensor& x, double c) {
  return unary_map(
      x, [c](double v) { return v * c; }, "mul_scalar",
      [c](const Tensor& g) { return std::vector<Tensor>{mul_scalar(g, c)}; }, true);
}

Tensor square(const Tensor& x) {
  return unary_map(
      x, [](double v) { return v * v; }, "square",
      [x](const Tensor& g) { return std::vector<Tensor>{mul(g, mul_scalar(x, 2.0))}; }, true);
}

Tensor sqrt(const Tensor& x) {
  return unary_map(
      x, [](double v) { return std::sqrt(v); }, "sqrt",
      [x](const Tensor& g) {
        return std::vector<Tensor>{div(g, mul_scalar(spikesal::sqrt(x), 2.0))};
      },
      true);
}

Tensor exp(const Tensor& x) {
  return unary_map(
      x, [](double v) { return std::exp(v); }, "exp",
      [x](const Tensor& g) { return std::vector<Tensor>{mul(g, spikesal::exp(x))}; }, true);
}

Tensor log(const Tensor& x) {
  return unary_map(
      x, [](double v) { return std::log(v); }, "log",
      [x](const Tensor& g) { return std::vector<Tensor>{div(g, x)}; }, true);
}

Tensor sigmoid(const Tensor& x) {
  auto f = [](double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  };
  return unary_map(
      x, f, "sigmoid",
      [x](const Tensor& g) {
        if (GradMode::enabled()) {
          Tensor s = sigmoid(x);
          return std::vector<Tensor>{mul(g, mul(s, add_scalar(neg(s), 1.0)))};
        }
        Values d(x.numel());
        auto xv = x.data();
        auto gv = g.data();
        for (std::size_t i = 0; i < d.size(); ++i) {
          const double v = xv[i];
          const double s = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
          d[i] = gv[i] * s * (1.0 - s);
        }
        return std::vector<Tensor>{constant(x.shape(), std::move(d))};
      },
      true);
}

Tensor leaky_relu(const Tensor& x, double negative_slope) {
  return unary_map(
      x, [negative_slope](double v) { return v > 0 ? v : negative_slope * v; }, "leaky_relu",
      [x, negative_slope](const Tensor& g) {
        Values slope(x.numel());
        auto xv = x.data();
        for (std::size_t i = 0; i < slope.size(); ++i) slope[i] = xv[i] > 0 ? 1.0 : negative_slope;
        return std::vector<Tensor>{mul(g, constant(x.shape(), std::move(slope)))};
      },
      true);
}

Tensor relu(const Tensor& x) { return leaky_relu(x, 0.0); }

Tensor clamp(const Tensor& x, double lo, double hi) {
  return unary_map(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); }, "clamp",
      [x, lo, hi](const Tensor& g) {
        Values pass(x.numel());
        auto xv = x.data();
        for (std::size_t i = 0; i < pass.size(); ++i) pass[i] = (xv[i] >= lo && xv[i] <= hi) ? 1.0 : 0.0;
        return std::vector<Tensor>{mul(g, constant(x.shape(), std::move(pass)))};
      },
      true);
}

// ---------------------------------------------------------------------------
// Reductions.

Tensor sum(const Tensor& x) {
  auto v = x.data();
  const double total = std::accumulate(v.begin(), v.end(), 0.0);
  const Shape s = x.shape();
  return Tensor::make_result(
      {}, {total}, {x}, "sum", [s](const Tensor& g) { return std::vector<Tensor>{broadcast_to(g, s)}; },
      true);
}

Tensor mean(const Tensor& x) { return mul_scalar(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor sum_dim(const Tensor& x, std::size_t dim, bool keepdim) {
  const Shape& s = x.shape();
  if (dim >= s.size()) throw ShapeError("sum_dim", "dim " + std::to_string(dim) + " out of range for " + to_string(s));
  Shape kept = s;
  kept[dim] = 1;
  Tensor reduced = sum_to(x, kept);
  if (keepdim) return reduced;
  Shape squeezed;
  for (std::size_t d = 0; d < s.size(); ++d)
    if (d != dim) squeezed.push_back(s[d]);
  return reshape(reduced, squeezed);
}

Tensor mean_dim(const Tensor& x, std::size_t dim, bool keepdim) {
  const double n = static_cast<double>(x.dim(dim));
  return mul_scalar(sum_dim(x, dim, keepdim), 1.0 / n);
}

// ---------------------------------------------------------------------------
// Layout.

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw ShapeError("reshape", "cannot reshape " + to_string(x.shape()) + " to " + to_string(shape));
  }
  const Shape src = x.shape();
  return Tensor::make_result(
      std::move(shape), copy_values(x), {x}, "reshape",
      [src](const Tensor& g) { return std::vector<Tensor>{reshape(g, src)}; }, true);
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& order) {
  const Shape& s = x.shape();
  if (order.size() != s.size()) {
    throw ShapeError("permute", "order has " + std::to_string(order.size()) + " axes, tensor has " +
                                    std::to_string(s.size()));
  }
  std::vector<bool> seen(s.size(), false);
  Shape out_shape(s.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (order[i] >= s.size() || seen[order[i]]) throw ShapeError("permute", "invalid axis order");
    seen[order[i]] = true;
    out_shape[i] = s[order[i]];
  }
  const auto in_strides = strides_of(s);
  const std::size_t n = x.numel();
  const std::size_t nd = s.size();
  Values out(n);
  auto in = x.data();
  std::vector<std::size_t> coord(nd, 0);
  std::size_t src = 0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = in[src];
    for (std::size_t d = nd; d-- > 0;) {
      ++coord[d];
      src += in_strides[order[d]];
      if (coord[d] < out_shape[d]) break;
      src -= in_strides[order[d]] * coord[d];
      coord[d] = 0;
    }
  }
  std::vector<std::size_t> inverse(nd);
  for (std::size_t i = 0; i < nd; ++i) inverse[order[i]] = i;
  return Tensor::make_result(
      out_shape, std::move(out), {x}, "permute",
      [inverse](const Tensor& g) { return std::vector<Tensor>{permute(g, inverse)}; }, true);
}

Tensor transpose(const Tensor& x, std::size_t dim0, std::size_t dim1) {
  std::vector<std::size_t> order(x.ndim());
  std::iota(order.begin(), order.end(), 0);
  std::swap(order.at(dim0), order.at(dim1));
  return permute(x, order);
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t dim) {
  if (parts.empty()) throw ShapeError("concat", "no inputs");
  const Shape& first = parts[0].shape();
  if (dim >= first.size()) throw ShapeError("concat", "dim " + std::to_string(dim) + " out of range");
  Shape out_shape = first;
  out_shape[dim] = 0;
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) throw ShapeError("concat", "rank mismatch");
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != dim && s[d] != first[d]) {
        throw ShapeError("concat", "dimension " + std::to_string(d) + " mismatch: " + to_string(s) +
                                       " vs " + to_string(first));
      }
    }
    out_shape[dim] += s[dim];
    sizes.push_back(s[dim]);
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < dim; ++d) outer *= first[d];
  for (std::size_t d = dim + 1; d < first.size(); ++d) inner *= first[d];
  Values out(numel(out_shape));
  const std::size_t row = out_shape[dim] * inner;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t chunk = p.dim(dim) * inner;
    auto in = p.data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(in.begin() + o * chunk, chunk, out.begin() + o * row + offset);
    }
    offset += chunk;
  }
  return Tensor::make_result(
      out_shape, std::move(out), parts, "concat",
      [sizes, dim](const Tensor& g) { return split(g, dim, sizes); }, true);
}

Tensor slice(const Tensor& x, std::size_t dim, std::size_t start, std::size_t length) {
  const Shape& s = x.shape();
  if (dim >= s.size()) throw ShapeError("slice", "dim " + std::to_string(dim) + " out of range");
  if (start + length > s[dim]) {
    throw ShapeError("slice", "range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                                  ") exceeds dimension " + std::to_string(dim) + " of size " +
                                  std::to_string(s[dim]));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < dim; ++d) outer *= s[d];
  for (std::size_t d = dim + 1; d < s.size(); ++d) inner *= s[d];
  Shape out_shape = s;
  out_shape[dim] = length;
  Values out(numel(out_shape));
  auto in = x.data();
  const std::size_t chunk = length * inner;
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(in.begin() + o * s[dim] * inner + start * inner, chunk, out.begin() + o * chunk);
  }
  const Shape src = s;
  return Tensor::make_result(
      out_shape, std::move(out), {x}, "slice",
      [src, dim, start, length](const Tensor& g) {
        std::vector<Tensor> pieces;
        std::vector<std::size_t> sizes;
        Shape pad = src;
        if (start > 0) {
          pad[dim] = start;
          pieces.push_back(Tensor::zeros(pad));
        }
        pieces.push_back(g);
        const std::size_t tail = src[dim] - start - length;
        if (tail > 0) {
          pad[dim] = tail;
          pieces.push_back(Tensor::zeros(pad));
        }
        return std::vector<Tensor>{pieces.size() == 1 ? g : concat(pieces, dim)};
      },
      true);
}

std::vector<Tensor> split(const Tensor& x, std::size_t dim, const std::vector<std::size_t>& sizes) {
  const std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  if (total != x.dim(dim)) {
    throw ShapeError("split", "sizes sum to " + std::to_string(total) + " but dimension " +
                                  std::to_string(dim) + " has " + std::to_string(x.dim(dim)));
  }
  std::vector<Tensor> parts;
  std::size_t start = 0;
  for (std::size_t n : sizes) {
    parts.push_back(slice(x, dim, start, n));
    start += n;
  }
  return parts;
}

Tensor select(const Tensor& x, std::size_t index) {
  Shape rest(x.shape().begin() + 1, x.shape().end());
  return reshape(slice(x, 0, index, 1), rest);
}

Tensor stack(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("stack", "no inputs");
  std::vector<Tensor> expanded;
  expanded.reserve(parts.size());
  for (const auto& p : parts) {
    if (p.shape() != parts[0].shape()) {
      throw ShapeError("stack", "shape " + to_string(p.shape()) + " differs from " + to_string(parts[0].shape()));
    }
    Shape s = p.shape();
    s.insert(s.begin(), 1);
    expanded.push_back(reshape(p, s));
  }
  return concat(expanded, 0);
}

// ---------------------------------------------------------------------------
// Matmul and softmax.

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sa.size() != sb.size()) {
    throw ShapeError("matmul", "operands must share rank >= 2, got " + to_string(sa) + " and " + to_string(sb));
  }
  const std::size_t nd = sa.size();
  for (std::size_t d = 0; d + 2 < nd; ++d) {
    if (sa[d] != sb[d]) throw ShapeError("matmul", "batch dimension " + std::to_string(d) + " mismatch");
  }
  const std::size_t m = sa[nd - 2], k = sa[nd - 1], n = sb[nd - 1];
  if (sb[nd - 2] != k) {
    throw ShapeError("matmul", "inner dimension mismatch: " + std::to_string(k) + " vs " +
                                   std::to_string(sb[nd - 2]));
  }
  const std::size_t batch = numel(sa) / (m * k);
  Shape out_shape = sa;
  out_shape[nd - 1] = n;
  Values out(batch * m * n, 0.0);
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t p = 0; p < batch; ++p) {
    const double* A = av.data() + p * m * k;
    const double* B = bv.data() + p * k * n;
    double* C = out.data() + p * m * n;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t q = 0; q < k; ++q) {
        const double aiq = A[i * k + q];
        const double* brow = B + q * n;
        double* crow = C + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += aiq * brow[j];
      }
    }
  }
  record_macs(static_cast<std::uint64_t>(batch) * m * n * k);
  return Tensor::make_result(
      out_shape, std::move(out), {a, b}, "matmul",
      [a, b, nd](const Tensor& g) {
        Tensor ga, gb;
        if (a.requires_grad()) ga = matmul(g, transpose(b, nd - 2, nd - 1));
        if (b.requires_grad()) gb = matmul(transpose(a, nd - 2, nd - 1), g);
        return std::vector<Tensor>{ga, gb};
      },
      true);
}

Tensor softmax(const Tensor& x) {
  if (x.ndim() == 0) throw ShapeError("softmax", "needs at least one axis");
  const std::size_t cols = x.shape().back();
  const std::size_t rows = x.numel() / cols;
  Values out(x.numel());
  auto in = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = in.data() + r * cols;
    double* dst = out.data() + r * cols;
    const double mx = *std::max_element(row, row + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += dst[c] = std::exp(row[c] - mx);
    for (std::size_t c = 0; c < cols; ++c) dst[c] /= total;
  }
  auto saved = std::make_shared<const Values>(out);
  return Tensor::make_result(
      x.shape(), std::move(out), {x}, "softmax",
      [x, saved, rows, cols](const Tensor& g) {
        if (GradMode::enabled()) {
          Tensor y = softmax(x);
          Tensor dot = sum_dim(mul(g, y), x.ndim() - 1, true);
          return std::vector<Tensor>{mul(y, sub(g, dot))};
        }
        Values d(x.numel());
        auto gv = g.data();
        for (std::size_t r = 0; r < rows; ++r) {
          double dot = 0.0;
          for (std::size_t c = 0; c < cols; ++c) dot += gv[r * cols + c] * (*saved)[r * cols + c];
          for (std::size_t c = 0; c < cols; ++c) {
            d[r * cols + c] = (*saved)[r * cols + c] * (gv[r * cols + c] - dot);
          }
        }
        return std::vector<Tensor>{constant(x.shape(), std::move(d))};
      },
      true);
}

// ---------------------------------------------------------------------------
// Convolution.

namespace {

struct ConvGeometry {
  std::size_t batch, in_ch, height, width;
  std::size_t out_ch, kh, kw;
  std::size_t out_h, out_w;
  std::size_t groups, in_per_group, out_per_group;
  std::size_t stride, padding;

  std::size_t col_rows() const { return in_per_group * kh * kw; }
  std::size_t col_cols() const { return out_h * out_w; }
};

ConvGeometry conv_geometry(const Shape& input, const Shape& weight, ConvParams p, const char* op) {
  if (input.size() != 4) throw ShapeError(op, "input must be 4-D NCHW, got " + to_string(input));
  if (weight.size() != 4) throw ShapeError(op, "weight must be 4-D, got " + to_string(weight));
  if (p.stride < 1) throw ShapeError(op, "stride must be >= 1");
  if (p.groups < 1) throw ShapeError(op, "groups must be >= 1");
  ConvGeometry g{};
  g.batch = input[0];
  g.in_ch = input[1];
  g.height = input[2];
  g.width = input[3];
  g.out_ch = weight[0];
  g.kh = weight[2];
  g.kw = weight[3];
  g.groups = p.groups;
  g.stride = p.stride;
  g.padding = p.padding;
  if (g.in_ch % g.groups != 0) {
    throw ShapeError(op, "input channels (dim 1) = " + std::to_string(g.in_ch) +
                             " not divisible by groups = " + std::to_string(g.groups));
  }
  if (g.out_ch % g.groups != 0) {
    throw ShapeError(op, "weight output channels (dim 0) = " + std::to_string(g.out_ch) +
                             " not divisible by groups = " + std::to_string(g.groups));
  }
  g.in_per_group = g.in_ch / g.groups;
  g.out_per_group = g.out_ch / g.groups;
  if (weight[1] != g.in_per_group) {
    throw ShapeError(op, "weight input channels (dim 1) = " + std::to_string(weight[1]) +
                             " but input provides " + std::to_string(g.in_per_group) + " per group");
  }
  if (g.height + 2 * g.padding < g.kh || g.width + 2 * g.padding < g.kw) {
    throw ShapeError(op, "kernel " + std::to_string(g.kh) + "x" + std::to_string(g.kw) +
                             " larger than padded input " + to_string(input));
  }
  g.out_h = (g.height + 2 * g.padding - g.kh) / g.stride + 1;
  g.out_w = (g.width + 2 * g.padding - g.kw) / g.stride + 1;
  return g;
}

// cols[(c*kh + i)*kw + j][oh*out_w + ow] for channels of one group of one image.
void im2col(const double* image, const ConvGeometry& g, std::size_t group, double* cols) {
  const std::size_t ncols = g.col_cols();
  for (std::size_t c = 0; c < g.in_per_group; ++c) {
    const double* plane = image + (group * g.in_per_group + c) * g.height * g.width;
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        double* dst = cols + ((c * g.kh + i) * g.kw + j) * ncols;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long y = static_cast<long>(oh * g.stride + i) - static_cast<long>(g.padding);
          double* row = dst + oh * g.out_w;
          if (y < 0 || y >= static_cast<long>(g.height)) {
            std::fill_n(row, g.out_w, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(y) * g.width;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const long x = static_cast<long>(ow * g.stride + j) - static_cast<long>(g.padding);
            row[ow] = (x < 0 || x >= static_cast<long>(g.width)) ? 0.0 : src[x];
          }
        }
      }
    }
  }
}

void col2im(const double* cols, const ConvGeometry& g, std::size_t group, double* image) {
  const std::size_t ncols = g.col_cols();
  for (std::size_t c = 0; c < g.in_per_group; ++c) {
    double* plane = image + (group * g.in_per_group + c) * g.height * g.width;
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const double* src = cols + ((c * g.kh + i) * g.kw + j) * ncols;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long y = static_cast<long>(oh * g.stride + i) - static_cast<long>(g.padding);
          if (y < 0 || y >= static_cast<long>(g.height)) continue;
          double* dst = plane + static_cast<std::size_t>(y) * g.width;
          const double* row = src + oh * g.out_w;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const long x = static_cast<long>(ow * g.stride + j) - static_cast<long>(g.padding);
            if (x >= 0 && x < static_cast<long>(g.width)) dst[x] += row[ow];
          }
        }
      }
    }
  }
}

// Dense products go through a single-threaded BLAS so results do not depend
// on how many cores the library happens to see.
void pin_blas_threads() {
  static const bool pinned = [] {
    openblas_set_num_threads(1);
    return true;
  }();
  (void)pinned;
}

// C[m,n] += A[m,k] * B[k,n]
void gemm_nn(const double* A, const double* B, double* C, std::size_t m, std::size_t k, std::size_t n) {
  pin_blas_threads();
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
              static_cast<int>(k), 1.0, A, static_cast<int>(k), B, static_cast<int>(n), 1.0, C, static_cast<int>(n));
}

// C[m,n] += sum_q A[q,m] * B[q,n]
void gemm_tn(const double* A, const double* B, double* C, std::size_t m, std::size_t k, std::size_t n) {
  pin_blas_threads();
  cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
              static_cast<int>(k), 1.0, A, static_cast<int>(m), B, static_cast<int>(n), 1.0, C, static_cast<int>(n));
}

// C[m,n] += sum_q A[m,q] * B[n,q]
void gemm_nt(const double* A, const double* B, double* C, std::size_t m, std::size_t k, std::size_t n) {
  pin_blas_threads();
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, static_cast<int>(m), static_cast<int>(n),
              static_cast<int>(k), 1.0, A, static_cast<int>(k), B, static_cast<int>(k), 1.0, C, static_cast<int>(n));
}

Values conv_forward(const Tensor& input, const Tensor& weight, const ConvGeometry& g) {
  const std::size_t out_plane = g.out_h * g.out_w;
  Values out(g.batch * g.out_ch * out_plane, 0.0);
  auto in = input.data();
  auto w = weight.data();
  const std::size_t image_size = g.in_ch * g.height * g.width;
  const std::size_t wgroup = g.out_per_group * g.col_rows();
  std::vector<std::uint64_t> nonzero(g.batch, 0);
  const bool count_taps = t_counter != nullptr && t_spike_driven;
  parallel_for(g.batch, [&](std::size_t b) {
    Values cols(g.col_rows() * g.col_cols());
    for (std::size_t grp = 0; grp < g.groups; ++grp) {
      im2col(in.data() + b * image_size, g, grp, cols.data());
      if (count_taps) {
        nonzero[b] += static_cast<std::uint64_t>(
            std::count_if(cols.begin(), cols.end(), [](double v) { return v != 0.0; }));
      }
      gemm_nn(w.data() + grp * wgroup, cols.data(),
              out.data() + (b * g.out_ch + grp * g.out_per_group) * out_plane, g.out_per_group,
              g.col_rows(), g.col_cols());
    }
  });
  if (t_counter) {
    if (t_spike_driven) {
      for (auto nz : nonzero) t_counter->accumulates += nz * g.out_per_group;
    } else {
      t_counter->multiply_accumulates +=
          static_cast<std::uint64_t>(g.batch) * g.out_ch * out_plane * g.col_rows();
    }
  }
  return out;
}

Values conv_input_grad_values(const Tensor& grad_out, const Tensor& weight, const ConvGeometry& g) {
  const std::size_t out_plane = g.out_h * g.out_w;
  const std::size_t image_size = g.in_ch * g.height * g.width;
  const std::size_t wgroup = g.out_per_group * g.col_rows();
  Values gx(g.batch * image_size, 0.0);
  auto gy = grad_out.data();
  auto w = weight.data();
  parallel_for(g.batch, [&](std::size_t b) {
    Values dcols(g.col_rows() * g.col_cols());
    for (std::size_t grp = 0; grp < g.groups; ++grp) {
      std::fill(dcols.begin(), dcols.end(), 0.0);
      gemm_tn(w.data() + grp * wgroup, gy.data() + (b * g.out_ch + grp * g.out_per_group) * out_plane,
              dcols.data(), g.col_rows(), g.out_per_group, g.col_cols());
      col2im(dcols.data(), g, grp, gx.data() + b * image_size);
    }
  });
  return gx;
}

Values conv_weight_grad_values(const Tensor& input, const Tensor& grad_out, const ConvGeometry& g) {
  const std::size_t out_plane = g.out_h * g.out_w;
  const std::size_t image_size = g.in_ch * g.height * g.width;
  const std::size_t wgroup = g.out_per_group * g.col_rows();
  const std::size_t wsize = g.groups * wgroup;
  std::vector<Values> partial(g.batch, Values(wsize, 0.0));
  auto in = input.data();
  auto gy = grad_out.data();
  parallel_for(g.batch, [&](std::size_t b) {
    Values cols(g.col_rows() * g.col_cols());
    for (std::size_t grp = 0; grp < g.groups; ++grp) {
      im2col(in.data() + b * image_size, g, grp, cols.data());
      gemm_nt(gy.data() + (b * g.out_ch + grp * g.out_per_group) * out_plane, cols.data(),
              partial[b].data() + grp * wgroup, g.out_per_group, g.col_cols(), g.col_rows());
    }
  });
  Values gw(wsize, 0.0);
  for (const auto& p : partial) {
    for (std::size_t i = 0; i < wsize; ++i) gw[i] += p[i];
  }
  return gw;
}

Shape weight_shape_of(const ConvGeometry& g) { return {g.out_ch, g.in_per_group, g.kh, g.kw}; }

Tensor conv2d_nobias(const Tensor& input, const Tensor& weight, ConvParams params) {
  const ConvGeometry g = conv_geometry(input.shape(), weight.shape(), params, "conv2d");
  Values out = conv_forward(input, weight, g);
  return Tensor::make_result(
      {g.batch, g.out_ch, g.out_h, g.out_w}, std::move(out), {input, weight}, "conv2d",
      [input, weight, params](const Tensor& gy) {
        Tensor gx, gw;
        if (input.requires_grad()) gx = detail::conv2d_input_grad(gy, weight, input.shape(), params);
        if (weight.requires_grad()) gw = detail::conv2d_weight_grad(input, gy, weight.shape(), params);
        return std::vector<Tensor>{gx, gw};
      },
      true);
}

}  // namespace

namespace detail {

Tensor conv2d_input_grad(const Tensor& grad_out, const Tensor& weight, const Shape& input_shape,
                         ConvParams params) {
  const ConvGeometry g = conv_geometry(input_shape, weight.shape(), params, "conv2d_input_grad");
  if (grad_out.shape() != Shape{g.batch, g.out_ch, g.out_h, g.out_w}) {
    throw ShapeError("conv2d_input_grad", "grad_out shape " + to_string(grad_out.shape()));
  }
  Values gx = conv_input_grad_values(grad_out, weight, g);
  return Tensor::make_result(
      input_shape, std::move(gx), {grad_out, weight}, "conv2d_input_grad",
      [grad_out, weight, params](const Tensor& h) {
        Tensor g_gy, g_w;
        if (grad_out.requires_grad()) g_gy = conv2d_nobias(h, weight, params);
        if (weight.requires_grad()) g_w = conv2d_weight_grad(h, grad_out, weight.shape(), params);
        return std::vector<Tensor>{g_gy, g_w};
      },
      true);
}

Tensor conv2d_weight_grad(const Tensor& input, const Tensor& grad_out, const Shape& weight_shape,
                          ConvParams params) {
  const ConvGeometry g = conv_geometry(input.shape(), weight_shape, params, "conv2d_weight_grad");
  if (grad_out.shape() != Shape{g.batch, g.out_ch, g.out_h, g.out_w}) {
    throw ShapeError("conv2d_weight_grad", "grad_out shape " + to_string(grad_out.shape()));
  }
  Values gw = conv_weight_grad_values(input, grad_out, g);
  return Tensor::make_result(
      weight_shape_of(g), std::move(gw), {input, grad_out}, "conv2d_weight_grad",
      [input, grad_out, params](const Tensor& h) {
        Tensor g_x, g_gy;
        if (input.requires_grad()) g_x = conv2d_input_grad(grad_out, h, input.shape(), params);
        if (grad_out.requires_grad()) g_gy = conv2d_nobias(input, h, params);
        return std::vector<Tensor>{g_x, g_gy};
      },
      true);
}

}  // namespace detail

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, ConvParams params) {
  Tensor out = conv2d_nobias(input, weight, params);
  if (!bias.defined()) return out;
  if (bias.shape() != Shape{weight.dim(0)}) {
    throw ShapeError("conv2d", "bias shape " + to_string(bias.shape()) + " must be [" +
                                   std::to_string(weight.dim(0)) + "]");
  }
  return add(out, reshape(bias, {1, weight.dim(0), 1, 1}));
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  return conv2d(input, weight, bias, ConvParams{stride, padding, 1});
}

Tensor dwconv2d(const Tensor& input, const Tensor& weight, std::size_t stride, std::size_t padding) {
  if (input.ndim() != 4) throw ShapeError("dwconv2d", "input must be 4-D NCHW, got " + to_string(input.shape()));
  if (weight.ndim() != 4 || weight.dim(1) != 1) {
    throw ShapeError("dwconv2d", "weight must be [C,1,k,k], got " + to_string(weight.shape()));
  }
  if (weight.dim(0) != input.dim(1)) {
    throw ShapeError("dwconv2d", "weight channels (dim 0) = " + std::to_string(weight.dim(0)) +
                                     " but input channels (dim 1) = " + std::to_string(input.dim(1)));
  }
  return conv2d(input, weight, Tensor(), ConvParams{stride, padding, input.dim(1)});
}

// ---------------------------------------------------------------------------
// Batch norm, pooling, upsampling.

Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   std::span<double> running_mean, std::span<double> running_var, bool training,
                   double momentum, double eps) {
  if (x.ndim() != 4) throw ShapeError("batchnorm2d", "input must be 4-D NCHW, got " + to_string(x.shape()));
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c} || running_mean.size() != c ||
      running_var.size() != c) {
    throw ShapeError("batchnorm2d", "parameters must have " + std::to_string(c) + " channels (dim 1)");
  }
  const std::size_t count = n * plane;
  auto xv = x.data();
  auto gv = gamma.data();
  auto bv = beta.data();
  Values mean_c(c), invstd(c);
  if (training) {
    if (count < 2) throw ShapeError("batchnorm2d", "training mode needs more than one value per channel");
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const double* p = xv.data() + (b * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) s += p[i];
      }
      const double mu = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const double* p = xv.data() + (b * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) ss += (p[i] - mu) * (p[i] - mu);
      }
      const double var = ss / static_cast<double>(count);
      mean_c[ch] = mu;
      invstd[ch] = 1.0 / std::sqrt(var + eps);
      running_mean[ch] = (1.0 - momentum) * running_mean[ch] + momentum * mu;
      running_var[ch] = (1.0 - momentum) * running_var[ch] +
                        momentum * ss / static_cast<double>(count - 1);
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean_c[ch] = running_mean[ch];
      invstd[ch] = 1.0 / std::sqrt(running_var[ch] + eps);
    }
  }
  Values xhat(x.numel()), out(x.numel());
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (b * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        xhat[base + i] = (xv[base + i] - mean_c[ch]) * invstd[ch];
        out[base + i] = gv[ch] * xhat[base + i] + bv[ch];
      }
    }
  }
  auto saved = std::make_shared<const Values>(std::move(xhat));
  auto saved_invstd = std::make_shared<const Values>(std::move(invstd));
  const Shape shape = x.shape();
  return Tensor::make_result(
      shape, std::move(out), {x, gamma, beta}, "batchnorm2d",
      [=](const Tensor& grad) {
        auto g = grad.data();
        auto gam = gamma.data();
        Values dgamma(c, 0.0), dbeta(c, 0.0);
        for (std::size_t b = 0; b < n; ++b) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t base = (b * c + ch) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              dbeta[ch] += g[base + i];
              dgamma[ch] += g[base + i] * (*saved)[base + i];
            }
          }
        }
        Values dx(n * c * plane);
        const double cnt = static_cast<double>(count);
        for (std::size_t b = 0; b < n; ++b) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t base = (b * c + ch) * plane;
            const double scale = gam[ch] * (*saved_invstd)[ch];
            for (std::size_t i = 0; i < plane; ++i) {
              if (training) {
                dx[base + i] = scale / cnt *
                               (cnt * g[base + i] - dbeta[ch] - (*saved)[base + i] * dgamma[ch]);
              } else {
                dx[base + i] = scale * g[base + i];
              }
            }
          }
        }
        return std::vector<Tensor>{constant(shape, std::move(dx)), constant({c}, std::move(dgamma)),
                                   constant({c}, std::move(dbeta))};
      });
}

Tensor maxpool2d(const Tensor& x, std::size_t kernel, std::size_t stride) {
  if (x.ndim() != 4) throw ShapeError("maxpool2d", "input must be 4-D NCHW, got " + to_string(x.shape()));
  if (kernel == 0 || stride == 0) throw ShapeError("maxpool2d", "kernel and stride must be positive");
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h < kernel || w < kernel) throw ShapeError("maxpool2d", "window larger than input " + to_string(x.shape()));
  const std::size_t oh = (h - kernel) / stride + 1, ow = (w - kernel) / stride + 1;
  Values out(planes * oh * ow);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  auto in = x.data();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        std::size_t best = p * h * w + (i * stride) * w + j * stride;
        for (std::size_t a = 0; a < kernel; ++a) {
          for (std::size_t b = 0; b < kernel; ++b) {
            const std::size_t idx = p * h * w + (i * stride + a) * w + j * stride + b;
            if (in[idx] > in[best]) best = idx;
          }
        }
        const std::size_t o = (p * oh + i) * ow + j;
        out[o] = in[best];
        (*argmax)[o] = best;
      }
    }
  }
  const Shape shape = x.shape();
  return Tensor::make_result(
      {x.dim(0), x.dim(1), oh, ow}, std::move(out), {x}, "maxpool2d", [shape, argmax](const Tensor& g) {
        Values dx(numel(shape), 0.0);
        auto gv = g.data();
        for (std::size_t o = 0; o < gv.size(); ++o) dx[(*argmax)[o]] += gv[o];
        return std::vector<Tensor>{constant(shape, std::move(dx))};
      });
}

namespace {
struct Tap {
  std::size_t i0, i1;
  double w0, w1;
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    std::size_t i0 = static_cast<std::size_t>(src);
    if (i0 > in - 1) i0 = in - 1;
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    const double lambda = src - static_cast<double>(i0);
    taps[o] = {i0, i1, 1.0 - lambda, lambda};
  }
  return taps;
}
}  // namespace

Tensor upsample_bilinear(const Tensor& x, std::size_t factor) {
  if (x.ndim() != 4) throw ShapeError("upsample_bilinear", "input must be 4-D NCHW, got " + to_string(x.shape()));
  if (factor == 0) throw ShapeError("upsample_bilinear", "factor must be positive");
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h * factor, ow = w * factor;
  const auto ty = bilinear_taps(h, oh);
  const auto tx = bilinear_taps(w, ow);
  Values out(planes * oh * ow);
  auto in = x.data();
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = in.data() + p * h * w;
    for (std::size_t i = 0; i < oh; ++i) {
      const auto& a = ty[i];
      for (std::size_t j = 0; j < ow; ++j) {
        const auto& b = tx[j];
        out[(p * oh + i) * ow + j] = a.w0 * (b.w0 * src[a.i0 * w + b.i0] + b.w1 * src[a.i0 * w + b.i1]) +
                                     a.w1 * (b.w0 * src[a.i1 * w + b.i0] + b.w1 * src[a.i1 * w + b.i1]);
      }
    }
  }
  const Shape shape = x.shape();
  return Tensor::make_result(
      {x.dim(0), x.dim(1), oh, ow}, std::move(out), {x}, "upsample_bilinear",
      [shape, ty, tx, planes, h, w, oh, ow](const Tensor& g) {
        Values dx(numel(shape), 0.0);
        auto gv = g.data();
        for (std::size_t p = 0; p < planes; ++p) {
          double* dst = dx.data() + p * h * w;
          for (std::size_t i = 0; i < oh; ++i) {
            const auto& a = ty[i];
            for (std::size_t j = 0; j < ow; ++j) {
              const auto& b = tx[j];
              const double v = gv[(p * oh + i) * ow + j];
              dst[a.i0 * w + b.i0] += a.w0 * b.w0 * v;
              dst[a.i0 * w + b.i1] += a.w0 * b.w1 * v;
              dst[a.i1 * w + b.i0] += a.w1 * b.w0 * v;
              dst[a.i1 * w + b.i1] += a.w1 * b.w1 * v;
            }
          }
        }
        return std::vector<Tensor>{constant(shape, std::move(dx))};
      });
}

// ---------------------------------------------------------------------------
// Spiking nonlinearity.

double surrogate_derivative(double x, const SurrogateSpec& spec) {
  switch (spec.kind) {
    case SurrogateKind::kRectangular:
      return std::abs(x) < spec.width ? 1.0 / (2.0 * spec.width) : 0.0;
    case SurrogateKind::kArctan: {
      // Peak 1 / (2 width) at the threshold, matching the rectangular window.
      const double alpha = 1.0 / spec.width;
      const double z = std::numbers::pi / 2.0 * alpha * x;
      return alpha / 2.0 / (1.0 + z * z);
    }
  }
  return 0.0;
}

Tensor heaviside_surrogate(const Tensor& u, double threshold, const SurrogateSpec& spec) {
  if (!(spec.width > 0)) throw std::invalid_argument("heaviside_surrogate: surrogate width must be > 0");
  return unary_map(
      u, [threshold](double v) { return v > threshold ? 1.0 : 0.0; }, "heaviside_surrogate",
      [u, threshold, spec](const Tensor& g) {
        Values d(u.numel());
        auto uv = u.data();
        auto gv = g.data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = gv[i] * surrogate_derivative(uv[i] - threshold, spec);
        return std::vector<Tensor>{constant(u.shape(), std::move(d))};
      },
      false);
}

// ---------------------------------------------------------------------------
// Losses.

Tensor mse(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mse", "shape " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  return mean(square(sub(a, b)));
}

Tensor bce(const Tensor& prob, const Tensor& target, double eps) {
  if (prob.shape() != target.shape()) {
    throw ShapeError("bce", "shape " + to_string(prob.shape()) + " vs " + to_string(target.shape()));
  }
  Tensor p = clamp(prob, eps, 1.0 - eps);
  Tensor pos = mul(target, log(p));
  Tensor negative = mul(add_scalar(neg(target), 1.0), log(add_scalar(neg(p), 1.0)));
  return neg(mean(add(pos, negative)));
}

// ---------------------------------------------------------------------------
// Op counting.

OpCounterScope::OpCounterScope(OpCounter& counter) : previous_(t_counter) { t_counter = &counter; }
OpCounterScope::~OpCounterScope() { t_counter = previous_; }

SpikeDrivenScope::SpikeDrivenScope() : previous_(t_spike_driven) { t_spike_driven = true; }
SpikeDrivenScope::~SpikeDrivenScope() { t_spike_driven = previous_; }

}  // namespace spikesal
