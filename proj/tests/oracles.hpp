// SPDX-License-Identifier: Apache-2.0
//
// Independent reference implementations used only by tests. Nothing here
// shares code with the library paths it checks.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

/// Direct-summation 2-D convolution (cross-correlation) with groups.
/// x: [B,C,H,W], w: [O, C/groups, k, k], returns [B,O,H',W'].
inline std::vector<double> conv2d(const std::vector<double>& x, std::size_t B, std::size_t C, std::size_t H,
                                  std::size_t W, const std::vector<double>& w, std::size_t O, std::size_t k,
                                  std::size_t stride, std::size_t pad, std::size_t groups,
                                  const std::vector<double>& bias = {}) {
  const std::size_t Ho = (H + 2 * pad - k) / stride + 1;
  const std::size_t Wo = (W + 2 * pad - k) / stride + 1;
  const std::size_t cpg = C / groups, opg = O / groups;
  std::vector<double> y(B * O * Ho * Wo, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t i = 0; i < Ho; ++i)
        for (std::size_t j = 0; j < Wo; ++j) {
          double acc = bias.empty() ? 0.0 : bias[o];
          const std::size_t g = o / opg;
          for (std::size_t c = 0; c < cpg; ++c)
            for (std::size_t a = 0; a < k; ++a)
              for (std::size_t d = 0; d < k; ++d) {
                const long yy = static_cast<long>(i * stride + a) - static_cast<long>(pad);
                const long xx = static_cast<long>(j * stride + d) - static_cast<long>(pad);
                if (yy < 0 || xx < 0 || yy >= static_cast<long>(H) || xx >= static_cast<long>(W)) continue;
                const std::size_t cin = g * cpg + c;
                acc += x[((b * C + cin) * H + yy) * W + xx] * w[((o * cpg + c) * k + a) * k + d];
              }
          y[((b * O + o) * Ho + i) * Wo + j] = acc;
        }
  return y;
}

/// softmax(q k^T / sqrt(d)) v for q: [n,d], k: [m,d], v: [m,e].
inline std::vector<double> attention(const std::vector<double>& q, const std::vector<double>& k,
                                     const std::vector<double>& v, std::size_t n, std::size_t m, std::size_t d,
                                     std::size_t e) {
  std::vector<double> out(n * e, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> s(m);
    double mx = -1e300;
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < d; ++t) acc += q[i * d + t] * k[j * d + t];
      s[j] = acc / std::sqrt(static_cast<double>(d));
      mx = std::max(mx, s[j]);
    }
    double z = 0.0;
    for (auto& x : s) z += x = std::exp(x - mx);
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t t = 0; t < e; ++t) out[i * e + t] += s[j] / z * v[j * e + t];
  }
  return out;
}

/// Minimum of sum_ij plan[i][j] * |i - j| over every transport plan with
/// nonnegative integer entries whose row sums are `p` and column sums `q`.
/// For integer marginals the transportation polytope has integral vertices,
/// so this exhaustive search equals the linear-program optimum.
inline int em_enumerate(const std::vector<int>& p, const std::vector<int>& q) {
  const std::size_t n = p.size();
  int best = 1 << 30;
  std::vector<int> col_left = q;
  // Fill the plan row by row, cell by cell.
  std::vector<int> row_left = p;
  auto rec = [&](auto&& self, std::size_t i, std::size_t j, int cost) -> void {
    if (cost >= best) return;
    if (i == n) {
      for (int c : col_left)
        if (c != 0) return;
      best = cost;
      return;
    }
    if (j == n) {
      if (row_left[i] == 0) self(self, i + 1, 0, cost);
      return;
    }
    const int hi = std::min(row_left[i], col_left[j]);
    for (int a = 0; a <= hi; ++a) {
      row_left[i] -= a;
      col_left[j] -= a;
      self(self, i, j + 1, cost + a * static_cast<int>(i > j ? i - j : j - i));
      row_left[i] += a;
      col_left[j] += a;
    }
  };
  rec(rec, 0, 0, 0);
  return best;
}

// ---------------------------------------------------------------------------
// Saliency metrics, written as plain loops over pixels and thresholds.

inline double mae(const std::vector<double>& p, const std::vector<double>& g) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::fabs(p[i] - g[i]);
  return s / static_cast<double>(p.size());
}

/// F_beta (beta^2 = 0.3) of the pixels whose 8-bit level is >= level.
inline double f_at(const std::vector<double>& p, const std::vector<double>& g, long level) {
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const long q = std::lround(p[i] * 255.0);
    const bool sel = q >= level;
    const bool pos = g[i] > 0.5;
    if (sel && pos) tp += 1;
    if (sel && !pos) fp += 1;
    if (!sel && pos) fn += 1;
  }
  if (tp + fp == 0 && tp + fn == 0) return 1.0;
  const double prec = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  const double rec = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  if (prec == 0.0 && rec == 0.0) return 0.0;
  return 1.3 * prec * rec / (0.3 * prec + rec);
}

/// Twice the mean 8-bit level, rounded up, kept within [1, 255].
inline double adaptive_f(const std::vector<double>& p, const std::vector<double>& g) {
  long total = 0;
  for (double v : p) total += std::lround(v * 255.0);
  const long n = static_cast<long>(p.size());
  long level = 1;
  while (level * n < 2 * total && level < 255) ++level;
  return f_at(p, g, level);
}

inline double max_f(const std::vector<double>& p, const std::vector<double>& g) {
  double best = 0.0;
  for (long level = 1; level <= 255; ++level) best = std::max(best, f_at(p, g, level));
  return best;
}

inline double psnr(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  if (s == 0.0) return 99.0;
  return std::min(99.0, -10.0 * std::log10(s / static_cast<double>(a.size())));
}

/// Mean over valid 7x7 windows, two-pass window statistics.
inline double ssim(const std::vector<double>& a, const std::vector<double>& b, std::size_t w, std::size_t h) {
  const std::size_t k = 7;
  const double c1 = 0.0001, c2 = 0.0009;
  double total = 0.0;
  std::size_t windows = 0;
  for (std::size_t r = 0; r + k <= h; ++r)
    for (std::size_t c = 0; c + k <= w; ++c) {
      double ma = 0, mb = 0;
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
          ma += a[(r + i) * w + c + j];
          mb += b[(r + i) * w + c + j];
        }
      ma /= 49.0;
      mb /= 49.0;
      double va = 0, vb = 0, cov = 0;
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
          const double da = a[(r + i) * w + c + j] - ma, db = b[(r + i) * w + c + j] - mb;
          va += da * da;
          vb += db * db;
          cov += da * db;
        }
      va /= 49.0;
      vb /= 49.0;
      cov /= 49.0;
      total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++windows;
    }
  return total / static_cast<double>(windows);
}

}  // namespace oracle
