// SPDX-License-Identifier: Apache-2.0
#include "spikesal/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

namespace spikesal {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

void check_pair(std::span<const double> a, std::span<const double> b, const char* op) {
  if (a.size() != b.size() || a.empty()) {
    throw MetricError(std::string(op) + ": maps must be nonempty and equal in size (" + std::to_string(a.size()) +
                      " vs " + std::to_string(b.size()) + ")");
  }
}

void check_dims(std::span<const double> a, std::size_t width, std::size_t height, const char* op) {
  if (a.size() != width * height) {
    throw MetricError(std::string(op) + ": map of " + std::to_string(a.size()) + " values is not " +
                      std::to_string(width) + "x" + std::to_string(height));
  }
}

int quantise(double p) { return static_cast<int>(std::lround(std::clamp(p, 0.0, 1.0) * 255.0)); }

// Per level: ground-truth-positive and -negative pixel counts.
struct LevelHistogram {
  std::array<std::size_t, 256> pos{};
  std::array<std::size_t, 256> neg{};
  std::size_t total_pos = 0;
  long long level_sum = 0;
};

LevelHistogram histogram(std::span<const double> pred, std::span<const double> gt) {
  LevelHistogram h;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int q = quantise(pred[i]);
    h.level_sum += q;
    if (gt[i] > 0.5) {
      ++h.pos[q];
      ++h.total_pos;
    } else {
      ++h.neg[q];
    }
  }
  return h;
}

double f_from_counts(std::size_t tp, std::size_t selected, std::size_t positives) {
  if (selected == 0 && positives == 0) return 1.0;
  const double p = selected == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(selected);
  const double r = positives == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(positives);
  return f_beta(p, r);
}

// F for the selection q >= k.
double f_at_level(const LevelHistogram& h, int k) {
  std::size_t tp = 0, fp = 0;
  for (int q = k; q < 256; ++q) {
    tp += h.pos[q];
    fp += h.neg[q];
  }
  return f_from_counts(tp, tp + fp, h.total_pos);
}

double mean_of(const double* v, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += v[i];
  return s / static_cast<double>(n);
}

double object_score(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  const double n = static_cast<double>(values.size());
  const double x = mean_of(values.data(), values.size());
  double var = 0.0;
  for (double v : values) var += (v - x) * (v - x);
  const double sigma = values.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
  return 2.0 * x / (x * x + 1.0 + sigma + kEps);
}

// Region similarity on a rectangular block [r0, r1) x [c0, c1).
double region_ssim(std::span<const double> pred, std::span<const double> gt, std::size_t width, std::size_t r0,
                   std::size_t r1, std::size_t c0, std::size_t c1) {
  const std::size_t n = (r1 - r0) * (c1 - c0);
  if (n == 0) return 0.0;
  double x = 0.0, y = 0.0;
  for (std::size_t r = r0; r < r1; ++r) {
    for (std::size_t c = c0; c < c1; ++c) {
      x += pred[r * width + c];
      y += gt[r * width + c];
    }
  }
  x /= static_cast<double>(n);
  y /= static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t r = r0; r < r1; ++r) {
    for (std::size_t c = c0; c < c1; ++c) {
      const double dx = pred[r * width + c] - x;
      const double dy = gt[r * width + c] - y;
      sxx += dx * dx;
      syy += dy * dy;
      sxy += dx * dy;
    }
  }
  const double denom = static_cast<double>(n) - 1.0 + kEps;
  sxx /= denom;
  syy /= denom;
  sxy /= denom;
  const double alpha = 4.0 * x * y * sxy;
  const double beta = (x * x + y * y) * (sxx + syy);
  if (alpha != 0.0) return alpha / (beta + kEps);
  return beta == 0.0 ? 1.0 : 0.0;
}

// Sliding sums over k x k windows, valid positions only. Output is
// (height - k + 1) x (width - k + 1).
std::vector<double> box_sums(const std::vector<double>& v, std::size_t width, std::size_t height, std::size_t k) {
  const std::size_t ow = width - k + 1, oh = height - k + 1;
  std::vector<double> rows(height * ow);
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < ow; ++c) {
      double s = 0.0;
      for (std::size_t j = 0; j < k; ++j) s += v[r * width + c + j];
      rows[r * ow + c] = s;
    }
  }
  std::vector<double> out(oh * ow);
  for (std::size_t r = 0; r < oh; ++r) {
    for (std::size_t c = 0; c < ow; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < k; ++i) s += rows[(r + i) * ow + c];
      out[r * ow + c] = s;
    }
  }
  return out;
}

}  // namespace

double f_beta(double precision, double recall, double beta2) {
  const double denom = beta2 * precision + recall;
  if (denom <= 0.0) return 0.0;
  return (1.0 + beta2) * precision * recall / denom;
}

PrecisionRecall precision_recall(const std::vector<bool>& selected, std::span<const double> gt) {
  if (selected.size() != gt.size()) throw MetricError("precision_recall: selection and ground truth differ in size");
  std::size_t tp = 0, sel = 0, pos = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const bool g = gt[i] > 0.5;
    sel += selected[i];
    pos += g;
    tp += selected[i] && g;
  }
  if (sel == 0 && pos == 0) return {1.0, 1.0};
  return {sel == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(sel),
          pos == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(pos)};
}

double mae(std::span<const double> pred, std::span<const double> gt) {
  check_pair(pred, gt, "mae");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - gt[i]);
  return s / static_cast<double>(pred.size());
}

double mean_f_beta(std::span<const double> pred, std::span<const double> gt) {
  check_pair(pred, gt, "mean_f_beta");
  const LevelHistogram h = histogram(pred, gt);
  const long long n = static_cast<long long>(pred.size());
  // ceil(2 * sum / n) in integers.
  long long k = (2 * h.level_sum + n - 1) / n;
  k = std::clamp<long long>(k, 1, 255);
  return f_at_level(h, static_cast<int>(k));
}

std::vector<double> f_beta_curve(std::span<const double> pred, std::span<const double> gt) {
  check_pair(pred, gt, "f_beta_curve");
  const LevelHistogram h = histogram(pred, gt);
  std::vector<double> curve(kFThresholds);
  std::size_t tp = 0, fp = 0;
  for (int k = 255; k >= 1; --k) {
    tp += h.pos[k];
    fp += h.neg[k];
    curve[k - 1] = f_from_counts(tp, tp + fp, h.total_pos);
  }
  return curve;
}

double max_f_beta(std::span<const double> pred, std::span<const double> gt) {
  const auto curve = f_beta_curve(pred, gt);
  return *std::max_element(curve.begin(), curve.end());
}

double s_measure(std::span<const double> pred, std::span<const double> gt, std::size_t width, std::size_t height) {
  check_pair(pred, gt, "s_measure");
  check_dims(pred, width, height, "s_measure");
  const double n = static_cast<double>(pred.size());
  double gt_sum = 0.0;
  for (double g : gt) gt_sum += g > 0.5 ? 1.0 : 0.0;
  const double y = gt_sum / n;
  const double x = mean_of(pred.data(), pred.size());
  if (gt_sum == 0.0) return 1.0 - x;
  if (gt_sum == n) return x;

  std::vector<double> fg, bg;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (gt[i] > 0.5) {
      fg.push_back(pred[i]);
    } else {
      bg.push_back(1.0 - pred[i]);
    }
  }
  const double object = y * object_score(fg) + (1.0 - y) * object_score(bg);

  // Centroid in 1-based pixel coordinates, rounded half away from zero.
  double cx = 0.0, cy = 0.0;
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      if (gt[r * width + c] > 0.5) {
        cx += static_cast<double>(c + 1);
        cy += static_cast<double>(r + 1);
      }
    }
  }
  const auto X = static_cast<std::size_t>(std::lround(cx / gt_sum));
  const auto Y = static_cast<std::size_t>(std::lround(cy / gt_sum));
  std::vector<double> gtb(gt.size());
  for (std::size_t i = 0; i < gt.size(); ++i) gtb[i] = gt[i] > 0.5 ? 1.0 : 0.0;
  const double area = n;
  const double w1 = static_cast<double>(X * Y) / area;
  const double w2 = static_cast<double>((width - X) * Y) / area;
  const double w3 = static_cast<double>(X * (height - Y)) / area;
  const double w4 = 1.0 - w1 - w2 - w3;
  const double region = w1 * region_ssim(pred, gtb, width, 0, Y, 0, X) +
                        w2 * region_ssim(pred, gtb, width, 0, Y, X, width) +
                        w3 * region_ssim(pred, gtb, width, Y, height, 0, X) +
                        w4 * region_ssim(pred, gtb, width, Y, height, X, width);
  return std::max(0.0, 0.5 * object + 0.5 * region);
}

double psnr(std::span<const double> a, std::span<const double> b) {
  check_pair(a, b, "psnr");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  const double m = s / static_cast<double>(a.size());
  if (m == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / m));
}

double ssim(std::span<const double> a, std::span<const double> b, std::size_t width, std::size_t height) {
  check_pair(a, b, "ssim");
  check_dims(a, width, height, "ssim");
  const std::size_t k = kSsimWindow;
  if (width < k || height < k) {
    throw MetricError("ssim: map " + std::to_string(width) + "x" + std::to_string(height) + " smaller than the " +
                      std::to_string(k) + "x" + std::to_string(k) + " window");
  }
  std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end()), xx(a.size()), yy(a.size()), xy(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto sx = box_sums(x, width, height, k), sy = box_sums(y, width, height, k);
  const auto sxx = box_sums(xx, width, height, k), syy = box_sums(yy, width, height, k);
  const auto sxy = box_sums(xy, width, height, k);
  const double inv = 1.0 / static_cast<double>(k * k);
  const double c1 = kSsimK1 * kSsimK1, c2 = kSsimK2 * kSsimK2;
  double total = 0.0;
  for (std::size_t i = 0; i < sx.size(); ++i) {
    const double mx = sx[i] * inv, my = sy[i] * inv;
    const double vx = sxx[i] * inv - mx * mx;
    const double vy = syy[i] * inv - my * my;
    const double cxy = sxy[i] * inv - mx * my;
    total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(sx.size());
}

}  // namespace spikesal
