// SPDX-License-Identifier: Apache-2.0
#pragma once

// Saliency and image-quality metrics on single maps. Maps are row-major
// spans of values in [0, 1]; ground truth is binary.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace spikesal {

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr double kBetaSquared = 0.3;
inline constexpr double kPsnrCap = 99.0;
inline constexpr std::size_t kSsimWindow = 7;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;
inline constexpr std::size_t kFThresholds = 255;

/// (1 + b2) P R / (b2 P + R); 0 when both are 0.
double f_beta(double precision, double recall, double beta2 = kBetaSquared);

/// Precision and recall of a binary selection against binary ground truth.
/// Empty selection gives precision 0; empty ground truth gives recall 0, and
/// when both are empty the pair is (1, 1).
struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
};
PrecisionRecall precision_recall(const std::vector<bool>& selected, std::span<const double> gt);

double mae(std::span<const double> pred, std::span<const double> gt);

/// Predictions are quantised to 8 bits (q = round(255 p)) before either
/// F-measure. Adaptive: select q >= k with k = ceil(2 * sum(q) / N) clamped
/// to [1, 255], i.e. twice the mean capped at 1 and floored at one level.
double mean_f_beta(std::span<const double> pred, std::span<const double> gt);

/// F_beta of the selection q >= k for k = 1..255, index k - 1.
std::vector<double> f_beta_curve(std::span<const double> pred, std::span<const double> gt);

/// Best value of the curve above.
double max_f_beta(std::span<const double> pred, std::span<const double> gt);

/// Structure measure: 0.5 object-aware + 0.5 region-aware similarity.
double s_measure(std::span<const double> pred, std::span<const double> gt, std::size_t width, std::size_t height);

/// 10 log10(1 / MSE) for unit peak, capped at kPsnrCap (identical maps).
double psnr(std::span<const double> a, std::span<const double> b);

/// Mean SSIM over all valid 7x7 windows with uniform weights, population
/// statistics and C1 = (0.01)^2, C2 = (0.03)^2. Maps must be at least 7x7.
double ssim(std::span<const double> a, std::span<const double> b, std::size_t width, std::size_t height);

}  // namespace spikesal
