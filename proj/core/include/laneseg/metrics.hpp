#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>

namespace laneseg::metrics {

/// Pixel counts of a binary segmentation. Merge is elementwise addition.
struct ConfusionMatrix {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }

  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  friend ConfusionMatrix operator+(ConfusionMatrix a, const ConfusionMatrix& b) { return a += b; }
  bool operator==(const ConfusionMatrix&) const = default;
};

inline ConfusionMatrix merge(const ConfusionMatrix& a, const ConfusionMatrix& b) { return a + b; }

struct MetricReport {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double iou_fg = 0.0;
  double iou_mean = 0.0;
};

struct FrameLevelReport {
  int total_frames = 0;
  int both_detected = 0;
  int one_detected = 0;
  double acc_both = 0.0;
  double acc_one = 0.0;
  double tau = 0.5;
};

/// 1 where prob >= threshold. `probs` is single-channel float or double.
cv::Mat binarize(const cv::Mat& probs, double threshold = 0.5);

/// Exact pixel counts; both inputs CV_8UC1 with nonzero meaning foreground.
ConfusionMatrix confusion(const cv::Mat& pred, const cv::Mat& target);

/// Throws ArgumentError on an empty matrix.
MetricReport pixel_metrics(const ConfusionMatrix& cm);

/// Foreground IoU of two masks; 1 when both are empty.
double mask_iou(const cv::Mat& pred, const cv::Mat& target);

struct LaneIou {
  double left = 0.0;
  double right = 0.0;
};

/// A lane counts as detected when its IoU >= tau.
FrameLevelReport frame_lane_accuracy(std::span<const LaneIou> per_frame, double tau = 0.5);

/// Percentage truncated (not rounded) to two decimals: 113/129 -> "87.59".
std::string truncated_percent(std::int64_t numerator, std::int64_t denominator);

/// Floor of 100 * ratio to two decimals, as a number.
double truncate_percent(double ratio);

/// {"pixel":{...},"frame":{...},"version":1}
nlohmann::json report_to_json(const MetricReport& pixel, const FrameLevelReport& frame);

}  // namespace laneseg::metrics
