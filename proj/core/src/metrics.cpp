#include "laneseg/metrics.hpp"

#include <cmath>
#include <cstdio>

#include "laneseg/errors.hpp"

namespace laneseg::metrics {

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  tp += other.tp;
  fp += other.fp;
  fn += other.fn;
  tn += other.tn;
  return *this;
}

cv::Mat binarize(const cv::Mat& probs, double threshold) {
  if (probs.channels() != 1) throw ShapeError("binarize expects a single-channel array");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ArgumentError("threshold must lie in (0,1)");
  cv::Mat mask;
  cv::compare(probs, cv::Scalar(threshold), mask, cv::CMP_GE);  // 0 / 255
  return mask / 255;
}

ConfusionMatrix confusion(const cv::Mat& pred, const cv::Mat& target) {
  if (pred.size() != target.size()) throw ShapeError("confusion: prediction and target differ in size");
  if (pred.type() != CV_8UC1 || target.type() != CV_8UC1) {
    throw ShapeError("confusion expects CV_8UC1 masks");
  }
  ConfusionMatrix cm;
  for (int r = 0; r < pred.rows; ++r) {
    const uchar* p = pred.ptr<uchar>(r);
    const uchar* t = target.ptr<uchar>(r);
    for (int c = 0; c < pred.cols; ++c) {
      const bool pp = p[c] != 0;
      const bool tt = t[c] != 0;
      if (pp && tt) ++cm.tp;
      else if (pp) ++cm.fp;
      else if (tt) ++cm.fn;
      else ++cm.tn;
    }
  }
  return cm;
}

MetricReport pixel_metrics(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw ArgumentError("pixel_metrics on an empty confusion matrix");
  const auto d = [](std::uint64_t v) { return static_cast<double>(v); };
  MetricReport m;
  m.accuracy = d(cm.tp + cm.tn) / d(cm.total());
  m.precision = cm.tp + cm.fp == 0 ? 0.0 : d(cm.tp) / d(cm.tp + cm.fp);
  m.recall = cm.tp + cm.fn == 0 ? 0.0 : d(cm.tp) / d(cm.tp + cm.fn);
  const std::uint64_t fg_union = cm.tp + cm.fp + cm.fn;
  m.iou_fg = fg_union == 0 ? 1.0 : d(cm.tp) / d(fg_union);
  const std::uint64_t bg_union = cm.tn + cm.fp + cm.fn;
  const double iou_bg = bg_union == 0 ? 1.0 : d(cm.tn) / d(bg_union);
  m.iou_mean = (m.iou_fg + iou_bg) / 2.0;
  return m;
}

double mask_iou(const cv::Mat& pred, const cv::Mat& target) {
  const ConfusionMatrix cm = confusion(pred, target);
  const std::uint64_t u = cm.tp + cm.fp + cm.fn;
  return u == 0 ? 1.0 : static_cast<double>(cm.tp) / static_cast<double>(u);
}

FrameLevelReport frame_lane_accuracy(std::span<const LaneIou> per_frame, double tau) {
  if (per_frame.empty()) throw ArgumentError("frame_lane_accuracy needs at least one frame");
  if (!(tau > 0.0 && tau < 1.0)) throw ArgumentError("tau must lie in (0,1)");
  FrameLevelReport report;
  report.tau = tau;
  report.total_frames = static_cast<int>(per_frame.size());
  for (const auto& f : per_frame) {
    if (!(f.left >= 0.0 && f.left <= 1.0 && f.right >= 0.0 && f.right <= 1.0)) {
      throw DomainError("lane IoU outside [0,1]");
    }
    const int hits = (f.left >= tau ? 1 : 0) + (f.right >= tau ? 1 : 0);
    if (hits == 2) ++report.both_detected;
    if (hits >= 1) ++report.one_detected;
  }
  report.acc_both = static_cast<double>(report.both_detected) / report.total_frames;
  report.acc_one = static_cast<double>(report.one_detected) / report.total_frames;
  return report;
}

std::string truncated_percent(std::int64_t numerator, std::int64_t denominator) {
  if (denominator <= 0 || numerator < 0) throw ArgumentError("truncated_percent needs 0 <= n, d > 0");
  const std::int64_t basis_points = numerator * 10000 / denominator;  // floor
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%lld.%02lld", static_cast<long long>(basis_points / 100),
                static_cast<long long>(basis_points % 100));
  return buf;
}

double truncate_percent(double ratio) {
  // The small epsilon keeps exact ratios such as 0.5 from flooring to 49.99.
  return std::floor(ratio * 10000.0 + 1e-9) / 100.0;
}

nlohmann::json report_to_json(const MetricReport& pixel, const FrameLevelReport& frame) {
  return {{"pixel",
           {{"accuracy", pixel.accuracy},
            {"precision", pixel.precision},
            {"recall", pixel.recall},
            {"iou_fg", pixel.iou_fg},
            {"iou_mean", pixel.iou_mean}}},
          {"frame",
           {{"total", frame.total_frames},
            {"both", frame.both_detected},
            {"one", frame.one_detected},
            {"acc_both", frame.acc_both},
            {"acc_one", frame.acc_one},
            {"tau", frame.tau}}},
          {"version", 1}};
}

}  // namespace laneseg::metrics
