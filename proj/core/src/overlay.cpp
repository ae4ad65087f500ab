#include "laneseg/overlay.hpp"

#include <algorithm>
#include <cmath>

#include "laneseg/errors.hpp"

namespace laneseg {

namespace {

void check_inputs(const cv::Mat& image, const cv::Mat& mask, double alpha) {
  if (image.type() != CV_32FC3) throw ShapeError("overlay expects a CV_32FC3 RGB image");
  if (mask.type() != CV_8UC1 || mask.size() != image.size()) {
    throw ShapeError("overlay mask must be CV_8UC1 and match the image size");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ArgumentError("alpha must lie in [0,1]");
}

void blend(cv::Mat& out, const cv::Mat& mask, const cv::Vec3f& color, float alpha) {
  for (int r = 0; r < out.rows; ++r) {
    auto* px = out.ptr<cv::Vec3f>(r);
    const uchar* m = mask.ptr<uchar>(r);
    for (int c = 0; c < out.cols; ++c) {
      if (m[c]) px[c] = px[c] * (1.0f - alpha) + color * alpha;
    }
  }
}

}  // namespace

cv::Mat overlay(const cv::Mat& image, const cv::Mat& mask_left, const cv::Mat& mask_right,
                double alpha) {
  check_inputs(image, mask_left, alpha);
  check_inputs(image, mask_right, alpha);
  cv::Mat out = image.clone();
  blend(out, mask_left, kLeftColor, static_cast<float>(alpha));
  blend(out, mask_right, kRightColor, static_cast<float>(alpha));
  return out;
}

cv::Mat overlay(const cv::Mat& image, const cv::Mat& mask_union, double alpha) {
  check_inputs(image, mask_union, alpha);
  cv::Mat out = image.clone();
  blend(out, mask_union, kUnionColor, static_cast<float>(alpha));
  return out;
}

DeviationRecord center_deviation(const cv::Mat& mask_left, const cv::Mat& mask_right, RowBand band,
                                 int image_width, std::string frame_id) {
  if (mask_left.type() != CV_8UC1 || mask_right.type() != CV_8UC1 || mask_left.size() != mask_right.size()) {
    throw ShapeError("center_deviation expects two CV_8UC1 masks of equal size");
  }
  if (!(band.lo >= 0.0 && band.lo < band.hi && band.hi <= 1.0)) {
    throw ArgumentError("row band must satisfy 0 <= lo < hi <= 1");
  }
  DeviationRecord rec;
  rec.frame_id = std::move(frame_id);

  const int rows = mask_left.rows;
  const int r_lo = std::clamp(static_cast<int>(std::floor(band.lo * rows)), 0, rows);
  const int r_hi = std::clamp(static_cast<int>(std::ceil(band.hi * rows)), 0, rows);

  double center_sum = 0.0;
  double width_sum = 0.0;
  int used = 0;
  for (int r = r_lo; r < r_hi; ++r) {
    const uchar* l = mask_left.ptr<uchar>(r);
    const uchar* rt = mask_right.ptr<uchar>(r);
    double lsum = 0.0;
    double rsum = 0.0;
    int lcount = 0;
    int rcount = 0;
    for (int c = 0; c < mask_left.cols; ++c) {
      if (l[c]) {
        lsum += c;
        ++lcount;
      }
      if (rt[c]) {
        rsum += c;
        ++rcount;
      }
    }
    if (lcount == 0 || rcount == 0) continue;
    const double lmean = lsum / lcount;
    const double rmean = rsum / rcount;
    center_sum += (lmean + rmean) / 2.0;
    width_sum += rmean - lmean;
    ++used;
  }
  if (used == 0) return rec;

  // Column indices are used as coordinates, so lanes at W/4 and 3W/4 are centred.
  const double lane_center = center_sum / used;
  const double lane_width = width_sum / used;
  rec.deviation_px = lane_center - image_width / 2.0;
  rec.deviation_norm =
      lane_width != 0.0 ? std::clamp(rec.deviation_px / std::abs(lane_width), -2.0, 2.0) : 0.0;
  rec.valid = true;
  return rec;
}

nlohmann::json to_json(const DeviationRecord& record) {
  return {{"frame", record.frame_id},
          {"dev_px", record.deviation_px},
          {"dev_norm", record.deviation_norm},
          {"valid", record.valid}};
}

}  // namespace laneseg
