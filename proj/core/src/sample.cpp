#include "laneseg/sample.hpp"

#include <algorithm>
#include <vector>

#include <opencv2/imgproc.hpp>

#include "laneseg/errors.hpp"

namespace laneseg {

namespace {

void check_mask(const cv::Mat& mask, const cv::Size& size, const char* name) {
  if (mask.empty() || mask.type() != CV_8UC1) {
    throw ShapeError(std::string("mask '") + name + "' must be a non-empty CV_8UC1 array");
  }
  if (mask.size() != size) {
    throw ShapeError(std::string("mask '") + name + "' does not match the image size");
  }
  double lo = 0.0;
  double hi = 0.0;
  cv::minMaxLoc(mask, &lo, &hi);
  if (hi > 1.0) {
    throw DomainError(std::string("mask '") + name + "' holds values other than 0 and 1");
  }
}

}  // namespace

cv::Mat union_of(const cv::Mat& a, const cv::Mat& b) {
  cv::Mat out;
  cv::bitwise_or(a, b, out);
  return out;
}

Sample make_sample(cv::Mat image, cv::Mat mask_left, cv::Mat mask_right, std::string frame_id) {
  Sample s;
  s.image = std::move(image);
  s.mask_left = std::move(mask_left);
  s.mask_right = std::move(mask_right);
  if (!s.mask_left.empty() && !s.mask_right.empty() && s.mask_left.size() == s.mask_right.size()) {
    s.mask_union = union_of(s.mask_left, s.mask_right);
  }
  s.frame_id = std::move(frame_id);
  validate_sample(s);
  return s;
}

void validate_sample(const Sample& sample) {
  if (sample.image.empty() || sample.image.type() != CV_32FC3) {
    throw ShapeError("sample image must be a non-empty CV_32FC3 array");
  }
  const cv::Size size = sample.image.size();
  check_mask(sample.mask_left, size, "left");
  check_mask(sample.mask_right, size, "right");
  check_mask(sample.mask_union, size, "union");

  double lo = 0.0;
  double hi = 0.0;
  cv::minMaxLoc(sample.image.reshape(1), &lo, &hi);
  if (lo < 0.0 || hi > 1.0) {
    throw DomainError("sample image values must lie in [0,1]");
  }
  if (cv::countNonZero(union_of(sample.mask_left, sample.mask_right) != sample.mask_union) != 0) {
    throw DomainError("mask_union is not the OR of mask_left and mask_right");
  }
}

Sample clone_sample(const Sample& sample) {
  return Sample{sample.image.clone(), sample.mask_left.clone(), sample.mask_right.clone(),
                sample.mask_union.clone(), sample.frame_id};
}

namespace {

bool mats_identical(const cv::Mat& a, const cv::Mat& b) {
  if (a.size() != b.size() || a.type() != b.type()) return false;
  if (a.empty()) return true;
  for (int r = 0; r < a.rows; ++r) {
    const auto row_bytes = static_cast<std::size_t>(a.cols) * a.elemSize();
    if (!std::equal(a.ptr<uchar>(r), a.ptr<uchar>(r) + row_bytes, b.ptr<uchar>(r))) return false;
  }
  return true;
}

}  // namespace

bool samples_equal(const Sample& a, const Sample& b) {
  return a.frame_id == b.frame_id && mats_identical(a.image, b.image) &&
         mats_identical(a.mask_left, b.mask_left) && mats_identical(a.mask_right, b.mask_right) &&
         mats_identical(a.mask_union, b.mask_union);
}

std::pair<cv::Mat, cv::Mat> split_union_mask(const cv::Mat& mask_union) {
  if (mask_union.empty() || mask_union.type() != CV_8UC1) {
    throw ShapeError("split_union_mask expects a CV_8UC1 mask");
  }
  cv::Mat labels;
  cv::Mat stats;
  cv::Mat centroids;
  const int n = cv::connectedComponentsWithStats(mask_union != 0, labels, stats, centroids, 8, CV_32S);

  const double center = mask_union.cols / 2.0;
  std::vector<uchar> is_left(static_cast<std::size_t>(n), 0);
  for (int label = 1; label < n; ++label) {
    // Centroids are in pixel-index units; +0.5 moves to pixel centres.
    is_left[label] = centroids.at<double>(label, 0) + 0.5 < center ? 1 : 0;
  }

  cv::Mat left = cv::Mat::zeros(mask_union.size(), CV_8UC1);
  cv::Mat right = cv::Mat::zeros(mask_union.size(), CV_8UC1);
  for (int r = 0; r < labels.rows; ++r) {
    const int* lab = labels.ptr<int>(r);
    uchar* l = left.ptr<uchar>(r);
    uchar* rr = right.ptr<uchar>(r);
    for (int c = 0; c < labels.cols; ++c) {
      if (lab[c] == 0) continue;
      (is_left[lab[c]] ? l : rr)[c] = 1;
    }
  }
  return {left, right};
}

}  // namespace laneseg
