#pragma once

#include <string>
#include <utility>

#include <opencv2/core.hpp>

namespace laneseg {

/// One training/evaluation example.
///
/// `image` is CV_32FC3 in RGB order with values in [0,1]. The three masks
/// are CV_8UC1 holding {0,1}; `mask_union` is always the OR of left and
/// right. All four share the same size.
struct Sample {
  cv::Mat image;
  cv::Mat mask_left;
  cv::Mat mask_right;
  cv::Mat mask_union;
  std::string frame_id;

  int rows() const { return image.rows; }
  int cols() const { return image.cols; }
};

/// Builds a sample from an image and per-lane masks; the union is derived.
Sample make_sample(cv::Mat image, cv::Mat mask_left, cv::Mat mask_right,
                   std::string frame_id = {});

/// Throws ShapeError / DomainError if any Sample invariant is violated.
void validate_sample(const Sample& sample);

/// Deep copy (cv::Mat copies share buffers).
Sample clone_sample(const Sample& sample);

/// True when both samples have bitwise identical arrays and ids.
bool samples_equal(const Sample& a, const Sample& b);

/// Splits a binary union mask into left/right lane masks.
///
/// Each 8-connected component goes to the left mask when its mean column
/// lies left of the image center, otherwise to the right mask.
std::pair<cv::Mat, cv::Mat> split_union_mask(const cv::Mat& mask_union);

/// Elementwise OR of two {0,1} masks.
cv::Mat union_of(const cv::Mat& a, const cv::Mat& b);

}  // namespace laneseg
