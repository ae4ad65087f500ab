#pragma once

#include <string>
#include <utility>

#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>

namespace laneseg {

/// RGB overlay colours.
inline const cv::Vec3f kLeftColor{1.0f, 0.0f, 0.0f};
inline const cv::Vec3f kRightColor{0.0f, 0.0f, 1.0f};
inline const cv::Vec3f kUnionColor{0.0f, 1.0f, 0.0f};

/// Blends lane pixels of an RGB [0,1] image with the left/right colours at
/// opacity alpha. Pixels outside both masks are copied unchanged.
cv::Mat overlay(const cv::Mat& image, const cv::Mat& mask_left, const cv::Mat& mask_right,
                double alpha = 0.5);

/// Same with a single union mask in the union colour.
cv::Mat overlay(const cv::Mat& image, const cv::Mat& mask_union, double alpha = 0.5);

/// Signed lateral offset of the detected lane centre from the image centre.
struct DeviationRecord {
  std::string frame_id;
  double deviation_px = 0.0;    ///< lane centre minus image centre
  double deviation_norm = 0.0;  ///< deviation_px / lane width, clamped to [-2, 2]
  bool valid = false;
};

struct RowBand {
  double lo = 0.70;
  double hi = 0.95;
};

/// Averages, over band rows where both lanes have pixels, the midpoint of
/// the mean left and mean right columns. deviation_px = centre - width / 2.
DeviationRecord center_deviation(const cv::Mat& mask_left, const cv::Mat& mask_right,
                                 RowBand band, int image_width, std::string frame_id = {});

/// {"frame":str,"dev_px":float,"dev_norm":float,"valid":bool}
nlohmann::json to_json(const DeviationRecord& record);

}  // namespace laneseg
