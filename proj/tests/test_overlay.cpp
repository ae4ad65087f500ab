#include <gtest/gtest.h>

#include "laneseg/errors.hpp"
#include "laneseg/overlay.hpp"

namespace laneseg {
namespace {

cv::Mat random_image(int rows, int cols, int seed) {
  cv::Mat img(rows, cols, CV_32FC3);
  cv::RNG(seed).fill(img, cv::RNG::UNIFORM, 0.0, 1.0);
  return img;
}

cv::Mat vertical_lane(int rows, int cols, int column, int width = 1) {
  cv::Mat m = cv::Mat::zeros(rows, cols, CV_8UC1);
  m(cv::Rect(column, 0, width, rows)).setTo(1);
  return m;
}

TEST(Overlay, ZeroAlphaIsIdentity) {
  const cv::Mat img = random_image(10, 12, 1);
  const cv::Mat l = vertical_lane(10, 12, 2), r = vertical_lane(10, 12, 9);
  EXPECT_EQ(cv::norm(overlay(img, l, r, 0.0), img, cv::NORM_INF), 0.0);
  EXPECT_EQ(cv::norm(overlay(img, l | r, 0.0), img, cv::NORM_INF), 0.0);
}

TEST(Overlay, FullAlphaPaintsPureColour) {
  const cv::Mat img = random_image(5, 5, 2);
  cv::Mat m = cv::Mat::zeros(5, 5, CV_8UC1);
  m.at<uchar>(2, 3) = 1;
  const cv::Mat out = overlay(img, m, cv::Mat::zeros(5, 5, CV_8UC1), 1.0);
  EXPECT_EQ(out.at<cv::Vec3f>(2, 3), kLeftColor);
  const cv::Mat out_u = overlay(img, m, 1.0);
  EXPECT_EQ(out_u.at<cv::Vec3f>(2, 3), kUnionColor);
}

TEST(Overlay, HalfAlphaAverages) {
  cv::Mat img(3, 3, CV_32FC3, cv::Scalar(0.2, 0.6, 0.8));
  cv::Mat m = cv::Mat::zeros(3, 3, CV_8UC1);
  m.at<uchar>(1, 1) = 1;
  const cv::Vec3f px = overlay(img, cv::Mat::zeros(3, 3, CV_8UC1), m, 0.5).at<cv::Vec3f>(1, 1);
  EXPECT_NEAR(px[0], (0.2 + kRightColor[0]) / 2, 1.0 / 255);
  EXPECT_NEAR(px[1], (0.6 + kRightColor[1]) / 2, 1.0 / 255);
  EXPECT_NEAR(px[2], (0.8 + kRightColor[2]) / 2, 1.0 / 255);
}

TEST(Overlay, PixelsOutsideMasksUnchanged) {
  for (int seed = 0; seed < 20; ++seed) {
    const cv::Mat img = random_image(16, 16, seed);
    cv::Mat l(16, 16, CV_8UC1), r(16, 16, CV_8UC1);
    cv::RNG(seed + 100).fill(l, cv::RNG::UNIFORM, 0, 2);
    cv::RNG(seed + 200).fill(r, cv::RNG::UNIFORM, 0, 2);
    const cv::Mat out = overlay(img, l, r, 0.7);
    for (int y = 0; y < 16; ++y) {
      for (int x = 0; x < 16; ++x) {
        if (!l.at<uchar>(y, x) && !r.at<uchar>(y, x)) {
          EXPECT_EQ(out.at<cv::Vec3f>(y, x), img.at<cv::Vec3f>(y, x));
        }
      }
    }
  }
}

TEST(Overlay, RejectsBadInputs) {
  const cv::Mat img = random_image(4, 4, 0);
  const cv::Mat m = cv::Mat::zeros(4, 4, CV_8UC1);
  EXPECT_THROW(overlay(img, m, 1.5), ArgumentError);
  EXPECT_THROW(overlay(img, cv::Mat::zeros(3, 4, CV_8UC1), 0.5), ShapeError);
}

TEST(CenterDeviation, SymmetricLanesAreCentred) {
  const int w = 80, h = 60;
  const DeviationRecord rec =
      center_deviation(vertical_lane(h, w, w / 4), vertical_lane(h, w, 3 * w / 4), {}, w, "f");
  EXPECT_TRUE(rec.valid);
  EXPECT_DOUBLE_EQ(rec.deviation_px, 0.0);
  EXPECT_DOUBLE_EQ(rec.deviation_norm, 0.0);
  EXPECT_EQ(rec.frame_id, "f");
}

TEST(CenterDeviation, ShiftedLanesDeviateByShift) {
  const int w = 80, h = 60;
  const DeviationRecord rec =
      center_deviation(vertical_lane(h, w, w / 4 + 10, 3), vertical_lane(h, w, 3 * w / 4 + 10, 3), {}, w);
  EXPECT_TRUE(rec.valid);
  EXPECT_DOUBLE_EQ(rec.deviation_px, 11.0);  // 3-wide lanes: mean column is start + 1
  const DeviationRecord one =
      center_deviation(vertical_lane(h, w, w / 4 + 10), vertical_lane(h, w, 3 * w / 4 + 10), {}, w);
  EXPECT_DOUBLE_EQ(one.deviation_px, 10.0);
  EXPECT_DOUBLE_EQ(one.deviation_norm, 10.0 / 40.0);
}

TEST(CenterDeviation, EmptyLeftInBandIsInvalid) {
  const int w = 80, h = 60;
  cv::Mat left = vertical_lane(h, w, 20);
  left.rowRange(h / 2, h).setTo(0);  // only above the band
  const DeviationRecord rec = center_deviation(left, vertical_lane(h, w, 60), {0.7, 0.95}, w);
  EXPECT_FALSE(rec.valid);
  EXPECT_FALSE(center_deviation(cv::Mat::zeros(h, w, CV_8UC1), vertical_lane(h, w, 60), {}, w).valid);
}

TEST(CenterDeviation, NormIsClamped) {
  const int w = 200, h = 40;
  const DeviationRecord rec = center_deviation(vertical_lane(h, w, 180), vertical_lane(h, w, 190), {}, w);
  EXPECT_TRUE(rec.valid);
  EXPECT_DOUBLE_EQ(rec.deviation_px, 85.0);
  EXPECT_DOUBLE_EQ(rec.deviation_norm, 2.0);
}

TEST(CenterDeviation, BadBandIsAnArgumentError) {
  const cv::Mat m = cv::Mat::zeros(10, 10, CV_8UC1);
  EXPECT_THROW(center_deviation(m, m, {0.9, 0.5}, 10), ArgumentError);
}

TEST(CenterDeviation, JsonShape) {
  const auto j = to_json(DeviationRecord{"f7", 1.5, 0.25, true});
  EXPECT_EQ(j.at("frame"), "f7");
  EXPECT_DOUBLE_EQ(j.at("dev_px").get<double>(), 1.5);
  EXPECT_DOUBLE_EQ(j.at("dev_norm").get<double>(), 0.25);
  EXPECT_EQ(j.at("valid"), true);
}

}  // namespace
}  // namespace laneseg
