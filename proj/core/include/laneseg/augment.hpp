#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>

#include "laneseg/sample.hpp"

namespace laneseg {

enum class TransformKind {
  kShiftScaleRotate,
  kAdditiveGaussianNoise,
  kClahe,
  kRandomBrightness,
  kRandomGamma,
  kSharpen,
  kBlur,
  kMotionBlur,
  kRandomContrast,
  kHueSaturationValue,
};

std::string to_string(TransformKind kind);
/// Throws SpecError for anything other than the ten supported kinds.
TransformKind parse_transform_kind(const std::string& text);

/// Closed interval a parameter is drawn from uniformly.
struct Range {
  double lo = 0.0;
  double hi = 0.0;

  bool operator==(const Range&) const = default;
};

struct TransformSpec {
  TransformKind kind;
  double probability = 0.0;
  std::map<std::string, Range> params;

  /// Range for `name`, or SpecError if absent.
  Range param(const std::string& name) const;

  bool operator==(const TransformSpec&) const = default;
};

/// Ordered list of transforms; each fires independently with its probability.
struct AugmentationSpec {
  std::vector<TransformSpec> transforms;

  bool operator==(const AugmentationSpec&) const = default;
};

/// Default parameter ranges and probabilities for one transform kind.
TransformSpec default_transform(TransformKind kind);

/// All ten transforms with their default settings, in a fixed order.
AugmentationSpec default_augmentation_spec();

/// Throws SpecError when a probability or range is invalid or a required
/// parameter is missing.
void validate_spec(const AugmentationSpec& spec);

/// JSON list of {"kind":str,"p":float,"params":{name: number | [lo,hi]}}.
AugmentationSpec spec_from_json(const nlohmann::json& doc);
nlohmann::json spec_to_json(const AugmentationSpec& spec);
AugmentationSpec load_augmentation_spec(const std::filesystem::path& path);

/// Applies `spec` to `sample`. Geometric transforms move image and masks
/// together; photometric ones touch the image only and clip to [0,1].
/// Deterministic in (sample, spec, seed).
Sample augment(const Sample& sample, const AugmentationSpec& spec, std::uint64_t seed);

/// 2x3 affine map from output pixel coordinates to source coordinates.
using InverseAffine = cv::Matx23d;

/// Inverse map for a shift/scale/rotate about the pixel-grid centre.
/// `angle_deg` is counter-clockwise as displayed; shifts are fractions of
/// the image dimensions.
InverseAffine shift_scale_rotate_map(cv::Size size, double shift_x, double shift_y,
                                     double scale, double angle_deg);

/// Bilinear warp of a float image with zero fill outside the source.
cv::Mat warp_image(const cv::Mat& image, const InverseAffine& map);

/// Nearest-neighbour warp of a {0,1} mask with zero fill.
cv::Mat warp_mask(const cv::Mat& mask, const InverseAffine& map);

}  // namespace laneseg
