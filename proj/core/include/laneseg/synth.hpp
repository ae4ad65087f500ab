#pragma once

#include <cstdint>
#include <filesystem>

#include <opencv2/core.hpp>

#include "laneseg/data.hpp"
#include "laneseg/sample.hpp"

namespace laneseg::synth {

/// Knobs of the procedural road scene.
struct SceneParams {
  cv::Size image_size{320, 256};  // width x height
  /// Max magnitude of the quadratic lane coefficient; drawn per scene in
  /// [-lane_curvature, lane_curvature].
  double lane_curvature = 0.002;
  /// Distance between the two lane lines at the bottom row.
  double lane_width_px = 180.0;
  double line_thickness_px = 5.0;
  /// Std-dev of per-pixel road texture noise, in [0,1] intensity units.
  double texture_noise_sigma = 0.03;
  double horizon_row_fraction = 0.4;
};

/// Defaults rescaled to an image size (lane width ~56% of the width).
SceneParams params_for_size(cv::Size size);

/// Throws ArgumentError when an invariant of SceneParams does not hold.
void validate(const SceneParams& params);

/// Lane line x(y) = a (y - h)^2 + b (y - h) + c, drawn on rows y >= first_row.
struct LaneCurve {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double h = 0.0;

  double column_at(double row) const {
    const double d = row - h;
    return a * d * d + b * d + c;
  }
};

struct Scene {
  Sample sample;
  LaneCurve left;
  LaneCurve right;
  int first_row = 0;           ///< first rendered row (just below the horizon)
  double line_thickness = 0.0;
};

/// Rasterises one lane line: on each row r >= first_row, pixel column j is
/// set when |j + 0.5 - x(r + 0.5)| < thickness / 2.
cv::Mat rasterize_lane(const LaneCurve& curve, double thickness, int first_row, cv::Size size);

/// Deterministic procedural scene for (seed, params).
Scene generate_scene(std::uint64_t seed, const SceneParams& params);

struct DatasetOptions {
  /// Fraction of frames routed to validation (floor, at least one).
  double val_fraction = 0.1;
};

/// Writes n frames with masks under out_dir/{frames,masks} plus
/// out_dir/manifest.json and returns the manifest.
DatasetManifest generate_dataset(std::uint64_t seed, int n, const SceneParams& params,
                                 const std::filesystem::path& out_dir,
                                 const DatasetOptions& options = {});

/// Number of validation frames for n frames: floor(n * fraction), at least
/// one, but never all n when n > 0 (n = 1 keeps the single frame in train).
int validation_count(int n, double val_fraction);

}  // namespace laneseg::synth
