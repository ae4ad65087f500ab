#include "laneseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <random>

#include "laneseg/errors.hpp"

namespace fs = std::filesystem;

namespace laneseg::synth {

namespace {

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double draw(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

SceneParams params_for_size(cv::Size size) {
  SceneParams p;
  const double scale = size.width / 320.0;
  p.image_size = size;
  p.lane_width_px = 180.0 * scale;
  p.line_thickness_px = std::max(3.0, 5.0 * scale);
  p.lane_curvature = 0.002 / std::max(scale, 0.05);
  return p;
}

void validate(const SceneParams& p) {
  if (p.image_size.width < 16 || p.image_size.height < 16) {
    throw ArgumentError("scene image must be at least 16x16");
  }
  if (!(p.line_thickness_px >= 1.0)) throw ArgumentError("line_thickness_px must be >= 1");
  if (!(p.lane_width_px > 2.0 * p.line_thickness_px)) {
    throw ArgumentError("lane_width_px must exceed twice line_thickness_px");
  }
  if (!(p.horizon_row_fraction > 0.2 && p.horizon_row_fraction < 0.8)) {
    throw ArgumentError("horizon_row_fraction must lie in (0.2, 0.8)");
  }
  if (!(p.texture_noise_sigma >= 0.0)) throw ArgumentError("texture_noise_sigma must be >= 0");
  if (!std::isfinite(p.lane_curvature)) throw ArgumentError("lane_curvature must be finite");
}

cv::Mat rasterize_lane(const LaneCurve& curve, double thickness, int first_row, cv::Size size) {
  cv::Mat mask = cv::Mat::zeros(size, CV_8UC1);
  const double half = thickness / 2.0;
  for (int r = std::max(first_row, 0); r < size.height; ++r) {
    const double xc = curve.column_at(r + 0.5);
    const int j_lo = std::max(0, static_cast<int>(std::floor(xc - half - 1.0)));
    const int j_hi = std::min(size.width - 1, static_cast<int>(std::ceil(xc + half + 1.0)));
    auto* row = mask.ptr<uchar>(r);
    for (int j = j_lo; j <= j_hi; ++j) {
      if (std::abs(j + 0.5 - xc) < half) row[j] = 1;
    }
  }
  return mask;
}

Scene generate_scene(std::uint64_t seed, const SceneParams& params) {
  validate(params);
  std::mt19937_64 rng(seed);
  const int rows = params.image_size.height;
  const int cols = params.image_size.width;
  const double horizon = params.horizon_row_fraction * rows;
  const double depth = rows - horizon;

  const double a = draw(rng, -params.lane_curvature, params.lane_curvature);
  const double bottom_center = cols / 2.0 + draw(rng, -0.15, 0.15) * params.lane_width_px;
  const double top_width = std::max(0.3 * params.lane_width_px, 2.0 * params.line_thickness_px + 2.0);
  const double top_center = cols / 2.0 + draw(rng, -0.1, 0.1) * top_width;

  auto make_curve = [&](double top_x, double bottom_x) {
    LaneCurve curve;
    curve.a = a;
    curve.c = top_x;
    curve.h = horizon;
    curve.b = (bottom_x - top_x - a * depth * depth) / depth;
    return curve;
  };

  Scene scene;
  scene.left = make_curve(top_center - top_width / 2.0, bottom_center - params.lane_width_px / 2.0);
  scene.right = make_curve(top_center + top_width / 2.0, bottom_center + params.lane_width_px / 2.0);
  scene.first_row = static_cast<int>(std::floor(horizon)) + 1;
  scene.line_thickness = params.line_thickness_px;

  cv::Mat left = rasterize_lane(scene.left, params.line_thickness_px, scene.first_row, params.image_size);
  cv::Mat right = rasterize_lane(scene.right, params.line_thickness_px, scene.first_row, params.image_size);

  // Sky gradient above the horizon, gray asphalt below.
  const double road_gray = draw(rng, 0.28, 0.45);
  const cv::Vec3f sky_top(0.45f, 0.62f, 0.88f);
  const cv::Vec3f sky_bottom(0.75f, 0.82f, 0.92f);
  const cv::Vec3f left_paint(0.95f, 0.85f, 0.35f);
  const cv::Vec3f right_paint(0.96f, 0.96f, 0.96f);
  cv::Mat image(params.image_size, CV_32FC3);
  for (int r = 0; r < rows; ++r) {
    auto* px = image.ptr<cv::Vec3f>(r);
    if (r < scene.first_row) {
      const float t = static_cast<float>(r) / static_cast<float>(std::max(1, scene.first_row));
      const cv::Vec3f sky = sky_top * (1.0f - t) + sky_bottom * t;
      for (int c = 0; c < cols; ++c) px[c] = sky;
    } else {
      // Slightly darker towards the bottom of the frame.
      const float g = static_cast<float>(road_gray * (1.0 - 0.15 * (r - horizon) / depth));
      for (int c = 0; c < cols; ++c) px[c] = cv::Vec3f(g, g, g * 1.02f);
    }
  }
  if (params.texture_noise_sigma > 0.0) {
    cv::Mat noise(image.size(), CV_32FC1);
    cv::RNG cv_rng(rng());
    cv_rng.fill(noise, cv::RNG::NORMAL, 0.0, params.texture_noise_sigma);
    cv::Mat noise3;
    cv::merge(std::vector<cv::Mat>{noise, noise, noise}, noise3);
    image += noise3;
  }
  image.setTo(cv::Scalar(left_paint[0], left_paint[1], left_paint[2]), left);
  image.setTo(cv::Scalar(right_paint[0], right_paint[1], right_paint[2]), right);
  cv::min(cv::max(image, 0.0), 1.0, image);

  char id[32];
  std::snprintf(id, sizeof(id), "scene_%016llx", static_cast<unsigned long long>(seed));
  scene.sample = make_sample(std::move(image), std::move(left), std::move(right), id);
  return scene;
}

int validation_count(int n, double val_fraction) {
  if (n <= 1) return 0;
  int v = static_cast<int>(std::floor(n * val_fraction));
  v = std::max(v, 1);
  return std::min(v, n - 1);
}

DatasetManifest generate_dataset(std::uint64_t seed, int n, const SceneParams& params,
                                 const fs::path& out_dir, const DatasetOptions& options) {
  if (n < 1) throw ArgumentError("dataset size must be >= 1");
  validate(params);
  try {
    fs::create_directories(out_dir / "frames");
    fs::create_directories(out_dir / "masks");
  } catch (const fs::filesystem_error& e) {
    throw IoError("cannot create dataset directory '" + out_dir.string() + "': " + e.what());
  }

  const int n_val = validation_count(n, options.val_fraction);
  if (n == 1) {
    std::clog << "warning: a single-frame dataset has no validation split; using 1 train / 0 val\n";
  }

  DatasetManifest manifest;
  manifest.root = out_dir;
  char name[64];
  for (int i = 0; i < n; ++i) {
    Scene scene = generate_scene(splitmix64(seed + static_cast<std::uint64_t>(i)), params);
    ManifestEntry entry;
    std::snprintf(name, sizeof(name), "frames/frame_%06d.png", i);
    entry.frame = name;
    std::snprintf(name, sizeof(name), "masks/left_%06d.png", i);
    entry.mask_left = name;
    std::snprintf(name, sizeof(name), "masks/right_%06d.png", i);
    entry.mask_right = name;
    entry.split = i < n - n_val ? Split::kTrain : Split::kVal;

    write_frame(out_dir / entry.frame, scene.sample.image);
    write_mask(out_dir / entry.mask_left, scene.sample.mask_left);
    write_mask(out_dir / entry.mask_right, scene.sample.mask_right);
    manifest.entries.push_back(std::move(entry));
  }
  save_manifest(manifest, out_dir / kManifestFileName);
  return manifest;
}

}  // namespace laneseg::synth
