#include "laneseg/augment.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <utility>

#include <opencv2/imgproc.hpp>

#include "laneseg/errors.hpp"

using nlohmann::json;

namespace laneseg {

namespace {

struct KindInfo {
  TransformKind kind;
  const char* name;
  std::vector<const char*> required;
};

const std::array<KindInfo, 10>& kinds() {
  static const std::array<KindInfo, 10> table{{
      {TransformKind::kShiftScaleRotate, "shift_scale_rotate", {"shift", "scale", "rotate"}},
      {TransformKind::kAdditiveGaussianNoise, "additive_gaussian_noise", {"sigma"}},
      {TransformKind::kClahe, "clahe", {"clip_limit", "tile_grid"}},
      {TransformKind::kRandomBrightness, "random_brightness", {"limit"}},
      {TransformKind::kRandomGamma, "random_gamma", {"gamma"}},
      {TransformKind::kSharpen, "sharpen", {"alpha", "lightness"}},
      {TransformKind::kBlur, "blur", {"kernel"}},
      {TransformKind::kMotionBlur, "motion_blur", {"kernel"}},
      {TransformKind::kRandomContrast, "random_contrast", {"limit"}},
      {TransformKind::kHueSaturationValue, "hue_saturation_value", {"hue", "saturation", "value"}},
  }};
  return table;
}

const KindInfo& info(TransformKind kind) {
  for (const auto& k : kinds()) {
    if (k.kind == kind) return k;
  }
  throw SpecError("unknown transform kind");
}

/// Uniform double in [0,1) from the top 53 bits; identical on every platform.
double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double draw(std::mt19937_64& rng, Range r) { return r.lo + (r.hi - r.lo) * uniform01(rng); }

/// Odd kernel size drawn from the odd integers in [lo, hi].
int draw_kernel(std::mt19937_64& rng, Range r) {
  const int lo = std::max(1, static_cast<int>(std::ceil(r.lo)));
  const int hi = std::max(lo, static_cast<int>(std::floor(r.hi)));
  std::vector<int> odd;
  for (int k = lo; k <= hi; ++k) {
    if (k % 2 == 1) odd.push_back(k);
  }
  if (odd.empty()) return 1;
  return odd[static_cast<std::size_t>(uniform01(rng) * static_cast<double>(odd.size()))];
}

void clip01(cv::Mat& image) { cv::min(cv::max(image, 0.0), 1.0, image); }

cv::Mat add_noise(const cv::Mat& image, double sigma, std::uint64_t noise_seed) {
  cv::Mat noise(image.size(), image.type());
  cv::RNG rng(noise_seed);
  rng.fill(noise, cv::RNG::NORMAL, cv::Scalar::all(0.0), cv::Scalar::all(sigma));
  cv::Mat out = image + noise;
  clip01(out);
  return out;
}

cv::Mat apply_clahe(const cv::Mat& image, double clip_limit, int tiles) {
  cv::Mat bytes;
  image.convertTo(bytes, CV_8UC3, 255.0);
  cv::Mat lab;
  cv::cvtColor(bytes, lab, cv::COLOR_RGB2Lab);
  std::vector<cv::Mat> planes;
  cv::split(lab, planes);
  auto clahe = cv::createCLAHE(clip_limit, cv::Size(tiles, tiles));
  clahe->apply(planes[0], planes[0]);
  cv::merge(planes, lab);
  cv::cvtColor(lab, bytes, cv::COLOR_Lab2RGB);
  cv::Mat out;
  bytes.convertTo(out, CV_32FC3, 1.0 / 255.0);
  return out;
}

cv::Mat apply_gamma(const cv::Mat& image, double gamma) {
  cv::Mat out;
  cv::pow(cv::max(image, 0.0), gamma, out);
  clip01(out);
  return out;
}

cv::Mat apply_contrast(const cv::Mat& image, double alpha) {
  cv::Mat gray;
  cv::cvtColor(image, gray, cv::COLOR_RGB2GRAY);
  const double mean = cv::mean(gray)[0];
  cv::Mat out;
  image.convertTo(out, CV_32FC3, alpha, (1.0 - alpha) * mean);
  clip01(out);
  return out;
}

cv::Mat apply_sharpen(const cv::Mat& image, double alpha, double lightness) {
  cv::Matx33f effect(-1, -1, -1, -1, static_cast<float>(8.0 + lightness), -1, -1, -1, -1);
  cv::Matx33f identity(0, 0, 0, 0, 1, 0, 0, 0, 0);
  cv::Matx33f kernel = identity * static_cast<float>(1.0 - alpha) + effect * static_cast<float>(alpha);
  cv::Mat out;
  cv::filter2D(image, out, -1, kernel, cv::Point(-1, -1), 0.0, cv::BORDER_REFLECT_101);
  clip01(out);
  return out;
}

cv::Mat apply_motion_blur(const cv::Mat& image, int k, double angle_rad) {
  if (k <= 1) return image.clone();
  cv::Mat kernel = cv::Mat::zeros(k, k, CV_32F);
  const double c = (k - 1) / 2.0;
  const double dx = std::cos(angle_rad) * c;
  const double dy = std::sin(angle_rad) * c;
  cv::line(kernel, cv::Point(static_cast<int>(std::lround(c - dx)), static_cast<int>(std::lround(c - dy))),
           cv::Point(static_cast<int>(std::lround(c + dx)), static_cast<int>(std::lround(c + dy))),
           cv::Scalar(1.0), 1, cv::LINE_8);
  kernel /= cv::sum(kernel)[0];
  cv::Mat out;
  cv::filter2D(image, out, -1, kernel, cv::Point(-1, -1), 0.0, cv::BORDER_REFLECT_101);
  clip01(out);
  return out;
}

cv::Mat apply_hsv(const cv::Mat& image, double hue_deg, double sat, double val) {
  cv::Mat hsv;
  cv::cvtColor(image, hsv, cv::COLOR_RGB2HSV);  // H in [0,360), S,V in [0,1]
  for (int r = 0; r < hsv.rows; ++r) {
    auto* px = hsv.ptr<cv::Vec3f>(r);
    for (int c = 0; c < hsv.cols; ++c) {
      float h = px[c][0] + static_cast<float>(hue_deg);
      h = std::fmod(h, 360.0f);
      if (h < 0.0f) h += 360.0f;
      px[c][0] = h;
      px[c][1] = std::clamp(px[c][1] * static_cast<float>(1.0 + sat), 0.0f, 1.0f);
      px[c][2] = std::clamp(px[c][2] * static_cast<float>(1.0 + val), 0.0f, 1.0f);
    }
  }
  cv::Mat out;
  cv::cvtColor(hsv, out, cv::COLOR_HSV2RGB);
  clip01(out);
  return out;
}

}  // namespace

std::string to_string(TransformKind kind) { return info(kind).name; }

TransformKind parse_transform_kind(const std::string& text) {
  for (const auto& k : kinds()) {
    if (text == k.name) return k.kind;
  }
  throw SpecError("unknown transform kind '" + text + "'");
}

Range TransformSpec::param(const std::string& name) const {
  const auto it = params.find(name);
  if (it == params.end()) {
    throw SpecError("transform '" + to_string(kind) + "' lacks parameter '" + name + "'");
  }
  return it->second;
}

TransformSpec default_transform(TransformKind kind) {
  switch (kind) {
    case TransformKind::kShiftScaleRotate:
      return {kind, 0.5, {{"shift", {-0.0625, 0.0625}}, {"scale", {-0.1, 0.1}}, {"rotate", {-15.0, 15.0}}}};
    case TransformKind::kAdditiveGaussianNoise:
      return {kind, 0.2, {{"sigma", {2.55, 12.75}}}};
    case TransformKind::kClahe:
      return {kind, 0.3, {{"clip_limit", {4.0, 4.0}}, {"tile_grid", {8.0, 8.0}}}};
    case TransformKind::kRandomBrightness:
      return {kind, 0.3, {{"limit", {-0.2, 0.2}}}};
    case TransformKind::kRandomGamma:
      return {kind, 0.3, {{"gamma", {0.8, 1.25}}}};
    case TransformKind::kSharpen:
      return {kind, 0.2, {{"alpha", {0.2, 0.5}}, {"lightness", {0.5, 1.0}}}};
    case TransformKind::kBlur:
      return {kind, 0.2, {{"kernel", {3.0, 3.0}}}};
    case TransformKind::kMotionBlur:
      return {kind, 0.2, {{"kernel", {3.0, 3.0}}}};
    case TransformKind::kRandomContrast:
      return {kind, 0.3, {{"limit", {-0.2, 0.2}}}};
    case TransformKind::kHueSaturationValue:
      return {kind, 0.3, {{"hue", {-10.0, 10.0}}, {"saturation", {-0.2, 0.2}}, {"value", {-0.2, 0.2}}}};
  }
  throw SpecError("unknown transform kind");
}

AugmentationSpec default_augmentation_spec() {
  AugmentationSpec spec;
  for (const auto& k : kinds()) spec.transforms.push_back(default_transform(k.kind));
  return spec;
}

void validate_spec(const AugmentationSpec& spec) {
  for (const auto& t : spec.transforms) {
    const std::string name = to_string(t.kind);
    if (!std::isfinite(t.probability) || t.probability < 0.0 || t.probability > 1.0) {
      throw SpecError("transform '" + name + "': probability must lie in [0,1]");
    }
    for (const auto& [key, range] : t.params) {
      if (!std::isfinite(range.lo) || !std::isfinite(range.hi) || range.lo > range.hi) {
        throw SpecError("transform '" + name + "': parameter '" + key + "' has an empty or non-finite range");
      }
    }
    for (const char* key : info(t.kind).required) t.param(key);

    auto positive = [&](const char* key) {
      if (t.param(key).lo <= 0.0) {
        throw SpecError("transform '" + name + "': parameter '" + key + "' must be positive");
      }
    };
    switch (t.kind) {
      case TransformKind::kShiftScaleRotate:
        if (t.param("scale").lo <= -1.0) throw SpecError("shift_scale_rotate: scale must stay above -1");
        break;
      case TransformKind::kAdditiveGaussianNoise:
        if (t.param("sigma").lo < 0.0) throw SpecError("additive_gaussian_noise: sigma must be >= 0");
        break;
      case TransformKind::kClahe:
        positive("clip_limit");
        positive("tile_grid");
        break;
      case TransformKind::kRandomGamma:
        positive("gamma");
        break;
      case TransformKind::kBlur:
      case TransformKind::kMotionBlur:
        positive("kernel");
        break;
      default:
        break;
    }
  }
}

AugmentationSpec spec_from_json(const json& doc) {
  if (!doc.is_array()) throw SpecError("augmentation spec must be a JSON list");
  AugmentationSpec spec;
  for (const auto& item : doc) {
    if (!item.is_object() || !item.contains("kind") || !item.at("kind").is_string()) {
      throw SpecError("augmentation entry needs a string 'kind'");
    }
    const TransformKind kind = parse_transform_kind(item.at("kind").get<std::string>());
    TransformSpec t = default_transform(kind);
    if (item.contains("p")) {
      if (!item.at("p").is_number()) throw SpecError("'p' must be a number");
      t.probability = item.at("p").get<double>();
    }
    if (item.contains("params")) {
      if (!item.at("params").is_object()) throw SpecError("'params' must be an object");
      for (const auto& [key, value] : item.at("params").items()) {
        if (value.is_number()) {
          const double v = value.get<double>();
          t.params[key] = {v, v};
        } else if (value.is_array() && value.size() == 2 && value[0].is_number() && value[1].is_number()) {
          t.params[key] = {value[0].get<double>(), value[1].get<double>()};
        } else {
          throw SpecError("parameter '" + key + "' must be a number or [lo, hi]");
        }
      }
    }
    spec.transforms.push_back(std::move(t));
  }
  validate_spec(spec);
  return spec;
}

json spec_to_json(const AugmentationSpec& spec) {
  json out = json::array();
  for (const auto& t : spec.transforms) {
    json params = json::object();
    for (const auto& [key, range] : t.params) params[key] = {range.lo, range.hi};
    out.push_back({{"kind", to_string(t.kind)}, {"p", t.probability}, {"params", params}});
  }
  return out;
}

AugmentationSpec load_augmentation_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open augmentation spec '" + path.string() + "'");
  try {
    return spec_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw SpecError("malformed augmentation spec '" + path.string() + "': " + e.what());
  }
}

InverseAffine shift_scale_rotate_map(cv::Size size, double shift_x, double shift_y, double scale,
                                     double angle_deg) {
  const double cx = (size.width - 1) / 2.0;
  const double cy = (size.height - 1) / 2.0;
  const double tx = shift_x * size.width;
  const double ty = shift_y * size.height;
  const double theta = angle_deg * std::numbers::pi / 180.0;
  const double cs = std::cos(theta) / scale;
  const double sn = std::sin(theta) / scale;
  // Forward: p' = c + t + s R (p - c), R = [[cos, sin], [-sin, cos]].
  // Inverse: p = c + R^T (p' - c - t) / s.
  const double ox = -cx - tx;
  const double oy = -cy - ty;
  return InverseAffine(cs, -sn, cx + cs * ox - sn * oy,
                       sn, cs, cy + sn * ox + cs * oy);
}

cv::Mat warp_image(const cv::Mat& image, const InverseAffine& map) {
  CV_Assert(image.type() == CV_32FC3);
  const int rows = image.rows;
  const int cols = image.cols;
  cv::Mat out(image.size(), CV_32FC3, cv::Scalar::all(0.0));
  for (int y = 0; y < rows; ++y) {
    auto* dst = out.ptr<cv::Vec3f>(y);
    for (int x = 0; x < cols; ++x) {
      const double sx = map(0, 0) * x + map(0, 1) * y + map(0, 2);
      const double sy = map(1, 0) * x + map(1, 1) * y + map(1, 2);
      const double fx0 = std::floor(sx);
      const double fy0 = std::floor(sy);
      if (fx0 < -1.0 || fy0 < -1.0 || fx0 > cols || fy0 > rows) continue;
      const int x0 = static_cast<int>(fx0);
      const int y0 = static_cast<int>(fy0);
      const double ax = sx - fx0;
      const double ay = sy - fy0;
      std::array<double, 3> acc{0.0, 0.0, 0.0};
      const std::array<std::pair<int, int>, 4> taps{{{0, 0}, {1, 0}, {0, 1}, {1, 1}}};
      for (const auto& [ox, oy] : taps) {
        const int xi = x0 + ox;
        const int yi = y0 + oy;
        if (xi < 0 || yi < 0 || xi >= cols || yi >= rows) continue;
        const double w = (ox ? ax : 1.0 - ax) * (oy ? ay : 1.0 - ay);
        const auto& px = image.at<cv::Vec3f>(yi, xi);
        for (int c = 0; c < 3; ++c) acc[c] += w * px[c];
      }
      dst[x] = cv::Vec3f(static_cast<float>(acc[0]), static_cast<float>(acc[1]), static_cast<float>(acc[2]));
    }
  }
  return out;
}

cv::Mat warp_mask(const cv::Mat& mask, const InverseAffine& map) {
  CV_Assert(mask.type() == CV_8UC1);
  cv::Mat out = cv::Mat::zeros(mask.size(), CV_8UC1);
  for (int y = 0; y < mask.rows; ++y) {
    auto* dst = out.ptr<uchar>(y);
    for (int x = 0; x < mask.cols; ++x) {
      const double sx = map(0, 0) * x + map(0, 1) * y + map(0, 2);
      const double sy = map(1, 0) * x + map(1, 1) * y + map(1, 2);
      const double nx = std::floor(sx + 0.5);
      const double ny = std::floor(sy + 0.5);
      if (nx < 0.0 || ny < 0.0 || nx >= mask.cols || ny >= mask.rows) continue;
      dst[x] = mask.at<uchar>(static_cast<int>(ny), static_cast<int>(nx)) != 0 ? 1 : 0;
    }
  }
  return out;
}

Sample augment(const Sample& sample, const AugmentationSpec& spec, std::uint64_t seed) {
  validate_sample(sample);
  validate_spec(spec);

  Sample out = clone_sample(sample);
  std::mt19937_64 rng(seed);
  for (const auto& t : spec.transforms) {
    if (!(uniform01(rng) < t.probability)) continue;
    switch (t.kind) {
      case TransformKind::kShiftScaleRotate: {
        const double dx = draw(rng, t.param("shift"));
        const double dy = draw(rng, t.param("shift"));
        const double scale = 1.0 + draw(rng, t.param("scale"));
        const double angle = draw(rng, t.param("rotate"));
        const InverseAffine map = shift_scale_rotate_map(out.image.size(), dx, dy, scale, angle);
        out.image = warp_image(out.image, map);
        out.mask_left = warp_mask(out.mask_left, map);
        out.mask_right = warp_mask(out.mask_right, map);
        out.mask_union = union_of(out.mask_left, out.mask_right);
        break;
      }
      case TransformKind::kAdditiveGaussianNoise: {
        const double sigma = draw(rng, t.param("sigma")) / 255.0;
        out.image = add_noise(out.image, sigma, rng());
        break;
      }
      case TransformKind::kClahe: {
        const double clip = draw(rng, t.param("clip_limit"));
        const int tiles = std::max(1, static_cast<int>(std::lround(draw(rng, t.param("tile_grid")))));
        out.image = apply_clahe(out.image, clip, tiles);
        break;
      }
      case TransformKind::kRandomBrightness: {
        out.image += cv::Scalar::all(draw(rng, t.param("limit")));
        clip01(out.image);
        break;
      }
      case TransformKind::kRandomGamma:
        out.image = apply_gamma(out.image, draw(rng, t.param("gamma")));
        break;
      case TransformKind::kSharpen: {
        const double alpha = draw(rng, t.param("alpha"));
        const double lightness = draw(rng, t.param("lightness"));
        out.image = apply_sharpen(out.image, alpha, lightness);
        break;
      }
      case TransformKind::kBlur: {
        const int k = draw_kernel(rng, t.param("kernel"));
        if (k > 1) cv::blur(out.image, out.image, cv::Size(k, k), cv::Point(-1, -1), cv::BORDER_REFLECT_101);
        clip01(out.image);
        break;
      }
      case TransformKind::kMotionBlur: {
        const int k = draw_kernel(rng, t.param("kernel"));
        const double angle = uniform01(rng) * std::numbers::pi;
        out.image = apply_motion_blur(out.image, k, angle);
        break;
      }
      case TransformKind::kRandomContrast:
        out.image = apply_contrast(out.image, 1.0 + draw(rng, t.param("limit")));
        break;
      case TransformKind::kHueSaturationValue: {
        const double hue = draw(rng, t.param("hue"));
        const double sat = draw(rng, t.param("saturation"));
        const double val = draw(rng, t.param("value"));
        out.image = apply_hsv(out.image, hue, sat, val);
        break;
      }
    }
  }
  return out;
}

}  // namespace laneseg
