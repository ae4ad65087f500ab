#include "laneseg/data.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <opencv2/videoio.hpp>

#include "laneseg/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace laneseg {

std::string to_string(Split split) { return split == Split::kTrain ? "train" : "val"; }

Split parse_split(const std::string& text) {
  if (text == "train") return Split::kTrain;
  if (text == "val") return Split::kVal;
  throw LoadError("unknown split '" + text + "' (expected train or val)");
}

std::size_t extract_frames(const fs::path& video_path, const fs::path& out_dir, int stride) {
  if (stride < 1) throw ArgumentError("stride must be >= 1");
  if (!fs::exists(video_path)) {
    throw IngestError("cannot read video '" + video_path.string() + "': no such file");
  }
  cv::VideoCapture capture(video_path.string());
  if (!capture.isOpened()) {
    throw IngestError("cannot decode video '" + video_path.string() + "'");
  }
  fs::create_directories(out_dir);

  std::size_t index = 0;
  std::size_t written = 0;
  char name[32];
  cv::Mat frame;
  while (capture.read(frame)) {
    if (frame.empty()) break;
    if (index % static_cast<std::size_t>(stride) == 0) {
      std::snprintf(name, sizeof(name), "frame_%06zu.png", index);
      if (!cv::imwrite((out_dir / name).string(), frame)) {
        throw IoError("cannot write frame '" + (out_dir / name).string() + "'");
      }
      ++written;
    }
    ++index;
  }
  if (index == 0) {
    throw EmptyVideoError("video '" + video_path.string() + "' contains no decodable frames");
  }
  return written;
}

cv::Mat to_rgb_normalized(const cv::Mat& raw_bgr) {
  if (raw_bgr.empty() || raw_bgr.channels() != 3) {
    throw ShapeError("to_rgb_normalized expects a 3-channel image, got " +
                     std::to_string(raw_bgr.channels()) + " channels");
  }
  if (raw_bgr.depth() != CV_8U) throw ShapeError("to_rgb_normalized expects 8-bit input");
  cv::Mat rgb;
  cv::cvtColor(raw_bgr, rgb, cv::COLOR_BGR2RGB);
  cv::Mat out;
  rgb.convertTo(out, CV_32FC3, 1.0 / 255.0);
  return out;
}

cv::Mat from_rgb_normalized(const cv::Mat& rgb) {
  if (rgb.empty() || rgb.type() != CV_32FC3) {
    throw ShapeError("from_rgb_normalized expects a CV_32FC3 image");
  }
  cv::Mat bytes;
  rgb.convertTo(bytes, CV_8UC3, 255.0);  // rounds to nearest, saturates
  cv::Mat bgr;
  cv::cvtColor(bytes, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

Sample resize_pair(const Sample& sample, cv::Size target) {
  if (target.width <= 0 || target.height <= 0) {
    throw ArgumentError("resize target must be positive");
  }
  if (target.width < 8 || target.height < 8) {
    throw ArgumentError("resize target must be at least 8x8");
  }
  validate_sample(sample);
  if (target == sample.image.size()) return clone_sample(sample);

  Sample out;
  cv::resize(sample.image, out.image, target, 0, 0, cv::INTER_LINEAR);
  cv::min(cv::max(out.image, 0.0), 1.0, out.image);
  cv::resize(sample.mask_left, out.mask_left, target, 0, 0, cv::INTER_NEAREST);
  cv::resize(sample.mask_right, out.mask_right, target, 0, 0, cv::INTER_NEAREST);
  out.mask_union = union_of(out.mask_left, out.mask_right);
  out.frame_id = sample.frame_id;
  return out;
}

void write_frame(const fs::path& path, const cv::Mat& rgb) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), from_rgb_normalized(rgb))) {
    throw IoError("cannot write frame '" + path.string() + "'");
  }
}

cv::Mat read_frame(const fs::path& path) {
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (raw.empty()) throw LoadError("cannot decode frame '" + path.string() + "'");
  return to_rgb_normalized(raw);
}

void write_mask(const fs::path& path, const cv::Mat& mask01) {
  if (mask01.type() != CV_8UC1) throw ShapeError("masks must be CV_8UC1");
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  cv::Mat bytes = (mask01 != 0);  // 0 / 255
  if (!cv::imwrite(path.string(), bytes)) {
    throw IoError("cannot write mask '" + path.string() + "'");
  }
}

cv::Mat read_mask(const fs::path& path) {
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (raw.empty()) throw LoadError("cannot decode mask '" + path.string() + "'");
  cv::Mat mask;
  cv::threshold(raw, mask, 127, 1, cv::THRESH_BINARY);
  return mask;
}

SplitCounts DatasetManifest::counts() const {
  SplitCounts c;
  for (const auto& e : entries) (e.split == Split::kTrain ? c.train : c.val) += 1;
  return c;
}

std::vector<ManifestEntry> DatasetManifest::split(Split which) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries) {
    if (e.split == which) out.push_back(e);
  }
  return out;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  json entries = json::array();
  for (const auto& e : manifest.entries) {
    entries.push_back({{"frame", e.frame},
                       {"mask_left", e.mask_left},
                       {"mask_right", e.mask_right},
                       {"split", to_string(e.split)}});
  }
  const json doc = {{"entries", entries}, {"version", kManifestVersion}};
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest '" + path.string() + "'");
  out << doc.dump(2) << '\n';
}

namespace {

fs::path resolve(const fs::path& root, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : root / path;
}

std::string require_string(const json& record, const char* key, std::size_t index) {
  if (!record.contains(key) || !record.at(key).is_string()) {
    throw LoadError("manifest entry " + std::to_string(index) + ": missing string field '" + key + "'");
  }
  return record.at(key).get<std::string>();
}

void require_decodable(const fs::path& path, int flags) {
  if (!fs::exists(path)) throw LoadError("manifest references missing file '" + path.string() + "'");
  if (cv::imread(path.string(), flags).empty()) {
    throw LoadError("manifest references undecodable file '" + path.string() + "'");
  }
}

}  // namespace

DatasetManifest load_manifest(const fs::path& path) {
  const fs::path file = fs::is_directory(path) ? path / kManifestFileName : path;
  std::ifstream in(file);
  if (!in) throw LoadError("cannot open manifest '" + file.string() + "'");

  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw LoadError("malformed manifest '" + file.string() + "': " + e.what());
  }
  if (!doc.is_object() || !doc.contains("entries") || !doc.at("entries").is_array()) {
    throw LoadError("malformed manifest '" + file.string() + "': no 'entries' array");
  }
  if (!doc.contains("version") || doc.at("version") != kManifestVersion) {
    throw LoadError("manifest '" + file.string() + "' has unsupported version");
  }

  DatasetManifest manifest;
  manifest.root = file.parent_path();
  std::size_t index = 0;
  for (const auto& record : doc.at("entries")) {
    if (!record.is_object()) {
      throw LoadError("manifest entry " + std::to_string(index) + " is not an object");
    }
    ManifestEntry e;
    e.frame = require_string(record, "frame", index);
    e.mask_left = require_string(record, "mask_left", index);
    e.mask_right = require_string(record, "mask_right", index);
    e.split = parse_split(require_string(record, "split", index));
    require_decodable(resolve(manifest.root, e.frame), cv::IMREAD_COLOR);
    require_decodable(resolve(manifest.root, e.mask_left), cv::IMREAD_GRAYSCALE);
    require_decodable(resolve(manifest.root, e.mask_right), cv::IMREAD_GRAYSCALE);
    manifest.entries.push_back(std::move(e));
    ++index;
  }
  return manifest;
}

Sample load_sample(const DatasetManifest& manifest, const ManifestEntry& entry) {
  cv::Mat image = read_frame(resolve(manifest.root, entry.frame));
  cv::Mat left = read_mask(resolve(manifest.root, entry.mask_left));
  cv::Mat right = read_mask(resolve(manifest.root, entry.mask_right));
  if (left.size() != image.size() || right.size() != image.size()) {
    throw ShapeError("masks of '" + entry.frame + "' do not match the frame size");
  }
  return make_sample(std::move(image), std::move(left), std::move(right),
                     fs::path(entry.frame).stem().string());
}

std::vector<Sample> load_split(const DatasetManifest& manifest, Split which) {
  std::vector<Sample> out;
  for (const auto& e : manifest.entries) {
    if (e.split == which) out.push_back(load_sample(manifest, e));
  }
  return out;
}

}  // namespace laneseg
