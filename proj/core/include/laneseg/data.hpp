#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "laneseg/sample.hpp"

namespace laneseg {

enum class Split { kTrain, kVal };

std::string to_string(Split split);
Split parse_split(const std::string& text);

// ---------------------------------------------------------------------------
// Video ingest and pixel conversion
// ---------------------------------------------------------------------------

/// Decodes `video_path` and writes every `stride`-th frame (indices 0, K, 2K,
/// ...) to `out_dir/frame_%06d.png`. Frames are written as lossless 8-bit
/// PNG in the decoder's native byte order. Returns the number written.
///
/// Throws IngestError when the video cannot be opened and EmptyVideoError
/// when it opens but yields no frame.
std::size_t extract_frames(const std::filesystem::path& video_path,
                           const std::filesystem::path& out_dir, int stride = 1);

/// BGR bytes (CV_8UC3) -> RGB CV_32FC3 in [0,1].
cv::Mat to_rgb_normalized(const cv::Mat& raw_bgr);

/// Inverse byte encoding of to_rgb_normalized: RGB [0,1] floats -> BGR bytes,
/// rounding to nearest and saturating.
cv::Mat from_rgb_normalized(const cv::Mat& rgb);

/// Resizes image bilinearly and masks by nearest neighbour; the union is
/// recomputed. Targets below 8 pixels raise ArgumentError.
Sample resize_pair(const Sample& sample, cv::Size target);

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

/// Frames are stored as 8-bit PNG (BGR on disk, RGB in memory).
void write_frame(const std::filesystem::path& path, const cv::Mat& rgb);
cv::Mat read_frame(const std::filesystem::path& path);

/// Masks are single-channel 8-bit with 0 = background, 255 = lane.
void write_mask(const std::filesystem::path& path, const cv::Mat& mask01);
cv::Mat read_mask(const std::filesystem::path& path);

struct ManifestEntry {
  std::string frame;       ///< path relative to the manifest directory
  std::string mask_left;
  std::string mask_right;
  Split split = Split::kTrain;

  bool operator==(const ManifestEntry&) const = default;
};

struct SplitCounts {
  std::size_t train = 0;
  std::size_t val = 0;

  bool operator==(const SplitCounts&) const = default;
};

/// Ordered record of frames, mask paths and split membership.
struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  /// Directory the relative paths resolve against.
  std::filesystem::path root;

  SplitCounts counts() const;
  std::vector<ManifestEntry> split(Split which) const;

  bool operator==(const DatasetManifest& other) const { return entries == other.entries; }
};

inline constexpr int kManifestVersion = 1;
inline constexpr const char* kManifestFileName = "manifest.json";

/// Writes {"entries":[...],"version":1}. Paths are stored as given.
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Parses and validates a manifest: schema, split tags, and that every
/// referenced file exists and decodes. `path` may be the JSON file or a
/// directory containing manifest.json.
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Reads the frame and both masks of an entry into a Sample.
Sample load_sample(const DatasetManifest& manifest, const ManifestEntry& entry);

std::vector<Sample> load_split(const DatasetManifest& manifest, Split which);

}  // namespace laneseg
