#pragma once

#include <span>
#include <string>
#include <vector>

#include "flim/markers.hpp"
#include "flim/volume.hpp"

namespace flim {

inline constexpr double kStdFloor = 1e-6;

/// Per-channel normalization computed from marker voxels only.
struct NormStats {
  std::vector<float> mean;
  std::vector<float> std;

  int channels() const { return static_cast<int>(mean.size()); }
  friend bool operator==(const NormStats&, const NormStats&) = default;
};

inline json norm_to_json(const NormStats& n) {
  json j;
  j["mean"] = n.mean;
  j["std"] = n.std;
  return j;
}

inline NormStats norm_from_json(const json& j) {
  NormStats n;
  n.mean = j.at("mean").get<std::vector<float>>();
  n.std = j.at("std").get<std::vector<float>>();
  if (n.mean.size() != n.std.size()) throw FormatError("norm stats: mean/std length mismatch");
  for (float s : n.std)
    if (!(s >= static_cast<float>(kStdFloor) * 0.999f)) throw FormatError("norm stats: std below floor");
  return n;
}

/// A volume paired with the markers drawn on it.
struct MarkedImage {
  const Volume* volume = nullptr;
  const MarkerSet* markers = nullptr;
};

/// Population mean/std per channel over every marker voxel of every image.
inline NormStats marker_stats(std::span<const MarkedImage> images) {
  if (images.empty()) throw FormatError("marker_stats: no images");
  const int channels = images.front().volume->channels();
  std::vector<double> sum(channels, 0.0);
  std::size_t n = 0;
  for (const auto& im : images) {
    if (im.volume->channels() != channels) throw FormatError("marker_stats: channel count differs between images");
    validate_markers_in(*im.markers, im.volume->shape());
    for (const auto& m : im.markers->markers)
      for (const auto& v : m.voxels) {
        for (int c = 0; c < channels; ++c) sum[c] += im.volume->at(c, v);
        ++n;
      }
  }
  if (n == 0) throw FormatError("marker_stats: marker set is empty");
  std::vector<double> mean(channels);
  for (int c = 0; c < channels; ++c) mean[c] = sum[c] / static_cast<double>(n);
  std::vector<double> sq(channels, 0.0);
  for (const auto& im : images)
    for (const auto& m : im.markers->markers)
      for (const auto& v : m.voxels)
        for (int c = 0; c < channels; ++c) {
          const double d = im.volume->at(c, v) - mean[c];
          sq[c] += d * d;
        }
  NormStats out;
  for (int c = 0; c < channels; ++c) {
    out.mean.push_back(static_cast<float>(mean[c]));
    out.std.push_back(static_cast<float>(std::max(std::sqrt(sq[c] / static_cast<double>(n)), kStdFloor)));
  }
  return out;
}

inline NormStats marker_stats(const Volume& v, const MarkerSet& ms) {
  const MarkedImage im{&v, &ms};
  return marker_stats(std::span<const MarkedImage>(&im, 1));
}

struct PatchOrigin {
  std::string image_id;
  int marker_id = 0;
  Voxel voxel;
};

/// Vectorized k^3*C patches, one row per marker voxel, entries ordered (c, z, y, x).
struct PatchDataset {
  int kernel = 3;
  int channels = 1;
  std::vector<float> values;  // rows() x dim(), row-major
  std::vector<PatchOrigin> origins;

  int dim() const { return kernel * kernel * kernel * channels; }
  std::size_t rows() const { return origins.size(); }
  std::span<const float> row(std::size_t i) const {
    return {values.data() + i * static_cast<std::size_t>(dim()), static_cast<std::size_t>(dim())};
  }
};

/// Fill `out` (length k^3*C) with the centralized patch around `center`;
/// positions outside the volume are zero.
inline void centralized_patch(const Volume& v, const NormStats& stats, int k, const Voxel& center,
                              std::span<float> out) {
  const int r = k / 2;
  const Shape3& s = v.shape();
  std::size_t i = 0;
  for (int c = 0; c < v.channels(); ++c) {
    const float mean = stats.mean[c];
    const float inv = 1.0f / stats.std[c];
    for (int dz = -r; dz <= r; ++dz)
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx, ++i) {
          const Voxel p{center.z + dz, center.y + dy, center.x + dx};
          out[i] = s.contains(p) ? (v.at(c, p) - mean) * inv : 0.0f;
        }
  }
}

inline void check_patch_args(int k, const NormStats& stats, int channels) {
  if (k < 1 || k % 2 == 0) throw FormatError("kernel size must be odd, got " + std::to_string(k));
  if (stats.channels() != channels)
    throw FormatError("norm stats have " + std::to_string(stats.channels()) + " channels, volume has " +
                      std::to_string(channels));
}

inline PatchDataset extract_patches(std::span<const MarkedImage> images, int k, const NormStats& stats) {
  if (images.empty()) throw FormatError("extract_patches: no images");
  PatchDataset pd;
  pd.kernel = k;
  pd.channels = images.front().volume->channels();
  check_patch_args(k, stats, pd.channels);
  for (const auto& im : images) {
    check_patch_args(k, stats, im.volume->channels());
    validate_markers_in(*im.markers, im.volume->shape());
    for (const Marker* m : im.markers->by_id())
      for (const auto& v : m->voxels) {
        const std::size_t at = pd.values.size();
        pd.values.resize(at + static_cast<std::size_t>(pd.dim()));
        centralized_patch(*im.volume, stats, k, v, std::span<float>(pd.values.data() + at, pd.dim()));
        pd.origins.push_back({im.markers->image_id, m->id, v});
      }
  }
  return pd;
}

inline PatchDataset extract_patches(const Volume& v, const MarkerSet& ms, int k, const NormStats& stats) {
  const MarkedImage im{&v, &ms};
  return extract_patches(std::span<const MarkedImage>(&im, 1), k, stats);
}

/// Debug dump: JSON header line + raw f32 rows.
inline std::string encode_patch_dataset(const PatchDataset& pd, const NormStats& stats) {
  json h;
  h["magic"] = "PATCH1";
  h["rows"] = pd.rows();
  h["cols"] = pd.dim();
  h["kernel"] = pd.kernel;
  h["channels"] = pd.channels;
  h["dtype"] = "f32le";
  h["norm"] = norm_to_json(stats);
  std::string out = h.dump();
  out.push_back('\n');
  append_f32le(out, pd.values.data(), pd.values.size());
  return out;
}

}  // namespace flim
