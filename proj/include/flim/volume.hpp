#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <filesystem>
#include <string>
#include <vector>

#include "flim/common.hpp"

namespace flim {

/// Voxel coordinate (z, y, x).
struct Voxel {
  int z = 0;
  int y = 0;
  int x = 0;
  friend bool operator==(const Voxel&, const Voxel&) = default;
  friend auto operator<=>(const Voxel&, const Voxel&) = default;
};

struct Shape3 {
  int z = 0;
  int y = 0;
  int x = 0;
  friend bool operator==(const Shape3&, const Shape3&) = default;
  std::size_t count() const { return static_cast<std::size_t>(z) * y * x; }
  bool contains(const Voxel& v) const {
    return v.z >= 0 && v.y >= 0 && v.x >= 0 && v.z < z && v.y < y && v.x < x;
  }
  std::size_t index(const Voxel& v) const {
    return (static_cast<std::size_t>(v.z) * y + v.y) * x + v.x;
  }
};

/// Multi-channel 3D float grid in C-order (c, z, y, x).
class Volume {
 public:
  Volume() = default;
  Volume(int channels, Shape3 shape, std::array<double, 3> spacing_mm = {1.0, 1.0, 1.0})
      : channels_(channels), shape_(shape), spacing_(spacing_mm),
        data_(static_cast<std::size_t>(channels) * shape.count(), 0.0f) {
    if (channels <= 0 || shape.z <= 0 || shape.y <= 0 || shape.x <= 0)
      throw FormatError("volume extents must be positive");
    for (double s : spacing_mm)
      if (!(s > 0.0) || !std::isfinite(s)) throw FormatError("voxel spacing must be positive");
  }
  Volume(int channels, Shape3 shape, std::vector<float> data,
         std::array<double, 3> spacing_mm = {1.0, 1.0, 1.0})
      : Volume(channels, shape, spacing_mm) {
    if (data.size() != data_.size()) throw FormatError("volume data length does not match shape");
    data_ = std::move(data);
  }

  int channels() const { return channels_; }
  const Shape3& shape() const { return shape_; }
  const std::array<double, 3>& spacing_mm() const { return spacing_; }
  std::size_t voxels() const { return shape_.count(); }
  std::size_t size() const { return data_.size(); }

  float& at(int c, int z, int y, int x) { return data_[offset(c, z, y, x)]; }
  float at(int c, int z, int y, int x) const { return data_[offset(c, z, y, x)]; }
  float at(int c, const Voxel& v) const { return at(c, v.z, v.y, v.x); }

  std::span<float> channel(int c) {
    return {data_.data() + static_cast<std::size_t>(c) * voxels(), voxels()};
  }
  std::span<const float> channel(int c) const {
    return {data_.data() + static_cast<std::size_t>(c) * voxels(), voxels()};
  }

  std::vector<float>& data() { return data_; }
  const std::vector<float>& data() const { return data_; }

  friend bool operator==(const Volume&, const Volume&) = default;

 private:
  std::size_t offset(int c, int z, int y, int x) const {
    return ((static_cast<std::size_t>(c) * shape_.z + z) * shape_.y + y) * shape_.x + x;
  }

  int channels_ = 0;
  Shape3 shape_{};
  std::array<double, 3> spacing_{1.0, 1.0, 1.0};
  std::vector<float> data_;
};

enum class Label : std::uint8_t { Background = 0, ED = 1, ET = 2, NC = 3 };

/// Ground-truth segmentation with labels in {0=background, 1=ED, 2=ET, 3=NC}.
class LabelVolume {
 public:
  LabelVolume() = default;
  explicit LabelVolume(Shape3 shape, std::array<double, 3> spacing_mm = {1.0, 1.0, 1.0})
      : shape_(shape), spacing_(spacing_mm), data_(shape.count(), 0) {}
  LabelVolume(Shape3 shape, std::vector<std::uint8_t> data,
              std::array<double, 3> spacing_mm = {1.0, 1.0, 1.0})
      : shape_(shape), spacing_(spacing_mm), data_(std::move(data)) {
    if (data_.size() != shape.count()) throw FormatError("label data length does not match shape");
    for (auto v : data_)
      if (v > 3) throw FormatError("label value outside {0,1,2,3}");
  }

  const Shape3& shape() const { return shape_; }
  const std::array<double, 3>& spacing_mm() const { return spacing_; }
  std::uint8_t& at(const Voxel& v) { return data_[shape_.index(v)]; }
  std::uint8_t at(const Voxel& v) const { return data_[shape_.index(v)]; }
  std::vector<std::uint8_t>& data() { return data_; }
  const std::vector<std::uint8_t>& data() const { return data_; }

  friend bool operator==(const LabelVolume&, const LabelVolume&) = default;

 private:
  Shape3 shape_{};
  std::array<double, 3> spacing_{1.0, 1.0, 1.0};
  std::vector<std::uint8_t> data_;
};

/// Binary voxel mask.
struct Mask {
  Shape3 shape{};
  std::vector<std::uint8_t> data;

  Mask() = default;
  explicit Mask(Shape3 s) : shape(s), data(s.count(), 0) {}
  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : data) n += v != 0;
    return n;
  }
  bool operator[](std::size_t i) const { return data[i] != 0; }
  friend bool operator==(const Mask&, const Mask&) = default;
};

// ---------------------------------------------------------------------------
// MVOL1 file format: one JSON header line, then raw little-endian f32 in
// C-order (c, z, y, x).
// ---------------------------------------------------------------------------

inline std::string encode_volume(const Volume& v) {
  json header;
  header["magic"] = "MVOL1";
  header["shape"] = {v.channels(), v.shape().z, v.shape().y, v.shape().x};
  header["dtype"] = "f32le";
  header["spacing_mm"] = {v.spacing_mm()[0], v.spacing_mm()[1], v.spacing_mm()[2]};
  std::string out = header.dump();
  out.push_back('\n');
  append_f32le(out, v.data().data(), v.size());
  return out;
}

inline Volume decode_volume(const std::string& bytes, std::string_view what = "MVOL1") {
  auto blob = split_header_line(bytes, what);
  const json& h = blob.header;
  auto fail = [&](const std::string& msg) { throw FormatError(std::string(what) + ": " + msg); };
  if (h.value("magic", std::string{}) != "MVOL1") fail("bad magic");
  if (h.value("dtype", std::string{}) != "f32le") fail("unsupported dtype");
  if (!h.contains("shape") || !h["shape"].is_array() || h["shape"].size() != 4) fail("shape must have 4 entries");
  std::array<long long, 4> dims{};
  for (std::size_t i = 0; i < 4; ++i) {
    if (!h["shape"][i].is_number_integer()) fail("shape entries must be integers");
    dims[i] = h["shape"][i].get<long long>();
    if (dims[i] <= 0 || dims[i] > (1 << 20)) fail("shape entries must be positive");
  }
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  if (h.contains("spacing_mm")) {
    if (!h["spacing_mm"].is_array() || h["spacing_mm"].size() != 3) fail("spacing_mm must have 3 entries");
    for (std::size_t i = 0; i < 3; ++i) {
      if (!h["spacing_mm"][i].is_number()) fail("spacing_mm entries must be numbers");
      spacing[i] = h["spacing_mm"][i].get<double>();
    }
  }
  const auto count = static_cast<std::size_t>(dims[0] * dims[1] * dims[2] * dims[3]);
  if (blob.payload.size() != count * sizeof(float)) {
    fail("payload has " + std::to_string(blob.payload.size()) + " bytes, header declares " +
         std::to_string(count * sizeof(float)));
  }
  std::vector<float> data(count);
  copy_f32le(blob.payload, 0, data.data(), count);
  for (float f : data)
    if (!std::isfinite(f)) fail("non-finite value in payload");
  return Volume(static_cast<int>(dims[0]),
                Shape3{static_cast<int>(dims[1]), static_cast<int>(dims[2]), static_cast<int>(dims[3])},
                std::move(data), spacing);
}

inline void write_volume(const Volume& v, const std::filesystem::path& path) {
  write_file_atomic(path, encode_volume(v));
}

inline Volume read_volume(const std::filesystem::path& path) {
  return decode_volume(read_file(path), path.string());
}

inline Volume labels_to_volume(const LabelVolume& labels) {
  Volume v(1, labels.shape(), labels.spacing_mm());
  for (std::size_t i = 0; i < labels.data().size(); ++i) v.data()[i] = static_cast<float>(labels.data()[i]);
  return v;
}

inline LabelVolume volume_to_labels(const Volume& v) {
  if (v.channels() != 1) throw FormatError("label volume must have exactly one channel");
  std::vector<std::uint8_t> data(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const float f = v.data()[i];
    if (f != std::floor(f) || f < 0.0f || f > 3.0f) throw FormatError("label value outside {0,1,2,3}");
    data[i] = static_cast<std::uint8_t>(f);
  }
  return LabelVolume(v.shape(), std::move(data), v.spacing_mm());
}

inline void write_labels(const LabelVolume& labels, const std::filesystem::path& path) {
  write_volume(labels_to_volume(labels), path);
}

inline LabelVolume read_labels(const std::filesystem::path& path) {
  return volume_to_labels(read_volume(path));
}

// ---------------------------------------------------------------------------
// Slicing
// ---------------------------------------------------------------------------

enum class Axis { Z, Y, X };

inline Axis parse_axis(std::string_view s) {
  if (s == "z") return Axis::Z;
  if (s == "y") return Axis::Y;
  if (s == "x") return Axis::X;
  throw FormatError("axis must be one of z, y, x");
}

/// Row-major 2D grid.
struct Grid2D {
  int rows = 0;
  int cols = 0;
  std::vector<float> data;
  float at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

inline int extent_along(const Shape3& s, Axis axis) {
  switch (axis) {
    case Axis::Z: return s.z;
    case Axis::Y: return s.y;
    case Axis::X: return s.x;
  }
  return 0;
}

/// Copy one axis-aligned slice of one channel. Axis z yields (Y, X), axis y
/// yields (Z, X), axis x yields (Z, Y).
inline Grid2D slice2d(const Volume& v, Axis axis, int index, int channel) {
  if (channel < 0 || channel >= v.channels())
    throw FormatError("channel " + std::to_string(channel) + " out of range");
  const Shape3& s = v.shape();
  if (index < 0 || index >= extent_along(s, axis))
    throw FormatError("slice index " + std::to_string(index) + " out of range");
  Grid2D g;
  switch (axis) {
    case Axis::Z:
      g.rows = s.y;
      g.cols = s.x;
      g.data.reserve(static_cast<std::size_t>(g.rows) * g.cols);
      for (int y = 0; y < s.y; ++y)
        for (int x = 0; x < s.x; ++x) g.data.push_back(v.at(channel, index, y, x));
      break;
    case Axis::Y:
      g.rows = s.z;
      g.cols = s.x;
      g.data.reserve(static_cast<std::size_t>(g.rows) * g.cols);
      for (int z = 0; z < s.z; ++z)
        for (int x = 0; x < s.x; ++x) g.data.push_back(v.at(channel, z, index, x));
      break;
    case Axis::X:
      g.rows = s.z;
      g.cols = s.y;
      g.data.reserve(static_cast<std::size_t>(g.rows) * g.cols);
      for (int z = 0; z < s.z; ++z)
        for (int y = 0; y < s.y; ++y) g.data.push_back(v.at(channel, z, y, index));
      break;
  }
  return g;
}

}  // namespace flim
