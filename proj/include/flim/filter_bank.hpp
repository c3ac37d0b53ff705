#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "flim/patches.hpp"

namespace flim {

/// Where a filter came from: the run ("flim", "flim-pca" or an MS-FLIM run
/// id), the image and marker it was clustered from (-1/empty when pooled),
/// and the cluster or component index.
struct FilterSource {
  std::string run_id = "flim";
  std::string image_id;
  int marker_id = -1;
  int cluster = 0;
  friend bool operator==(const FilterSource&, const FilterSource&) = default;
};

struct Filter {
  std::vector<float> weights;  // k^3 * C_in, ordered (c, z, y, x)
  FilterSource source;
  friend bool operator==(const Filter&, const Filter&) = default;
};

/// One layer's unit-norm filters plus the marker statistics used to
/// centralize that layer's input.
struct FilterBank {
  int layer = 1;
  int kernel = 3;
  int in_channels = 1;
  std::vector<Filter> filters;
  NormStats norm;

  int size() const { return static_cast<int>(filters.size()); }
  int dim() const { return kernel * kernel * kernel * in_channels; }

  /// Weights as a contiguous [out][in][k][k][k] array.
  std::vector<float> weight_array() const {
    std::vector<float> w;
    w.reserve(filters.size() * static_cast<std::size_t>(dim()));
    for (const auto& f : filters) w.insert(w.end(), f.weights.begin(), f.weights.end());
    return w;
  }
  friend bool operator==(const FilterBank&, const FilterBank&) = default;
};

inline double l2_norm(std::span<const float> v) {
  double s = 0.0;
  for (float x : v) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

/// Scale to unit L2 norm; throws on an all-zero vector.
inline std::vector<float> unit_normalized(std::span<const float> v) {
  const double n = l2_norm(v);
  if (!(n > 1e-12)) throw FormatError("degenerate (all-zero) filter candidate");
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] / n);
  return out;
}

inline void validate_bank(const FilterBank& b) {
  if (b.kernel < 1 || b.kernel % 2 == 0) throw FormatError("filter bank kernel must be odd");
  if (b.in_channels < 1) throw FormatError("filter bank needs at least one input channel");
  if (b.filters.empty()) throw FormatError("filter bank has no filters");
  if (b.norm.channels() != b.in_channels) throw FormatError("filter bank norm stats do not match in_channels");
  for (const auto& f : b.filters)
    if (f.weights.size() != static_cast<std::size_t>(b.dim())) throw FormatError("filter length does not match kernel and channels");
}

inline json source_to_json(const FilterSource& s) {
  json j;
  j["run"] = s.run_id;
  j["image"] = s.image_id;
  j["marker"] = s.marker_id;
  j["cluster"] = s.cluster;
  return j;
}

inline FilterSource source_from_json(const json& j) {
  return {j.at("run").get<std::string>(), j.at("image").get<std::string>(), j.at("marker").get<int>(),
          j.at("cluster").get<int>()};
}

inline json bank_header(const FilterBank& b) {
  json h;
  h["layer"] = b.layer;
  h["kernel"] = b.kernel;
  h["in_channels"] = b.in_channels;
  h["n_filters"] = b.size();
  h["norm"] = norm_to_json(b.norm);
  h["provenance"] = json::array();
  for (const auto& f : b.filters) h["provenance"].push_back(source_to_json(f.source));
  return h;
}

inline FilterBank bank_from_header(const json& h, const std::string& payload, std::size_t offset_floats) {
  FilterBank b;
  try {
    b.layer = h.at("layer").get<int>();
    b.kernel = h.at("kernel").get<int>();
    b.in_channels = h.at("in_channels").get<int>();
    b.norm = norm_from_json(h.at("norm"));
    const int n = h.at("n_filters").get<int>();
    const auto& prov = h.at("provenance");
    if (n < 1 || prov.size() != static_cast<std::size_t>(n)) throw FormatError("filter bank: provenance count mismatch");
    const auto dim = static_cast<std::size_t>(b.dim());
    if (payload.size() < (offset_floats + static_cast<std::size_t>(n) * dim) * sizeof(float))
      throw FormatError("filter bank: truncated weights");
    for (int i = 0; i < n; ++i) {
      Filter f;
      f.weights.resize(dim);
      copy_f32le(payload, offset_floats + static_cast<std::size_t>(i) * dim, f.weights.data(), dim);
      f.source = source_from_json(prov[static_cast<std::size_t>(i)]);
      b.filters.push_back(std::move(f));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("filter bank header: ") + e.what());
  }
  validate_bank(b);
  return b;
}

inline std::string encode_bank(const FilterBank& b) {
  validate_bank(b);
  json h;
  h["magic"] = "FLIMBANK1";
  h["dtype"] = "f32le";
  const json body = bank_header(b);
  for (const auto& [k, v] : body.items()) h[k] = v;
  std::string out = h.dump();
  out.push_back('\n');
  const auto w = b.weight_array();
  append_f32le(out, w.data(), w.size());
  return out;
}

inline FilterBank decode_bank(const std::string& bytes) {
  auto blob = split_header_line(bytes, "filter bank");
  if (blob.header.value("magic", std::string{}) != "FLIMBANK1") throw FormatError("filter bank: bad magic");
  FilterBank b = bank_from_header(blob.header, blob.payload, 0);
  if (blob.payload.size() != b.weight_array().size() * sizeof(float)) throw FormatError("filter bank: payload size mismatch");
  return b;
}

inline void save_bank(const FilterBank& b, const std::filesystem::path& path) { write_file_atomic(path, encode_bank(b)); }
inline FilterBank load_bank(const std::filesystem::path& path) { return decode_bank(read_file(path)); }

}  // namespace flim
