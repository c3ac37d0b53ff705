#pragma once

#include <algorithm>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "flim/volume.hpp"

namespace flim {

enum class MarkerLabel { ED, ET, NC, OTHER };
enum class Modality { FLAIR, T1Gd };

inline std::string to_string(MarkerLabel l) {
  switch (l) {
    case MarkerLabel::ED: return "ED";
    case MarkerLabel::ET: return "ET";
    case MarkerLabel::NC: return "NC";
    case MarkerLabel::OTHER: return "OTHER";
  }
  return "OTHER";
}

inline MarkerLabel parse_marker_label(std::string_view s) {
  if (s == "ED") return MarkerLabel::ED;
  if (s == "ET") return MarkerLabel::ET;
  if (s == "NC") return MarkerLabel::NC;
  if (s == "OTHER") return MarkerLabel::OTHER;
  throw FormatError("unknown marker label '" + std::string(s) + "'");
}

inline std::string to_string(Modality m) { return m == Modality::FLAIR ? "FLAIR" : "T1Gd"; }

inline Modality parse_modality(std::string_view s) {
  if (s == "FLAIR" || s == "flair") return Modality::FLAIR;
  if (s == "T1Gd" || s == "t1gd") return Modality::T1Gd;
  throw FormatError("unknown modality '" + std::string(s) + "'");
}

/// One scribble: a labeled list of unique voxels.
struct Marker {
  int id = 0;
  MarkerLabel label = MarkerLabel::OTHER;
  std::vector<Voxel> voxels;
  friend bool operator==(const Marker&, const Marker&) = default;
};

struct MarkerSet {
  std::string image_id;
  Modality modality = Modality::FLAIR;
  std::vector<Marker> markers;

  std::size_t voxel_count() const {
    std::size_t n = 0;
    for (const auto& m : markers) n += m.voxels.size();
    return n;
  }

  /// Markers ordered by id; the canonical iteration order for patch extraction.
  std::vector<const Marker*> by_id() const {
    std::vector<const Marker*> out;
    for (const auto& m : markers) out.push_back(&m);
    std::sort(out.begin(), out.end(), [](const Marker* a, const Marker* b) { return a->id < b->id; });
    return out;
  }

  friend bool operator==(const MarkerSet&, const MarkerSet&) = default;
};

inline void validate_markers(const MarkerSet& ms) {
  std::set<int> ids;
  for (const auto& m : ms.markers) {
    if (m.id <= 0) throw FormatError("marker ids must be positive");
    if (!ids.insert(m.id).second) throw FormatError("duplicate marker id " + std::to_string(m.id));
    if (m.voxels.empty()) throw FormatError("marker " + std::to_string(m.id) + " has no voxels");
    std::set<Voxel> seen;
    for (const auto& v : m.voxels) {
      if (v.z < 0 || v.y < 0 || v.x < 0)
        throw FormatError("marker " + std::to_string(m.id) + " has a negative coordinate");
      if (!seen.insert(v).second)
        throw FormatError("marker " + std::to_string(m.id) + " repeats voxel (" + std::to_string(v.z) + "," +
                          std::to_string(v.y) + "," + std::to_string(v.x) + ")");
    }
  }
}

/// Checked when a marker set is bound to its image.
inline void validate_markers_in(const MarkerSet& ms, const Shape3& shape) {
  validate_markers(ms);
  for (const auto& m : ms.markers)
    for (const auto& v : m.voxels)
      if (!shape.contains(v))
        throw FormatError("marker " + std::to_string(m.id) + " voxel (" + std::to_string(v.z) + "," +
                          std::to_string(v.y) + "," + std::to_string(v.x) + ") lies outside the image");
}

inline json markers_to_json(const MarkerSet& ms) {
  json j;
  j["image_id"] = ms.image_id;
  j["modality"] = to_string(ms.modality);
  j["markers"] = json::array();
  for (const auto& m : ms.markers) {
    json jm;
    jm["id"] = m.id;
    jm["label"] = to_string(m.label);
    jm["voxels"] = json::array();
    for (const auto& v : m.voxels) jm["voxels"].push_back({v.z, v.y, v.x});
    j["markers"].push_back(std::move(jm));
  }
  return j;
}

inline MarkerSet markers_from_json(const json& j, bool validate = true) {
  try {
    MarkerSet ms;
    ms.image_id = j.at("image_id").get<std::string>();
    ms.modality = parse_modality(j.at("modality").get<std::string>());
    for (const auto& jm : j.at("markers")) {
      Marker m;
      m.id = jm.at("id").get<int>();
      m.label = parse_marker_label(jm.value("label", std::string("OTHER")));
      for (const auto& jv : jm.at("voxels")) {
        if (!jv.is_array() || jv.size() != 3) throw FormatError("voxel must be [z,y,x]");
        m.voxels.push_back({jv[0].get<int>(), jv[1].get<int>(), jv[2].get<int>()});
      }
      ms.markers.push_back(std::move(m));
    }
    if (validate) validate_markers(ms);
    return ms;
  } catch (const json::exception& e) {
    throw FormatError(std::string("marker file: ") + e.what());
  }
}

inline MarkerSet parse_markers(const std::string& text) {
  try {
    return markers_from_json(json::parse(text));
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("marker file: ") + e.what());
  }
}

inline MarkerSet load_markers(const std::filesystem::path& path) { return parse_markers(read_file(path)); }

inline void save_markers(const MarkerSet& ms, const std::filesystem::path& path) {
  validate_markers(ms);
  write_file_atomic(path, markers_to_json(ms).dump() + "\n");
}

/// Map voxels through a pooling stride by floor division; duplicates collapse
/// keeping first occurrence order.
inline MarkerSet project_markers(const MarkerSet& ms, int stride) {
  if (stride < 1) throw FormatError("projection stride must be >= 1");
  MarkerSet out{ms.image_id, ms.modality, {}};
  for (const auto& m : ms.markers) {
    Marker pm{m.id, m.label, {}};
    std::set<Voxel> seen;
    for (const auto& v : m.voxels) {
      Voxel p{v.z / stride, v.y / stride, v.x / stride};
      if (seen.insert(p).second) pm.voxels.push_back(p);
    }
    out.markers.push_back(std::move(pm));
  }
  return out;
}

struct BalanceReport {
  std::size_t min_voxels = 0;
  std::size_t max_voxels = 0;
  double ratio = 1.0;
  bool warning = false;
};

inline constexpr double kBalanceWarnRatio = 2.0;

inline BalanceReport check_marker_balance(const MarkerSet& ms) {
  if (ms.markers.empty()) throw FormatError("marker set is empty");
  BalanceReport r;
  r.min_voxels = ms.markers.front().voxels.size();
  r.max_voxels = r.min_voxels;
  for (const auto& m : ms.markers) {
    r.min_voxels = std::min(r.min_voxels, m.voxels.size());
    r.max_voxels = std::max(r.max_voxels, m.voxels.size());
  }
  r.ratio = r.min_voxels == 0 ? std::numeric_limits<double>::infinity()
                              : static_cast<double>(r.max_voxels) / static_cast<double>(r.min_voxels);
  r.warning = r.ratio > kBalanceWarnRatio;
  return r;
}

}  // namespace flim
