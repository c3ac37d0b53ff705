#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flim/cluster.hpp"
#include "flim/filter_bank.hpp"
#include "flim/markers.hpp"
#include "flim/patches.hpp"
#include "flim/tensor.hpp"

namespace flim {

struct LayerSpec {
  int kernel = 3;
  int clusters_per_marker = 5;
  std::optional<int> pca_out;
  bool pool = true;  // max-pool window 2, stride 2 after the activation
};

struct EncoderSpec {
  std::vector<LayerSpec> layers{LayerSpec{}, LayerSpec{}, LayerSpec{}};
};

inline json encoder_spec_to_json(const EncoderSpec& s) {
  json j = json::array();
  for (const auto& l : s.layers) {
    json jl;
    jl["kernel"] = l.kernel;
    jl["clusters_per_marker"] = l.clusters_per_marker;
    jl["pca_out"] = l.pca_out ? json(*l.pca_out) : json(nullptr);
    jl["pool"] = l.pool;
    j.push_back(std::move(jl));
  }
  return j;
}

inline EncoderSpec encoder_spec_from_json(const json& j) {
  EncoderSpec s;
  s.layers.clear();
  try {
    for (const auto& jl : j) {
      LayerSpec l;
      l.kernel = jl.value("kernel", 3);
      l.clusters_per_marker = jl.value("clusters_per_marker", 5);
      if (jl.contains("pca_out") && !jl["pca_out"].is_null()) l.pca_out = jl["pca_out"].get<int>();
      l.pool = jl.value("pool", true);
      if (l.kernel < 1 || l.kernel % 2 == 0) throw FormatError("encoder spec: kernel must be odd");
      if (l.clusters_per_marker < 1) throw FormatError("encoder spec: clusters_per_marker must be >= 1");
      if (l.pca_out && *l.pca_out < 1) throw FormatError("encoder spec: pca_out must be >= 1");
      s.layers.push_back(l);
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("encoder spec: ") + e.what());
  }
  if (s.layers.empty()) throw FormatError("encoder spec has no layers");
  return s;
}

struct EncoderModel {
  Modality modality = Modality::FLAIR;
  std::vector<FilterBank> banks;
  EncoderSpec spec;
  friend bool operator==(const EncoderModel& a, const EncoderModel& b) {
    return a.modality == b.modality && a.banks == b.banks &&
           encoder_spec_to_json(a.spec) == encoder_spec_to_json(b.spec);
  }
};

/// Cluster each marker's patches into `n_per_marker` groups, pool the centers,
/// optionally reduce them to `pca_out` principal components, and normalize.
inline FilterBank estimate_layer_filters(const PatchDataset& pd, const NormStats& norm, int n_per_marker,
                                         std::optional<int> pca_out, std::uint64_t seed, int layer_index = 1) {
  if (pd.rows() == 0) throw FormatError("estimate_layer_filters: empty patch dataset");
  if (n_per_marker < 1) throw FormatError("estimate_layer_filters: clusters per marker must be >= 1");

  // Group rows by (image, marker) in dataset order.
  std::vector<std::pair<std::string, int>> keys;
  std::map<std::pair<std::string, int>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < pd.rows(); ++i) {
    auto key = std::make_pair(pd.origins[i].image_id, pd.origins[i].marker_id);
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) keys.push_back(key);
    it->second.push_back(i);
  }

  const auto dim = static_cast<std::size_t>(pd.dim());
  std::vector<std::vector<float>> centers;
  std::vector<FilterSource> sources;
  for (std::size_t g = 0; g < keys.size(); ++g) {
    const auto& rows = groups[keys[g]];
    RowMatrix pts(rows.size(), dim);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      auto src = pd.row(rows[r]);
      std::copy(src.begin(), src.end(), pts.row(r).begin());
    }
    const auto res = minibatch_kmeans(pts, n_per_marker, mix_seed(seed, g));
    for (std::size_t c = 0; c < res.centers.rows; ++c) {
      auto row = res.centers.row(c);
      centers.emplace_back(row.begin(), row.end());
      sources.push_back({"flim", keys[g].first, keys[g].second, static_cast<int>(c)});
    }
  }

  FilterBank bank;
  bank.layer = layer_index;
  bank.kernel = pd.kernel;
  bank.in_channels = pd.channels;
  bank.norm = norm;
  if (pca_out) {
    if (*pca_out > static_cast<int>(centers.size()))
      throw FormatError("estimate_layer_filters: pca_out " + std::to_string(*pca_out) + " exceeds " +
                        std::to_string(centers.size()) + " candidate filters");
    RowMatrix cand(centers.size(), dim);
    for (std::size_t i = 0; i < centers.size(); ++i) std::copy(centers[i].begin(), centers[i].end(), cand.row(i).begin());
    const auto pca = pca_components(cand, *pca_out);
    for (std::size_t i = 0; i < pca.components.rows; ++i)
      bank.filters.push_back({unit_normalized(pca.components.row(i)), {"flim-pca", "", -1, static_cast<int>(i)}});
  } else {
    for (std::size_t i = 0; i < centers.size(); ++i) bank.filters.push_back({unit_normalized(centers[i]), sources[i]});
  }
  return bank;
}

/// ReLU(filter . centralized patch) at every voxel, zero padding, no pooling.
inline Tensor<float> bank_response(const Tensor<float>& input, const FilterBank& bank) {
  if (input.channels != bank.in_channels)
    throw FormatError("layer input has " + std::to_string(input.channels) + " channels, bank expects " +
                      std::to_string(bank.in_channels));
  validate_bank(bank);
  const auto normalized = kernels::normalize_channels<float>(input, bank.norm.mean, bank.norm.std);
  const auto w = bank.weight_array();
  auto out = kernels::conv3d<float>(normalized, w, {}, bank.size(), bank.kernel);
  kernels::relu_inplace(out);
  return out;
}

inline Volume conv_layer_forward(const Volume& v, const FilterBank& bank, bool pool = true) {
  auto act = bank_response(to_tensor<float>(v), bank);
  if (pool) act = kernels::maxpool2(act);
  return to_volume(act);
}

inline void check_images_markers(std::span<const Volume> images, std::span<const MarkerSet> markers) {
  if (images.empty()) throw FormatError("no training images");
  if (images.size() != markers.size()) throw FormatError("images and marker sets differ in count");
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].channels() != images.front().channels()) throw FormatError("training images differ in channel count");
    validate_markers_in(markers[i], images[i].shape());
    if (markers[i].markers.empty()) throw FormatError("image " + markers[i].image_id + " has no markers");
  }
}

/// Layer-wise FLIM: each layer's filters come from patches at the markers
/// projected onto that layer's input. `layer1` replaces the first layer's
/// estimation (the MS-FLIM path).
inline EncoderModel build_encoder(std::span<const Volume> images, std::span<const MarkerSet> markers,
                                  const EncoderSpec& spec, const std::optional<FilterBank>& layer1,
                                  std::uint64_t seed, Modality modality = Modality::FLAIR) {
  check_images_markers(images, markers);
  if (spec.layers.empty()) throw FormatError("encoder spec has no layers");
  EncoderModel model;
  model.modality = modality;
  model.spec = spec;

  std::vector<Volume> feats(images.begin(), images.end());
  int stride = 1;
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const LayerSpec& ls = spec.layers[l];
    std::vector<MarkerSet> projected;
    for (const auto& ms : markers) projected.push_back(project_markers(ms, stride));
    for (std::size_t i = 0; i < feats.size(); ++i) validate_markers_in(projected[i], feats[i].shape());

    FilterBank bank;
    if (l == 0 && layer1) {
      bank = *layer1;
      validate_bank(bank);
      if (bank.in_channels != images.front().channels())
        throw FormatError("supplied first-layer bank expects " + std::to_string(bank.in_channels) + " channels");
      bank.layer = 1;
    } else {
      std::vector<MarkedImage> marked;
      for (std::size_t i = 0; i < feats.size(); ++i) marked.push_back({&feats[i], &projected[i]});
      const NormStats norm = marker_stats(marked);
      const PatchDataset pd = extract_patches(marked, ls.kernel, norm);
      if (pd.rows() == 0) throw FormatError("layer " + std::to_string(l + 1) + ": empty patch set");
      bank = estimate_layer_filters(pd, norm, ls.clusters_per_marker, ls.pca_out, mix_seed(seed, l),
                                    static_cast<int>(l) + 1);
    }
    if (l + 1 < spec.layers.size()) {
      for (auto& f : feats) f = conv_layer_forward(f, bank, ls.pool);
      if (ls.pool) stride *= 2;
    }
    model.banks.push_back(std::move(bank));
  }
  return model;
}

/// Run every layer; returns the pre-pool activation of each layer.
inline std::vector<Volume> encoder_activations(const EncoderModel& model, const Volume& image) {
  std::vector<Volume> out;
  auto t = to_tensor<float>(image);
  for (std::size_t l = 0; l < model.banks.size(); ++l) {
    auto act = bank_response(t, model.banks[l]);
    out.push_back(to_volume(act));
    t = model.spec.layers[l].pool ? kernels::maxpool2(act) : std::move(act);
  }
  return out;
}

// Encoder file: JSON header (modality, spec, one bank header per layer) then
// the concatenated f32 weights of every bank.
inline std::string encode_encoder(const EncoderModel& m) {
  json h;
  h["magic"] = "FLIMENC1";
  h["dtype"] = "f32le";
  h["modality"] = to_string(m.modality);
  h["spec"] = encoder_spec_to_json(m.spec);
  h["banks"] = json::array();
  std::string payload;
  for (const auto& b : m.banks) {
    validate_bank(b);
    h["banks"].push_back(bank_header(b));
    const auto w = b.weight_array();
    append_f32le(payload, w.data(), w.size());
  }
  std::string out = h.dump();
  out.push_back('\n');
  out += payload;
  return out;
}

inline EncoderModel decode_encoder(const std::string& bytes) {
  auto blob = split_header_line(bytes, "encoder");
  const json& h = blob.header;
  if (h.value("magic", std::string{}) != "FLIMENC1") throw FormatError("encoder: bad magic");
  EncoderModel m;
  try {
    m.modality = parse_modality(h.at("modality").get<std::string>());
    m.spec = encoder_spec_from_json(h.at("spec"));
    std::size_t offset = 0;
    for (const auto& bh : h.at("banks")) {
      m.banks.push_back(bank_from_header(bh, blob.payload, offset));
      offset += m.banks.back().weight_array().size();
    }
    if (offset * sizeof(float) != blob.payload.size()) throw FormatError("encoder: payload size mismatch");
  } catch (const json::exception& e) {
    throw FormatError(std::string("encoder: ") + e.what());
  }
  if (m.banks.size() != m.spec.layers.size()) throw FormatError("encoder: bank count differs from spec");
  for (std::size_t l = 1; l < m.banks.size(); ++l)
    if (m.banks[l].in_channels != m.banks[l - 1].size()) throw FormatError("encoder: layer widths do not chain");
  return m;
}

inline void save_encoder(const EncoderModel& m, const std::filesystem::path& path) {
  write_file_atomic(path, encode_encoder(m));
}
inline EncoderModel load_encoder(const std::filesystem::path& path) { return decode_encoder(read_file(path)); }

}  // namespace flim
