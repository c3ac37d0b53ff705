#pragma once

// Dataset-level steps shared by the command-line tool and the acceptance
// runner: marked-case loading, oracle selection, encoder construction,
// training and evaluation.

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "flim/encoder.hpp"
#include "flim/metrics.hpp"
#include "flim/msflim.hpp"
#include "flim/phantom.hpp"
#include "flim/sunet.hpp"

namespace flim {

/// Layer 1 keeps 16 principal components of the marker-cluster centers,
/// deeper layers 32 and 64, matching the decoder's skip widths.
inline EncoderSpec default_encoder_spec(const SunetConfig& cfg = {}) {
  EncoderSpec s;
  s.layers.clear();
  for (int w : cfg.widths) s.layers.push_back(LayerSpec{3, 5, w, true});
  return s;
}

struct MarkedSet {
  std::vector<std::string> ids;
  std::vector<Volume> flair, t1gd;
  std::vector<MarkerSet> flair_markers, t1gd_markers;
  std::vector<RegionMap> regions;
};

inline MarkedSet load_marked(const std::filesystem::path& root, const DatasetManifest& m) {
  if (m.marked.empty()) throw FormatError("dataset has no marked cases");
  MarkedSet s;
  for (const auto& id : m.marked) {
    PhantomCase c = load_case(root, id, true);
    CaseMarkers mk = load_case_markers(root, id);
    s.ids.push_back(id);
    s.flair.push_back(std::move(c.flair));
    s.t1gd.push_back(std::move(c.t1gd));
    s.flair_markers.push_back(std::move(mk.flair));
    s.t1gd_markers.push_back(std::move(mk.t1gd));
    s.regions.push_back(std::move(c.regions));
  }
  return s;
}

/// Regions the oracle must cover on each modality.
inline std::vector<OracleRegion> oracle_regions(const MarkedSet& s, Modality m) {
  std::vector<OracleRegion> out;
  if (m == Modality::FLAIR) {
    out = {{"ED-saturated", {}}, {"ED-intermediate", {}}};
    for (const auto& r : s.regions) {
      out[0].masks.push_back(region_mask(r, {Region::EDSaturated}));
      out[1].masks.push_back(region_mask(r, {Region::EDIntermediate}));
    }
  } else {
    out = {{"ET", {}}, {"NC", {}}};
    for (const auto& r : s.regions) {
      out[0].masks.push_back(region_mask(r, {Region::ET}));
      out[1].masks.push_back(region_mask(r, {Region::NC}));
    }
  }
  return out;
}

/// Activations are judged inside the brain, away from the skull edge.
inline std::vector<Mask> oracle_rois(const MarkedSet& s) {
  std::vector<Mask> out;
  for (const auto& r : s.regions) out.push_back(brain_mask(r, 1));
  return out;
}

struct ModalitySelection {
  Modality modality = Modality::FLAIR;
  std::vector<CandidateSet> runs;
  OracleReport report;
  FilterBank bank;
};

inline ModalitySelection select_first_layer(const MarkedSet& s, Modality m, const GridSpec& grid,
                                            const OracleConfig& oc, std::uint64_t seed) {
  const auto& images = m == Modality::FLAIR ? s.flair : s.t1gd;
  const auto& markers = m == Modality::FLAIR ? s.flair_markers : s.t1gd_markers;
  ModalitySelection out;
  out.modality = m;
  out.runs = run_msflim_grid(images, markers, grid, seed);
  const auto regions = oracle_regions(s, m);
  const auto rois = oracle_rois(s);
  out.report = scripted_selection(out.runs, images, regions, rois, oc);
  out.bank = finalize_bank(out.runs, out.report.ledger, out.runs.front().norm);
  return out;
}

/// Encoder for one modality; `layer1` switches from FLIM to MS-FLIM.
inline EncoderModel build_modality_encoder(const MarkedSet& s, Modality m, const EncoderSpec& spec,
                                           const std::optional<FilterBank>& layer1, std::uint64_t seed) {
  const auto& images = m == Modality::FLAIR ? s.flair : s.t1gd;
  const auto& markers = m == Modality::FLAIR ? s.flair_markers : s.t1gd_markers;
  return build_encoder(images, markers, spec, layer1, mix_seed(seed, static_cast<std::uint64_t>(m)), m);
}

inline std::vector<TrainCase> load_train_cases(const std::filesystem::path& root, const std::vector<std::string>& ids) {
  std::vector<TrainCase> out;
  for (const auto& id : ids) {
    PhantomCase c = load_case(root, id);
    out.push_back({id, std::move(c.flair), std::move(c.t1gd), std::move(c.labels)});
  }
  return out;
}

inline DiceReport evaluate(const SunetModel<float>& model, std::span<const TrainCase> cases) {
  DiceReport rep;
  for (const auto& c : cases) rep.cases.push_back(case_dice(c.id, predict_labels(model, c.flair, c.t1gd), c.labels));
  return rep;
}

}  // namespace flim
