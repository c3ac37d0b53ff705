#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "flim/encoder.hpp"

namespace flim {

struct RunParams {
  int n1 = 10;  // clusters per marker (first candidates)
  int n2 = 5;   // clusters per image
  std::uint64_t seed = 0;
};

struct ImageCandidates {
  std::string image_id;
  int first_candidates = 0;
  std::vector<Filter> filters;  // unit norm
};

/// One MS-FLIM execution: per-image candidate first-layer filters.
struct CandidateSet {
  std::string run_id;
  RunParams params;
  Modality modality = Modality::FLAIR;
  int kernel = 3;
  int in_channels = 1;
  NormStats norm;
  std::vector<ImageCandidates> images;

  const ImageCandidates* find_image(std::string_view id) const {
    for (const auto& im : images)
      if (im.image_id == id) return &im;
    return nullptr;
  }
  std::size_t candidate_count() const {
    std::size_t n = 0;
    for (const auto& im : images) n += im.filters.size();
    return n;
  }
};

/// Two-stage clustering: per marker into `n1` centers, then each image's
/// pooled centers into `n2` centers. Patches are centralized with statistics
/// over the markers of all images so every candidate shares one NormStats.
inline CandidateSet run_msflim_step(std::span<const Volume> images, std::span<const MarkerSet> markers,
                                    const RunParams& params, std::string run_id = "run", int kernel = 3) {
  if (params.n1 < 1 || params.n2 < 1) throw FormatError("MS-FLIM: N1 and N2 must be >= 1");
  check_images_markers(images, markers);
  for (const auto& ms : markers)
    if (ms.modality != markers.front().modality) throw FormatError("MS-FLIM: marker sets mix modalities");

  std::vector<MarkedImage> marked;
  for (std::size_t i = 0; i < images.size(); ++i) marked.push_back({&images[i], &markers[i]});

  CandidateSet out;
  out.run_id = std::move(run_id);
  out.params = params;
  out.modality = markers.front().modality;
  out.kernel = kernel;
  out.in_channels = images.front().channels();
  out.norm = marker_stats(marked);

  for (std::size_t i = 0; i < images.size(); ++i) {
    const PatchDataset pd = extract_patches(images[i], markers[i], kernel, out.norm);
    const auto dim = static_cast<std::size_t>(pd.dim());
    std::vector<float> first;
    std::size_t n_first = 0;
    std::size_t row = 0;
    std::uint64_t group = 0;
    while (row < pd.rows()) {
      std::size_t end = row;
      while (end < pd.rows() && pd.origins[end].marker_id == pd.origins[row].marker_id) ++end;
      RowMatrix pts(end - row, dim, std::vector<float>(pd.values.begin() + static_cast<std::ptrdiff_t>(row * dim),
                                                       pd.values.begin() + static_cast<std::ptrdiff_t>(end * dim)));
      const auto res = minibatch_kmeans(pts, params.n1, mix_seed(params.seed, i * 4096 + group));
      first.insert(first.end(), res.centers.values.begin(), res.centers.values.end());
      n_first += res.centers.rows;
      row = end;
      ++group;
    }
    const RowMatrix pooled(n_first, dim, std::move(first));
    const auto second = minibatch_kmeans(pooled, params.n2, mix_seed(params.seed, i * 4096 + 4095));
    ImageCandidates ic;
    ic.image_id = markers[i].image_id;
    ic.first_candidates = static_cast<int>(n_first);
    for (std::size_t c = 0; c < second.centers.rows; ++c)
      ic.filters.push_back({unit_normalized(second.centers.row(c)), {out.run_id, ic.image_id, -1, static_cast<int>(c)}});
    out.images.push_back(std::move(ic));
  }
  return out;
}

/// Single-channel ReLU response map of one candidate, no pooling.
inline Volume activation_map(const Volume& image, const Filter& candidate, const NormStats& norm, int kernel = 3) {
  FilterBank bank{1, kernel, image.channels(), {candidate}, norm};
  if (candidate.weights.size() != static_cast<std::size_t>(bank.dim()))
    throw FormatError("candidate length " + std::to_string(candidate.weights.size()) + " does not match k^3*C = " +
                      std::to_string(bank.dim()));
  return to_volume(bank_response(to_tensor<float>(image), bank), image.spacing_mm());
}

/// Soft IoU sum(min(a, m)) / sum(max(a, m)) between the min-max normalized
/// activation `a` and the binary mask `m`. With `roi`, both the normalization
/// and the sums are restricted to the ROI voxels.
inline double score_candidate_against_region(std::span<const float> activation, const Mask& region,
                                             const Mask* roi = nullptr) {
  if (activation.size() != region.data.size()) throw FormatError("activation and mask shapes differ");
  if (roi && roi->data.size() != region.data.size()) throw FormatError("roi and mask shapes differ");
  auto inside = [&](std::size_t i) { return !roi || (*roi)[i]; };
  std::size_t mask_n = 0;
  float lo = std::numeric_limits<float>::infinity(), hi = -std::numeric_limits<float>::infinity();
  for (std::size_t i = 0; i < activation.size(); ++i) {
    if (!inside(i)) continue;
    mask_n += region[i];
    lo = std::min(lo, activation[i]);
    hi = std::max(hi, activation[i]);
  }
  if (mask_n == 0) throw FormatError("region mask is empty");
  const double range = static_cast<double>(hi) - lo;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < activation.size(); ++i) {
    if (!inside(i)) continue;
    const double a = range > 0.0 ? (activation[i] - lo) / range : 0.0;
    const double m = region[i] ? 1.0 : 0.0;
    num += std::min(a, m);
    den += std::max(a, m);
  }
  return den > 0.0 ? num / den : 0.0;
}

inline double score_candidate_against_region(const Volume& act, const Mask& region, const Mask* roi = nullptr) {
  if (act.channels() != 1 || act.shape() != region.shape) throw FormatError("activation and mask shapes differ");
  return score_candidate_against_region(act.channel(0), region, roi);
}

struct Pick {
  std::string run_id;
  std::string image_id;
  int index = 0;
  friend bool operator==(const Pick&, const Pick&) = default;
  friend auto operator<=>(const Pick&, const Pick&) = default;
};

/// The user's (or the scripted oracle's) chosen first-layer filters.
class SelectionLedger {
 public:
  explicit SelectionLedger(int target_bank_size = 16) : target_(target_bank_size) {
    if (target_bank_size < 1) throw FormatError("target bank size must be >= 1");
  }

  void add(const Pick& p) {
    if (contains(p)) throw FormatError("duplicate pick " + p.run_id + "/" + p.image_id + "/" + std::to_string(p.index));
    if (static_cast<int>(chosen_.size()) >= target_) throw FormatError("selection already holds the target bank size");
    chosen_.push_back(p);
  }
  void remove(const Pick& p) { std::erase(chosen_, p); }
  bool contains(const Pick& p) const { return std::find(chosen_.begin(), chosen_.end(), p) != chosen_.end(); }
  const std::vector<Pick>& chosen() const { return chosen_; }
  int target_bank_size() const { return target_; }
  std::size_t size() const { return chosen_.size(); }
  bool full() const { return static_cast<int>(chosen_.size()) >= target_; }

 private:
  std::vector<Pick> chosen_;
  int target_;
};

inline json ledger_to_json(const SelectionLedger& l) {
  json j;
  j["target_bank_size"] = l.target_bank_size();
  j["chosen"] = json::array();
  for (const auto& p : l.chosen()) j["chosen"].push_back({{"run", p.run_id}, {"image", p.image_id}, {"index", p.index}});
  return j;
}

inline SelectionLedger ledger_from_json(const json& j) {
  try {
    SelectionLedger l(j.value("target_bank_size", 16));
    for (const auto& p : j.at("chosen"))
      l.add({p.at("run").get<std::string>(), p.at("image").get<std::string>(), p.at("index").get<int>()});
    return l;
  } catch (const json::exception& e) {
    throw FormatError(std::string("selection ledger: ") + e.what());
  }
}

inline const Filter& resolve_pick(std::span<const CandidateSet> runs, const Pick& p) {
  for (const auto& r : runs) {
    if (r.run_id != p.run_id) continue;
    const auto* im = r.find_image(p.image_id);
    if (!im) throw NotFoundError("run " + p.run_id + " has no image " + p.image_id);
    if (p.index < 0 || p.index >= static_cast<int>(im->filters.size()))
      throw NotFoundError("run " + p.run_id + " image " + p.image_id + " has no candidate " + std::to_string(p.index));
    return im->filters[static_cast<std::size_t>(p.index)];
  }
  throw NotFoundError("unknown run " + p.run_id);
}

/// First-layer bank made of exactly the ledger's picks, in pick order.
inline FilterBank finalize_bank(std::span<const CandidateSet> runs, const SelectionLedger& ledger, const NormStats& norm) {
  if (ledger.chosen().empty()) throw FormatError("selection ledger is empty");
  std::set<Pick> seen;
  FilterBank bank;
  bank.layer = 1;
  bank.norm = norm;
  bool first = true;
  for (const auto& p : ledger.chosen()) {
    if (!seen.insert(p).second) throw FormatError("duplicate pick in ledger");
    const Filter& f = resolve_pick(runs, p);
    for (const auto& r : runs)
      if (r.run_id == p.run_id) {
        if (first) {
          bank.kernel = r.kernel;
          bank.in_channels = r.in_channels;
          first = false;
        } else if (bank.kernel != r.kernel || bank.in_channels != r.in_channels) {
          throw FormatError("picked runs disagree on kernel or channels");
        }
      }
    bank.filters.push_back(f);
  }
  validate_bank(bank);
  return bank;
}

// ---------------------------------------------------------------------------
// Grid execution and the scripted selection oracle
// ---------------------------------------------------------------------------

struct GridSpec {
  std::vector<int> n1{5, 10};
  std::vector<int> n2{5, 20, 50};
};

inline std::string grid_run_id(Modality m, int n1, int n2) {
  return std::string(m == Modality::FLAIR ? "flair" : "t1gd") + "-n" + std::to_string(n1) + "-" + std::to_string(n2);
}

inline std::vector<CandidateSet> run_msflim_grid(std::span<const Volume> images, std::span<const MarkerSet> markers,
                                                 const GridSpec& grid, std::uint64_t seed, int kernel = 3) {
  check_images_markers(images, markers);
  std::vector<CandidateSet> runs;
  std::uint64_t i = 0;
  for (int n1 : grid.n1)
    for (int n2 : grid.n2) {
      runs.push_back(run_msflim_step(images, markers, {n1, n2, mix_seed(seed, i++)},
                                     grid_run_id(markers.front().modality, n1, n2), kernel));
    }
  return runs;
}

/// A named region with one mask per training image (same order as images).
struct OracleRegion {
  std::string name;
  std::vector<Mask> masks;
};

struct OracleConfig {
  double tau = 0.3;
  int target_bank_size = 16;
};

struct CandidateScore {
  Pick pick;
  std::vector<double> region_scores;  // mean soft IoU over training images
  double best() const { return *std::max_element(region_scores.begin(), region_scores.end()); }
};

struct OracleReport {
  SelectionLedger ledger{16};
  std::vector<std::string> regions;
  std::vector<double> best_region_score;
  std::vector<std::optional<Pick>> region_pick;  // empty when no candidate reached tau
  std::vector<CandidateScore> scores;
};

/// Score every candidate against every region on every training image.
inline std::vector<CandidateScore> score_candidates(std::span<const CandidateSet> runs, std::span<const Volume> images,
                                                    std::span<const OracleRegion> regions, std::span<const Mask> rois) {
  std::vector<CandidateScore> out;
  for (const auto& run : runs) {
    FilterBank all{1, run.kernel, run.in_channels, {}, run.norm};
    std::vector<Pick> picks;
    for (const auto& im : run.images)
      for (std::size_t k = 0; k < im.filters.size(); ++k) {
        all.filters.push_back(im.filters[k]);
        picks.push_back({run.run_id, im.image_id, static_cast<int>(k)});
      }
    std::vector<std::vector<double>> sums(picks.size(), std::vector<double>(regions.size(), 0.0));
    for (std::size_t j = 0; j < images.size(); ++j) {
      const auto act = bank_response(to_tensor<float>(images[j]), all);
      for (std::size_t c = 0; c < picks.size(); ++c) {
        std::span<const float> a(act.channel_ptr(static_cast<int>(c)), act.voxels());
        for (std::size_t r = 0; r < regions.size(); ++r)
          sums[c][r] += score_candidate_against_region(a, regions[r].masks[j], rois.empty() ? nullptr : &rois[j]);
      }
    }
    for (std::size_t c = 0; c < picks.size(); ++c) {
      for (auto& s : sums[c]) s /= static_cast<double>(images.size());
      out.push_back({picks[c], std::move(sums[c])});
    }
  }
  return out;
}

/// Stand-in for the human: best candidate per region (if it reaches tau),
/// then fill to the target size by each candidate's best region score.
inline OracleReport scripted_selection(std::span<const CandidateSet> runs, std::span<const Volume> images,
                                       std::span<const OracleRegion> regions, std::span<const Mask> rois,
                                       const OracleConfig& cfg) {
  if (regions.empty()) throw FormatError("oracle needs at least one region");
  for (const auto& r : regions)
    if (r.masks.size() != images.size()) throw FormatError("region " + r.name + " needs one mask per image");
  OracleReport rep;
  rep.ledger = SelectionLedger(cfg.target_bank_size);
  rep.scores = score_candidates(runs, images, regions, rois);
  if (rep.scores.empty()) throw FormatError("no candidates to select from");

  for (std::size_t r = 0; r < regions.size(); ++r) {
    rep.regions.push_back(regions[r].name);
    const CandidateScore* best = nullptr;
    for (const auto& s : rep.scores)
      if (!best || s.region_scores[r] > best->region_scores[r]) best = &s;
    rep.best_region_score.push_back(best->region_scores[r]);
    if (best->region_scores[r] >= cfg.tau && !rep.ledger.full()) {
      if (!rep.ledger.contains(best->pick)) rep.ledger.add(best->pick);
      rep.region_pick.push_back(best->pick);
    } else {
      rep.region_pick.push_back(std::nullopt);
    }
  }
  std::vector<const CandidateScore*> ranked;
  for (const auto& s : rep.scores) ranked.push_back(&s);
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const CandidateScore* a, const CandidateScore* b) { return a->best() > b->best(); });
  for (const auto* s : ranked) {
    if (rep.ledger.full()) break;
    if (!rep.ledger.contains(s->pick)) rep.ledger.add(s->pick);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

inline std::string encode_candidate_set(const CandidateSet& cs) {
  json h;
  h["magic"] = "MSFLIMRUN1";
  h["dtype"] = "f32le";
  h["run_id"] = cs.run_id;
  h["params"] = {{"n1", cs.params.n1}, {"n2", cs.params.n2}, {"seed", cs.params.seed}};
  h["modality"] = to_string(cs.modality);
  h["kernel"] = cs.kernel;
  h["in_channels"] = cs.in_channels;
  h["norm"] = norm_to_json(cs.norm);
  h["images"] = json::array();
  std::string payload;
  for (const auto& im : cs.images) {
    json ji;
    ji["image_id"] = im.image_id;
    ji["first_candidates"] = im.first_candidates;
    ji["n_candidates"] = im.filters.size();
    ji["provenance"] = json::array();
    for (const auto& f : im.filters) {
      ji["provenance"].push_back(source_to_json(f.source));
      append_f32le(payload, f.weights.data(), f.weights.size());
    }
    h["images"].push_back(std::move(ji));
  }
  std::string out = h.dump();
  out.push_back('\n');
  return out + payload;
}

inline CandidateSet decode_candidate_set(const std::string& bytes) {
  auto blob = split_header_line(bytes, "candidate set");
  const json& h = blob.header;
  if (h.value("magic", std::string{}) != "MSFLIMRUN1") throw FormatError("candidate set: bad magic");
  CandidateSet cs;
  try {
    cs.run_id = h.at("run_id").get<std::string>();
    cs.params = {h.at("params").at("n1").get<int>(), h.at("params").at("n2").get<int>(),
                 h.at("params").at("seed").get<std::uint64_t>()};
    cs.modality = parse_modality(h.at("modality").get<std::string>());
    cs.kernel = h.at("kernel").get<int>();
    cs.in_channels = h.at("in_channels").get<int>();
    cs.norm = norm_from_json(h.at("norm"));
    const auto dim = static_cast<std::size_t>(cs.kernel * cs.kernel * cs.kernel * cs.in_channels);
    std::size_t offset = 0;
    for (const auto& ji : h.at("images")) {
      ImageCandidates im;
      im.image_id = ji.at("image_id").get<std::string>();
      im.first_candidates = ji.at("first_candidates").get<int>();
      const auto n = ji.at("n_candidates").get<std::size_t>();
      if ((offset + n * dim) * sizeof(float) > blob.payload.size()) throw FormatError("candidate set: truncated payload");
      for (std::size_t k = 0; k < n; ++k) {
        Filter f;
        f.weights.resize(dim);
        copy_f32le(blob.payload, offset, f.weights.data(), dim);
        offset += dim;
        f.source = source_from_json(ji.at("provenance").at(k));
        im.filters.push_back(std::move(f));
      }
      cs.images.push_back(std::move(im));
    }
    if (offset * sizeof(float) != blob.payload.size()) throw FormatError("candidate set: payload size mismatch");
  } catch (const json::exception& e) {
    throw FormatError(std::string("candidate set: ") + e.what());
  }
  return cs;
}

}  // namespace flim
