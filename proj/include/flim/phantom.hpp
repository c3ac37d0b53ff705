#pragma once

#include <array>
#include <cmath>
#include <deque>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "flim/markers.hpp"
#include "flim/volume.hpp"

namespace flim {

/// Region codes of the auxiliary regions volume.
enum class Region : std::uint8_t { Exterior = 0, Brain = 1, EDIntermediate = 2, EDSaturated = 3, ET = 4, NC = 5 };
inline constexpr int kRegionCount = 6;

struct Range {
  double lo = 0.0, hi = 0.0;
  double draw(Rng& rng) const { return rng.uniform(lo, hi); }
};

struct PhantomSpec {
  Shape3 size{48, 48, 48};
  Range brain_axis_frac{0.38, 0.44};  // semi-axes as a fraction of the extent
  Range ed_radius{8.0, 12.0};
  Range et_frac{0.62, 0.75};  // ET outer radius / ED radius
  Range nc_frac{0.50, 0.65};  // NC radius / ET radius
  double deform = 0.12;       // relative amplitude of the radial deformation
  Range saturated_frac{0.30, 0.45};
  // Mean intensities per region code (exterior, brain, ED-int, ED-sat, ET, NC).
  std::array<double, kRegionCount> flair{0.0, 0.30, 0.92, 1.00, 0.62, 0.50};
  std::array<double, kRegionCount> t1gd{0.0, 0.38, 0.38, 0.38, 1.00, 0.05};
  double intensity_jitter = 0.03;  // per case, per region, multiplicative
  double noise_sigma = 0.03;
  double bias_amplitude = 0.05;
  std::uint64_t seed = 7;

  void validate() const {
    if (size.z < 16 || size.y < 16 || size.x < 16) throw FormatError("phantom: volume too small");
    auto ordered = [](const Range& r, const char* what) {
      if (!(r.lo > 0.0) || r.hi < r.lo) throw FormatError(std::string("phantom: bad range for ") + what);
    };
    ordered(brain_axis_frac, "brain_axis_frac");
    ordered(ed_radius, "ed_radius");
    ordered(et_frac, "et_frac");
    ordered(nc_frac, "nc_frac");
    ordered(saturated_frac, "saturated_frac");
    if (et_frac.hi >= 1.0 || nc_frac.hi >= 1.0 || saturated_frac.hi >= 1.0)
      throw FormatError("phantom: nested fractions must stay below 1");
    if (deform < 0.0 || deform >= 0.5) throw FormatError("phantom: deform must be in [0, 0.5)");
    if (noise_sigma < 0.0 || bias_amplitude < 0.0 || bias_amplitude >= 1.0 || intensity_jitter < 0.0 ||
        intensity_jitter >= 1.0)
      throw FormatError("phantom: bad noise/bias/jitter");
  }
};

inline json range_to_json(const Range& r) { return json::array({r.lo, r.hi}); }
inline Range range_from_json(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

inline json phantom_spec_to_json(const PhantomSpec& s) {
  json j;
  j["size"] = {s.size.z, s.size.y, s.size.x};
  j["brain_axis_frac"] = range_to_json(s.brain_axis_frac);
  j["ed_radius"] = range_to_json(s.ed_radius);
  j["et_frac"] = range_to_json(s.et_frac);
  j["nc_frac"] = range_to_json(s.nc_frac);
  j["deform"] = s.deform;
  j["saturated_frac"] = range_to_json(s.saturated_frac);
  j["flair"] = s.flair;
  j["t1gd"] = s.t1gd;
  j["intensity_jitter"] = s.intensity_jitter;
  j["noise_sigma"] = s.noise_sigma;
  j["bias_amplitude"] = s.bias_amplitude;
  j["seed"] = s.seed;
  return j;
}

/// Missing keys keep their defaults.
inline PhantomSpec phantom_spec_from_json(const json& j) {
  PhantomSpec s;
  try {
    if (j.contains("size")) {
      const auto v = j.at("size").get<std::array<int, 3>>();
      s.size = {v[0], v[1], v[2]};
    }
    if (j.contains("brain_axis_frac")) s.brain_axis_frac = range_from_json(j.at("brain_axis_frac"));
    if (j.contains("ed_radius")) s.ed_radius = range_from_json(j.at("ed_radius"));
    if (j.contains("et_frac")) s.et_frac = range_from_json(j.at("et_frac"));
    if (j.contains("nc_frac")) s.nc_frac = range_from_json(j.at("nc_frac"));
    if (j.contains("saturated_frac")) s.saturated_frac = range_from_json(j.at("saturated_frac"));
    if (j.contains("flair")) s.flair = j.at("flair").get<std::array<double, kRegionCount>>();
    if (j.contains("t1gd")) s.t1gd = j.at("t1gd").get<std::array<double, kRegionCount>>();
    s.deform = j.value("deform", s.deform);
    s.intensity_jitter = j.value("intensity_jitter", s.intensity_jitter);
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    s.bias_amplitude = j.value("bias_amplitude", s.bias_amplitude);
    s.seed = j.value("seed", s.seed);
  } catch (const json::exception& e) {
    throw FormatError(std::string("phantom spec: ") + e.what());
  }
  s.validate();
  return s;
}

/// Per-voxel Region codes.
struct RegionMap {
  Shape3 shape{};
  std::vector<std::uint8_t> data;

  RegionMap() = default;
  explicit RegionMap(Shape3 s) : shape(s), data(s.count(), 0) {}
  std::uint8_t at(const Voxel& v) const { return data[shape.index(v)]; }
  friend bool operator==(const RegionMap&, const RegionMap&) = default;
};

inline void write_regions(const RegionMap& r, const std::filesystem::path& p) {
  Volume v(1, r.shape);
  for (std::size_t i = 0; i < r.data.size(); ++i) v.data()[i] = r.data[i];
  write_volume(v, p);
}

inline RegionMap read_regions(const std::filesystem::path& p) {
  const Volume v = read_volume(p);
  if (v.channels() != 1) throw FormatError("regions volume must be single-channel");
  RegionMap r(v.shape());
  for (std::size_t i = 0; i < r.data.size(); ++i) {
    const float x = v.data()[i];
    if (x < 0.0f || x >= kRegionCount || x != std::floor(x)) throw FormatError("regions volume holds a non-region value");
    r.data[i] = static_cast<std::uint8_t>(x);
  }
  return r;
}

struct PhantomCase {
  std::string id;
  Volume flair;
  Volume t1gd;
  LabelVolume labels;
  RegionMap regions;
};

inline Label label_of(Region r) {
  switch (r) {
    case Region::EDIntermediate:
    case Region::EDSaturated: return Label::ED;
    case Region::ET: return Label::ET;
    case Region::NC: return Label::NC;
    default: return Label::Background;
  }
}

namespace detail {

struct Wave {
  std::array<double, 3> k;
  double phase;
  double amp;
};

inline std::array<double, 3> unit_vector(Rng& rng) {
  for (;;) {
    std::array<double, 3> v{rng.normal(), rng.normal(), rng.normal()};
    const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    if (n > 1e-9) return {v[0] / n, v[1] / n, v[2] / n};
  }
}

// Sum of low-frequency plane waves; used for lesion deformation and bias field.
inline std::vector<Wave> smooth_field(Rng& rng, int n, double period_lo, double period_hi, double amp) {
  std::vector<Wave> w;
  for (int i = 0; i < n; ++i) {
    const auto d = unit_vector(rng);
    const double f = 2.0 * M_PI / rng.uniform(period_lo, period_hi);
    w.push_back({{d[0] * f, d[1] * f, d[2] * f}, rng.uniform(0.0, 2.0 * M_PI), amp * rng.uniform(0.5, 1.0)});
  }
  return w;
}

inline double eval_field(const std::vector<Wave>& w, double z, double y, double x) {
  double s = 0.0;
  for (const auto& c : w) s += c.amp * std::sin(c.k[0] * z + c.k[1] * y + c.k[2] * x + c.phase);
  return s;
}

}  // namespace detail

/// Deterministic synthetic case: brain ellipsoid with one nested lesion
/// (NC inside ET inside ED), ED split into saturated and intermediate FLAIR
/// modes by a random plane, Gaussian noise and a smooth multiplicative bias.
inline PhantomCase generate_case(const PhantomSpec& spec, int case_index) {
  spec.validate();
  Rng rng(mix_seed(spec.seed, 0xCA5E0000ULL + static_cast<std::uint64_t>(case_index)));
  const Shape3 s = spec.size;
  char idbuf[32];
  std::snprintf(idbuf, sizeof idbuf, "case_%03d", case_index + 1);

  const std::array<double, 3> ext{double(s.z), double(s.y), double(s.x)};
  std::array<double, 3> bc{}, ba{};
  for (int a = 0; a < 3; ++a) {
    bc[a] = ext[a] / 2.0 - 0.5 + rng.uniform(-1.0, 1.0);
    ba[a] = spec.brain_axis_frac.draw(rng) * ext[a];
  }
  const double r_ed = spec.ed_radius.draw(rng);
  const double r_et = r_ed * spec.et_frac.draw(rng);
  const double r_nc = r_et * spec.nc_frac.draw(rng);
  const double reach = r_ed * (1.0 + 2.0 * spec.deform) + 1.0;  // worst-case lesion extent

  // Lesion center: anywhere the whole lesion stays inside the brain.
  std::array<double, 3> lc{};
  bool placed = false;
  for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
    for (int a = 0; a < 3; ++a) lc[a] = bc[a] + rng.uniform(-0.5, 0.5) * ba[a];
    // Conservative test: the reach sphere is inside the ellipsoid if the
    // center lies within the ellipsoid shrunk by `reach` on every axis.
    double q = 0.0;
    bool ok = true;
    for (int a = 0; a < 3; ++a) {
      const double shrunk = ba[a] - reach;
      if (shrunk <= 0.0) ok = false;
      else q += (lc[a] - bc[a]) * (lc[a] - bc[a]) / (shrunk * shrunk);
    }
    placed = ok && q <= 1.0;
  }
  if (!placed) throw FormatError("phantom: lesion cannot fit inside the brain for these spec ranges");

  const auto deform = detail::smooth_field(rng, 3, 10.0, 24.0, spec.deform / 1.5);
  const auto axis_n = detail::unit_vector(rng);
  const double sat_frac = spec.saturated_frac.draw(rng);
  std::array<double, kRegionCount> gain_f{}, gain_t{};
  for (int r = 0; r < kRegionCount; ++r) {
    gain_f[r] = 1.0 + rng.uniform(-spec.intensity_jitter, spec.intensity_jitter);
    gain_t[r] = 1.0 + rng.uniform(-spec.intensity_jitter, spec.intensity_jitter);
  }
  const auto bias_f = detail::smooth_field(rng, 3, 40.0, 90.0, spec.bias_amplitude / 1.5);
  const auto bias_t = detail::smooth_field(rng, 3, 40.0, 90.0, spec.bias_amplitude / 1.5);

  RegionMap regions(s);
  std::vector<std::pair<double, std::size_t>> ed_proj;
  for (int z = 0; z < s.z; ++z)
    for (int y = 0; y < s.y; ++y)
      for (int x = 0; x < s.x; ++x) {
        const double dz = z - bc[0], dy = y - bc[1], dx = x - bc[2];
        const double e = dz * dz / (ba[0] * ba[0]) + dy * dy / (ba[1] * ba[1]) + dx * dx / (ba[2] * ba[2]);
        if (e > 1.0) continue;
        const double lz = z - lc[0], ly = y - lc[1], lx = x - lc[2];
        const double d = std::sqrt(lz * lz + ly * ly + lx * lx) / (1.0 + detail::eval_field(deform, z, y, x));
        Region r = Region::Brain;
        if (d < r_nc) r = Region::NC;
        else if (d < r_et) r = Region::ET;
        else if (d < r_ed) r = Region::EDIntermediate;
        const std::size_t i = s.index({z, y, x});
        regions.data[i] = static_cast<std::uint8_t>(r);
        if (r == Region::EDIntermediate) ed_proj.push_back({lz * axis_n[0] + ly * axis_n[1] + lx * axis_n[2], i});
      }
  // The saturated part is the ED beyond a plane chosen to hit the drawn fraction.
  std::sort(ed_proj.begin(), ed_proj.end());
  const auto n_sat = static_cast<std::size_t>(std::lround(sat_frac * static_cast<double>(ed_proj.size())));
  for (std::size_t k = ed_proj.size() - n_sat; k < ed_proj.size(); ++k)
    regions.data[ed_proj[k].second] = static_cast<std::uint8_t>(Region::EDSaturated);

  PhantomCase c{idbuf, Volume(1, s), Volume(1, s), LabelVolume(s), regions};
  for (int z = 0; z < s.z; ++z)
    for (int y = 0; y < s.y; ++y)
      for (int x = 0; x < s.x; ++x) {
        const std::size_t i = s.index({z, y, x});
        const int r = regions.data[i];
        c.labels.data()[i] = static_cast<std::uint8_t>(label_of(static_cast<Region>(r)));
        const double nf = rng.normal(), nt = rng.normal();
        if (r == 0) continue;  // exterior stays exactly zero, like a skull-stripped scan
        const double bf = 1.0 + detail::eval_field(bias_f, z, y, x);
        const double bt = 1.0 + detail::eval_field(bias_t, z, y, x);
        c.flair.data()[i] = static_cast<float>(spec.flair[r] * gain_f[r] * bf + spec.noise_sigma * nf);
        c.t1gd.data()[i] = static_cast<float>(spec.t1gd[r] * gain_t[r] * bt + spec.noise_sigma * nt);
      }
  return c;
}

inline Mask region_mask(const RegionMap& regions, std::initializer_list<Region> which) {
  Mask m(regions.shape);
  for (std::size_t i = 0; i < m.data.size(); ++i)
    for (Region r : which)
      if (regions.data[i] == static_cast<std::uint8_t>(r)) m.data[i] = 1;
  return m;
}

/// Brain voxels whose full 3^3 neighborhood is brain (erosion by `erode`).
inline Mask brain_mask(const RegionMap& regions, int erode = 0) {
  const Shape3 s = regions.shape;
  Mask m(s);
  for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = regions.data[i] != 0;
  for (int k = 0; k < erode; ++k) {
    Mask next(s);
    for (int z = 0; z < s.z; ++z)
      for (int y = 0; y < s.y; ++y)
        for (int x = 0; x < s.x; ++x) {
          bool keep = m[s.index({z, y, x})];
          for (int dz = -1; dz <= 1 && keep; ++dz)
            for (int dy = -1; dy <= 1 && keep; ++dy)
              for (int dx = -1; dx <= 1 && keep; ++dx) {
                const Voxel v{z + dz, y + dy, x + dx};
                keep = s.contains(v) && m[s.index(v)];
              }
          next.data[s.index({z, y, x})] = keep;
        }
    m = std::move(next);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Synthetic scribbles
// ---------------------------------------------------------------------------

namespace detail {

// Compact 6-connected blob of exactly n voxels grown from an interior seed.
inline std::vector<Voxel> grow_blob(const RegionMap& regions, Region r, int n, Rng& rng) {
  const Shape3 s = regions.shape;
  const auto code = static_cast<std::uint8_t>(r);
  auto inside = [&](const Voxel& v) { return s.contains(v) && regions.at(v) == code; };
  std::vector<Voxel> all, interior;
  for (int z = 0; z < s.z; ++z)
    for (int y = 0; y < s.y; ++y)
      for (int x = 0; x < s.x; ++x) {
        const Voxel v{z, y, x};
        if (!inside(v)) continue;
        all.push_back(v);
        bool deep = true;
        for (int dz = -1; dz <= 1 && deep; ++dz)
          for (int dy = -1; dy <= 1 && deep; ++dy)
            for (int dx = -1; dx <= 1 && deep; ++dx) deep = inside({z + dz, y + dy, x + dx});
        if (deep) interior.push_back(v);
      }
  const auto& pool = interior.empty() ? all : interior;
  if (pool.empty()) throw FormatError("synth_markers: region is empty");
  // Try a few seeds; a seed in a small component may not reach n voxels.
  for (int attempt = 0; attempt < 16; ++attempt) {
    const Voxel seed = pool[rng.below(pool.size())];
    std::vector<Voxel> blob{seed};
    std::set<Voxel> seen{seed};
    std::deque<Voxel> q{seed};
    static constexpr int kNb[6][3] = {{0, 0, 1}, {0, 0, -1}, {0, 1, 0}, {0, -1, 0}, {1, 0, 0}, {-1, 0, 0}};
    while (!q.empty() && static_cast<int>(blob.size()) < n) {
      const Voxel v = q.front();
      q.pop_front();
      for (const auto& d : kNb) {
        const Voxel w{v.z + d[0], v.y + d[1], v.x + d[2]};
        if (!inside(w) || !seen.insert(w).second) continue;
        blob.push_back(w);
        q.push_back(w);
        if (static_cast<int>(blob.size()) == n) break;
      }
    }
    if (static_cast<int>(blob.size()) == n) return blob;
  }
  throw FormatError("synth_markers: region too small for the requested marker size");
}

}  // namespace detail

struct CaseMarkers {
  MarkerSet flair;
  MarkerSet t1gd;
};

/// Equal-size scribbles: FLAIR gets ED-saturated, ED-intermediate and one
/// healthy-tissue marker; T1Gd gets ET, NC and one healthy-tissue marker.
inline CaseMarkers synth_markers(const PhantomCase& c, int per_region_voxels, std::uint64_t seed,
                                 Region other = Region::Exterior) {
  if (per_region_voxels < 1) throw FormatError("synth_markers: marker size must be >= 1");
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a of the case id
  for (unsigned char ch : c.id) h = (h ^ ch) * 0x100000001b3ULL;
  Rng rng(mix_seed(seed, h));
  CaseMarkers out{{c.id, Modality::FLAIR, {}}, {c.id, Modality::T1Gd, {}}};
  auto add = [&](MarkerSet& ms, MarkerLabel label, Region r) {
    ms.markers.push_back({static_cast<int>(ms.markers.size()) + 1, label, detail::grow_blob(c.regions, r, per_region_voxels, rng)});
  };
  add(out.flair, MarkerLabel::ED, Region::EDSaturated);
  add(out.flair, MarkerLabel::ED, Region::EDIntermediate);
  add(out.flair, MarkerLabel::OTHER, other);
  add(out.t1gd, MarkerLabel::ET, Region::ET);
  add(out.t1gd, MarkerLabel::NC, Region::NC);
  add(out.t1gd, MarkerLabel::OTHER, other);
  return out;
}

// ---------------------------------------------------------------------------
// Dataset on disk
// ---------------------------------------------------------------------------

struct SplitCounts {
  int train = 0, val = 0, test = 0;
};

/// Fractions are rounded for train and validation; test takes the rest.
inline SplitCounts split_counts(int n, std::array<double, 3> frac) {
  for (double f : frac)
    if (f < 0.0) throw FormatError("split fractions must be non-negative");
  if (std::abs(frac[0] + frac[1] + frac[2] - 1.0) > 1e-9) throw FormatError("split fractions must sum to 1");
  SplitCounts c;
  c.train = static_cast<int>(std::lround(n * frac[0]));
  c.val = static_cast<int>(std::lround(n * frac[1]));
  c.test = n - c.train - c.val;
  if (c.train < 1 || c.test < 1 || (frac[1] > 0.0 && c.val < 1) || c.test < 0)
    throw FormatError("dataset of " + std::to_string(n) + " cases is too small for the split");
  return c;
}

struct DatasetManifest {
  PhantomSpec spec;
  std::vector<std::string> train, val, test;
  std::vector<std::string> marked;  // training cases carrying scribbles
  int per_region_voxels = 20;

  std::vector<std::string> all() const {
    std::vector<std::string> v = train;
    v.insert(v.end(), val.begin(), val.end());
    v.insert(v.end(), test.begin(), test.end());
    return v;
  }
};

inline json manifest_to_json(const DatasetManifest& m) {
  json j;
  j["format"] = "flim-phantom-dataset";
  j["version"] = 1;
  j["spec"] = phantom_spec_to_json(m.spec);
  j["per_region_voxels"] = m.per_region_voxels;
  j["splits"] = {{"train", m.train}, {"val", m.val}, {"test", m.test}};
  j["marked"] = m.marked;
  return j;
}

inline DatasetManifest manifest_from_json(const json& j) {
  if (j.value("format", std::string{}) != "flim-phantom-dataset") throw FormatError("not a phantom dataset manifest");
  DatasetManifest m;
  try {
    m.spec = phantom_spec_from_json(j.at("spec"));
    m.per_region_voxels = j.value("per_region_voxels", 20);
    m.train = j.at("splits").at("train").get<std::vector<std::string>>();
    m.val = j.at("splits").at("val").get<std::vector<std::string>>();
    m.test = j.at("splits").at("test").get<std::vector<std::string>>();
    m.marked = j.at("marked").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("dataset manifest: ") + e.what());
  }
  std::set<std::string> seen;
  for (const auto& id : m.all())
    if (!seen.insert(id).second) throw FormatError("dataset manifest: case " + id + " listed twice");
  for (const auto& id : m.marked)
    if (std::find(m.train.begin(), m.train.end(), id) == m.train.end())
      throw FormatError("dataset manifest: marked case " + id + " is not a training case");
  return m;
}

inline constexpr const char* kManifestName = "manifest.json";

inline void write_case(const PhantomCase& c, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_volume(c.flair, dir / "flair.mvol");
  write_volume(c.t1gd, dir / "t1gd.mvol");
  write_labels(c.labels, dir / "labels.mvol");
  write_regions(c.regions, dir / "regions.mvol");
}

/// n cases under `root/case_XXX/`, split by `frac`, scribbles on the first
/// `marked` training cases, manifest written last.
inline DatasetManifest generate_dataset(const PhantomSpec& spec, int n, std::array<double, 3> frac,
                                        const std::filesystem::path& root, int marked = 8,
                                        int per_region_voxels = 20) {
  spec.validate();
  const SplitCounts sc = split_counts(n, frac);
  if (marked < 0 || marked > sc.train) throw FormatError("more marked cases than training cases");
  DatasetManifest m;
  m.spec = spec;
  m.per_region_voxels = per_region_voxels;
  for (int i = 0; i < n; ++i) {
    const PhantomCase c = generate_case(spec, i);
    const auto dir = root / c.id;
    write_case(c, dir);
    if (i < sc.train) m.train.push_back(c.id);
    else if (i < sc.train + sc.val) m.val.push_back(c.id);
    else m.test.push_back(c.id);
    if (i < marked) {
      const CaseMarkers mk = synth_markers(c, per_region_voxels, spec.seed);
      save_markers(mk.flair, dir / "markers_flair.mk");
      save_markers(mk.t1gd, dir / "markers_t1gd.mk");
      m.marked.push_back(c.id);
    }
  }
  write_file_atomic(root / kManifestName, manifest_to_json(m).dump(2) + "\n");
  return m;
}

inline DatasetManifest load_manifest(const std::filesystem::path& root) {
  return manifest_from_json(read_json_file(root / kManifestName));
}

inline PhantomCase load_case(const std::filesystem::path& root, const std::string& id, bool with_regions = false) {
  const auto dir = root / id;
  PhantomCase c{id, read_volume(dir / "flair.mvol"), read_volume(dir / "t1gd.mvol"), read_labels(dir / "labels.mvol"), {}};
  if (with_regions) c.regions = read_regions(dir / "regions.mvol");
  if (c.flair.shape() != c.t1gd.shape() || c.flair.shape() != c.labels.shape())
    throw FormatError("case " + id + ": volume shapes differ");
  return c;
}

inline CaseMarkers load_case_markers(const std::filesystem::path& root, const std::string& id) {
  const auto dir = root / id;
  CaseMarkers m{load_markers(dir / "markers_flair.mk"), load_markers(dir / "markers_t1gd.mk")};
  if (m.flair.modality != Modality::FLAIR || m.t1gd.modality != Modality::T1Gd)
    throw FormatError("case " + id + ": marker files have the wrong modality");
  return m;
}

}  // namespace flim
