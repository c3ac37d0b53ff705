#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "flim/autograd.hpp"
#include "flim/encoder.hpp"

namespace flim {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

inline constexpr int kModalities = 2;  // 0 = FLAIR, 1 = T1Gd
inline constexpr int kDepth = 3;
inline constexpr int kClasses = 4;

struct SunetConfig {
  std::array<int, kDepth> widths{16, 32, 64};  // decoder widths; random encoders too
  int classes = kClasses;

  void validate() const {
    for (int w : widths)
      if (w < 1) throw FormatError("sunet: widths must be >= 1");
    if (classes != kClasses) throw FormatError("sunet: classes must be 4");
  }
  friend bool operator==(const SunetConfig&, const SunetConfig&) = default;
};

inline json config_to_json(const SunetConfig& c) { return {{"widths", c.widths}, {"classes", c.classes}}; }
inline SunetConfig config_from_json(const json& j) {
  SunetConfig c;
  try {
    c.widths = j.at("widths").get<std::array<int, kDepth>>();
    c.classes = j.value("classes", kClasses);
  } catch (const json::exception& e) {
    throw FormatError(std::string("sunet config: ") + e.what());
  }
  c.validate();
  return c;
}

/// Learned encoders have biases and no input normalization; FLIM encoders are
/// bias-free and normalize each layer input with fixed marker statistics.
enum class EncoderKind { Learned, Flim };
enum class Regime { FBp, PBp, FT };

inline std::string to_string(EncoderKind k) { return k == EncoderKind::Flim ? "flim" : "learned"; }
inline EncoderKind parse_encoder_kind(std::string_view s) {
  if (s == "flim") return EncoderKind::Flim;
  if (s == "learned") return EncoderKind::Learned;
  throw FormatError("unknown encoder kind '" + std::string(s) + "'");
}
inline std::string to_string(Regime r) {
  switch (r) {
    case Regime::FBp: return "fbp";
    case Regime::PBp: return "pbp";
    case Regime::FT: return "ft";
  }
  return "?";
}
inline Regime parse_regime(std::string_view s) {
  if (s == "fbp") return Regime::FBp;
  if (s == "pbp") return Regime::PBp;
  if (s == "ft") return Regime::FT;
  throw FormatError("unknown regime '" + std::string(s) + "'");
}

inline const char* modality_tag(int m) { return m == 0 ? "flair" : "t1gd"; }

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

template <class T>
struct SunetModel {
  SunetConfig config;
  std::array<EncoderKind, kModalities> kinds{EncoderKind::Learned, EncoderKind::Learned};
  std::array<std::array<int, kDepth>, kModalities> enc_widths{};
  std::vector<Param<T>> params;  // never resized after construction (the tape holds references)

  Param<T>* find(std::string_view name) {
    for (auto& p : params)
      if (p.name == name) return &p;
    return nullptr;
  }
  const Param<T>* find(std::string_view name) const {
    for (const auto& p : params)
      if (p.name == name) return &p;
    return nullptr;
  }
  Param<T>& at(std::string_view name) {
    if (auto* p = find(name)) return *p;
    throw NotFoundError("sunet: no tensor " + std::string(name));
  }
  const Param<T>& at(std::string_view name) const {
    if (auto* p = find(name)) return *p;
    throw NotFoundError("sunet: no tensor " + std::string(name));
  }
  static bool is_encoder(const Param<T>& p) { return p.name.rfind("enc.", 0) == 0; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.size();
    return n;
  }

  template <class U>
  SunetModel<U> cast() const {
    SunetModel<U> m;
    m.config = config;
    m.kinds = kinds;
    m.enc_widths = enc_widths;
    for (const auto& p : params)
      m.params.push_back({p.name, p.shape, std::vector<U>(p.value.begin(), p.value.end()), {}, p.frozen, p.constant});
    return m;
  }
};

inline std::string enc_name(int m, int layer, std::string_view what) {
  return "enc." + std::string(modality_tag(m)) + "." + std::to_string(layer + 1) + "." + std::string(what);
}
inline std::string dec_name(int stage, std::string_view part, std::string_view what) {
  return "dec." + std::to_string(stage + 1) + "." + std::string(part) + "." + std::string(what);
}

namespace detail {

template <class T>
Param<T> uniform_param(std::string name, std::vector<int> shape, double bound, Rng& rng) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  Param<T> p{std::move(name), std::move(shape), std::vector<T>(n), {}, false, false};
  for (auto& v : p.value) v = static_cast<T>(rng.uniform(-bound, bound));
  return p;
}

template <class T>
Param<T> zero_param(std::string name, int n) {
  return {std::move(name), {n}, std::vector<T>(static_cast<std::size_t>(n), T(0)), {}, false, false};
}

// Decoder and head; stage s upsamples to the scale of encoder layer (2 - s).
template <class T>
void add_decoder(SunetModel<T>& m, Rng& rng) {
  const auto& w = m.config.widths;
  int below = m.enc_widths[0][kDepth - 1] + m.enc_widths[1][kDepth - 1];
  for (int s = 0; s < kDepth; ++s) {
    const int level = kDepth - 1 - s;
    const int out = w[level];
    m.params.push_back(uniform_param<T>(dec_name(s, "up", "weight"), {below, out, 2, 2, 2}, std::sqrt(3.0 / below), rng));
    m.params.push_back(zero_param<T>(dec_name(s, "up", "bias"), out));
    const int cat = out + m.enc_widths[0][level] + m.enc_widths[1][level];
    m.params.push_back(uniform_param<T>(dec_name(s, "conv", "weight"), {out, cat, 3, 3, 3}, std::sqrt(6.0 / (27.0 * cat)), rng));
    m.params.push_back(zero_param<T>(dec_name(s, "conv", "bias"), out));
    below = out;
  }
  m.params.push_back(uniform_param<T>("head.weight", {kClasses, below, 1, 1, 1}, std::sqrt(3.0 / below), rng));
  m.params.push_back(zero_param<T>("head.bias", kClasses));
}

template <class T>
void add_learned_encoder(SunetModel<T>& m, int mod, Rng& rng) {
  m.kinds[mod] = EncoderKind::Learned;
  int in = 1;
  for (int l = 0; l < kDepth; ++l) {
    const int out = m.config.widths[l];
    m.enc_widths[mod][l] = out;
    m.params.push_back(uniform_param<T>(enc_name(mod, l, "weight"), {out, in, 3, 3, 3}, std::sqrt(6.0 / (27.0 * in)), rng));
    m.params.push_back(zero_param<T>(enc_name(mod, l, "bias"), out));
    in = out;
  }
}

template <class T>
void add_flim_encoder(SunetModel<T>& m, int mod, const EncoderModel& enc) {
  if (enc.banks.size() != static_cast<std::size_t>(kDepth))
    throw FormatError("sunet: FLIM encoder must have exactly 3 layers");
  m.kinds[mod] = EncoderKind::Flim;
  int in = 1;
  for (int l = 0; l < kDepth; ++l) {
    const FilterBank& b = enc.banks[l];
    if (b.kernel != 3) throw FormatError("sunet: FLIM encoder layers must use 3^3 kernels");
    if (b.in_channels != in) throw FormatError("sunet: FLIM encoder layer input width mismatch");
    if (!enc.spec.layers[l].pool) throw FormatError("sunet: FLIM encoder layers must pool");
    const int out = b.size();
    m.enc_widths[mod][l] = out;
    const auto w = b.weight_array();
    m.params.push_back({enc_name(mod, l, "weight"), {out, in, 3, 3, 3}, std::vector<T>(w.begin(), w.end()), {}, false, false});
    m.params.push_back({enc_name(mod, l, "norm_mean"), {in}, std::vector<T>(b.norm.mean.begin(), b.norm.mean.end()), {}, false, true});
    m.params.push_back({enc_name(mod, l, "norm_std"), {in}, std::vector<T>(b.norm.std.begin(), b.norm.std.end()), {}, false, true});
    in = out;
  }
}

}  // namespace detail

/// Randomly initialized network (scaled uniform fan-in), as used by FBp.
template <class T = float>
SunetModel<T> make_random_sunet(const SunetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  SunetModel<T> m;
  m.config = cfg;
  Rng rng(mix_seed(seed, 0x5e7));
  for (int mod = 0; mod < kModalities; ++mod) detail::add_learned_encoder(m, mod, rng);
  detail::add_decoder(m, rng);
  return m;
}

/// Network whose encoders come from FLIM/MS-FLIM banks; decoder is random.
template <class T = float>
SunetModel<T> make_flim_sunet(const SunetConfig& cfg, const EncoderModel& flair, const EncoderModel& t1gd,
                              std::uint64_t seed) {
  cfg.validate();
  if (flair.modality != Modality::FLAIR || t1gd.modality != Modality::T1Gd)
    throw FormatError("sunet: encoders must be FLAIR and T1Gd in that order");
  SunetModel<T> m;
  m.config = cfg;
  Rng rng(mix_seed(seed, 0x5e7));
  detail::add_flim_encoder(m, 0, flair);
  detail::add_flim_encoder(m, 1, t1gd);
  detail::add_decoder(m, rng);
  return m;
}

/// Set the frozen mask for a training regime. PBp and FT need FLIM encoders,
/// FBp needs learned ones.
template <class T>
void apply_regime(SunetModel<T>& m, Regime r) {
  const bool flim = m.kinds[0] == EncoderKind::Flim && m.kinds[1] == EncoderKind::Flim;
  const bool learned = m.kinds[0] == EncoderKind::Learned && m.kinds[1] == EncoderKind::Learned;
  if (r == Regime::FBp && !learned) throw StateError("FBp trains randomly initialized encoders");
  if (r != Regime::FBp && !flim) throw StateError(to_string(r) + " requires FLIM-initialized encoders");
  for (auto& p : m.params) p.frozen = r == Regime::PBp && SunetModel<T>::is_encoder(p);
}

// ---------------------------------------------------------------------------
// Forward graph
// ---------------------------------------------------------------------------

inline void check_inputs(const Shape3& a, int ca, const Shape3& b, int cb) {
  if (ca != 1 || cb != 1) throw FormatError("sunet: inputs must be single-channel");
  if (a != b) throw FormatError("sunet: FLAIR and T1Gd shapes differ");
  if (a.z % 8 || a.y % 8 || a.x % 8 || a.count() == 0)
    throw FormatError("sunet: input extents must be positive multiples of 8");
}

/// Per-modality encoder outputs: the three pre-pool blocks and the pooled bottom.
template <class T>
struct EncoderFeatures {
  std::array<Tensor<T>, kDepth> skips;
  Tensor<T> bottom;
};

template <class T>
using EncoderIds = std::array<typename Tape<T>::Id, kDepth + 1>;  // skips..., bottom

template <class T>
EncoderIds<T> encoder_graph(SunetModel<T>& m, Tape<T>& tape, int mod, typename Tape<T>::Id x) {
  EncoderIds<T> ids{};
  for (int l = 0; l < kDepth; ++l) {
    Param<T>& w = m.at(enc_name(mod, l, "weight"));
    if (m.kinds[mod] == EncoderKind::Flim) {
      x = tape.normalize(x, m.at(enc_name(mod, l, "norm_mean")), m.at(enc_name(mod, l, "norm_std")));
      x = tape.conv(x, w, nullptr, m.enc_widths[mod][l], 3);
    } else {
      x = tape.conv(x, w, &m.at(enc_name(mod, l, "bias")), m.enc_widths[mod][l], 3);
    }
    x = tape.relu(x);
    ids[l] = x;
    x = tape.maxpool(x);
  }
  ids[kDepth] = x;
  return ids;
}

template <class T>
typename Tape<T>::Id decoder_graph(SunetModel<T>& m, Tape<T>& tape, const std::array<EncoderIds<T>, kModalities>& enc) {
  auto x = tape.concat({enc[0][kDepth], enc[1][kDepth]});
  for (int s = 0; s < kDepth; ++s) {
    const int level = kDepth - 1 - s;
    const int out = m.config.widths[level];
    x = tape.tconv(x, m.at(dec_name(s, "up", "weight")), m.at(dec_name(s, "up", "bias")), out);
    x = tape.concat({x, enc[0][level], enc[1][level]});
    x = tape.conv(x, m.at(dec_name(s, "conv", "weight")), &m.at(dec_name(s, "conv", "bias")), out, 3);
    x = tape.relu(x);
  }
  return tape.conv(x, m.at("head.weight"), &m.at("head.bias"), kClasses, 1);
}

/// Full network on the tape; returns the logits node.
template <class T>
typename Tape<T>::Id forward_graph(SunetModel<T>& m, Tape<T>& tape, const Tensor<T>& flair, const Tensor<T>& t1gd) {
  check_inputs(flair.shape, flair.channels, t1gd.shape, t1gd.channels);
  std::array<EncoderIds<T>, kModalities> enc;
  enc[0] = encoder_graph(m, tape, 0, tape.input(flair));
  enc[1] = encoder_graph(m, tape, 1, tape.input(t1gd));
  return decoder_graph(m, tape, enc);
}

/// Decoder on precomputed (constant) encoder features.
template <class T>
typename Tape<T>::Id forward_graph_cached(SunetModel<T>& m, Tape<T>& tape,
                                          const std::array<EncoderFeatures<T>, kModalities>& f) {
  std::array<EncoderIds<T>, kModalities> enc;
  for (int mod = 0; mod < kModalities; ++mod) {
    for (int l = 0; l < kDepth; ++l) enc[mod][l] = tape.input(f[mod].skips[l]);
    enc[mod][kDepth] = tape.input(f[mod].bottom);
  }
  return decoder_graph(m, tape, enc);
}

template <class T>
std::array<EncoderFeatures<T>, kModalities> encoder_features(const SunetModel<T>& model, const Volume& flair,
                                                             const Volume& t1gd) {
  check_inputs(flair.shape(), flair.channels(), t1gd.shape(), t1gd.channels());
  SunetModel<T> m = model;  // the tape records no gradients when every tensor is frozen
  for (auto& p : m.params) p.frozen = true;
  std::array<EncoderFeatures<T>, kModalities> out;
  for (int mod = 0; mod < kModalities; ++mod) {
    Tape<T> tape;
    const auto ids = encoder_graph(m, tape, mod, tape.input(to_tensor<T>(mod == 0 ? flair : t1gd)));
    for (int l = 0; l < kDepth; ++l) out[mod].skips[l] = tape.take_value(ids[l]);
    out[mod].bottom = tape.take_value(ids[kDepth]);
  }
  return out;
}

/// Logits (4 x Z x Y x X) without recording gradients.
template <class T>
Tensor<T> forward(const SunetModel<T>& model, const Volume& flair, const Volume& t1gd) {
  SunetModel<T> m = model;
  for (auto& p : m.params) p.frozen = true;
  Tape<T> tape;
  const auto id = forward_graph(m, tape, to_tensor<T>(flair), to_tensor<T>(t1gd));
  return tape.take_value(id);
}

/// Per-voxel argmax; ties go to the lowest class index.
template <class T>
LabelVolume argmax_labels(const Tensor<T>& logits, std::array<double, 3> spacing = {1.0, 1.0, 1.0}) {
  if (logits.channels != kClasses) throw FormatError("argmax: logits must have 4 channels");
  LabelVolume out(logits.shape, spacing);
  const std::size_t n = logits.voxels();
  for (std::size_t i = 0; i < n; ++i) {
    int best = 0;
    for (int c = 1; c < kClasses; ++c)
      if (logits.data[c * n + i] > logits.data[best * n + i]) best = c;
    out.data()[i] = static_cast<std::uint8_t>(best);
  }
  return out;
}

template <class T>
LabelVolume predict_labels(const SunetModel<T>& m, const Volume& flair, const Volume& t1gd) {
  return argmax_labels(forward(m, flair, t1gd), flair.spacing_mm());
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

inline constexpr double kDiceSmooth = 1e-5;

struct LossValue {
  double total = 0.0;
  double ce = 0.0;
  double dice = 0.0;  // mean soft Dice over classes 1..3
};

/// L = 0.5 CE + 0.5 (1 - mean soft Dice over ED, ET, NC). Writes dL/dlogits
/// into `grad` when non-null.
template <class T>
LossValue ce_dice_loss(const Tensor<T>& logits, const LabelVolume& target, Tensor<T>* grad = nullptr) {
  if (logits.channels != kClasses || logits.shape != target.shape()) throw FormatError("loss: shape mismatch");
  const std::size_t n = logits.voxels();
  const auto& lab = target.data();
  std::vector<double> p(kClasses * n);
  double ce = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (lab[i] >= kClasses) throw FormatError("loss: label outside {0..3}");
    double mx = static_cast<double>(logits.data[i]);
    for (int c = 1; c < kClasses; ++c) mx = std::max(mx, static_cast<double>(logits.data[c * n + i]));
    double z = 0.0;
    for (int c = 0; c < kClasses; ++c) z += std::exp(static_cast<double>(logits.data[c * n + i]) - mx);
    for (int c = 0; c < kClasses; ++c) p[c * n + i] = std::exp(static_cast<double>(logits.data[c * n + i]) - mx) / z;
    ce -= static_cast<double>(logits.data[lab[i] * n + i]) - mx - std::log(z);
  }
  ce /= static_cast<double>(n);

  std::array<double, kClasses> inter{}, psum{}, gsum{};
  for (int c = 1; c < kClasses; ++c)
    for (std::size_t i = 0; i < n; ++i) {
      const double g = lab[i] == c ? 1.0 : 0.0;
      inter[c] += p[c * n + i] * g;
      psum[c] += p[c * n + i];
      gsum[c] += g;
    }
  double dice = 0.0;
  for (int c = 1; c < kClasses; ++c) dice += (2.0 * inter[c] + kDiceSmooth) / (psum[c] + gsum[c] + kDiceSmooth);
  dice /= kClasses - 1;
  const LossValue out{0.5 * ce + 0.5 * (1.0 - dice), ce, dice};
  if (!grad) return out;

  *grad = Tensor<T>(kClasses, logits.shape);
  const double wd = -0.5 / (kClasses - 1);
  std::array<double, kClasses> dp{};
  for (std::size_t i = 0; i < n; ++i) {
    // dL/dp from the Dice term, then through the softmax; CE folds in directly.
    dp[0] = 0.0;
    double dot = 0.0;
    for (int c = 1; c < kClasses; ++c) {
      const double den = psum[c] + gsum[c] + kDiceSmooth;
      const double g = lab[i] == c ? 1.0 : 0.0;
      dp[c] = wd * (2.0 * g * den - (2.0 * inter[c] + kDiceSmooth)) / (den * den);
      dot += p[c * n + i] * dp[c];
    }
    for (int c = 0; c < kClasses; ++c) {
      const double pc = p[c * n + i];
      const double y = lab[i] == c ? 1.0 : 0.0;
      grad->data[c * n + i] = static_cast<T>(0.5 * (pc - y) / static_cast<double>(n) + pc * (dp[c] - dot));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Optimization
// ---------------------------------------------------------------------------

struct TrainConfig {
  double lr0 = 2.5e-3;
  int epochs = 100;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(lr0 > 0.0)) throw FormatError("train: lr0 must be > 0");
    if (epochs < 1) throw FormatError("train: epochs must be >= 1");
  }
  /// Linear decay from lr0, reaching zero after the last epoch (e is 0-based).
  double lr_at(int e) const { return lr0 * (1.0 - static_cast<double>(e) / epochs); }
};

inline json train_config_to_json(const TrainConfig& c) {
  return {{"lr0", c.lr0}, {"epochs", c.epochs}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps}, {"seed", c.seed}};
}
inline TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.lr0 = j.value("lr0", c.lr0);
  c.epochs = j.value("epochs", c.epochs);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

template <class T>
class Adam {
 public:
  Adam(const SunetModel<T>& m, const TrainConfig& tc) : b1_(tc.beta1), b2_(tc.beta2), eps_(tc.eps) {
    for (const auto& p : m.params) {
      m_.emplace_back(p.size(), T(0));
      v_.emplace_back(p.size(), T(0));
    }
  }

  void step(SunetModel<T>& model, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < model.params.size(); ++k) {
      Param<T>& p = model.params[k];
      if (!p.trainable() || p.grad.size() != p.size()) continue;
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double g = p.grad[i];
        m[i] = static_cast<T>(b1_ * m[i] + (1.0 - b1_) * g);
        v[i] = static_cast<T>(b2_ * v[i] + (1.0 - b2_) * g * g);
        const double mh = m[i] / c1;
        const double vh = v[i] / c2;
        p.value[i] = static_cast<T>(p.value[i] - lr * mh / (std::sqrt(vh) + eps_));
      }
    }
  }

 private:
  double b1_, b2_, eps_;
  long t_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

struct TrainCase {
  std::string id;
  Volume flair;
  Volume t1gd;
  LabelVolume labels;
};

struct EpochStat {
  int epoch = 0;  // 0-based
  double mean_loss = 0.0;
  double lr = 0.0;
};

/// One CE+Dice step on a single case; returns the loss. Gradients are zeroed first.
template <class T>
LossValue train_step_loss(SunetModel<T>& m, Tape<T>& tape, typename Tape<T>::Id logits, const LabelVolume& labels) {
  for (auto& p : m.params) p.grad.clear();
  Tensor<T> g;
  const LossValue lv = ce_dice_loss(tape.value(logits), labels, &g);
  tape.backward(logits, std::move(g));
  return lv;
}

/// Decoder (and, for FBp/FT, encoder) training, batch size 1, seeded data
/// order. Under PBp the encoders are evaluated once per case and cached.
inline std::vector<EpochStat> train(SunetModel<float>& m, std::span<const TrainCase> cases, const TrainConfig& tc,
                                    Regime regime, const std::function<void(const EpochStat&)>& on_epoch = {}) {
  tc.validate();
  if (cases.empty()) throw FormatError("train: empty dataset");
  for (const auto& c : cases) {
    check_inputs(c.flair.shape(), c.flair.channels(), c.t1gd.shape(), c.t1gd.channels());
    if (c.labels.shape() != c.flair.shape()) throw FormatError("train: labels shape mismatch in " + c.id);
  }
  apply_regime(m, regime);
  const DenormalGuard ftz;

  std::vector<std::array<EncoderFeatures<float>, kModalities>> cache;
  std::vector<Tensor<float>> flair, t1gd;
  if (regime == Regime::PBp) {
    for (const auto& c : cases) cache.push_back(encoder_features(m, c.flair, c.t1gd));
  } else {
    for (const auto& c : cases) {
      flair.push_back(to_tensor<float>(c.flair));
      t1gd.push_back(to_tensor<float>(c.t1gd));
    }
  }

  Adam<float> opt(m, tc);
  std::vector<std::size_t> order(cases.size());
  std::vector<EpochStat> curve;
  for (int e = 0; e < tc.epochs; ++e) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(mix_seed(tc.seed, 0xE90C0000ULL + static_cast<std::uint64_t>(e)));
    rng.shuffle(order);
    const double lr = tc.lr_at(e);
    double sum = 0.0;
    for (std::size_t k : order) {
      Tape<float> tape;
      const auto logits = regime == Regime::PBp ? forward_graph_cached(m, tape, cache[k])
                                                : forward_graph(m, tape, flair[k], t1gd[k]);
      sum += train_step_loss(m, tape, logits, cases[k].labels).total;
      opt.step(m, lr);
    }
    curve.push_back({e, sum / static_cast<double>(cases.size()), lr});
    if (on_epoch) on_epoch(curve.back());
  }
  return curve;
}

inline std::string loss_curve_csv(std::span<const EpochStat> curve) {
  std::string out = "epoch,mean_loss,lr\n";
  char buf[96];
  for (const auto& s : curve) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g\n", s.epoch, s.mean_loss, s.lr);
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint: JSON manifest line + little-endian f32 tensors
// ---------------------------------------------------------------------------

inline std::string encode_checkpoint(const SunetModel<float>& m) {
  json h;
  h["magic"] = "SUNETCKPT1";
  h["dtype"] = "f32le";
  h["config"] = config_to_json(m.config);
  h["encoders"] = {to_string(m.kinds[0]), to_string(m.kinds[1])};
  h["encoder_widths"] = m.enc_widths;
  h["tensors"] = json::array();
  std::string payload;
  std::size_t offset = 0;
  for (const auto& p : m.params) {
    h["tensors"].push_back({{"name", p.name}, {"shape", p.shape}, {"offset", offset}, {"frozen", p.frozen},
                            {"constant", p.constant}});
    append_f32le(payload, p.value.data(), p.size());
    offset += p.size();
  }
  std::string out = h.dump();
  out.push_back('\n');
  return out + payload;
}

inline SunetModel<float> decode_checkpoint(const std::string& bytes) {
  auto blob = split_header_line(bytes, "checkpoint");
  const json& h = blob.header;
  if (h.value("magic", std::string{}) != "SUNETCKPT1") throw FormatError("checkpoint: bad magic");
  SunetModel<float> m;
  std::size_t total = 0;
  try {
    m.config = config_from_json(h.at("config"));
    for (int k = 0; k < kModalities; ++k) m.kinds[k] = parse_encoder_kind(h.at("encoders").at(k).get<std::string>());
    m.enc_widths = h.at("encoder_widths").get<std::array<std::array<int, kDepth>, kModalities>>();
    for (const auto& t : h.at("tensors")) {
      Param<float> p;
      p.name = t.at("name").get<std::string>();
      p.shape = t.at("shape").get<std::vector<int>>();
      p.frozen = t.value("frozen", false);
      p.constant = t.value("constant", false);
      std::size_t n = 1;
      for (int d : p.shape) {
        if (d < 1) throw FormatError("checkpoint: bad shape for " + p.name);
        n *= static_cast<std::size_t>(d);
      }
      const auto off = t.at("offset").get<std::size_t>();
      if (off != total) throw FormatError("checkpoint: non-contiguous offset for " + p.name);
      p.value.resize(n);
      copy_f32le(blob.payload, off, p.value.data(), n);
      total += n;
      m.params.push_back(std::move(p));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  if (blob.payload.size() != total * sizeof(float)) throw FormatError("checkpoint: payload size mismatch");
  // Structural check: rebuild the expected tensor list and compare shapes.
  SunetModel<float> ref;
  ref.config = m.config;
  ref.kinds = m.kinds;
  ref.enc_widths = m.enc_widths;
  Rng rng(0);
  for (int k = 0; k < kModalities; ++k) {
    int in = 1;
    for (int l = 0; l < kDepth; ++l) {
      const int out = m.enc_widths[k][l];
      ref.params.push_back({enc_name(k, l, "weight"), {out, in, 3, 3, 3}, {}, {}, false, false});
      if (m.kinds[k] == EncoderKind::Flim) {
        ref.params.push_back({enc_name(k, l, "norm_mean"), {in}, {}, {}, false, true});
        ref.params.push_back({enc_name(k, l, "norm_std"), {in}, {}, {}, false, true});
      } else {
        ref.params.push_back({enc_name(k, l, "bias"), {out}, {}, {}, false, false});
      }
      in = out;
    }
  }
  detail::add_decoder(ref, rng);
  if (ref.params.size() != m.params.size()) throw FormatError("checkpoint: tensor count does not match architecture");
  for (std::size_t i = 0; i < ref.params.size(); ++i)
    if (ref.params[i].name != m.params[i].name || ref.params[i].shape != m.params[i].shape)
      throw FormatError("checkpoint: unexpected tensor " + m.params[i].name);
  return m;
}

inline void save_checkpoint(const SunetModel<float>& m, const std::filesystem::path& p) {
  write_file_atomic(p, encode_checkpoint(m));
}
inline SunetModel<float> load_checkpoint(const std::filesystem::path& p) { return decode_checkpoint(read_file(p)); }

}  // namespace flim
