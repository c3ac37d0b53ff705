#pragma once

#include <bit>
#include <cmath>
#include <cstring>
#include <iterator>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

#if defined(__SSE__)
#include <xmmintrin.h>
#endif

namespace flim {

using json = nlohmann::ordered_json;

/// Base class of every error raised by the toolkit.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Input that violates a documented precondition or file format.
struct FormatError : Error {
  using Error::Error;
};

/// A referenced id (run, image, candidate, session) does not exist.
struct NotFoundError : Error {
  using Error::Error;
};

/// Operation is valid but the referenced object is not in a usable state.
struct StateError : Error {
  using Error::Error;
};

inline constexpr const char* kToolVersion = "0.3.0";

/// Scoped flush-to-zero / denormals-are-zero for the calling thread.
/// Late in training, subnormal gradients otherwise slow epochs several-fold.
class DenormalGuard {
 public:
#if defined(__SSE__)
  DenormalGuard() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040u); }
  ~DenormalGuard() { _mm_setcsr(saved_); }
#else
  DenormalGuard() = default;
#endif
  DenormalGuard(const DenormalGuard&) = delete;
  DenormalGuard& operator=(const DenormalGuard&) = delete;

#if defined(__SSE__)
 private:
  unsigned saved_;
#endif
};

// splitmix64 finalizer; used to derive independent sub-seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Portable seeded generator. The standard distributions are
/// implementation-defined, so sampling is done here to keep results
/// identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n) {
    if (n == 0) throw Error("Rng::below: empty range");
    return static_cast<std::size_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

  template <class Vec>
  void shuffle(Vec& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Write to a sibling temp file and rename over the target.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline json read_json_file(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// Header line + raw little-endian f32 payload, the layout shared by volume,
// filter bank, encoder and checkpoint files.
struct HeaderedBlob {
  json header;
  std::string payload;
};

inline HeaderedBlob split_header_line(const std::string& bytes, std::string_view what) {
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos) throw FormatError(std::string(what) + ": missing header line");
  HeaderedBlob out;
  try {
    out.header = json::parse(bytes.substr(0, nl));
  } catch (const json::exception& e) {
    throw FormatError(std::string(what) + ": malformed header: " + e.what());
  }
  if (!out.header.is_object()) throw FormatError(std::string(what) + ": header is not an object");
  out.payload = bytes.substr(nl + 1);
  return out;
}

static_assert(sizeof(float) == 4);

inline void append_f32le(std::string& out, const float* data, std::size_t n) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");
  out.append(reinterpret_cast<const char*>(data), n * sizeof(float));
}

inline void copy_f32le(const std::string& payload, std::size_t offset_floats, float* dst, std::size_t n) {
  if ((offset_floats + n) * sizeof(float) > payload.size()) throw FormatError("payload truncated");
  std::memcpy(dst, payload.data() + offset_floats * sizeof(float), n * sizeof(float));
}

}  // namespace flim
