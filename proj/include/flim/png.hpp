#pragma once

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "flim/volume.hpp"

namespace flim {

namespace detail {

inline void put_be32(std::string& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<char>((v >> s) & 0xff));
}

inline void put_chunk(std::string& out, const char* type, const std::string& data) {
  put_be32(out, static_cast<std::uint32_t>(data.size()));
  std::string body(type, 4);
  body += data;
  out += body;
  put_be32(out, static_cast<std::uint32_t>(
                    crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()))));
}

}  // namespace detail

/// 8-bit grayscale PNG, rows top to bottom, filter type 0 on every row.
inline std::string encode_png_gray8(int width, int height, const std::vector<std::uint8_t>& pixels) {
  if (width < 1 || height < 1) throw FormatError("png: empty image");
  if (pixels.size() != static_cast<std::size_t>(width) * height) throw FormatError("png: pixel count mismatch");
  std::string raw;
  raw.reserve(static_cast<std::size_t>(width + 1) * height);
  for (int r = 0; r < height; ++r) {
    raw.push_back('\0');
    raw.append(reinterpret_cast<const char*>(pixels.data()) + static_cast<std::size_t>(r) * width,
               static_cast<std::size_t>(width));
  }
  uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
  std::string z(zlen, '\0');
  if (compress2(reinterpret_cast<Bytef*>(z.data()), &zlen, reinterpret_cast<const Bytef*>(raw.data()),
                static_cast<uLong>(raw.size()), Z_BEST_SPEED) != Z_OK)
    throw Error("png: deflate failed");
  z.resize(zlen);

  std::string out("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  detail::put_be32(ihdr, static_cast<std::uint32_t>(width));
  detail::put_be32(ihdr, static_cast<std::uint32_t>(height));
  ihdr += std::string("\x08\x00\x00\x00\x00", 5);  // depth 8, grayscale, deflate, no filter, no interlace
  detail::put_chunk(out, "IHDR", ihdr);
  detail::put_chunk(out, "IDAT", z);
  detail::put_chunk(out, "IEND", "");
  return out;
}

/// Min-max window to [0, 255]; a flat grid maps to mid-gray.
inline std::vector<std::uint8_t> window_minmax(const std::vector<float>& v) {
  std::vector<std::uint8_t> out(v.size(), 128);
  if (v.empty()) return out;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double a = *lo, b = *hi;
  if (!(b > a)) return out;
  for (std::size_t i = 0; i < v.size(); ++i)
    out[i] = static_cast<std::uint8_t>(std::lround((v[i] - a) / (b - a) * 255.0));
  return out;
}

inline std::string slice_png(const Volume& v, Axis axis, int index, int channel = 0) {
  const Grid2D g = slice2d(v, axis, index, channel);
  return encode_png_gray8(g.cols, g.rows, window_minmax(g.data));
}

}  // namespace flim
