#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "flim/volume.hpp"

namespace flim {

/// Dense (channels, z, y, x) array used by the convolution kernels and the
/// gradient engine. Scalar type is a template parameter so the same code runs
/// in float for training and in double for finite-difference checks.
template <class T>
struct Tensor {
  int channels = 0;
  Shape3 shape{};
  std::vector<T> data;

  Tensor() = default;
  Tensor(int c, Shape3 s) : channels(c), shape(s), data(static_cast<std::size_t>(c) * s.count(), T(0)) {}
  Tensor(int c, Shape3 s, std::vector<T> d) : channels(c), shape(s), data(std::move(d)) {
    if (data.size() != static_cast<std::size_t>(c) * s.count()) throw FormatError("tensor data length mismatch");
  }

  std::size_t voxels() const { return shape.count(); }
  std::size_t size() const { return data.size(); }
  T* channel_ptr(int c) { return data.data() + static_cast<std::size_t>(c) * voxels(); }
  const T* channel_ptr(int c) const { return data.data() + static_cast<std::size_t>(c) * voxels(); }
  T& at(int c, int z, int y, int x) {
    return data[((static_cast<std::size_t>(c) * shape.z + z) * shape.y + y) * shape.x + x];
  }
  T at(int c, int z, int y, int x) const {
    return data[((static_cast<std::size_t>(c) * shape.z + z) * shape.y + y) * shape.x + x];
  }
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

template <class T>
Tensor<T> to_tensor(const Volume& v) {
  return Tensor<T>(v.channels(), v.shape(), std::vector<T>(v.data().begin(), v.data().end()));
}

template <class T>
Volume to_volume(const Tensor<T>& t, std::array<double, 3> spacing = {1.0, 1.0, 1.0}) {
  std::vector<float> d(t.data.size());
  std::transform(t.data.begin(), t.data.end(), d.begin(), [](T x) { return static_cast<float>(x); });
  return Volume(t.channels, t.shape, std::move(d), spacing);
}

namespace kernels {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <class T>
using ConstStridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

/// Geometry of a "same" convolution evaluated on the zero-padded grid: every
/// kernel offset becomes a constant shift of the flattened padded index, so
/// the convolution is a sum of k^3 GEMMs over shifted column windows.
struct PaddedGeometry {
  Shape3 in;
  int k = 3;
  int pad = 1;
  int pz = 0, py = 0, px = 0;
  std::size_t padded = 0;  // voxels of the padded grid
  std::size_t span = 0;    // flattened columns that cover all output voxels

  PaddedGeometry(Shape3 s, int kernel) : in(s), k(kernel), pad(kernel / 2) {
    pz = s.z + 2 * pad;
    py = s.y + 2 * pad;
    px = s.x + 2 * pad;
    padded = static_cast<std::size_t>(pz) * py * px;
    span = ((static_cast<std::size_t>(s.z) - 1) * py + (s.y - 1)) * px + (s.x - 1) + 1;
  }
  std::size_t col(int z, int y, int x) const { return (static_cast<std::size_t>(z) * py + y) * px + x; }
  std::size_t offset(int dz, int dy, int dx) const { return (static_cast<std::size_t>(dz) * py + dy) * px + dx; }
  int taps() const { return k * k * k; }
};

template <class T>
void pad_into(const T* src, int channels, const PaddedGeometry& g, std::vector<T>& dst) {
  dst.assign(static_cast<std::size_t>(channels) * g.padded, T(0));
  const Shape3& s = g.in;
  for (int c = 0; c < channels; ++c) {
    const T* in = src + static_cast<std::size_t>(c) * s.count();
    T* out = dst.data() + static_cast<std::size_t>(c) * g.padded;
    for (int z = 0; z < s.z; ++z)
      for (int y = 0; y < s.y; ++y) {
        const T* row = in + (static_cast<std::size_t>(z) * s.y + y) * s.x;
        std::copy(row, row + s.x, out + g.col(z + g.pad, y + g.pad, g.pad));
      }
  }
}

/// Repack weights [out][in][k^3] into per-tap [tap][out][in] blocks.
template <class T>
std::vector<T> taps_major(std::span<const T> w, int out, int in, int taps) {
  std::vector<T> r(w.size());
  for (int o = 0; o < out; ++o)
    for (int i = 0; i < in; ++i)
      for (int t = 0; t < taps; ++t)
        r[(static_cast<std::size_t>(t) * out + o) * in + i] = w[(static_cast<std::size_t>(o) * in + i) * taps + t];
  return r;
}

/// out[o] = bias[o] + sum_{i,tap} w[o,i,tap] * in[i, p + tap], zero padding.
/// Weight layout [out][in][kz][ky][kx]; bias may be empty.
template <class T>
Tensor<T> conv3d(const Tensor<T>& in, std::span<const T> weight, std::span<const T> bias, int out_channels, int k) {
  const int cin = in.channels;
  if (weight.size() != static_cast<std::size_t>(out_channels) * cin * k * k * k)
    throw FormatError("conv3d: weight size does not match channels/kernel");
  Tensor<T> out(out_channels, in.shape);
  const PaddedGeometry g(in.shape, k);
  std::vector<T> padded;
  pad_into(in.data.data(), cin, g, padded);
  const auto wt = taps_major(weight, out_channels, cin, g.taps());
  RowMat<T> acc = RowMat<T>::Zero(out_channels, static_cast<Eigen::Index>(g.span));
  for (int dz = 0, t = 0; dz < k; ++dz)
    for (int dy = 0; dy < k; ++dy)
      for (int dx = 0; dx < k; ++dx, ++t) {
        Eigen::Map<const RowMat<T>> w(wt.data() + static_cast<std::size_t>(t) * out_channels * cin, out_channels, cin);
        ConstStridedMap<T> x(padded.data() + g.offset(dz, dy, dx), cin, static_cast<Eigen::Index>(g.span),
                             Eigen::OuterStride<>(static_cast<Eigen::Index>(g.padded)));
        acc.noalias() += w * x;
      }
  const Shape3& s = in.shape;
  for (int o = 0; o < out_channels; ++o) {
    const T b = bias.empty() ? T(0) : bias[o];
    T* dst = out.channel_ptr(o);
    for (int z = 0; z < s.z; ++z)
      for (int y = 0; y < s.y; ++y) {
        const T* src = acc.data() + static_cast<std::size_t>(o) * g.span + g.col(z, y, 0);
        T* row = dst + (static_cast<std::size_t>(z) * s.y + y) * s.x;
        for (int x = 0; x < s.x; ++x) row[x] = src[x] + b;
      }
  }
  return out;
}

/// Gradients of conv3d. `grad_in` (if non-null) receives dL/d(in) accumulated;
/// `grad_w`/`grad_b` (if non-empty) are accumulated too.
template <class T>
void conv3d_backward(const Tensor<T>& in, std::span<const T> weight, int out_channels, int k,
                     const Tensor<T>& grad_out, Tensor<T>* grad_in, std::span<T> grad_w, std::span<T> grad_b) {
  const int cin = in.channels;
  const PaddedGeometry g(in.shape, k);
  const Shape3& s = in.shape;
  const auto span = static_cast<Eigen::Index>(g.span);

  // Output gradient scattered onto the padded column layout, zero elsewhere.
  RowMat<T> gout = RowMat<T>::Zero(out_channels, span);
  for (int o = 0; o < out_channels; ++o) {
    const T* src = grad_out.channel_ptr(o);
    for (int z = 0; z < s.z; ++z)
      for (int y = 0; y < s.y; ++y) {
        const T* row = src + (static_cast<std::size_t>(z) * s.y + y) * s.x;
        std::copy(row, row + s.x, gout.data() + static_cast<std::size_t>(o) * g.span + g.col(z, y, 0));
      }
  }
  if (!grad_b.empty())
    for (int o = 0; o < out_channels; ++o) grad_b[o] += gout.row(o).sum();

  std::vector<T> padded;
  if (!grad_w.empty()) pad_into(in.data.data(), cin, g, padded);
  const auto wt = taps_major(weight, out_channels, cin, g.taps());
  std::vector<T> gw_taps(grad_w.empty() ? 0 : weight.size(), T(0));
  std::vector<T> gin_padded(grad_in ? static_cast<std::size_t>(cin) * g.padded : 0, T(0));

  for (int dz = 0, t = 0; dz < k; ++dz)
    for (int dy = 0; dy < k; ++dy)
      for (int dx = 0; dx < k; ++dx, ++t) {
        const std::size_t off = g.offset(dz, dy, dx);
        if (grad_in) {
          Eigen::Map<const RowMat<T>> w(wt.data() + static_cast<std::size_t>(t) * out_channels * cin, out_channels, cin);
          StridedMap<T> gx(gin_padded.data() + off, cin, span, Eigen::OuterStride<>(static_cast<Eigen::Index>(g.padded)));
          gx.noalias() += w.transpose() * gout;
        }
        if (!grad_w.empty()) {
          ConstStridedMap<T> x(padded.data() + off, cin, span, Eigen::OuterStride<>(static_cast<Eigen::Index>(g.padded)));
          Eigen::Map<RowMat<T>> gw(gw_taps.data() + static_cast<std::size_t>(t) * out_channels * cin, out_channels, cin);
          gw.noalias() += gout * x.transpose();
        }
      }

  if (!grad_w.empty()) {
    const int taps = g.taps();
    for (int o = 0; o < out_channels; ++o)
      for (int i = 0; i < cin; ++i)
        for (int t = 0; t < taps; ++t)
          grad_w[(static_cast<std::size_t>(o) * cin + i) * taps + t] +=
              gw_taps[(static_cast<std::size_t>(t) * out_channels + o) * cin + i];
  }
  if (grad_in) {
    for (int c = 0; c < cin; ++c) {
      const T* src = gin_padded.data() + static_cast<std::size_t>(c) * g.padded;
      T* dst = grad_in->channel_ptr(c);
      for (int z = 0; z < s.z; ++z)
        for (int y = 0; y < s.y; ++y) {
          const T* row = src + g.col(z + g.pad, y + g.pad, g.pad);
          T* d = dst + (static_cast<std::size_t>(z) * s.y + y) * s.x;
          for (int x = 0; x < s.x; ++x) d[x] += row[x];
        }
    }
  }
}

/// Transposed convolution, kernel 2, stride 2: doubles every spatial extent.
/// Weight layout [in][out][2][2][2].
template <class T>
Tensor<T> tconv2(const Tensor<T>& in, std::span<const T> weight, std::span<const T> bias, int out_channels) {
  const int cin = in.channels;
  if (weight.size() != static_cast<std::size_t>(cin) * out_channels * 8)
    throw FormatError("tconv2: weight size does not match channels");
  const Shape3& s = in.shape;
  Tensor<T> out(out_channels, Shape3{s.z * 2, s.y * 2, s.x * 2});
  const auto n = static_cast<Eigen::Index>(in.voxels());
  Eigen::Map<const RowMat<T>> x(in.data.data(), cin, n);
  RowMat<T> w(out_channels, cin);
  RowMat<T> y(out_channels, n);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c) {
        const int tap = (a * 2 + b) * 2 + c;
        for (int i = 0; i < cin; ++i)
          for (int o = 0; o < out_channels; ++o) w(o, i) = weight[(static_cast<std::size_t>(i) * out_channels + o) * 8 + tap];
        y.noalias() = w * x;
        for (int o = 0; o < out_channels; ++o) {
          const T bo = bias.empty() ? T(0) : bias[o];
          const T* src = y.data() + static_cast<std::size_t>(o) * n;
          for (int z = 0; z < s.z; ++z)
            for (int yy = 0; yy < s.y; ++yy)
              for (int xx = 0; xx < s.x; ++xx)
                out.at(o, 2 * z + a, 2 * yy + b, 2 * xx + c) = src[(static_cast<std::size_t>(z) * s.y + yy) * s.x + xx] + bo;
        }
      }
  return out;
}

template <class T>
void tconv2_backward(const Tensor<T>& in, std::span<const T> weight, int out_channels, const Tensor<T>& grad_out,
                     Tensor<T>* grad_in, std::span<T> grad_w, std::span<T> grad_b) {
  const int cin = in.channels;
  const Shape3& s = in.shape;
  const auto n = static_cast<Eigen::Index>(in.voxels());
  Eigen::Map<const RowMat<T>> x(in.data.data(), cin, n);
  RowMat<T> w(out_channels, cin);
  RowMat<T> gy(out_channels, n);
  RowMat<T> gin;
  if (grad_in) gin = RowMat<T>::Zero(cin, n);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c) {
        const int tap = (a * 2 + b) * 2 + c;
        for (int o = 0; o < out_channels; ++o) {
          T* dst = gy.data() + static_cast<std::size_t>(o) * n;
          for (int z = 0; z < s.z; ++z)
            for (int yy = 0; yy < s.y; ++yy)
              for (int xx = 0; xx < s.x; ++xx)
                dst[(static_cast<std::size_t>(z) * s.y + yy) * s.x + xx] = grad_out.at(o, 2 * z + a, 2 * yy + b, 2 * xx + c);
        }
        if (!grad_b.empty())
          for (int o = 0; o < out_channels; ++o) grad_b[o] += gy.row(o).sum();
        if (grad_in) {
          for (int i = 0; i < cin; ++i)
            for (int o = 0; o < out_channels; ++o) w(o, i) = weight[(static_cast<std::size_t>(i) * out_channels + o) * 8 + tap];
          gin.noalias() += w.transpose() * gy;
        }
        if (!grad_w.empty()) {
          const RowMat<T> gw = x * gy.transpose();  // cin x out
          for (int i = 0; i < cin; ++i)
            for (int o = 0; o < out_channels; ++o) grad_w[(static_cast<std::size_t>(i) * out_channels + o) * 8 + tap] += gw(i, o);
        }
      }
  if (grad_in)
    for (std::size_t i = 0; i < grad_in->data.size(); ++i) grad_in->data[i] += gin.data()[i];
}

/// Max pooling, window 2, stride 2, floor on odd extents. `argmax` receives
/// the flat source index chosen for each output (first maximum wins).
template <class T>
Tensor<T> maxpool2(const Tensor<T>& in, std::vector<std::uint32_t>* argmax = nullptr) {
  const Shape3& s = in.shape;
  const Shape3 os{s.z / 2, s.y / 2, s.x / 2};
  if (os.z == 0 || os.y == 0 || os.x == 0) throw FormatError("maxpool2: extent too small to pool");
  Tensor<T> out(in.channels, os);
  if (argmax) argmax->assign(out.size(), 0);
  std::size_t oi = 0;
  for (int c = 0; c < in.channels; ++c)
    for (int z = 0; z < os.z; ++z)
      for (int y = 0; y < os.y; ++y)
        for (int x = 0; x < os.x; ++x, ++oi) {
          T best = T(0);
          std::size_t best_i = 0;
          bool first = true;
          for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
              for (int d = 0; d < 2; ++d) {
                const std::size_t si = ((static_cast<std::size_t>(c) * s.z + 2 * z + a) * s.y + 2 * y + b) * s.x + 2 * x + d;
                if (first || in.data[si] > best) {
                  best = in.data[si];
                  best_i = si;
                  first = false;
                }
              }
          out.data[oi] = best;
          if (argmax) (*argmax)[oi] = static_cast<std::uint32_t>(best_i);
        }
  return out;
}

template <class T>
void relu_inplace(Tensor<T>& t) {
  for (auto& v : t.data) v = v > T(0) ? v : T(0);
}

/// (x - mean[c]) / std[c] per channel.
template <class T>
Tensor<T> normalize_channels(const Tensor<T>& in, std::span<const T> mean, std::span<const T> stdev) {
  if (mean.size() != static_cast<std::size_t>(in.channels) || stdev.size() != mean.size())
    throw FormatError("normalize: stats do not match channel count");
  Tensor<T> out = in;
  for (int c = 0; c < in.channels; ++c) {
    T* p = out.channel_ptr(c);
    const T m = mean[c];
    const T inv = T(1) / stdev[c];
    for (std::size_t i = 0; i < in.voxels(); ++i) p[i] = (p[i] - m) * inv;
  }
  return out;
}

}  // namespace kernels
}  // namespace flim
