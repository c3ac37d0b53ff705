#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "flim/tensor.hpp"

namespace flim {

/// Named model tensor. `constant` tensors (normalization statistics) and
/// `frozen` tensors receive no gradient and are skipped by the optimizer.
template <class T>
struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool frozen = false;
  bool constant = false;

  bool trainable() const { return !frozen && !constant; }
  std::size_t size() const { return value.size(); }
  void zero_grad() { grad.assign(value.size(), T(0)); }
};

/// Reverse-mode tape over a fixed operator set: normalize, conv3d, tconv2,
/// relu, maxpool2, concat. Nodes are kept in creation order; backward walks
/// them in reverse and each node pushes its gradient into its inputs and
/// parameters.
template <class T>
class Tape {
 public:
  using Id = int;

  Id input(Tensor<T> value) { return push(std::move(value), false); }

  const Tensor<T>& value(Id id) const { return nodes_[id].value; }
  Tensor<T> take_value(Id id) { return std::move(nodes_[id].value); }
  bool requires_grad(Id id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// (x - mean[c]) / std[c] with constant statistics.
  Id normalize(Id x, const Param<T>& mean, const Param<T>& stdev) {
    const Id out = push(kernels::normalize_channels<T>(value(x), mean.value, stdev.value), requires_grad(x));
    if (requires_grad(out))
      nodes_[out].backward = [this, x, out, &stdev] {
        Tensor<T>& gi = grad_of(x);
        const Tensor<T>& go = nodes_[out].grad;
        for (int c = 0; c < go.channels; ++c) {
          const T inv = T(1) / stdev.value[c];
          const T* g = go.channel_ptr(c);
          T* d = gi.channel_ptr(c);
          for (std::size_t i = 0; i < go.voxels(); ++i) d[i] += g[i] * inv;
        }
      };
    return out;
  }

  /// "Same" convolution; `bias` may be null.
  Id conv(Id x, Param<T>& weight, Param<T>* bias, int out_channels, int k) {
    const std::span<const T> b = bias ? std::span<const T>(bias->value) : std::span<const T>();
    const bool wants = requires_grad(x) || needs(weight) || (bias && needs(*bias));
    const Id out = push(kernels::conv3d<T>(value(x), weight.value, b, out_channels, k), wants);
    if (wants)
      nodes_[out].backward = [this, x, out, &weight, bias, out_channels, k] {
        Tensor<T>* gi = requires_grad(x) ? &grad_of(x) : nullptr;
        kernels::conv3d_backward<T>(value(x), weight.value, out_channels, k, nodes_[out].grad, gi, grad_span(weight),
                                    bias ? grad_span(*bias) : std::span<T>());
      };
    return out;
  }

  Id tconv(Id x, Param<T>& weight, Param<T>& bias, int out_channels) {
    const bool wants = requires_grad(x) || needs(weight) || needs(bias);
    const Id out = push(kernels::tconv2<T>(value(x), weight.value, bias.value, out_channels), wants);
    if (wants)
      nodes_[out].backward = [this, x, out, &weight, &bias, out_channels] {
        Tensor<T>* gi = requires_grad(x) ? &grad_of(x) : nullptr;
        kernels::tconv2_backward<T>(value(x), weight.value, out_channels, nodes_[out].grad, gi, grad_span(weight),
                                    grad_span(bias));
      };
    return out;
  }

  Id relu(Id x) {
    Tensor<T> v = value(x);
    kernels::relu_inplace(v);
    const Id out = push(std::move(v), requires_grad(x));
    if (requires_grad(out))
      nodes_[out].backward = [this, x, out] {
        Tensor<T>& gi = grad_of(x);
        const auto& go = nodes_[out].grad.data;
        const auto& y = nodes_[out].value.data;
        for (std::size_t i = 0; i < go.size(); ++i)
          if (y[i] > T(0)) gi.data[i] += go[i];
      };
    return out;
  }

  Id maxpool(Id x) {
    auto idx = std::make_shared<std::vector<std::uint32_t>>();
    const Id out = push(kernels::maxpool2<T>(value(x), requires_grad(x) ? idx.get() : nullptr), requires_grad(x));
    if (requires_grad(out))
      nodes_[out].backward = [this, x, out, idx] {
        Tensor<T>& gi = grad_of(x);
        const auto& go = nodes_[out].grad.data;
        for (std::size_t i = 0; i < go.size(); ++i) gi.data[(*idx)[i]] += go[i];
      };
    return out;
  }

  /// Channel concatenation of same-shape tensors.
  Id concat(const std::vector<Id>& xs) {
    if (xs.empty()) throw FormatError("concat of nothing");
    const Shape3 s = value(xs.front()).shape;
    int channels = 0;
    bool wants = false;
    for (Id x : xs) {
      if (value(x).shape != s) throw FormatError("concat: spatial shapes differ");
      channels += value(x).channels;
      wants = wants || requires_grad(x);
    }
    Tensor<T> v(channels, s);
    std::size_t at = 0;
    for (Id x : xs) {
      std::copy(value(x).data.begin(), value(x).data.end(), v.data.begin() + static_cast<std::ptrdiff_t>(at));
      at += value(x).size();
    }
    const Id out = push(std::move(v), wants);
    if (wants)
      nodes_[out].backward = [this, xs, out] {
        std::size_t at = 0;
        const auto& go = nodes_[out].grad.data;
        for (Id x : xs) {
          const std::size_t n = value(x).size();
          if (requires_grad(x)) {
            Tensor<T>& gi = grad_of(x);
            for (std::size_t i = 0; i < n; ++i) gi.data[i] += go[at + i];
          }
          at += n;
        }
      };
    return out;
  }

  /// Seed d(loss)/d(out) and run every recorded backward step. Parameter
  /// gradients are accumulated, not overwritten.
  void backward(Id out, Tensor<T> seed) {
    if (seed.shape != value(out).shape || seed.channels != value(out).channels)
      throw FormatError("backward seed shape mismatch");
    nodes_[out].grad = std::move(seed);
    for (Id i = out; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.backward && !n.grad.data.empty()) n.backward();
      n.grad = Tensor<T>();
    }
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    std::function<void()> backward;
  };

  static bool needs(const Param<T>& p) { return !p.constant && !p.frozen; }
  static std::span<T> grad_span(Param<T>& p) {
    if (!needs(p)) return {};
    if (p.grad.size() != p.value.size()) p.zero_grad();
    return p.grad;
  }

  Id push(Tensor<T> v, bool requires_grad) {
    nodes_.push_back({std::move(v), Tensor<T>(), requires_grad, {}});
    return static_cast<Id>(nodes_.size() - 1);
  }

  Tensor<T>& grad_of(Id id) {
    Node& n = nodes_[id];
    if (n.grad.data.empty()) n.grad = Tensor<T>(n.value.channels, n.value.shape);
    return n.grad;
  }

  std::vector<Node> nodes_;
};

}  // namespace flim
