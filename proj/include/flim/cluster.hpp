#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "flim/common.hpp"

namespace flim {

/// Row-major float matrix; one point (or vector) per row.
struct RowMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;

  RowMatrix() = default;
  RowMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0f) {}
  RowMatrix(std::size_t r, std::size_t c, std::vector<float> v) : rows(r), cols(c), values(std::move(v)) {
    if (values.size() != r * c) throw FormatError("matrix data length does not match shape");
  }

  std::span<float> row(std::size_t i) { return {values.data() + i * cols, cols}; }
  std::span<const float> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
  float& operator()(std::size_t i, std::size_t j) { return values[i * cols + j]; }
  float operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
  friend bool operator==(const RowMatrix&, const RowMatrix&) = default;
};

struct KMeansOptions {
  std::size_t batch_size = 256;
  int max_iterations = 100;
  double tolerance = 1e-4;  // max center shift (L2) that ends the mini-batch phase
  int restarts = 10;
  int refine_iterations = 100;
};

struct ClusterResult {
  RowMatrix centers;
  std::vector<int> assignment;
  double inertia = 0.0;
  bool degenerate = false;
  std::vector<double> inertia_trace;  // full-data inertia after each refinement pass
  int k() const { return static_cast<int>(centers.rows); }
};

namespace detail {

inline double sq_dist(std::span<const float> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    s += d * d;
  }
  return s;
}

struct Centers {
  std::size_t k = 0;
  std::size_t d = 0;
  std::vector<double> v;
  std::span<double> row(std::size_t i) { return {v.data() + i * d, d}; }
  std::span<const double> row(std::size_t i) const { return {v.data() + i * d, d}; }
};

inline std::pair<int, double> nearest(std::span<const float> p, const Centers& c) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < c.k; ++i) {
    const double d = sq_dist(p, c.row(i));
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return {best, best_d};
}

/// Row indices of distinct points, first occurrence order.
inline std::vector<std::size_t> distinct_rows(const RowMatrix& pts) {
  std::vector<std::size_t> order(pts.rows);
  std::iota(order.begin(), order.end(), 0);
  auto less = [&](std::size_t a, std::size_t b) {
    auto ra = pts.row(a), rb = pts.row(b);
    return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
  };
  auto equal = [&](std::size_t a, std::size_t b) {
    auto ra = pts.row(a), rb = pts.row(b);
    return std::equal(ra.begin(), ra.end(), rb.begin());
  };
  std::stable_sort(order.begin(), order.end(), less);
  std::vector<std::size_t> firsts;
  for (std::size_t i = 0; i < order.size(); ++i)
    if (i == 0 || !equal(order[i - 1], order[i])) firsts.push_back(order[i]);
  std::sort(firsts.begin(), firsts.end());
  return firsts;
}

inline Centers kmeans_pp_init(const RowMatrix& pts, std::size_t k, Rng& rng) {
  Centers c{k, pts.cols, std::vector<double>(k * pts.cols)};
  auto set_center = [&](std::size_t ci, std::size_t pi) {
    auto src = pts.row(pi);
    std::copy(src.begin(), src.end(), c.row(ci).begin());
  };
  set_center(0, rng.below(pts.rows));
  std::vector<double> d2(pts.rows);
  for (std::size_t i = 0; i < pts.rows; ++i) d2[i] = sq_dist(pts.row(i), c.row(0));
  for (std::size_t ci = 1; ci < k; ++ci) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t pick = pts.rows - 1;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      bool found = false;
      for (std::size_t i = 0; i < pts.rows; ++i) {
        target -= d2[i];
        if (target < 0.0 && d2[i] > 0.0) {
          pick = i;
          found = true;
          break;
        }
      }
      if (!found) {
        // Round-off exhausted the walk; take the last point with nonzero weight.
        for (std::size_t i = pts.rows; i-- > 0;)
          if (d2[i] > 0.0) {
            pick = i;
            break;
          }
      }
    }
    set_center(ci, pick);
    for (std::size_t i = 0; i < pts.rows; ++i) d2[i] = std::min(d2[i], sq_dist(pts.row(i), c.row(ci)));
  }
  return c;
}

// Sculley-style mini-batch updates with per-center 1/count learning rates.
inline void minibatch_phase(const RowMatrix& pts, Centers& c, Rng& rng, const KMeansOptions& opt) {
  std::vector<double> counts(c.k, 0.0);
  const bool full = pts.rows <= opt.batch_size;
  const std::size_t b = full ? pts.rows : opt.batch_size;
  std::vector<std::size_t> batch(b);
  std::vector<int> assign(b);
  std::vector<double> before(c.v.size());
  for (int it = 0; it < opt.max_iterations; ++it) {
    for (std::size_t i = 0; i < b; ++i) batch[i] = full ? i : rng.below(pts.rows);
    for (std::size_t i = 0; i < b; ++i) assign[i] = nearest(pts.row(batch[i]), c).first;
    before = c.v;
    for (std::size_t i = 0; i < b; ++i) {
      const auto ci = static_cast<std::size_t>(assign[i]);
      counts[ci] += 1.0;
      const double eta = 1.0 / counts[ci];
      auto center = c.row(ci);
      auto p = pts.row(batch[i]);
      for (std::size_t j = 0; j < c.d; ++j) center[j] = (1.0 - eta) * center[j] + eta * p[j];
    }
    double max_shift = 0.0;
    for (std::size_t ci = 0; ci < c.k; ++ci) {
      double s = 0.0;
      for (std::size_t j = 0; j < c.d; ++j) {
        const double d = c.v[ci * c.d + j] - before[ci * c.d + j];
        s += d * d;
      }
      max_shift = std::max(max_shift, std::sqrt(s));
    }
    if (max_shift < opt.tolerance) break;
  }
}

struct Fit {
  Centers centers;
  std::vector<int> assignment;
  double inertia = 0.0;
  std::vector<double> trace;
};

inline double assign_all(const RowMatrix& pts, const Centers& c, std::vector<int>& assignment,
                         std::vector<double>& dist) {
  double inertia = 0.0;
  for (std::size_t i = 0; i < pts.rows; ++i) {
    auto [ci, d] = nearest(pts.row(i), c);
    assignment[i] = ci;
    dist[i] = d;
    inertia += d;
  }
  return inertia;
}

// Full-data Lloyd passes; each pass cannot increase inertia.
inline Fit refine(const RowMatrix& pts, Centers c, const KMeansOptions& opt) {
  Fit f;
  f.assignment.assign(pts.rows, 0);
  std::vector<double> dist(pts.rows);
  f.inertia = assign_all(pts, c, f.assignment, dist);
  f.trace.push_back(f.inertia);
  for (int it = 0; it < opt.refine_iterations; ++it) {
    std::vector<double> sums(c.k * c.d, 0.0);
    std::vector<std::size_t> counts(c.k, 0);
    for (std::size_t i = 0; i < pts.rows; ++i) {
      const auto ci = static_cast<std::size_t>(f.assignment[i]);
      ++counts[ci];
      auto p = pts.row(i);
      for (std::size_t j = 0; j < c.d; ++j) sums[ci * c.d + j] += p[j];
    }
    for (std::size_t ci = 0; ci < c.k; ++ci) {
      if (counts[ci] == 0) {
        // Empty cluster: move it onto the point currently worst served.
        const auto far = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
        auto p = pts.row(far);
        std::copy(p.begin(), p.end(), c.row(ci).begin());
        dist[far] = 0.0;
        continue;
      }
      for (std::size_t j = 0; j < c.d; ++j) c.v[ci * c.d + j] = sums[ci * c.d + j] / static_cast<double>(counts[ci]);
    }
    std::vector<int> prev = f.assignment;
    const double inertia = assign_all(pts, c, f.assignment, dist);
    f.trace.push_back(inertia);
    f.inertia = inertia;
    if (prev == f.assignment) break;
  }
  f.centers = std::move(c);
  return f;
}

}  // namespace detail

/// Mini-batch K-means with k-means++ seeding, a few seeded restarts, and a
/// final full-data refinement. Deterministic for a given seed.
inline ClusterResult minibatch_kmeans(const RowMatrix& points, int k, std::uint64_t seed,
                                      const KMeansOptions& opt = {}) {
  if (k < 1) throw FormatError("k-means: k must be >= 1");
  if (points.rows == 0 || points.cols == 0) throw FormatError("k-means: empty input");

  ClusterResult out;
  const auto distinct = detail::distinct_rows(points);
  if (distinct.size() < static_cast<std::size_t>(k)) {
    detail::Centers c{distinct.size(), points.cols, {}};
    for (auto idx : distinct) {
      auto r = points.row(idx);
      c.v.insert(c.v.end(), r.begin(), r.end());
    }
    std::vector<double> dist(points.rows);
    out.assignment.assign(points.rows, 0);
    out.inertia = detail::assign_all(points, c, out.assignment, dist);
    out.inertia_trace = {out.inertia};
    out.centers = RowMatrix(c.k, c.d, std::vector<float>(c.v.begin(), c.v.end()));
    out.degenerate = true;
    return out;
  }

  detail::Fit best;
  bool have = false;
  for (int r = 0; r < std::max(1, opt.restarts); ++r) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(r)));
    auto c = detail::kmeans_pp_init(points, static_cast<std::size_t>(k), rng);
    detail::minibatch_phase(points, c, rng, opt);
    auto fit = detail::refine(points, std::move(c), opt);
    if (!have || fit.inertia < best.inertia) {
      best = std::move(fit);
      have = true;
    }
  }
  out.centers = RowMatrix(best.centers.k, best.centers.d,
                          std::vector<float>(best.centers.v.begin(), best.centers.v.end()));
  out.assignment = std::move(best.assignment);
  out.inertia_trace = std::move(best.trace);
  // Inertia reported for the stored (float) centers.
  {
    detail::Centers fc{out.centers.rows, out.centers.cols,
                       std::vector<double>(out.centers.values.begin(), out.centers.values.end())};
    std::vector<double> dist(points.rows);
    out.inertia = detail::assign_all(points, fc, out.assignment, dist);
  }
  return out;
}

// ---------------------------------------------------------------------------
// PCA
// ---------------------------------------------------------------------------

struct PcaResult {
  RowMatrix components;  // m x d, orthonormal rows, descending eigenvalue
  std::vector<double> eigenvalues;
  std::vector<double> mean;
};

namespace detail {

inline void fix_sign(Eigen::Ref<Eigen::VectorXd> v) {
  Eigen::Index idx = 0;
  v.cwiseAbs().maxCoeff(&idx);
  if (v[idx] < 0) v = -v;
}

}  // namespace detail

/// Top-m eigenvectors of the sample covariance (divisor n-1). The sign of each
/// component makes its largest-magnitude entry positive.
inline PcaResult pca_components(const RowMatrix& points, int m) {
  const auto n = static_cast<Eigen::Index>(points.rows);
  const auto d = static_cast<Eigen::Index>(points.cols);
  if (m < 1 || m > std::min(n, d))
    throw FormatError("pca: requested " + std::to_string(m) + " components from " + std::to_string(n) +
                      " points of dimension " + std::to_string(d));
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = points(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  if (x.cwiseAbs().maxCoeff() == 0.0)
    throw FormatError("pca: all " + std::to_string(n) + " points are identical (zero covariance)");
  const double denom = static_cast<double>(std::max<Eigen::Index>(n - 1, 1));

  Eigen::MatrixXd vecs(d, m);
  Eigen::VectorXd vals(m);
  if (d <= 256 || d <= n) {
    const Eigen::MatrixXd cov = (x.transpose() * x) / denom;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.info() != Eigen::Success) throw Error("pca: eigendecomposition failed");
    for (int i = 0; i < m; ++i) {
      vecs.col(i) = es.eigenvectors().col(d - 1 - i);
      vals[i] = std::max(0.0, es.eigenvalues()[d - 1 - i]);
    }
  } else {
    // Few points in high dimension: the nonzero spectrum of X^T X equals that
    // of X X^T, so decompose the n x n Gram matrix instead.
    const Eigen::MatrixXd gram = (x * x.transpose()) / denom;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    if (es.info() != Eigen::Success) throw Error("pca: eigendecomposition failed");
    const double tiny = 1e-12 * std::max(1.0, es.eigenvalues()[n - 1]);
    int filled = 0;
    for (; filled < m; ++filled) {
      const double lambda = es.eigenvalues()[n - 1 - filled];
      if (lambda <= tiny) break;
      Eigen::VectorXd v = x.transpose() * es.eigenvectors().col(n - 1 - filled);
      vecs.col(filled) = v / v.norm();
      vals[filled] = lambda;
    }
    // Null-space completion by Gram-Schmidt over the standard basis.
    for (Eigen::Index e = 0; filled < m && e < d; ++e) {
      Eigen::VectorXd v = Eigen::VectorXd::Unit(d, e);
      for (int pass = 0; pass < 2; ++pass)
        for (int j = 0; j < filled; ++j) v -= vecs.col(j).dot(v) * vecs.col(j);
      const double norm = v.norm();
      if (norm < 1e-6) continue;
      vecs.col(filled) = v / norm;
      vals[filled] = 0.0;
      ++filled;
    }
  }

  PcaResult out;
  out.components = RowMatrix(static_cast<std::size_t>(m), static_cast<std::size_t>(d));
  for (int i = 0; i < m; ++i) {
    Eigen::VectorXd v = vecs.col(i);
    detail::fix_sign(v);
    for (Eigen::Index j = 0; j < d; ++j) out.components(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = static_cast<float>(v[j]);
    out.eigenvalues.push_back(vals[i]);
  }
  out.mean.assign(mean.data(), mean.data() + d);
  return out;
}

}  // namespace flim
