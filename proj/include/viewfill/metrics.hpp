#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "viewfill/geometry.hpp"

namespace viewfill {

/// Exact nearest-neighbor index over a fixed point set. Uniform grid with
/// expanding ring search; results (index and squared distance, smallest index
/// on ties) are identical to a linear scan.
class NNIndex {
 public:
  explicit NNIndex(std::vector<Vec3> pts) : pts_(std::move(pts)) {
    if (pts_.empty()) throw std::invalid_argument("NNIndex: empty point set");
    Vec3 mn = pts_[0], mx = pts_[0];
    for (const Vec3& p : pts_) {
      mn = mn.cwiseMin(p);
      mx = mx.cwiseMax(p);
    }
    min_ = mn;
    const double extent = (mx - mn).maxCoeff();
    const auto per_axis = std::max(1, static_cast<int>(std::cbrt(static_cast<double>(pts_.size()))));
    cell_ = extent > 0.0 ? extent / per_axis : 1.0;
    for (int a = 0; a < 3; ++a)
      dims_[a] = std::max<std::int64_t>(
          1, static_cast<std::int64_t>(std::floor((mx[a] - mn[a]) / cell_)) + 1);

    const auto n_cells = static_cast<std::size_t>(dims_[0] * dims_[1] * dims_[2]);
    starts_.assign(n_cells + 1, 0);
    std::vector<std::size_t> cell_of(pts_.size());
    for (std::size_t i = 0; i < pts_.size(); ++i) {
      std::int64_t c[3];
      for (int a = 0; a < 3; ++a) {
        c[a] = static_cast<std::int64_t>(std::floor((pts_[i][a] - min_[a]) / cell_));
        c[a] = std::clamp<std::int64_t>(c[a], 0, dims_[a] - 1);
      }
      cell_of[i] = static_cast<std::size_t>(c[0] + dims_[0] * (c[1] + dims_[1] * c[2]));
      ++starts_[cell_of[i] + 1];
    }
    for (std::size_t c = 0; c < n_cells; ++c) starts_[c + 1] += starts_[c];
    order_.resize(pts_.size());
    std::vector<int> cursor(starts_.begin(), starts_.end() - 1);
    for (std::size_t i = 0; i < pts_.size(); ++i) order_[cursor[cell_of[i]]++] = static_cast<int>(i);
  }

  struct Result {
    int index;
    double dist_sq;
  };

  Result nearest(const Vec3& q) const {
    std::int64_t qc[3];
    std::int64_t max_ring = 0;
    for (int a = 0; a < 3; ++a) {
      qc[a] = static_cast<std::int64_t>(std::floor((q[a] - min_[a]) / cell_));
      max_ring = std::max({max_ring, std::abs(qc[a]), std::abs(dims_[a] - 1 - qc[a])});
    }

    int best = -1;
    double best_sq = std::numeric_limits<double>::infinity();
    auto scan = [&](std::int64_t x, std::int64_t y, std::int64_t z) {
      if (x < 0 || x >= dims_[0] || y < 0 || y >= dims_[1] || z < 0 || z >= dims_[2]) return;
      const auto c = static_cast<std::size_t>(x + dims_[0] * (y + dims_[1] * z));
      for (int s = starts_[c]; s < starts_[c + 1]; ++s) {
        const int i = order_[s];
        const double d = (pts_[i] - q).squaredNorm();
        if (d < best_sq || (d == best_sq && i < best)) {
          best_sq = d;
          best = i;
        }
      }
    };

    // Loop bounds are clamped to the grid box so rings enumerate only cells
    // that exist; queries far outside the box would otherwise walk huge
    // empty shells coordinate by coordinate.
    const auto lo = [&](int a, std::int64_t k) { return std::max(-k, -qc[a]); };
    const auto hi = [&](int a, std::int64_t k) { return std::min(k, dims_[a] - 1 - qc[a]); };
    for (std::int64_t k = 0; k <= max_ring; ++k) {
      if (best >= 0) {
        // any point in ring >= k is at least (k-1) cells away on some axis;
        // the slack keeps rounding from terminating a ring too early
        const double bd = static_cast<double>(k - 1) * cell_;
        if (bd * bd * (1.0 - 1e-9) > best_sq) break;
      }
      if (k == 0) {
        scan(qc[0], qc[1], qc[2]);
        continue;
      }
      const auto face = [&](int a, std::int64_t c) { return c >= 0 && c < dims_[a]; };
      const bool xn = face(0, qc[0] - k), xp = face(0, qc[0] + k);
      const bool yn = face(1, qc[1] - k), yp = face(1, qc[1] + k);
      const bool zn = face(2, qc[2] - k), zp = face(2, qc[2] + k);
      if (xn || xp)
        for (std::int64_t dy = lo(1, k); dy <= hi(1, k); ++dy)
          for (std::int64_t dz = lo(2, k); dz <= hi(2, k); ++dz) {
            if (xn) scan(qc[0] - k, qc[1] + dy, qc[2] + dz);
            if (xp) scan(qc[0] + k, qc[1] + dy, qc[2] + dz);
          }
      for (std::int64_t dx = std::max(-k + 1, lo(0, k)); dx <= std::min(k - 1, hi(0, k)); ++dx) {
        if (yn || yp)
          for (std::int64_t dz = lo(2, k); dz <= hi(2, k); ++dz) {
            if (yn) scan(qc[0] + dx, qc[1] - k, qc[2] + dz);
            if (yp) scan(qc[0] + dx, qc[1] + k, qc[2] + dz);
          }
        if (zn || zp)
          for (std::int64_t dy = std::max(-k + 1, lo(1, k)); dy <= std::min(k - 1, hi(1, k)); ++dy) {
            if (zn) scan(qc[0] + dx, qc[1] + dy, qc[2] - k);
            if (zp) scan(qc[0] + dx, qc[1] + dy, qc[2] + k);
          }
      }
    }
    return {best, best_sq};
  }

  /// True when some indexed point lies strictly within r of q.
  bool any_within(const Vec3& q, double r) const { return nearest(q).dist_sq < r * r; }

  std::size_t size() const { return pts_.size(); }

 private:
  std::vector<Vec3> pts_;
  Vec3 min_ = Vec3::Zero();
  double cell_ = 1.0;
  std::int64_t dims_[3] = {1, 1, 1};
  std::vector<int> starts_;
  std::vector<int> order_;
};

struct ChamferResult {
  double a_to_b;    // mean over a of the Euclidean distance to the nearest b
  double b_to_a;
  double symmetric; // average of the two directed means
};

inline ChamferResult chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("chamfer: empty point set");
  const NNIndex ia(a), ib(b);
  double ab = 0.0, ba = 0.0;
  for (const Vec3& p : a) ab += std::sqrt(ib.nearest(p).dist_sq);
  for (const Vec3& p : b) ba += std::sqrt(ia.nearest(p).dist_sq);
  ab /= static_cast<double>(a.size());
  ba /= static_cast<double>(b.size());
  return {ab, ba, 0.5 * (ab + ba)};
}

inline ChamferResult chamfer(const PointCloud& a, const PointCloud& b) {
  return chamfer(a.points, b.points);
}

/// Percentage of reference points with a prediction strictly closer than r.
inline double completeness(const std::vector<Vec3>& pred, const std::vector<Vec3>& reference,
                           double r) {
  if (pred.empty() || reference.empty())
    throw std::invalid_argument("completeness: empty point set");
  if (!(r > 0.0)) throw std::invalid_argument("completeness: radius must be positive");
  const NNIndex idx(pred);
  std::size_t hit = 0;
  for (const Vec3& g : reference)
    if (idx.nearest(g).dist_sq < r * r) ++hit;
  return 100.0 * static_cast<double>(hit) / static_cast<double>(reference.size());
}

inline double completeness(const PointCloud& pred, const PointCloud& reference, double r) {
  return completeness(pred.points, reference.points, r);
}

}  // namespace viewfill
