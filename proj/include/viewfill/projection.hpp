#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "viewfill/geometry.hpp"
#include "viewfill/voxel_grid.hpp"

namespace viewfill {

/// One voxel crossed by a ray: linear index into the grid and the distance
/// from the ray origin at which the ray enters it. Entry distances within one
/// ray strictly increase.
struct RaySample {
  std::int32_t voxel;
  double entry;
};

namespace detail {

/// Slab intersection of a ray with the grid AABB. Returns false on miss.
inline bool ray_aabb(const Vec3& origin, const Vec3& dir, const VoxelGrid& grid, double& t_enter,
                     double& t_exit) {
  t_enter = 0.0;
  t_exit = std::numeric_limits<double>::infinity();
  const Vec3 lo = grid.min_corner(), hi = grid.max_corner();
  for (int a = 0; a < 3; ++a) {
    if (dir[a] == 0.0) {
      if (origin[a] < lo[a] || origin[a] > hi[a]) return false;
      continue;
    }
    double t0 = (lo[a] - origin[a]) / dir[a];
    double t1 = (hi[a] - origin[a]) / dir[a];
    if (t0 > t1) std::swap(t0, t1);
    t_enter = std::max(t_enter, t0);
    t_exit = std::min(t_exit, t1);
  }
  return t_enter <= t_exit;
}

}  // namespace detail

/// Ordered voxels the ray passes through, with entry distances, truncated at
/// d_max or grid exit. Amanatides-Woo stepping; on an exact edge/corner
/// crossing all tying axes advance together, so zero-length clips are skipped
/// and entry distances stay strictly increasing.
inline std::vector<RaySample> traverse(const Vec3& origin, const Vec3& dir, const VoxelGrid& grid,
                                       double d_max) {
  if (std::abs(dir.norm() - 1.0) > 1e-6) throw std::invalid_argument("traverse: direction must be unit");
  if (!(d_max > 0.0)) throw std::invalid_argument("traverse: d_max must be positive");

  std::vector<RaySample> out;
  double t_enter, t_exit;
  if (!detail::ray_aabb(origin, dir, grid, t_enter, t_exit)) return out;
  const double t_end = std::min(t_exit, d_max);
  if (t_enter >= t_end) return out;

  const double vs = grid.voxel_size;
  const Vec3 start = origin + t_enter * dir;
  int ix[3];
  for (int a = 0; a < 3; ++a) {
    ix[a] = static_cast<int>(std::floor((start[a] - grid.origin[a]) / vs));
    ix[a] = std::clamp(ix[a], 0, grid.dims[a] - 1);
  }

  int step[3];
  double t_max[3], t_delta[3];
  for (int a = 0; a < 3; ++a) {
    if (dir[a] > 0.0) {
      step[a] = 1;
      t_delta[a] = vs / dir[a];
      t_max[a] = (grid.origin[a] + (ix[a] + 1) * vs - origin[a]) / dir[a];
    } else if (dir[a] < 0.0) {
      step[a] = -1;
      t_delta[a] = -vs / dir[a];
      t_max[a] = (grid.origin[a] + ix[a] * vs - origin[a]) / dir[a];
    } else {
      step[a] = 0;
      t_delta[a] = std::numeric_limits<double>::infinity();
      t_max[a] = std::numeric_limits<double>::infinity();
    }
  }

  double t = t_enter;
  while (t < t_end) {
    out.push_back({static_cast<std::int32_t>(grid.index(ix[0], ix[1], ix[2])), t});
    const double t_next = std::min({t_max[0], t_max[1], t_max[2]});
    for (int a = 0; a < 3; ++a) {
      if (t_max[a] == t_next) {
        ix[a] += step[a];
        t_max[a] += t_delta[a];
        if (ix[a] < 0 || ix[a] >= grid.dims[a]) return out;
      }
    }
    if (!(t_next > t)) break;  // numerical stall guard
    t = t_next;
  }
  return out;
}

namespace detail {

constexpr double kValueClamp = 1e-6;  // keeps products from annihilating gradients

/// Expected depth along one traversed ray with all distances already in
/// depth units. Returns the escape probability through `escape` when asked.
inline double expected_depth_ray(std::span<const RaySample> samples, const std::vector<double>& values,
                                 double depth_scale, double d_bg, double* escape = nullptr) {
  double transmit = 1.0;
  double depth = 0.0;
  for (const RaySample& s : samples) {
    const double v = VoxelGrid::clamp01(values[static_cast<std::size_t>(s.voxel)]);
    depth += transmit * (1.0 - v) * (s.entry / depth_scale);
    transmit *= v;
  }
  depth += transmit * d_bg;
  if (escape) *escape = transmit;
  return depth;
}

/// d(depth)/dV_k for every sample on one ray, evaluated with values clamped
/// to [kValueClamp, 1-kValueClamp]. Distances are converted to depth units by
/// depth_scale; the background hit closes the telescoping at d_bg.
inline std::vector<double> expected_depth_ray_grad(std::span<const RaySample> samples,
                                                   const std::vector<double>& values,
                                                   double depth_scale, double d_bg) {
  const std::size_t n = samples.size();
  std::vector<double> grad(n, 0.0);
  if (n == 0) return grad;

  std::vector<double> v(n), d(n + 1);
  for (std::size_t k = 0; k < n; ++k) {
    v[k] = std::clamp(values[static_cast<std::size_t>(samples[k].voxel)], kValueClamp, 1.0 - kValueClamp);
    d[k] = samples[k].entry / depth_scale;
  }
  d[n] = d_bg;

  // suffix[k] = sum_{i>=k} (d_{i+1}-d_i) prod_{k<t<=i} v_t, so that
  // grad_k = prefix_{k-1} * suffix[k] without dividing by v_k.
  double suffix = d[n] - d[n - 1];
  grad[n - 1] = suffix;
  for (std::size_t k = n - 1; k-- > 0;) {
    suffix = (d[k + 1] - d[k]) + v[k + 1] * suffix;
    grad[k] = suffix;
  }
  double prefix = 1.0;
  for (std::size_t k = 0; k < n; ++k) {
    grad[k] *= prefix;
    prefix *= v[k];
  }
  return grad;
}

}  // namespace detail

/// Differentiable expected-depth projection of a probability-empty grid.
/// Per pixel: D = sum_k P_k d_k + (prod_j V_j) d_bg with
/// P_k = (1-V_k) prod_{j<k} V_j; the escape term assigns the leftover
/// probability mass to the background depth d_bg so hit probabilities sum
/// to 1. Rays that miss the grid return d_bg. d_k is the voxel entry
/// distance converted to camera z-depth. When `hit_mask` is given it is
/// filled with the pixels whose hit probability is at least 0.5.
inline DepthMap project_expected_depth(const VoxelGrid& grid, const Camera& cam, double d_bg,
                                       Mask* hit_mask = nullptr) {
  const Vec3 center = cam.pose.camera_center();
  double far2 = 0.0;
  for (int corner = 0; corner < 8; ++corner) {
    const Vec3 c(corner & 1 ? grid.max_corner().x() : grid.min_corner().x(),
                 corner & 2 ? grid.max_corner().y() : grid.min_corner().y(),
                 corner & 4 ? grid.max_corner().z() : grid.min_corner().z());
    far2 = std::max(far2, (c - center).squaredNorm());
  }
  if (!(d_bg > std::sqrt(far2)))
    throw std::invalid_argument("project_expected_depth: d_bg does not clear the grid");

  DepthMap out(cam.width, cam.height, 0.0f);
  if (hit_mask) *hit_mask = Mask(cam.width, cam.height, false);
  for (int v = 0; v < cam.height; ++v) {
    for (int u = 0; u < cam.width; ++u) {
      const auto ray = cam.pixel_ray(u, v);
      const auto samples = traverse(ray.origin, ray.dir, grid, std::numeric_limits<double>::infinity());
      double escape = 1.0;
      const double depth = detail::expected_depth_ray(samples, grid.values, ray.depth_scale, d_bg, &escape);
      out.at(u, v) = static_cast<float>(depth);
      if (hit_mask) hit_mask->set(u, v, 1.0 - escape >= 0.5);
    }
  }
  return out;
}

/// Accumulates upstream(x) * dD(x)/dV_k over every pixel ray into a per-voxel
/// gradient. Rays are reduced in raster order, so the result is deterministic.
inline std::vector<double> project_backward(const VoxelGrid& grid, const Camera& cam, double d_bg,
                                            const std::vector<double>& upstream) {
  if (upstream.size() != static_cast<std::size_t>(cam.width) * cam.height)
    throw std::invalid_argument("project_backward: upstream size mismatch");

  std::vector<double> grad(grid.size(), 0.0);
  for (int v = 0; v < cam.height; ++v) {
    for (int u = 0; u < cam.width; ++u) {
      const double up = upstream[static_cast<std::size_t>(v) * cam.width + u];
      if (up == 0.0) continue;
      const auto ray = cam.pixel_ray(u, v);
      const auto samples = traverse(ray.origin, ray.dir, grid, std::numeric_limits<double>::infinity());
      if (samples.empty()) continue;
      const auto g = detail::expected_depth_ray_grad(samples, grid.values, ray.depth_scale, d_bg);
      for (std::size_t k = 0; k < samples.size(); ++k)
        grad[static_cast<std::size_t>(samples[k].voxel)] += up * g[k];
    }
  }
  return grad;
}

/// Max relative error between the analytic per-voxel ray gradients and
/// central finite differences over n_rays random pixel rays. `corrupt`, when
/// set, is applied to each ray's analytic gradients first (self-test hook).
inline double grad_check(const VoxelGrid& grid, const Camera& cam, double d_bg, int n_rays, double h,
                         std::uint64_t seed = 7,
                         const std::function<void(std::span<double>)>& corrupt = {}) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick_u(0, cam.width - 1), pick_v(0, cam.height - 1);

  VoxelGrid work = grid;
  double max_rel = 0.0;
  int done = 0, attempts = 0;
  while (done < n_rays && attempts < n_rays * 100) {
    ++attempts;
    const int u = pick_u(rng), v = pick_v(rng);
    const auto ray = cam.pixel_ray(u, v);
    const auto samples = traverse(ray.origin, ray.dir, work, std::numeric_limits<double>::infinity());
    if (samples.empty()) continue;
    ++done;

    auto analytic = detail::expected_depth_ray_grad(samples, work.values, ray.depth_scale, d_bg);
    if (corrupt) corrupt(std::span<double>(analytic));

    for (std::size_t k = 0; k < samples.size(); ++k) {
      const std::size_t idx = static_cast<std::size_t>(samples[k].voxel);
      const double saved = work.values[idx];
      work.values[idx] = saved + h;
      const double d_plus = detail::expected_depth_ray(samples, work.values, ray.depth_scale, d_bg);
      work.values[idx] = saved - h;
      const double d_minus = detail::expected_depth_ray(samples, work.values, ray.depth_scale, d_bg);
      work.values[idx] = saved;

      const double fd = (d_plus - d_minus) / (2.0 * h);
      const double rel = std::abs(analytic[k] - fd) / std::max(std::abs(fd), 1e-8);
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace viewfill
