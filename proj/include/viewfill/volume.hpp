#pragma once

#include <array>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "viewfill/geometry.hpp"
#include "viewfill/projection.hpp"
#include "viewfill/voxel_grid.hpp"

namespace viewfill {

/// Partial volumetric observation of a scene: surface occupancy from the
/// observed points and known-empty space from ray carving. Both grids share
/// layout; an occupied voxel is never also marked carved-free.
struct VolumeObservation {
  VoxelGrid occupied;   // 0 where surface points were observed, 1 elsewhere
  VoxelGrid freespace;  // 0 where known empty via ray carving, 1 = unknown

  /// Builds an observation, resolving carve/occupancy conflicts in favor of
  /// occupancy (a grazing ray may carve a voxel that holds surface points).
  static VolumeObservation make(VoxelGrid occ, VoxelGrid free) {
    if (!occ.same_layout(free)) throw std::invalid_argument("VolumeObservation: grid layout mismatch");
    for (std::size_t i = 0; i < occ.values.size(); ++i)
      if (occ.values[i] == 0.0 && free.values[i] == 0.0) free.values[i] = 1.0;
    return VolumeObservation{std::move(occ), std::move(free)};
  }

  bool is_occupied(std::size_t i) const { return occupied.values[i] == 0.0; }
  bool is_free(std::size_t i) const { return freespace.values[i] == 0.0; }
  bool is_unknown(std::size_t i) const { return !is_occupied(i) && !is_free(i); }
};

/// Marks every voxel that lies strictly in front of an observed depth along
/// its pixel ray as free (0); everything else stays 1. `spec` provides the
/// grid layout (its values are ignored).
inline VoxelGrid carve_freespace(const DepthMap& depth, const Camera& cam, const VoxelGrid& spec) {
  if (depth.width != cam.width || depth.height != cam.height)
    throw std::invalid_argument("carve_freespace: depth/camera dimension mismatch");

  VoxelGrid grid(spec.dims, spec.origin, spec.voxel_size, 1.0);
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      const float d = depth.at(u, v);
      if (d <= 0.0f) continue;
      const auto ray = cam.pixel_ray(u, v);
      const double surface_t = static_cast<double>(d) * ray.depth_scale;
      const auto samples = traverse(ray.origin, ray.dir, grid, std::numeric_limits<double>::infinity());
      for (std::size_t k = 0; k < samples.size(); ++k) {
        // exit distance of the last voxel is the ray's grid exit
        double exit_t;
        if (k + 1 < samples.size()) {
          exit_t = samples[k + 1].entry;
        } else {
          double t_enter, t_exit;
          detail::ray_aabb(ray.origin, ray.dir, grid, t_enter, t_exit);
          exit_t = t_exit;
        }
        if (exit_t < surface_t)
          grid.values[static_cast<std::size_t>(samples[k].voxel)] = 0.0;
        else
          break;
      }
    }
  }
  return grid;
}

enum class Completer { kIdentity, kDiffusion };

inline Completer completer_from_string(const std::string& s) {
  if (s == "identity") return Completer::kIdentity;
  if (s == "diffusion") return Completer::kDiffusion;
  throw std::invalid_argument("unknown completer: " + s);
}

struct CompleteParams {
  int out_factor = 4;        // output dims = input dims / out_factor per axis
  int diffusion_iters = 200;
};

namespace detail {

/// Downsamples the observation to output resolution: any occupied fine voxel
/// makes the coarse voxel occupied (0), otherwise any carved-free fine voxel
/// makes it free (1), otherwise it is unknown. Returns per-voxel labels:
/// 0 occupied, 1 free, 2 unknown.
inline std::vector<int> pool_labels(const VolumeObservation& obs, int f, VoxelGrid& out) {
  const auto& in = obs.occupied;
  if (in.dims[0] % f || in.dims[1] % f || in.dims[2] % f)
    throw std::invalid_argument("complete: dims not divisible by out_factor");
  const std::array<int, 3> od{in.dims[0] / f, in.dims[1] / f, in.dims[2] / f};
  out = VoxelGrid(od, in.origin, in.voxel_size * f, 0.5);

  std::vector<int> labels(out.size(), 2);
  for (int z = 0; z < od[2]; ++z)
    for (int y = 0; y < od[1]; ++y)
      for (int x = 0; x < od[0]; ++x) {
        bool any_occ = false, any_free = false;
        for (int dz = 0; dz < f && !any_occ; ++dz)
          for (int dy = 0; dy < f && !any_occ; ++dy)
            for (int dx = 0; dx < f && !any_occ; ++dx) {
              const std::size_t i = in.index(x * f + dx, y * f + dy, z * f + dz);
              any_occ = obs.is_occupied(i);
              any_free = any_free || obs.is_free(i);
            }
        const std::size_t o = out.index(x, y, z);
        if (any_occ) {
          labels[o] = 0;
          out.values[o] = 0.0;
        } else if (any_free) {
          labels[o] = 1;
          out.values[o] = 1.0;
        }
      }
  return labels;
}

}  // namespace detail

/// Volumetric completion stand-in: maps a partial observation to a
/// probability-empty grid at output resolution. Occupied voxels map to 0,
/// carved-free to 1; unknown voxels get 0.5 (identity) or the Jacobi-relaxed
/// harmonic interpolant between the known boundaries (diffusion).
inline VoxelGrid complete(const VolumeObservation& obs, Completer method,
                          const CompleteParams& params = {}) {
  VoxelGrid out;
  std::vector<int> labels = detail::pool_labels(obs, params.out_factor, out);
  if (method == Completer::kIdentity) return out;

  // Jacobi sweeps with Dirichlet boundaries; double buffered, so the result
  // is independent of traversal order.
  VoxelGrid next = out;
  for (int it = 0; it < params.diffusion_iters; ++it) {
    for (int z = 0; z < out.dims[2]; ++z)
      for (int y = 0; y < out.dims[1]; ++y)
        for (int x = 0; x < out.dims[0]; ++x) {
          const std::size_t i = out.index(x, y, z);
          if (labels[i] != 2) continue;
          double sum = 0.0;
          int n = 0;
          const int nb[6][3] = {{x - 1, y, z}, {x + 1, y, z}, {x, y - 1, z},
                                {x, y + 1, z}, {x, y, z - 1}, {x, y, z + 1}};
          for (const auto& q : nb) {
            if (!out.in_bounds(q[0], q[1], q[2])) continue;
            sum += out.values[out.index(q[0], q[1], q[2])];
            ++n;
          }
          if (n > 0) next.values[i] = sum / n;
        }
    std::swap(out.values, next.values);
  }
  return out;
}

}  // namespace viewfill
