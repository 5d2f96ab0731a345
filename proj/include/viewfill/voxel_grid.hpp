#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

namespace viewfill {

/// Axis-aligned grid of per-voxel "probability empty" values in [0,1].
/// 0 = certainly occupied, 1 = certainly empty. Values are stored x-fastest,
/// then y, then z: index = x + nx*(y + ny*z).
struct VoxelGrid {
  std::array<int, 3> dims{0, 0, 0};
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();  // world position of the min corner
  double voxel_size = 0.0;
  std::vector<double> values;

  VoxelGrid() = default;

  VoxelGrid(std::array<int, 3> d, const Eigen::Vector3d& org, double vsize, double fill = 1.0)
      : dims(d), origin(org), voxel_size(vsize) {
    if (dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0)
      throw std::invalid_argument("VoxelGrid: dims must be positive");
    if (!(voxel_size > 0.0))
      throw std::invalid_argument("VoxelGrid: voxel_size must be positive");
    values.assign(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2], clamp01(fill));
  }

  static double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

  std::size_t size() const { return values.size(); }

  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(dims[0]) * (static_cast<std::size_t>(y) +
                                                static_cast<std::size_t>(dims[1]) * z);
  }

  bool in_bounds(int x, int y, int z) const {
    return x >= 0 && x < dims[0] && y >= 0 && y < dims[1] && z >= 0 && z < dims[2];
  }

  double at(int x, int y, int z) const { return values[index(x, y, z)]; }
  void set(int x, int y, int z, double v) { values[index(x, y, z)] = clamp01(v); }

  Eigen::Vector3d min_corner() const { return origin; }
  Eigen::Vector3d max_corner() const {
    return origin + voxel_size * Eigen::Vector3d(dims[0], dims[1], dims[2]);
  }

  /// Center of voxel (x,y,z) in world coordinates.
  Eigen::Vector3d voxel_center(int x, int y, int z) const {
    return origin + voxel_size * Eigen::Vector3d(x + 0.5, y + 0.5, z + 0.5);
  }

  bool same_layout(const VoxelGrid& o) const {
    return dims == o.dims && (origin - o.origin).norm() < 1e-12 * (1.0 + origin.norm()) &&
           std::abs(voxel_size - o.voxel_size) < 1e-12 * voxel_size;
  }
};

}  // namespace viewfill
