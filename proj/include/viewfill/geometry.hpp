#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "viewfill/voxel_grid.hpp"

namespace viewfill {

using Vec3 = Eigen::Vector3d;

// Conventions used throughout:
//  - world frame: meters, +z up
//  - camera frame: +z forward, +x right, +y down
//  - pixel (u,v): u = column, v = row, row 0 is the top of the image;
//    the ray of pixel (u,v) passes through ((u-cx)/fx, (v-cy)/fy, 1) in
//    camera coordinates, so the principal point lies on the optical axis
//  - depth = camera-frame z coordinate (not Euclidean ray length)
//  - depth value 0.0 is the hole sentinel; valid depths are strictly positive

/// Rigid transform world -> camera: x_cam = R * x_world + t.
struct Pose {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Vec3 t = Vec3::Zero();

  Vec3 world_to_camera(const Vec3& p) const { return R * p + t; }
  Vec3 camera_to_world(const Vec3& p) const { return R.transpose() * (p - t); }
  Vec3 camera_center() const { return -(R.transpose() * t); }

  bool is_rigid(double tol = 1e-6) const {
    const Eigen::Matrix3d err = R * R.transpose() - Eigen::Matrix3d::Identity();
    return err.cwiseAbs().maxCoeff() <= tol && std::abs(R.determinant() - 1.0) <= tol;
  }
};

struct Camera {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;
  Pose pose;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw std::invalid_argument("Camera: focal lengths must be positive");
    if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height))
      throw std::invalid_argument("Camera: principal point outside image");
    if (width <= 0 || height <= 0) throw std::invalid_argument("Camera: non-positive image size");
    if (!pose.is_rigid()) throw std::invalid_argument("Camera: pose rotation is not a proper rotation");
  }

  /// Camera with identical pose and field of view at a different resolution.
  Camera resized(int new_w, int new_h) const {
    Camera c = *this;
    const double sx = static_cast<double>(new_w) / width;
    const double sy = static_cast<double>(new_h) / height;
    c.fx = fx * sx;
    c.fy = fy * sy;
    c.cx = cx * sx;
    c.cy = cy * sy;
    c.width = new_w;
    c.height = new_h;
    return c;
  }

  /// Unit-direction world ray through pixel (u,v). depth_scale converts a
  /// z-depth d to the parameter along the unit direction: t = d * depth_scale.
  struct PixelRay {
    Vec3 origin;
    Vec3 dir;
    double depth_scale;
  };

  PixelRay pixel_ray(double u, double v) const {
    const Vec3 dir_cam((u - cx) / fx, (v - cy) / fy, 1.0);
    const double n = dir_cam.norm();
    return PixelRay{pose.camera_center(), pose.R.transpose() * (dir_cam / n), n};
  }

  /// World point of pixel (u,v) at z-depth d.
  Vec3 unproject_pixel(double u, double v, double d) const {
    const Vec3 p_cam(d * (u - cx) / fx, d * (v - cy) / fy, d);
    return pose.camera_to_world(p_cam);
  }

  struct Projection {
    double u, v, depth;
  };

  /// Projects a world point; nullopt if it lies at or behind the camera plane.
  std::optional<Projection> project(const Vec3& p_world) const {
    const Vec3 p = pose.world_to_camera(p_world);
    if (!(p.z() > 0.0)) return std::nullopt;
    return Projection{fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy, p.z()};
  }

  /// Camera at `eye` looking at `center`, world +z as the up hint,
  /// square pixels with the given vertical field of view.
  static Camera look_at(const Vec3& eye, const Vec3& center, int width, int height,
                        double vfov_deg, const Vec3& up_hint = Vec3(0, 0, 1)) {
    const Vec3 forward = (center - eye).normalized();
    Vec3 right = forward.cross(up_hint);
    const double rn = right.norm();
    if (rn < 1e-12) throw std::invalid_argument("look_at: view direction parallel to up");
    right /= rn;
    const Vec3 down = forward.cross(right);  // +y in camera frame points down

    Camera cam;
    cam.width = width;
    cam.height = height;
    cam.fy = 0.5 * height / std::tan(0.5 * vfov_deg * std::numbers::pi / 180.0);
    cam.fx = cam.fy;
    cam.cx = 0.5 * width;
    cam.cy = 0.5 * height;
    cam.pose.R.row(0) = right.transpose();
    cam.pose.R.row(1) = down.transpose();
    cam.pose.R.row(2) = forward.transpose();
    cam.pose.t = -(cam.pose.R * eye);
    return cam;
  }
};

/// 2D raster of metric depths. 0.0 marks a hole.
struct DepthMap {
  int width = 0, height = 0;
  std::vector<float> data;

  DepthMap() = default;
  DepthMap(int w, int h, float fill = 0.0f) : width(w), height(h) {
    if (w <= 0 || h <= 0) throw std::invalid_argument("DepthMap: non-positive size");
    data.assign(static_cast<std::size_t>(w) * h, fill);
  }

  float at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  float& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  bool valid(int x, int y) const { return at(x, y) > 0.0f; }

  std::size_t valid_count() const {
    std::size_t n = 0;
    for (float d : data) n += (d > 0.0f);
    return n;
  }
};

/// Per-pixel boolean raster (hole masks, silhouettes, fill regions).
struct Mask {
  int width = 0, height = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(int w, int h, bool fill = false) : width(w), height(h) {
    if (w <= 0 || h <= 0) throw std::invalid_argument("Mask: non-positive size");
    bits.assign(static_cast<std::size_t>(w) * h, fill ? 1 : 0);
  }

  bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v) { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }

  std::size_t count() const {
    std::size_t n = 0;
    for (auto b : bits) n += (b != 0);
    return n;
  }
};

/// Unordered set of 3D points. `provenance`, when non-empty, parallels
/// `points` and records the pipeline iteration at which each point was added.
struct PointCloud {
  std::vector<Vec3> points;
  std::vector<std::int32_t> provenance;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_provenance() const { return !provenance.empty(); }

  void append(const PointCloud& other, std::int32_t iter) {
    if (provenance.empty() && !points.empty())
      provenance.assign(points.size(), 0);  // retrofit: pre-existing points are iteration 0
    points.insert(points.end(), other.points.begin(), other.points.end());
    if (!provenance.empty() || !other.points.empty())
      provenance.insert(provenance.end(), other.points.size(), iter);
  }
};

struct BoundingSphere {
  Vec3 center = Vec3::Zero();
  double radius = 0.0;
};

struct Aabb {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
  Vec3 center() const { return 0.5 * (min + max); }
  Vec3 extent() const { return max - min; }
  bool overlaps(const Aabb& o) const {
    return (min.array() <= o.max.array()).all() && (max.array() >= o.min.array()).all();
  }
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// One world point per valid pixel (restricted to `only_mask` when given),
/// placed at the pixel's depth along its camera ray.
inline PointCloud unproject(const DepthMap& depth, const Camera& cam, const Mask* only_mask = nullptr) {
  if (depth.width != cam.width || depth.height != cam.height)
    throw std::invalid_argument("unproject: depth/camera dimension mismatch");
  if (only_mask && (only_mask->width != depth.width || only_mask->height != depth.height))
    throw std::invalid_argument("unproject: mask dimension mismatch");

  PointCloud cloud;
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      const float d = depth.at(u, v);
      if (d <= 0.0f) continue;
      if (only_mask && !only_mask->at(u, v)) continue;
      cloud.points.push_back(cam.unproject_pixel(u, v, d));
    }
  }
  return cloud;
}

/// Writes `pt` into the z-buffer `out` with a (2r+1)^2 splat around its
/// projection. Skips points behind the camera or projecting outside the image.
inline void splat_point(const Vec3& pt, const Camera& cam, int splat_radius, DepthMap& out) {
  const auto proj = cam.project(pt);
  if (!proj) return;
  const int u0 = static_cast<int>(std::lround(proj->u));
  const int v0 = static_cast<int>(std::lround(proj->v));
  if (u0 < 0 || u0 >= cam.width || v0 < 0 || v0 >= cam.height) return;
  const float d = static_cast<float>(proj->depth);
  const int r = splat_radius;
  for (int v = std::max(0, v0 - r); v <= std::min(cam.height - 1, v0 + r); ++v) {
    for (int u = std::max(0, u0 - r); u <= std::min(cam.width - 1, u0 + r); ++u) {
      float& cell = out.at(u, v);
      if (cell <= 0.0f || d < cell) cell = d;
    }
  }
}

/// Z-buffered nearest-depth splatting. Pixels receiving no point are holes.
inline DepthMap render_depth(const PointCloud& cloud, const Camera& cam, int splat_radius) {
  if (splat_radius < 0) throw std::invalid_argument("render_depth: negative splat radius");
  DepthMap out(cam.width, cam.height, 0.0f);
  for (const Vec3& pt : cloud.points) splat_point(pt, cam, splat_radius, out);
  return out;
}

/// Center = centroid of the axis-aligned bounding box, radius = max distance
/// from it to any point. Not the minimal enclosing sphere.
inline BoundingSphere bounding_sphere(const PointCloud& cloud) {
  if (cloud.empty()) throw std::invalid_argument("bounding_sphere: empty cloud");
  Vec3 lo = cloud.points.front(), hi = cloud.points.front();
  for (const Vec3& p : cloud.points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  BoundingSphere s;
  s.center = 0.5 * (lo + hi);
  double r2 = 0.0;
  for (const Vec3& p : cloud.points) r2 = std::max(r2, (p - s.center).squaredNorm());
  s.radius = std::sqrt(r2);
  return s;
}

inline constexpr int kActionViewCount = 20;

/// The fixed scene-centric action space: 10 cameras on the equator of the
/// bounding sphere and 10 on the +45 degree latitude circle, azimuth steps of
/// 36 degrees starting at 0, each at distance_scale * radius from the center
/// and looking at it. Equator views are indices 0..9, 45-degree views 10..19.
inline std::vector<Camera> sample_action_views(const BoundingSphere& sphere, double distance_scale,
                                               int width = 512, int height = 512,
                                               double vfov_deg = 60.0) {
  if (!(sphere.radius > 0.0)) throw std::invalid_argument("sample_action_views: degenerate sphere");
  if (!(distance_scale >= 1.0)) throw std::invalid_argument("sample_action_views: distance_scale < 1");

  const double dist = distance_scale * sphere.radius;
  std::vector<Camera> views;
  views.reserve(kActionViewCount);
  for (int ring = 0; ring < 2; ++ring) {
    const double elev = ring == 0 ? 0.0 : std::numbers::pi / 4.0;
    for (int k = 0; k < 10; ++k) {
      const double az = k * (2.0 * std::numbers::pi / 10.0);
      const Vec3 offset(std::cos(elev) * std::cos(az), std::cos(elev) * std::sin(az), std::sin(elev));
      views.push_back(Camera::look_at(sphere.center + dist * offset, sphere.center, width, height, vfov_deg));
    }
  }
  return views;
}

/// Occupancy voxelization: 0 ("certainly occupied") where at least one point
/// falls inside, 1 elsewhere. The grid is cubic-celled: voxel_size is the
/// largest per-axis extent/dims ratio, anchored at bounds.min, so the grid
/// covers all of `bounds`. Points outside `bounds` are ignored.
inline VoxelGrid voxelize(const PointCloud& cloud, std::array<int, 3> dims, const Aabb& bounds) {
  if (dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0)
    throw std::invalid_argument("voxelize: dims must be positive");
  const Vec3 ext = bounds.extent();
  if (!(ext.minCoeff() > 0.0)) throw std::invalid_argument("voxelize: degenerate bounds");

  const double vsize = std::max({ext.x() / dims[0], ext.y() / dims[1], ext.z() / dims[2]});
  VoxelGrid grid(dims, bounds.min, vsize, 1.0);
  for (const Vec3& p : cloud.points) {
    if (!bounds.contains(p)) continue;
    const Vec3 rel = (p - bounds.min) / vsize;
    const int x = std::min(dims[0] - 1, static_cast<int>(rel.x()));
    const int y = std::min(dims[1] - 1, static_cast<int>(rel.y()));
    const int z = std::min(dims[2] - 1, static_cast<int>(rel.z()));
    grid.values[grid.index(x, y, z)] = 0.0;
  }
  return grid;
}

/// True exactly where depth == 0.
inline Mask hole_mask(const DepthMap& depth) {
  Mask m(depth.width, depth.height);
  for (std::size_t i = 0; i < depth.data.size(); ++i) m.bits[i] = depth.data[i] <= 0.0f ? 1 : 0;
  return m;
}

}  // namespace viewfill
