#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Geometry>

#include "viewfill/geometry.hpp"

namespace viewfill {

/// Procedural indoor scene: floor, 2-4 walls, and furniture, all axis-aligned
/// boxes (walls and floor are thin slabs). `room` is the interior air volume.
struct Scene {
  std::uint64_t seed = 0;
  std::vector<Aabb> boxes;
  Aabb room;

  Aabb bounds() const {
    if (boxes.empty()) throw std::logic_error("Scene: no primitives");
    Aabb b = boxes.front();
    for (const Aabb& x : boxes) {
      b.min = b.min.cwiseMin(x.min);
      b.max = b.max.cwiseMax(x.max);
    }
    return b;
  }
};

struct SceneGenParams {
  double room_min = 3.0, room_max = 6.0;        // floor side lengths, meters
  double wall_height_min = 2.2, wall_height_max = 3.0;
  double thickness = 0.1;                        // floor/wall slab thickness
  int furniture_min = 3, furniture_max = 8;
  double furn_size_min = 0.3, furn_size_max = 1.2;
  double furn_height_min = 0.3, furn_height_max = 1.5;
  int placement_attempts = 1000;

  void validate() const {
    if (!(room_min > 0.0) || room_max < room_min || wall_height_max < wall_height_min ||
        !(wall_height_min > 0.0) || !(thickness > 0.0) || furniture_min < 0 ||
        furniture_max < furniture_min || !(furn_size_min > 0.0) || furn_size_max < furn_size_min ||
        !(furn_height_min > 0.0) || furn_height_max < furn_height_min || placement_attempts < 1)
      throw std::invalid_argument("SceneGenParams: invalid range");
  }
};

namespace detail {

inline bool interiors_overlap(const Aabb& a, const Aabb& b) {
  return (a.min.array() < b.max.array()).all() && (b.min.array() < a.max.array()).all();
}

/// Smallest positive hit parameter along unit ray o + t*d, or -1 on miss.
/// A ray starting inside the box hits its inner surface (the exit point).
inline double ray_box_hit(const Vec3& o, const Vec3& d, const Aabb& box) {
  double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-15) {
      if (o[a] < box.min[a] || o[a] > box.max[a]) return -1.0;
      continue;
    }
    double ta = (box.min[a] - o[a]) / d[a];
    double tb = (box.max[a] - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (t0 > t1) return -1.0;
  if (t0 > 1e-9) return t0;
  return t1 > 1e-9 ? t1 : -1.0;
}

}  // namespace detail

/// Deterministic in seed. Furniture is placed on the floor by rejection
/// sampling so that no two furniture pieces interpenetrate; throws after
/// `placement_attempts` failed tries for one piece.
inline Scene generate_scene(std::uint64_t seed, const SceneGenParams& p = {}) {
  p.validate();
  std::mt19937_64 rng(seed);
  auto uni = [&rng](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };

  const double w = uni(p.room_min, p.room_max);
  const double l = uni(p.room_min, p.room_max);
  const double h = uni(p.wall_height_min, p.wall_height_max);
  const double th = p.thickness;

  Scene s;
  s.seed = seed;
  s.room = Aabb{Vec3(0, 0, 0), Vec3(w, l, h)};
  s.boxes.push_back(Aabb{Vec3(0, 0, -th), Vec3(w, l, 0)});  // floor, top face at z=0

  const Aabb wall_slots[4] = {
      {Vec3(-th, 0, 0), Vec3(0, l, h)},      // x = 0
      {Vec3(w, 0, 0), Vec3(w + th, l, h)},   // x = w
      {Vec3(0, -th, 0), Vec3(w, 0, h)},      // y = 0
      {Vec3(0, l, 0), Vec3(w, l + th, h)},   // y = l
  };
  int order[4] = {0, 1, 2, 3};
  for (int i = 3; i > 0; --i) {
    const int j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(order[i], order[j]);
  }
  const int n_walls = 2 + static_cast<int>(rng() % 3);
  for (int i = 0; i < n_walls; ++i) s.boxes.push_back(wall_slots[order[i]]);

  const int n_furn =
      p.furniture_min +
      static_cast<int>(rng() % static_cast<std::uint64_t>(p.furniture_max - p.furniture_min + 1));
  std::vector<Aabb> furniture;
  for (int i = 0; i < n_furn; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < p.placement_attempts && !placed; ++attempt) {
      const double sx = std::min(uni(p.furn_size_min, p.furn_size_max), w - 0.4);
      const double sy = std::min(uni(p.furn_size_min, p.furn_size_max), l - 0.4);
      const double sz = uni(p.furn_height_min, p.furn_height_max);
      const double x0 = uni(0.1, w - sx - 0.1);
      const double y0 = uni(0.1, l - sy - 0.1);
      const Aabb cand{Vec3(x0, y0, 0), Vec3(x0 + sx, y0 + sy, sz)};
      bool clear = true;
      for (const Aabb& f : furniture)
        if (detail::interiors_overlap(cand, f)) {
          clear = false;
          break;
        }
      if (clear) {
        furniture.push_back(cand);
        placed = true;
      }
    }
    if (!placed) throw std::runtime_error("generate_scene: furniture placement failed");
  }
  s.boxes.insert(s.boxes.end(), furniture.begin(), furniture.end());
  return s;
}

/// Exact per-pixel nearest-hit depth (analytic ray/box intersection).
/// Pixels whose ray misses every primitive are holes.
inline DepthMap ray_cast_scene(const Scene& scene, const Camera& cam) {
  cam.validate();
  DepthMap out(cam.width, cam.height, 0.0f);
  for (int v = 0; v < cam.height; ++v) {
    for (int u = 0; u < cam.width; ++u) {
      const Camera::PixelRay pr = cam.pixel_ray(u, v);
      double best = std::numeric_limits<double>::infinity();
      for (const Aabb& box : scene.boxes) {
        const double t = detail::ray_box_hit(pr.origin, pr.dir, box);
        if (t > 0.0 && t < best) best = t;
      }
      if (std::isfinite(best)) out.at(u, v) = static_cast<float>(best / pr.depth_scale);
    }
  }
  return out;
}

/// n points drawn area-uniformly from the union of all box faces.
inline PointCloud sample_surface(const Scene& scene, std::size_t n, std::uint64_t seed) {
  struct Face {
    const Aabb* box;
    int axis;   // normal axis
    int side;   // 0 = min face, 1 = max face
    double cum; // cumulative area
  };
  std::vector<Face> faces;
  double total = 0.0;
  for (const Aabb& b : scene.boxes) {
    const Vec3 e = b.extent();
    for (int axis = 0; axis < 3; ++axis) {
      const double area = e[(axis + 1) % 3] * e[(axis + 2) % 3];
      for (int side = 0; side < 2; ++side) {
        total += area;
        faces.push_back({&b, axis, side, total});
      }
    }
  }
  if (!(total > 0.0)) throw std::invalid_argument("sample_surface: degenerate scene");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pick(0.0, total);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  PointCloud cloud;
  cloud.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = pick(rng);
    const auto it = std::lower_bound(faces.begin(), faces.end(), r,
                                     [](const Face& f, double x) { return f.cum < x; });
    const Face& f = it == faces.end() ? faces.back() : *it;
    const int a1 = (f.axis + 1) % 3, a2 = (f.axis + 2) % 3;
    Vec3 p;
    p[f.axis] = f.side ? f.box->max[f.axis] : f.box->min[f.axis];
    p[a1] = f.box->min[a1] + unit(rng) * (f.box->max[a1] - f.box->min[a1]);
    p[a2] = f.box->min[a2] + unit(rng) * (f.box->max[a2] - f.box->min[a2]);
    cloud.points.push_back(p);
  }
  return cloud;
}

struct InitialViewParams {
  int width = 512, height = 512;
  double vfov_deg = 60.0;
  double eye_height_min = 1.2, eye_height_max = 1.8;
  double margin = 0.3;          // minimum eye distance from the room boundary
  double pitch_min_deg = -25.0; // downward
  double pitch_max_deg = 5.0;
  double min_depth = 0.5;       // hits closer than this count as occlusion
  double max_close_frac = 0.8;  // reject views mostly occluded by near geometry
  double min_valid_frac = 0.2;  // reject views mostly looking out of the room
  int max_tries = 64;
  int probe_res = 64;           // rejection renders run at this resolution
};

/// Rejection-samples an interior camera for the initial observation.
inline Camera sample_initial_view(const Scene& scene, std::mt19937_64& rng,
                                  const InitialViewParams& p = {}) {
  auto uni = [&rng](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  const Vec3 rmin = scene.room.min, rmax = scene.room.max;
  for (int attempt = 0; attempt < p.max_tries; ++attempt) {
    const Vec3 eye(uni(rmin.x() + p.margin, rmax.x() - p.margin),
                   uni(rmin.y() + p.margin, rmax.y() - p.margin),
                   std::min(uni(p.eye_height_min, p.eye_height_max), rmax.z() - 0.1));
    const double yaw = uni(0.0, 2.0 * std::numbers::pi);
    const double pitch = uni(p.pitch_min_deg, p.pitch_max_deg) * std::numbers::pi / 180.0;
    const Vec3 dir(std::cos(pitch) * std::cos(yaw), std::cos(pitch) * std::sin(yaw),
                   std::sin(pitch));
    Camera cam = Camera::look_at(eye, eye + dir, p.width, p.height, p.vfov_deg);

    const DepthMap probe = ray_cast_scene(scene, cam.resized(p.probe_res, p.probe_res));
    std::size_t n_valid = 0, n_close = 0;
    for (float d : probe.data) {
      if (d > 0.0f) ++n_valid;
      if (d > 0.0f && d < p.min_depth) ++n_close;
    }
    const double total = static_cast<double>(probe.data.size());
    if (n_valid / total >= p.min_valid_frac && n_close / total <= p.max_close_frac) return cam;
  }
  throw std::runtime_error("sample_initial_view: no acceptable view found");
}

/// Camera rotated by at most max_deg (random axis) and translated by at most
/// max_t meters. Zero bounds return the input unchanged.
inline Camera jitter_camera(const Camera& cam, std::mt19937_64& rng, double max_deg, double max_t) {
  if (max_deg <= 0.0 && max_t <= 0.0) return cam;
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Vec3 axis(gauss(rng), gauss(rng), gauss(rng));
  if (axis.norm() < 1e-12) axis = Vec3(0, 0, 1);
  axis.normalize();
  const double angle = unit(rng) * max_deg * std::numbers::pi / 180.0;
  Vec3 shift(gauss(rng), gauss(rng), gauss(rng));
  if (shift.norm() < 1e-12) shift = Vec3(1, 0, 0);
  shift = shift.normalized() * (unit(rng) * max_t);

  Camera out = cam;
  const Eigen::Matrix3d delta = Eigen::AngleAxisd(angle, axis).toRotationMatrix();
  const Vec3 eye = cam.pose.camera_center() + shift;
  out.pose.R = delta * cam.pose.R;
  out.pose.t = -(out.pose.R * eye);
  return out;
}

struct TrainingSampleParams {
  int m = 4;                 // nearby views per sample
  double jitter_deg = 15.0;
  double jitter_m = 0.3;
  double distance_scale = 2.0;
  int action_width = 512, action_height = 512;
  double action_vfov_deg = 60.0;
};

/// One dataset entry: the observed input view, m jittered views near it, and
/// ground truth at the 20 action-space views anchored to the input cloud's
/// bounding sphere.
struct TrainingSample {
  Camera input_cam;
  DepthMap input;
  std::vector<Camera> nearby_cams;
  std::vector<DepthMap> nearby;
  BoundingSphere sphere;
  std::vector<Camera> action_cams;
  std::vector<DepthMap> action_gt;
};

inline TrainingSample make_training_sample(const Scene& scene, const Camera& base_cam,
                                           const TrainingSampleParams& p, std::mt19937_64& rng) {
  if (p.m < 1) throw std::invalid_argument("make_training_sample: m must be >= 1");
  TrainingSample s;
  s.input_cam = base_cam;
  s.input = ray_cast_scene(scene, base_cam);
  if (s.input.valid_count() == 0)
    throw std::runtime_error("make_training_sample: input view sees nothing");

  for (int k = 0; k < p.m; ++k) {
    s.nearby_cams.push_back(jitter_camera(base_cam, rng, p.jitter_deg, p.jitter_m));
    s.nearby.push_back(ray_cast_scene(scene, s.nearby_cams.back()));
  }

  s.sphere = bounding_sphere(unproject(s.input, base_cam));
  s.action_cams = sample_action_views(s.sphere, p.distance_scale, p.action_width, p.action_height,
                                      p.action_vfov_deg);
  for (const Camera& cam : s.action_cams) s.action_gt.push_back(ray_cast_scene(scene, cam));
  return s;
}

}  // namespace viewfill
