#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include <viewfill/projection.hpp>

using namespace viewfill;

namespace {

Camera tiny_camera(int res = 24) {
  Camera cam;
  cam.fx = cam.fy = res * 0.9;
  cam.cx = cam.cy = res / 2.0;
  cam.width = cam.height = res;
  return cam;
}

VoxelGrid random_grid(int n, std::uint64_t seed, double lo = 0.05, double hi = 0.95) {
  VoxelGrid g({n, n, n}, Vec3(-0.5 * n, -0.5 * n, 4.0), 1.0);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : g.values) v = u(rng);
  return g;
}

// Dense ray marching at step voxel_size/16: the voxel index sequence a ray
// visits, independent of the DDA stepping logic under test. Can miss voxels
// the ray clips for less than half a step near corners.
std::vector<std::int32_t> march_voxels(const Vec3& origin, const Vec3& dir, const VoxelGrid& g,
                                       double d_max) {
  std::vector<std::int32_t> seq;
  const double step = g.voxel_size / 16.0;
  const Vec3 lo = g.min_corner(), hi = g.max_corner();
  for (double t = step / 2.0; t < d_max; t += step) {
    const Vec3 p = origin + t * dir;
    if ((p.array() <= lo.array()).any() || (p.array() >= hi.array()).any()) continue;
    const int x = static_cast<int>((p.x() - g.origin.x()) / g.voxel_size);
    const int y = static_cast<int>((p.y() - g.origin.y()) / g.voxel_size);
    const int z = static_cast<int>((p.z() - g.origin.z()) / g.voxel_size);
    const auto idx = static_cast<std::int32_t>(g.index(x, y, z));
    if (seq.empty() || seq.back() != idx) seq.push_back(idx);
  }
  return seq;
}

// Exact oracle: collect every axis-plane crossing parameter inside the grid
// interval, sort globally, and identify each sub-interval's voxel from its
// midpoint. No incremental stepping, so errors cannot correlate with the
// implementation under test.
std::vector<RaySample> crossing_oracle(const Vec3& origin, const Vec3& dir, const VoxelGrid& g,
                                       double d_max) {
  double t0, t1;
  if (!viewfill::detail::ray_aabb(origin, dir, g, t0, t1)) return {};
  t1 = std::min(t1, d_max);
  if (t0 >= t1) return {};

  std::vector<double> ts{t0, t1};
  for (int a = 0; a < 3; ++a) {
    if (dir[a] == 0.0) continue;
    for (int i = 0; i <= g.dims[a]; ++i) {
      const double t = (g.origin[a] + i * g.voxel_size - origin[a]) / dir[a];
      if (t > t0 && t < t1) ts.push_back(t);
    }
  }
  std::sort(ts.begin(), ts.end());

  std::vector<RaySample> out;
  for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
    if (ts[i + 1] - ts[i] <= 1e-12) continue;  // corner tie: zero-length interval
    const Vec3 p = origin + 0.5 * (ts[i] + ts[i + 1]) * dir;
    const int x = static_cast<int>(std::floor((p.x() - g.origin.x()) / g.voxel_size));
    const int y = static_cast<int>(std::floor((p.y() - g.origin.y()) / g.voxel_size));
    const int z = static_cast<int>(std::floor((p.z() - g.origin.z()) / g.voxel_size));
    if (!g.in_bounds(x, y, z)) continue;
    out.push_back({static_cast<std::int32_t>(g.index(x, y, z)), ts[i]});
  }
  return out;
}

}  // namespace

TEST(Traverse, AxisAlignedRowIsEvenlySpaced) {
  VoxelGrid g({5, 1, 1}, Vec3::Zero(), 0.5);
  const auto samples = traverse(Vec3(-1.0, 0.25, 0.25), Vec3(1, 0, 0), g, 100.0);
  ASSERT_EQ(samples.size(), 5u);
  for (int k = 0; k < 5; ++k) {
    EXPECT_EQ(samples[k].voxel, k);
    EXPECT_NEAR(samples[k].entry, 1.0 + 0.5 * k, 1e-12);
  }
}

TEST(Traverse, MissAndTruncation) {
  VoxelGrid g({5, 1, 1}, Vec3::Zero(), 0.5);
  EXPECT_TRUE(traverse(Vec3(-1.0, 2.0, 0.25), Vec3(1, 0, 0), g, 100.0).empty());
  EXPECT_TRUE(traverse(Vec3(-1.0, 0.25, 0.25), Vec3(-1, 0, 0), g, 100.0).empty());
  // d_max cuts the walk: only entries strictly below it are reported.
  EXPECT_EQ(traverse(Vec3(-1.0, 0.25, 0.25), Vec3(1, 0, 0), g, 1.6).size(), 2u);
  EXPECT_THROW(traverse(Vec3::Zero(), Vec3(2, 0, 0), g, 1.0), std::invalid_argument);
  EXPECT_THROW(traverse(Vec3::Zero(), Vec3(1, 0, 0), g, 0.0), std::invalid_argument);
}

TEST(Traverse, StartInsideGridBeginsAtZero) {
  VoxelGrid g({4, 4, 4}, Vec3::Zero(), 1.0);
  const auto samples = traverse(Vec3(1.5, 1.5, 1.5), Vec3(0, 0, 1), g, 100.0);
  ASSERT_EQ(samples.size(), 3u);
  EXPECT_EQ(samples[0].entry, 0.0);
  EXPECT_EQ(samples[0].voxel, static_cast<std::int32_t>(g.index(1, 1, 1)));
}

TEST(Traverse, MatchesCrossingAndMarchingOracles) {
  auto rng = std::mt19937_64(21);
  std::uniform_real_distribution<double> pos(-6.0, 6.0);
  std::normal_distribution<double> gauss;
  const VoxelGrid g = random_grid(6, 0);
  int nonempty = 0, march_exact = 0;
  for (int i = 0; i < 300; ++i) {
    const Vec3 origin(pos(rng), pos(rng), pos(rng) + 2.0);
    Vec3 dir(gauss(rng), gauss(rng), gauss(rng));
    if (dir.norm() < 1e-6) continue;
    dir.normalize();
    const double d_max = 5.0 + 20.0 * std::abs(gauss(rng));

    const auto samples = traverse(origin, dir, g, d_max);

    // Entry distances must strictly increase and stay within range.
    for (std::size_t k = 0; k + 1 < samples.size(); ++k)
      ASSERT_LT(samples[k].entry, samples[k + 1].entry);
    for (const RaySample& s : samples) ASSERT_LT(s.entry, d_max);

    // Exact oracle: same voxel sequence and entry distances.
    const auto exact = crossing_oracle(origin, dir, g, d_max);
    ASSERT_EQ(samples.size(), exact.size()) << "ray " << i;
    for (std::size_t k = 0; k < exact.size(); ++k) {
      EXPECT_EQ(samples[k].voxel, exact[k].voxel) << "ray " << i << " sample " << k;
      EXPECT_NEAR(samples[k].entry, exact[k].entry, 1e-9) << "ray " << i << " sample " << k;
    }

    // Dense marching: must be an in-order subsequence (it can only drop
    // voxels clipped for less than half its step), and usually equal.
    const auto marched = march_voxels(origin, dir, g, d_max);
    std::size_t j = 0;
    for (const std::int32_t idx : marched) {
      while (j < samples.size() && samples[j].voxel != idx) ++j;
      ASSERT_LT(j, samples.size()) << "ray " << i << ": marching found a voxel DDA missed";
      ++j;
    }
    if (marched.size() == samples.size()) ++march_exact;
    if (!samples.empty()) ++nonempty;
  }
  EXPECT_GT(nonempty, 50);
  EXPECT_GT(march_exact, 290);  // brief corner clips are rare
}

TEST(ExpectedDepth, TwoVoxelHandValue) {
  // Entries 1 and 2, background 3, both voxels half-empty:
  // D = 0.5*1 + 0.25*2 + 0.25*3 = 1.75 and the escape mass is 0.25.
  const std::vector<RaySample> samples{{0, 1.0}, {1, 2.0}};
  const std::vector<double> values{0.5, 0.5};
  double escape = 0.0;
  const double d = detail::expected_depth_ray(samples, values, 1.0, 3.0, &escape);
  EXPECT_DOUBLE_EQ(d, 1.75);
  EXPECT_DOUBLE_EQ(escape, 0.25);
}

TEST(ExpectedDepth, GradientHandValues) {
  // Closed form D = 1 + V1(1 + V2): dD/dV1 = 1 + V2 = 1.5, dD/dV2 = V1 = 0.5.
  const std::vector<RaySample> samples{{0, 1.0}, {1, 2.0}};
  const std::vector<double> values{0.5, 0.5};
  const auto grad = detail::expected_depth_ray_grad(samples, values, 1.0, 3.0);
  ASSERT_EQ(grad.size(), 2u);
  EXPECT_DOUBLE_EQ(grad[0], 1.5);
  EXPECT_DOUBLE_EQ(grad[1], 0.5);
}

TEST(ExpectedDepth, DepthScaleConvertsEntries) {
  // Oblique ray: entries are ray lengths, depths divide by depth_scale.
  const std::vector<RaySample> samples{{0, 2.0}};
  const std::vector<double> values{0.0};
  EXPECT_DOUBLE_EQ(detail::expected_depth_ray(samples, values, 2.0, 9.0), 1.0);
}

TEST(Project, AllEmptyGivesBackground) {
  const Camera cam = tiny_camera();
  VoxelGrid g({4, 4, 4}, Vec3(-2, -2, 3), 1.0, 1.0);
  Mask hit;
  const DepthMap d = project_expected_depth(g, cam, 50.0, &hit);
  for (float v : d.data) EXPECT_FLOAT_EQ(v, 50.0f);
  EXPECT_EQ(hit.count(), 0u);
}

TEST(Project, OpaqueVoxelReturnsEntryDepth) {
  const Camera cam = tiny_camera();
  VoxelGrid g({4, 4, 4}, Vec3(-2, -2, 3), 1.0, 1.0);
  g.set(2, 2, 1, 0.0);  // opaque voxel straddling the optical axis
  Mask hit;
  const DepthMap d = project_expected_depth(g, cam, 50.0, &hit);

  const int u = static_cast<int>(cam.cx), v = static_cast<int>(cam.cy);
  const auto ray = cam.pixel_ray(u, v);
  const auto samples = traverse(ray.origin, ray.dir, g, 1e9);
  double entry = -1.0;
  for (const RaySample& s : samples)
    if (s.voxel == static_cast<std::int32_t>(g.index(2, 2, 1))) entry = s.entry;
  ASSERT_GT(entry, 0.0);
  EXPECT_NEAR(d.at(u, v), entry / ray.depth_scale, 1e-6);
  EXPECT_TRUE(hit.at(u, v));
  EXPECT_FALSE(hit.at(0, 0));  // corner ray passes beside the voxel
}

TEST(Project, RejectsBackgroundInsideGrid) {
  const Camera cam = tiny_camera();
  const VoxelGrid g({4, 4, 4}, Vec3(-2, -2, 3), 1.0, 1.0);
  EXPECT_THROW(project_expected_depth(g, cam, 5.0, nullptr), std::invalid_argument);
}

TEST(Project, ProbabilityClosure) {
  const Camera cam = tiny_camera(32);
  const VoxelGrid g = random_grid(6, 2);
  auto rng = std::mt19937_64(22);
  std::uniform_real_distribution<double> pu(0.0, cam.width - 1.0), pv(0.0, cam.height - 1.0);
  int tested = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto ray = cam.pixel_ray(pu(rng), pv(rng));
    const auto samples = traverse(ray.origin, ray.dir, g, 1e9);
    if (samples.empty()) continue;
    ++tested;
    double p_sum = 0.0, transmit = 1.0;
    for (const RaySample& s : samples) {
      const double v = g.values[static_cast<std::size_t>(s.voxel)];
      p_sum += transmit * (1.0 - v);
      transmit *= v;
    }
    double escape = 0.0;
    detail::expected_depth_ray(samples, g.values, ray.depth_scale, 100.0, &escape);
    EXPECT_NEAR(p_sum + escape, 1.0, 1e-6);
    EXPECT_NEAR(escape, transmit, 1e-12);
  }
  EXPECT_GT(tested, 500);
}

TEST(Project, DepthBoundedByFirstEntryAndBackground) {
  const Camera cam = tiny_camera(16);
  const VoxelGrid g = random_grid(5, 3);
  const double d_bg = 60.0;
  const DepthMap d = project_expected_depth(g, cam, d_bg, nullptr);
  for (int v = 0; v < cam.height; ++v) {
    for (int u = 0; u < cam.width; ++u) {
      const auto ray = cam.pixel_ray(u, v);
      const auto samples = traverse(ray.origin, ray.dir, g, 1e9);
      if (samples.empty()) {
        EXPECT_FLOAT_EQ(d.at(u, v), static_cast<float>(d_bg));
      } else {
        EXPECT_GE(d.at(u, v), samples.front().entry / ray.depth_scale - 1e-6);
        EXPECT_LE(d.at(u, v), d_bg + 1e-6);
      }
    }
  }
}

TEST(Backward, MatchesFullImageFiniteDifferences) {
  // Scalar loss = sum of all pixel depths, evaluated per ray in double
  // precision (the float raster would quantize away the 1e-4 perturbation).
  const Camera cam = tiny_camera(16);
  VoxelGrid g = random_grid(8, 4);
  const double d_bg = 60.0;
  const std::vector<double> upstream(static_cast<std::size_t>(cam.width) * cam.height, 1.0);
  const auto grad = project_backward(g, cam, d_bg, upstream);

  auto loss = [&]() {
    double s = 0.0;
    for (int v = 0; v < cam.height; ++v) {
      for (int u = 0; u < cam.width; ++u) {
        const auto ray = cam.pixel_ray(u, v);
        const auto samples = traverse(ray.origin, ray.dir, g, 1e9);
        s += viewfill::detail::expected_depth_ray(samples, g.values, ray.depth_scale, d_bg);
      }
    }
    return s;
  };
  const double h = 1e-4;
  std::mt19937_64 rng(23);
  std::uniform_int_distribution<std::size_t> pick(0, g.size() - 1);
  int checked = 0;
  for (int i = 0; i < 40; ++i) {
    const std::size_t k = pick(rng);
    const double saved = g.values[k];
    g.values[k] = saved + h;
    const double up = loss();
    g.values[k] = saved - h;
    const double dn = loss();
    g.values[k] = saved;
    const double fd = (up - dn) / (2.0 * h);
    if (std::abs(fd) < 1e-9 && std::abs(grad[k]) < 1e-9) continue;  // untouched voxel
    EXPECT_NEAR(grad[k], fd, 1e-6 * std::max(1.0, std::abs(fd))) << "voxel " << k;
    ++checked;
  }
  EXPECT_GT(checked, 10);
}

TEST(Backward, LinearInUpstream) {
  const Camera cam = tiny_camera(12);
  const VoxelGrid g = random_grid(5, 5);
  std::vector<double> u1(static_cast<std::size_t>(cam.width) * cam.height);
  std::mt19937_64 rng(24);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (double& v : u1) v = uni(rng);
  std::vector<double> u2 = u1;
  for (double& v : u2) v *= 2.5;

  const auto g1 = project_backward(g, cam, 60.0, u1);
  const auto g2 = project_backward(g, cam, 60.0, u2);
  for (std::size_t i = 0; i < g1.size(); ++i) EXPECT_NEAR(g2[i], 2.5 * g1[i], 1e-9);
}

TEST(Backward, OpaqueFirstVoxelBlocksDownstreamGradient) {
  // All-opaque ray: the clamp keeps products at ~1e-6, so downstream
  // gradients are negligible rather than exactly zero.
  const std::vector<RaySample> samples{{0, 1.0}, {1, 2.0}, {2, 3.0}};
  const std::vector<double> values{0.0, 0.0, 0.0};
  const auto grad = detail::expected_depth_ray_grad(samples, values, 1.0, 10.0);
  EXPECT_NEAR(grad[0], 1.0, 1e-4);  // ~ d2 - d1
  EXPECT_LT(std::abs(grad[1]), 1e-4);
  EXPECT_LT(std::abs(grad[2]), 1e-9);
}

TEST(GradCheck, SingleVoxelRayIsExact) {
  // One voxel on the ray: D is affine in its value, FD at machine epsilon.
  const Camera cam = tiny_camera(4);
  VoxelGrid g({1, 1, 1}, Vec3(-4, -4, 3), 8.0, 0.5);
  EXPECT_LT(grad_check(g, cam, 100.0, 8, 1e-4), 1e-9);
}

TEST(GradCheck, RandomGridUnderTolerance) {
  const Camera cam = tiny_camera(16);
  const VoxelGrid g = random_grid(8, 6);
  EXPECT_LT(grad_check(g, cam, 60.0, 32, 1e-4), 1e-3);
}

TEST(GradCheck, DetectsCorruptedBackward) {
  const Camera cam = tiny_camera(16);
  const VoxelGrid g = random_grid(8, 7);
  const double err = grad_check(g, cam, 60.0, 32, 1e-4, 7, [](std::span<double> grad) {
    for (double& v : grad) v = -v;  // sign flip must be caught
  });
  EXPECT_GT(err, 0.5);
}
