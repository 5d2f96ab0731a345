#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "viewfill/geometry.hpp"
#include "viewfill/inpaint.hpp"
#include "viewfill/planner.hpp"
#include "viewfill/projection.hpp"
#include "viewfill/scenegen.hpp"
#include "viewfill/volume.hpp"

namespace viewfill {

struct PipelineConfig {
  int render_width = 512, render_height = 512;  // action-view rendering
  int encode_res = 64;                          // planner state rasters
  int splat_radius = 1;
  double distance_scale = 2.0;
  double vfov_deg = 60.0;
  std::array<int, 3> volume_dims = {64, 64, 64};
  int volume_out_factor = 4;
  int diffusion_iters = 200;
  InpaintParams inpaint;          // gt / noise_seed are wired per step
  double termination_ratio = 0.05;
  int max_iters = 20;
  double reward_w = 0.7;
  bool recomplete_each_iter = false;
  double dedup_resolution = 0.0;  // > 0 keeps at most one point per cell
  std::uint64_t seed = 0;         // oracle-inpainter noise stream

  void validate() const {
    if (render_width <= 0 || render_height <= 0 || encode_res <= 0 || splat_radius < 0)
      throw std::invalid_argument("PipelineConfig: bad raster sizes");
    if (!(distance_scale >= 1.0) || !(vfov_deg > 0.0 && vfov_deg < 180.0))
      throw std::invalid_argument("PipelineConfig: bad view geometry");
    if (volume_dims[0] <= 0 || volume_dims[1] <= 0 || volume_dims[2] <= 0 ||
        volume_out_factor <= 0 || diffusion_iters < 0)
      throw std::invalid_argument("PipelineConfig: bad volume settings");
    if (!(termination_ratio > 0.0 && termination_ratio < 1.0) || max_iters < 1)
      throw std::invalid_argument("PipelineConfig: bad termination settings");
    if (!(reward_w >= 0.0 && reward_w <= 1.0))
      throw std::invalid_argument("PipelineConfig: reward weight outside [0,1]");
    if (dedup_resolution < 0.0) throw std::invalid_argument("PipelineConfig: negative dedup cell");
  }
};

struct TraceRecord {
  int iter = 0;  // 1-based
  int view = 0;
  std::size_t holes_before = 0, holes_after = 0;
  bool has_rewards = false;
  double r_acc = 0.0, r_hole = 0.0, r_total = 0.0;
};

struct CompletionTrace {
  std::size_t area_initial = 0;
  bool terminated = false;  // hole ratio dropped below the threshold
  std::vector<TraceRecord> records;
};

/// One progressive completion episode: owns the growing cloud, the completed
/// volume and its guide projections, per-view silhouettes, and incrementally
/// maintained depth buffers at render and encode resolution. When a ground
/// truth sample is given, silhouettes come from the GT action views and steps
/// produce rewards; otherwise silhouettes come from the projected volume.
class CompletionRun {
 public:
  CompletionRun(const DepthMap& d0, const Camera& cam0, Inpainter inpainter, Completer completer,
                const PipelineConfig& cfg, const TrainingSample* gt = nullptr)
      : cfg_(cfg), inpainter_(inpainter), gt_(gt) {
    cfg.validate();
    if (d0.valid_count() == 0) throw std::invalid_argument("CompletionRun: empty input depth");
    if (d0.width != cam0.width || d0.height != cam0.height)
      throw std::invalid_argument("CompletionRun: input depth/camera mismatch");

    cloud_ = unproject(d0, cam0);
    cloud_.provenance.assign(cloud_.size(), 0);
    sphere_ = bounding_sphere(cloud_);
    if (!(sphere_.radius > 0.0)) throw std::invalid_argument("CompletionRun: degenerate input");
    cams_ = sample_action_views(sphere_, cfg.distance_scale, cfg.render_width, cfg.render_height,
                                cfg.vfov_deg);
    if (gt_) {
      if (gt_->action_gt.size() != cams_.size())
        throw std::invalid_argument("CompletionRun: ground truth view count mismatch");
      for (const DepthMap& m : gt_->action_gt)
        if (m.width != cfg.render_width || m.height != cfg.render_height)
          throw std::invalid_argument("CompletionRun: ground truth resolution mismatch");
    }

    // observed volume -> completed low-resolution probability grid
    const Vec3 r3 = Vec3::Constant(sphere_.radius);
    const Aabb bounds{sphere_.center - r3, sphere_.center + r3};
    const VoxelGrid occ = voxelize(cloud_, cfg.volume_dims, bounds);
    const VoxelGrid free = carve_freespace(d0, cam0, occ);
    completer_cache_ = completer;
    freespace_initial_ = free.values;
    volume_ = complete(VolumeObservation::make(occ, free), completer,
                       CompleteParams{cfg.volume_out_factor, cfg.diffusion_iters});

    dbg_.resize(cams_.size());
    guides_.resize(cams_.size());
    for (std::size_t v = 0; v < cams_.size(); ++v) dbg_[v] = background_depth(cams_[v]);

    silhouettes_.resize(cams_.size());
    if (gt_) {
      for (std::size_t v = 0; v < cams_.size(); ++v) {
        Mask sil(cfg.render_width, cfg.render_height);
        const DepthMap& m = gt_->action_gt[v];
        for (std::size_t i = 0; i < sil.bits.size(); ++i) sil.bits[i] = m.data[i] > 0.0f ? 1 : 0;
        silhouettes_[v] = std::move(sil);
      }
    } else {
      for (std::size_t v = 0; v < cams_.size(); ++v) {
        Mask hit(cfg.render_width, cfg.render_height);
        guides_[v] = project_expected_depth(volume_, cams_[v], dbg_[v], &hit);
        silhouettes_[v] = std::move(hit);
      }
    }

    if (cfg.dedup_resolution > 0.0)
      for (const Vec3& p : cloud_.points) seen_cells_.insert(cell_key(p));

    render_bufs_.reserve(cams_.size());
    enc_bufs_.reserve(cams_.size());
    enc_cams_.reserve(cams_.size());
    hole_counts_.resize(cams_.size());
    for (std::size_t v = 0; v < cams_.size(); ++v) {
      render_bufs_.push_back(render_depth(cloud_, cams_[v], cfg.splat_radius));
      enc_cams_.push_back(cams_[v].resized(cfg.encode_res, cfg.encode_res));
      enc_bufs_.push_back(render_depth(cloud_, enc_cams_[v], cfg.splat_radius));
      hole_counts_[v] = count_holes(v);
    }
    area_0_ = area_now_ = total_holes();
    trace_.area_initial = area_0_;
    terminated_ = area_0_ == 0;
    trace_.terminated = terminated_;
  }

  bool done() const { return terminated_; }
  bool terminal() const { return terminated_; }
  int steps_taken() const { return steps_; }
  std::size_t hole_area_initial() const { return area_0_; }
  std::size_t hole_area_now() const { return area_now_; }
  double hole_ratio() const {
    return area_0_ == 0 ? 0.0 : static_cast<double>(area_now_) / static_cast<double>(area_0_);
  }
  const PointCloud& cloud() const { return cloud_; }
  const std::vector<Camera>& action_views() const { return cams_; }
  const BoundingSphere& sphere() const { return sphere_; }
  double diameter() const { return 2.0 * sphere_.radius; }
  const std::vector<Mask>& silhouettes() const { return silhouettes_; }
  const VoxelGrid& completed_volume() const { return volume_; }
  const CompletionTrace& trace() const { return trace_; }
  const DepthMap& rendered_view(int v) const { return render_bufs_.at(v); }

  /// Planner state from the incremental encode buffers; identical to
  /// encode_state(cloud(), action_views(), encode_res, sphere()).
  StateEncoding encode() const {
    StateEncoding enc;
    enc.res = cfg_.encode_res;
    enc.views = static_cast<int>(cams_.size());
    enc.data.resize(static_cast<std::size_t>(enc.views) * enc.res * enc.res);
    for (int v = 0; v < enc.views; ++v) {
      const double dist = (cams_[v].pose.camera_center() - sphere_.center).norm();
      const DepthMap& buf = enc_bufs_[v];
      for (int i = 0; i < enc.res * enc.res; ++i)
        enc.data[static_cast<std::size_t>(v) * enc.res * enc.res + i] =
            encode_depth_value(buf.data[i], dist, sphere_.radius);
    }
    return enc;
  }

  struct StepOutcome {
    int view = 0;
    std::size_t holes_before = 0, holes_after = 0;
    bool has_rewards = false;
    double r_acc = 0.0, r_hole = 0.0, r_total = 0.0;
    bool terminal = false;
  };

  /// One pipeline iteration: render the chosen view, inpaint its in-silhouette
  /// holes against the volume guide, unproject only the filled pixels, and
  /// merge them into the cloud.
  StepOutcome step(int view) {
    if (terminated_) throw std::logic_error("CompletionRun: step after termination");
    if (view < 0 || view >= static_cast<int>(cams_.size()))
      throw std::invalid_argument("CompletionRun: view index out of range");

    StepOutcome o;
    o.view = view;
    o.holes_before = area_now_;
    const int iter = steps_ + 1;

    const DepthMap& observed = render_bufs_[view];
    Mask omega(cfg_.render_width, cfg_.render_height);
    const Mask& sil = silhouettes_[view];
    std::size_t n_omega = 0;
    for (std::size_t i = 0; i < omega.bits.size(); ++i) {
      omega.bits[i] = (sil.bits[i] && observed.data[i] <= 0.0f) ? 1 : 0;
      n_omega += omega.bits[i];
    }

    DepthMap filled = observed;
    if (n_omega > 0) {
      InpaintParams params = cfg_.inpaint;
      if (inpainter_ == Inpainter::kOracle) {
        if (!gt_) throw std::invalid_argument("CompletionRun: oracle inpainter requires GT");
        params.gt = &gt_->action_gt[view];
        params.noise_seed = cfg_.seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(iter)) ^
                            static_cast<std::uint64_t>(view);
      }
      filled = inpaint(InpaintRequest{observed, guide_for(view), omega}, inpainter_, params);

      PointCloud fresh = unproject(filled, cams_[view], &omega);
      if (cfg_.dedup_resolution > 0.0) {
        PointCloud kept;
        for (const Vec3& p : fresh.points)
          if (seen_cells_.insert(cell_key(p)).second) kept.points.push_back(p);
        fresh = std::move(kept);
      }
      add_points(fresh, iter);
    }

    o.holes_after = area_now_ = total_holes();
    o.terminal = static_cast<double>(o.holes_after) <
                 cfg_.termination_ratio * static_cast<double>(area_0_);
    if (gt_) {
      o.has_rewards = true;
      Mask rmask(cfg_.render_width, cfg_.render_height);
      const DepthMap& gt_view = gt_->action_gt[view];
      std::size_t n_r = 0;
      for (std::size_t i = 0; i < rmask.bits.size(); ++i) {
        rmask.bits[i] = (omega.bits[i] && gt_view.data[i] > 0.0f) ? 1 : 0;
        n_r += rmask.bits[i];
      }
      o.r_acc = n_r > 0 ? reward_acc(filled, gt_view, rmask, diameter()) : 0.0;
      o.r_hole = reward_hole(static_cast<double>(o.holes_before),
                             static_cast<double>(o.holes_after), static_cast<double>(area_0_));
      o.r_total = o.terminal ? 0.0 : reward_total(o.r_acc, o.r_hole, cfg_.reward_w);
    }

    if (o.terminal) {
      terminated_ = true;
      trace_.terminated = true;
    }
    if (cfg_.recomplete_each_iter && !o.terminal) recomplete();

    ++steps_;
    trace_.records.push_back(TraceRecord{iter, view, o.holes_before, o.holes_after, o.has_rewards,
                                         o.r_acc, o.r_hole, o.r_total});
    return o;
  }

 private:
  double background_depth(const Camera& cam) const {
    const Vec3 lo = volume_.min_corner(), hi = volume_.max_corner();
    const Vec3 c = cam.pose.camera_center();
    double far2 = 0.0;
    for (int i = 0; i < 8; ++i) {
      const Vec3 corner(i & 1 ? hi.x() : lo.x(), i & 2 ? hi.y() : lo.y(), i & 4 ? hi.z() : lo.z());
      far2 = std::max(far2, (corner - c).squaredNorm());
    }
    return std::sqrt(far2) * 1.05 + 1e-6;
  }

  const DepthMap& guide_for(int view) {
    if (!guides_[view])
      guides_[view] = project_expected_depth(volume_, cams_[view], dbg_[view], nullptr);
    return *guides_[view];
  }

  std::size_t count_holes(std::size_t v) const {
    const Mask& sil = silhouettes_[v];
    const DepthMap& buf = render_bufs_[v];
    std::size_t n = 0;
    for (std::size_t i = 0; i < sil.bits.size(); ++i)
      if (sil.bits[i] && buf.data[i] <= 0.0f) ++n;
    return n;
  }

  std::size_t total_holes() const {
    std::size_t n = 0;
    for (std::size_t c : hole_counts_) n += c;
    return n;
  }

  void add_points(const PointCloud& fresh, int iter) {
    if (fresh.empty()) return;
    cloud_.append(fresh, iter);
    for (std::size_t v = 0; v < cams_.size(); ++v) {
      for (const Vec3& p : fresh.points) {
        splat_point(p, cams_[v], cfg_.splat_radius, render_bufs_[v]);
        splat_point(p, enc_cams_[v], cfg_.splat_radius, enc_bufs_[v]);
      }
      hole_counts_[v] = count_holes(v);
    }
  }

  /// Rebuild occupancy from the merged cloud and redo completion; freespace
  /// carving stays anchored to the initial observation, and silhouettes stay
  /// pinned at their episode-start values so hole accounting is consistent.
  void recomplete() {
    const Vec3 r3 = Vec3::Constant(sphere_.radius);
    const Aabb bounds{sphere_.center - r3, sphere_.center + r3};
    const VoxelGrid occ = voxelize(cloud_, cfg_.volume_dims, bounds);
    VoxelGrid free(occ.dims, occ.origin, occ.voxel_size, 1.0);
    free.values = freespace_initial_;
    volume_ = complete(VolumeObservation::make(occ, free), completer_cache_,
                       CompleteParams{cfg_.volume_out_factor, cfg_.diffusion_iters});
    std::fill(guides_.begin(), guides_.end(), std::nullopt);
  }

  std::uint64_t cell_key(const Vec3& p) const {
    const double inv = 1.0 / cfg_.dedup_resolution;
    const auto q = [&](double x) {
      return static_cast<std::uint64_t>(static_cast<std::int64_t>(std::floor(x * inv)) + (1 << 20)) &
             0x1FFFFF;
    };
    return q(p.x()) | (q(p.y()) << 21) | (q(p.z()) << 42);
  }

  PipelineConfig cfg_;
  Inpainter inpainter_;
  const TrainingSample* gt_;
  PointCloud cloud_;
  BoundingSphere sphere_;
  std::vector<Camera> cams_, enc_cams_;
  VoxelGrid volume_{{1, 1, 1}, Vec3::Zero(), 1.0, 0.5};
  std::vector<double> dbg_;
  std::vector<std::optional<DepthMap>> guides_;
  std::vector<Mask> silhouettes_;
  std::vector<DepthMap> render_bufs_, enc_bufs_;
  std::vector<std::size_t> hole_counts_;
  std::unordered_set<std::uint64_t> seen_cells_;
  std::size_t area_0_ = 0, area_now_ = 0;
  int steps_ = 0;
  bool terminated_ = false;
  CompletionTrace trace_;
  Completer completer_cache_ = Completer::kIdentity;
  std::vector<double> freespace_initial_;
};

/// Chooses the next view (or nullopt to stop) given the live run, the 0-based
/// step count, and the caller's RNG.
using Policy = std::function<std::optional<int>(CompletionRun&, int, std::mt19937_64&)>;

/// Visits k views at equal index spacing (equator indices come first in the
/// action ordering), ignoring state; stops after k steps.
inline Policy uniform_policy(int k) {
  if (k < 1 || k > kActionViewCount) throw std::invalid_argument("uniform_policy: bad view count");
  return [k](CompletionRun&, int step, std::mt19937_64&) -> std::optional<int> {
    if (step >= k) return std::nullopt;
    return step * kActionViewCount / k;
  };
}

inline Policy random_policy() {
  return [](CompletionRun&, int, std::mt19937_64& rng) -> std::optional<int> {
    return std::uniform_int_distribution<int>(0, kActionViewCount - 1)(rng);
  };
}

/// Always picks argmax Q on the current encoded state.
inline Policy greedy_policy(const QNetwork& net) {
  return [&net](CompletionRun& run, int, std::mt19937_64& rng) -> std::optional<int> {
    return select_action(net.q_values(run.encode().to_matrix()), 1.0, rng);
  };
}

struct CompletionResult {
  PointCloud cloud;
  CompletionTrace trace;
};

inline CompletionResult complete_scene(const DepthMap& d0, const Camera& cam0,
                                       const Policy& policy, Inpainter inpainter,
                                       Completer completer, const PipelineConfig& cfg,
                                       std::mt19937_64& rng, const TrainingSample* gt = nullptr) {
  CompletionRun run(d0, cam0, inpainter, completer, cfg, gt);
  while (!run.done() && run.steps_taken() < cfg.max_iters) {
    const std::optional<int> v = policy(run, run.steps_taken(), rng);
    if (!v) break;
    run.step(*v);
  }
  return {run.cloud(), run.trace()};
}

struct EpisodeResult {
  std::vector<Transition> transitions;
  CompletionTrace trace;
  PointCloud cloud;
};

/// One training episode with eps-greedy selection (eps_value = probability of
/// the greedy action; 0 acts uniformly at random, as in buffer pre-fill).
/// Terminal transitions store reward 0 and an empty next state; max_iters
/// truncation stores a regular bootstrappable transition.
inline EpisodeResult run_episode(const TrainingSample& sample, const QNetwork& net,
                                 double eps_value, Inpainter inpainter, Completer completer,
                                 const PipelineConfig& cfg, std::mt19937_64& rng) {
  CompletionRun run(sample.input, sample.input_cam, inpainter, completer, cfg, &sample);
  EpisodeResult out;
  StateEncoding state = run.done() ? StateEncoding{} : run.encode();
  while (!run.done() && run.steps_taken() < cfg.max_iters) {
    const int action = select_action(net.q_values(state.to_matrix()), eps_value, rng);
    const CompletionRun::StepOutcome o = run.step(action);

    Transition t;
    t.state = std::move(state);
    t.action = action;
    t.terminal = o.terminal;
    t.reward = o.terminal ? 0.0 : o.r_total;
    if (!o.terminal) {
      t.next_state = run.encode();
      state = t.next_state;
    }
    out.transitions.push_back(std::move(t));
  }
  out.trace = run.trace();
  out.cloud = run.cloud();
  return out;
}

}  // namespace viewfill
