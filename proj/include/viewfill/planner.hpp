#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "viewfill/geometry.hpp"
#include "viewfill/qnet.hpp"

namespace viewfill {

/// Multi-view state: one depth raster per action view at encode resolution,
/// stored view-major. Valid depths map the camera's visible band
/// [dist - r, dist + r] around the bounding sphere to (0,1]; holes are 0.
struct StateEncoding {
  int res = 0;
  int views = 0;
  std::vector<float> data;

  bool empty() const { return data.empty(); }
  float at(int view, int x, int y) const {
    return data[(static_cast<std::size_t>(view) * res + y) * res + x];
  }

  /// Network input layout: one column per view.
  Eigen::MatrixXd to_matrix() const {
    const int dim = res * res;
    Eigen::MatrixXd m(dim, views);
    for (int v = 0; v < views; ++v)
      for (int i = 0; i < dim; ++i)
        m(i, v) = static_cast<double>(data[static_cast<std::size_t>(v) * dim + i]);
    return m;
  }
};

/// Maps one z-depth to its encoded value for a camera at distance `dist` from
/// the sphere center. Valid depths are floored at 1e-4 to stay distinct from
/// the hole value 0.
inline float encode_depth_value(float d, double dist, double radius) {
  if (d <= 0.0f) return 0.0f;
  const double near = std::max(0.0, dist - radius);
  const double x = (static_cast<double>(d) - near) / (2.0 * radius);
  return static_cast<float>(std::max(1e-4, std::min(1.0, x)));
}

/// Renders the cloud from every action view and normalizes depths.
inline StateEncoding encode_state(const PointCloud& cloud, const std::vector<Camera>& views,
                                  int res, const BoundingSphere& sphere, int splat_radius = 1) {
  if (cloud.empty()) throw std::invalid_argument("encode_state: empty cloud");
  if (views.empty()) throw std::invalid_argument("encode_state: no views");
  if (res <= 0) throw std::invalid_argument("encode_state: non-positive resolution");
  if (!(sphere.radius > 0.0)) throw std::invalid_argument("encode_state: degenerate sphere");

  StateEncoding enc;
  enc.res = res;
  enc.views = static_cast<int>(views.size());
  enc.data.resize(static_cast<std::size_t>(enc.views) * res * res);
  for (int v = 0; v < enc.views; ++v) {
    const Camera cam = views[v].resized(res, res);
    const DepthMap d = render_depth(cloud, cam, splat_radius);
    const double dist = (cam.pose.camera_center() - sphere.center).norm();
    for (int i = 0; i < res * res; ++i)
      enc.data[static_cast<std::size_t>(v) * res * res + i] =
          encode_depth_value(d.data[i], dist, sphere.radius);
  }
  return enc;
}

/// With probability eps_value returns argmax(q) (ties -> lowest index),
/// otherwise a uniform random action. Note the inverted convention:
/// eps_value is the probability of acting GREEDILY, so exploration grows as
/// the schedule decays.
inline int select_action(const Eigen::VectorXd& q, double eps_value, std::mt19937_64& rng) {
  if (!(eps_value >= 0.0 && eps_value <= 1.0))
    throw std::invalid_argument("select_action: eps_value outside [0,1]");
  if (q.size() == 0) throw std::invalid_argument("select_action: empty Q vector");
  if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < eps_value) {
    int best = 0;
    for (int i = 1; i < q.size(); ++i)
      if (q(i) > q(best)) best = i;
    return best;
  }
  return std::uniform_int_distribution<int>(0, static_cast<int>(q.size()) - 1)(rng);
}

struct EpsilonSchedule {
  double start = 0.9;
  double end = 0.2;
  std::int64_t decay_steps = 10000;

  double value(std::int64_t step) const {
    if (decay_steps <= 0 || step >= decay_steps) return end;
    if (step < 0) step = 0;
    return start + (end - start) * (static_cast<double>(step) / static_cast<double>(decay_steps));
  }
};

// ---------------------------------------------------------------------------
// Rewards
// ---------------------------------------------------------------------------

/// Negated mean absolute depth error over the mask, divided by `unit`
/// (pass the scene diameter for dimensionless rewards).
inline double reward_acc(const DepthMap& pred, const DepthMap& gt, const Mask& mask,
                         double unit = 1.0) {
  if (pred.width != gt.width || pred.height != gt.height || pred.width != mask.width ||
      pred.height != mask.height)
    throw std::invalid_argument("reward_acc: dimension mismatch");
  if (!(unit > 0.0)) throw std::invalid_argument("reward_acc: non-positive unit");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < mask.bits.size(); ++i)
    if (mask.bits[i]) {
      sum += std::abs(static_cast<double>(pred.data[i]) - gt.data[i]);
      ++n;
    }
  if (n == 0) throw std::invalid_argument("reward_acc: empty mask");
  return -sum / (static_cast<double>(n) * unit);
}

/// Total hole pixels within the per-view silhouettes after rendering the
/// cloud from every action view.
inline std::size_t hole_area(const PointCloud& cloud, const std::vector<Camera>& views,
                             const std::vector<Mask>& silhouettes, int splat_radius = 1) {
  if (views.size() != silhouettes.size())
    throw std::invalid_argument("hole_area: views/silhouettes size mismatch");
  std::size_t total = 0;
  for (std::size_t v = 0; v < views.size(); ++v) {
    const Mask& sil = silhouettes[v];
    if (sil.width != views[v].width || sil.height != views[v].height)
      throw std::invalid_argument("hole_area: silhouette/camera dimension mismatch");
    const DepthMap d = render_depth(cloud, views[v], splat_radius);
    for (std::size_t i = 0; i < sil.bits.size(); ++i)
      if (sil.bits[i] && d.data[i] <= 0.0f) ++total;
  }
  return total;
}

/// (area_prev - area_new)/area_0 - 1; 0 when one step fills everything,
/// -1 when nothing was filled.
inline double reward_hole(double area_prev, double area_new, double area_0) {
  if (!(area_0 > 0.0)) throw std::invalid_argument("reward_hole: area_0 must be positive");
  return (area_prev - area_new) / area_0 - 1.0;
}

inline double reward_total(double r_acc, double r_hole, double w) {
  if (!(w >= 0.0 && w <= 1.0)) throw std::invalid_argument("reward_total: w outside [0,1]");
  return w * r_acc + (1.0 - w) * r_hole;
}

// ---------------------------------------------------------------------------
// Replay + training
// ---------------------------------------------------------------------------

struct Transition {
  StateEncoding state;
  int action = 0;
  double reward = 0.0;
  StateEncoding next_state;  // empty iff terminal
  bool terminal = false;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : cap_(capacity) {
    if (capacity == 0) throw std::invalid_argument("ReplayBuffer: zero capacity");
    ring_.reserve(capacity);
  }

  void push(Transition t) {
    if (t.terminal != t.next_state.empty())
      throw std::invalid_argument("ReplayBuffer: terminal flag/next_state mismatch");
    if (ring_.size() < cap_) {
      ring_.push_back(std::move(t));
    } else {
      ring_[head_] = std::move(t);
      head_ = (head_ + 1) % cap_;
    }
  }

  std::size_t size() const { return ring_.size(); }
  std::size_t capacity() const { return cap_; }

  /// i = 0 is the oldest stored transition.
  const Transition& at(std::size_t i) const { return ring_[(head_ + i) % ring_.size()]; }

  /// Uniform sample with replacement.
  std::vector<const Transition*> sample(std::size_t batch, std::mt19937_64& rng) const {
    if (ring_.size() < batch) throw std::runtime_error("ReplayBuffer: underfilled");
    std::uniform_int_distribution<std::size_t> pick(0, ring_.size() - 1);
    std::vector<const Transition*> out(batch);
    for (std::size_t i = 0; i < batch; ++i) out[i] = &ring_[pick(rng)];
    return out;
  }

 private:
  std::vector<Transition> ring_;
  std::size_t cap_;
  std::size_t head_ = 0;
};

/// Double-DQN targets: r for terminal transitions, otherwise
/// r + gamma * Q_target(s', argmax_a Q_online(s', a)).
inline std::vector<double> td_targets(const std::vector<const Transition*>& batch,
                                      const QNetwork& net, const QNetwork& target, double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("td_targets: gamma outside [0,1)");
  std::vector<double> out(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Transition& t = *batch[i];
    if (t.terminal) {
      out[i] = t.reward;
      continue;
    }
    const Eigen::MatrixXd next = t.next_state.to_matrix();
    const Eigen::VectorXd q_online = net.q_values(next);
    int best = 0;
    for (int a = 1; a < q_online.size(); ++a)
      if (q_online(a) > q_online(best)) best = a;
    out[i] = t.reward + gamma * target.q_values(next)(best);
  }
  return out;
}

/// Mean squared TD error over the batch with fixed targets, and its parameter
/// gradient accumulated into g.
inline double td_loss_and_gradients(const QNetwork& net,
                                    const std::vector<const Transition*>& batch,
                                    const std::vector<double>& targets, QNetwork::Gradients& g) {
  if (batch.empty() || batch.size() != targets.size())
    throw std::invalid_argument("td_loss_and_gradients: batch/target size mismatch");
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Eigen::MatrixXd state = batch[i]->state.to_matrix();
    const Eigen::VectorXd q = net.q_values(state);
    const int a = batch[i]->action;
    if (a < 0 || a >= q.size()) throw std::invalid_argument("td_loss_and_gradients: bad action");
    const double err = q(a) - targets[i];
    loss += err * err * inv_b;
    Eigen::VectorXd dq = Eigen::VectorXd::Zero(q.size());
    dq(a) = 2.0 * err * inv_b;
    net.backward(state, dq, g);
  }
  return loss;
}

struct TrainStepConfig {
  std::size_t batch = 16;
  double gamma = 0.9;
  double lr = 1e-3;
  double clip_norm = 10.0;
};

/// One gradient-descent update on a uniformly sampled batch; returns the loss.
inline double train_step(const ReplayBuffer& buffer, QNetwork& net, const QNetwork& target,
                         std::mt19937_64& rng, const TrainStepConfig& cfg) {
  const auto batch = buffer.sample(cfg.batch, rng);
  const std::vector<double> targets = td_targets(batch, net, target, cfg.gamma);
  QNetwork::Gradients g(net.config());
  const double loss = td_loss_and_gradients(net, batch, targets, g);
  net.apply_update(g, cfg.lr, cfg.clip_norm);
  return loss;
}

inline void sync_target(const QNetwork& net, QNetwork& target) { target = net; }

}  // namespace viewfill
