#include "viewfill/planner.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

#include "viewfill/geometry.hpp"
#include "viewfill/qnet.hpp"

namespace {

using viewfill::BoundingSphere;
using viewfill::Camera;
using viewfill::DepthMap;
using viewfill::Mask;
using viewfill::PointCloud;
using viewfill::QNetConfig;
using viewfill::QNetwork;
using viewfill::ReplayBuffer;
using viewfill::StateEncoding;
using viewfill::Transition;
using viewfill::Vec3;

QNetConfig tiny_config() {
  QNetConfig c;
  c.input_dim = 4;  // 2x2 encodings
  c.views = 2;
  c.actions = 3;
  c.enc_hidden = 5;
  c.embed_dim = 4;
  c.trunk_dim = 6;
  return c;
}

StateEncoding make_enc(float fill, int res = 2, int views = 2) {
  StateEncoding e;
  e.res = res;
  e.views = views;
  e.data.assign(static_cast<std::size_t>(views) * res * res, fill);
  return e;
}

Transition make_transition(float fill, int action, double reward, bool terminal) {
  Transition t;
  t.state = make_enc(fill);
  t.action = action;
  t.reward = reward;
  if (!terminal) t.next_state = make_enc(fill * 0.5f + 0.1f);
  t.terminal = terminal;
  return t;
}

PointCloud sphere_cloud(const Vec3& center, double radius, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  PointCloud cloud;
  for (int i = 0; i < n; ++i) {
    Vec3 d(g(rng), g(rng), g(rng));
    if (d.norm() < 1e-9) d = Vec3(1, 0, 0);
    cloud.points.push_back(center + radius * d.normalized());
  }
  return cloud;
}

}  // namespace

TEST(EncodeDepthValue, MapsVisibleBandToUnitInterval) {
  EXPECT_EQ(viewfill::encode_depth_value(0.0f, 5.0, 1.0), 0.0f);
  EXPECT_EQ(viewfill::encode_depth_value(-1.0f, 5.0, 1.0), 0.0f);

  // Band [dist - r, dist + r] maps linearly onto (0, 1].
  EXPECT_FLOAT_EQ(viewfill::encode_depth_value(4.0f, 5.0, 1.0), 1e-4f);  // floored near plane
  EXPECT_FLOAT_EQ(viewfill::encode_depth_value(5.0f, 5.0, 1.0), 0.5f);
  EXPECT_FLOAT_EQ(viewfill::encode_depth_value(6.0f, 5.0, 1.0), 1.0f);
  EXPECT_FLOAT_EQ(viewfill::encode_depth_value(9.0f, 5.0, 1.0), 1.0f);  // clamped far
  EXPECT_FLOAT_EQ(viewfill::encode_depth_value(5.5f, 5.0, 1.0), 0.75f);

  // Camera inside the sphere: the near plane floors at zero.
  EXPECT_FLOAT_EQ(viewfill::encode_depth_value(1.0f, 1.0, 2.0), 0.25f);
}

TEST(EncodeState, MatchesPerViewRenderAndLayout) {
  const PointCloud cloud = sphere_cloud(Vec3(1, 2, 0.5), 0.8, 200, 3);
  const BoundingSphere sphere = viewfill::bounding_sphere(cloud);
  const std::vector<Camera> views = viewfill::sample_action_views(sphere, 2.0, 32, 32, 60.0);

  const int res = 16;
  const StateEncoding enc = viewfill::encode_state(cloud, views, res, sphere);
  EXPECT_EQ(enc.res, res);
  EXPECT_EQ(enc.views, static_cast<int>(views.size()));
  ASSERT_EQ(enc.data.size(), static_cast<std::size_t>(views.size()) * res * res);
  EXPECT_FALSE(enc.empty());

  for (int v : {0, 7, 19}) {
    const Camera cam = views[v].resized(res, res);
    const DepthMap d = viewfill::render_depth(cloud, cam, 1);
    const double dist = (cam.pose.camera_center() - sphere.center).norm();
    for (int y = 0; y < res; ++y)
      for (int x = 0; x < res; ++x)
        EXPECT_EQ(enc.at(v, x, y), viewfill::encode_depth_value(d.at(x, y), dist, sphere.radius))
            << "view " << v << " pixel " << x << "," << y;
  }

  const Eigen::MatrixXd m = enc.to_matrix();
  ASSERT_EQ(m.rows(), res * res);
  ASSERT_EQ(m.cols(), enc.views);
  EXPECT_EQ(m(0, 0), static_cast<double>(enc.data[0]));
  EXPECT_EQ(m(5, 3), static_cast<double>(enc.data[3 * res * res + 5]));

  EXPECT_THROW(viewfill::encode_state(PointCloud{}, views, res, sphere), std::invalid_argument);
  EXPECT_THROW(viewfill::encode_state(cloud, {}, res, sphere), std::invalid_argument);
  EXPECT_THROW(viewfill::encode_state(cloud, views, 0, sphere), std::invalid_argument);
  EXPECT_THROW(viewfill::encode_state(cloud, views, res, BoundingSphere{}), std::invalid_argument);
}

TEST(SelectAction, EpsilonIsTheGreedyProbability) {
  Eigen::VectorXd q(4);
  q << 0.0, 3.0, 3.0, 1.0;  // tie between 1 and 2 resolves to 1

  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) EXPECT_EQ(viewfill::select_action(q, 1.0, rng), 1);

  std::array<int, 4> counts{};
  const int n = 4000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(viewfill::select_action(q, 0.0, rng))];
  for (int a = 0; a < 4; ++a)
    EXPECT_NEAR(counts[a] / static_cast<double>(n), 0.25, 0.035) << "action " << a;

  counts.fill(0);
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(viewfill::select_action(q, 0.5, rng))];
  EXPECT_NEAR(counts[1] / static_cast<double>(n), 0.5 + 0.5 * 0.25, 0.04);
  EXPECT_NEAR(counts[0] / static_cast<double>(n), 0.5 * 0.25, 0.03);
  EXPECT_NEAR(counts[3] / static_cast<double>(n), 0.5 * 0.25, 0.03);

  std::mt19937_64 a(9), b(9);
  for (int i = 0; i < 50; ++i)
    EXPECT_EQ(viewfill::select_action(q, 0.5, a), viewfill::select_action(q, 0.5, b));

  EXPECT_THROW(viewfill::select_action(q, -0.1, rng), std::invalid_argument);
  EXPECT_THROW(viewfill::select_action(q, 1.1, rng), std::invalid_argument);
  EXPECT_THROW(viewfill::select_action(Eigen::VectorXd(), 0.5, rng), std::invalid_argument);
}

TEST(EpsilonSchedule, LinearDecayBetweenEndpoints) {
  const viewfill::EpsilonSchedule s{0.9, 0.2, 10000};
  EXPECT_DOUBLE_EQ(s.value(0), 0.9);
  EXPECT_DOUBLE_EQ(s.value(10000), 0.2);
  EXPECT_DOUBLE_EQ(s.value(1000000), 0.2);
  EXPECT_DOUBLE_EQ(s.value(5000), 0.55);
  EXPECT_DOUBLE_EQ(s.value(2500), 0.9 + (0.2 - 0.9) * 0.25);
  EXPECT_DOUBLE_EQ(s.value(-5), 0.9);

  const viewfill::EpsilonSchedule flat{0.9, 0.2, 0};
  EXPECT_DOUBLE_EQ(flat.value(0), 0.2);
}

TEST(Rewards, AccuracyIsNegatedMeanAbsoluteError) {
  DepthMap pred(2, 2, 0.0f), gt(2, 2, 0.0f);
  pred.data = {1.5f, 2.0f, 3.25f, 4.0f};
  gt.data = {1.0f, 2.25f, 3.0f, 9.0f};
  Mask mask(2, 2);
  mask.bits = {1, 1, 1, 0};  // last pixel excluded

  const double want = -(0.5 + 0.25 + 0.25) / 3.0;
  EXPECT_DOUBLE_EQ(viewfill::reward_acc(pred, gt, mask), want);
  EXPECT_DOUBLE_EQ(viewfill::reward_acc(pred, gt, mask, 2.0), want / 2.0);

  Mask empty(2, 2);
  EXPECT_THROW(viewfill::reward_acc(pred, gt, empty), std::invalid_argument);
  EXPECT_THROW(viewfill::reward_acc(pred, gt, Mask(3, 2)), std::invalid_argument);
  EXPECT_THROW(viewfill::reward_acc(pred, DepthMap(3, 2, 0.0f), mask), std::invalid_argument);
  EXPECT_THROW(viewfill::reward_acc(pred, gt, mask, 0.0), std::invalid_argument);
}

TEST(Rewards, HoleProgressHandValues) {
  EXPECT_EQ(viewfill::reward_hole(250.0, 250.0, 250.0), -1.0);  // nothing filled
  EXPECT_EQ(viewfill::reward_hole(250.0, 0.0, 250.0), 0.0);     // everything filled at once
  EXPECT_DOUBLE_EQ(viewfill::reward_hole(100.0, 80.0, 100.0), -0.8);
  EXPECT_DOUBLE_EQ(viewfill::reward_hole(50.0, 25.0, 100.0), -0.75);
  EXPECT_THROW(viewfill::reward_hole(1.0, 1.0, 0.0), std::invalid_argument);
}

TEST(Rewards, TotalIsConvexBlend) {
  EXPECT_DOUBLE_EQ(viewfill::reward_total(-0.1, -0.5, 0.7), 0.7 * -0.1 + 0.3 * -0.5);
  EXPECT_DOUBLE_EQ(viewfill::reward_total(-0.1, -0.5, 1.0), -0.1);
  EXPECT_DOUBLE_EQ(viewfill::reward_total(-0.1, -0.5, 0.0), -0.5);
  EXPECT_THROW(viewfill::reward_total(0.0, 0.0, -0.01), std::invalid_argument);
  EXPECT_THROW(viewfill::reward_total(0.0, 0.0, 1.01), std::invalid_argument);
}

TEST(Rewards, HoleAreaCountsHolesInsideSilhouettes) {
  PointCloud cloud;
  cloud.points.push_back(Vec3(0, 0, 1));
  const Camera cam = Camera::look_at(Vec3(5, 0, 1), Vec3(0, 0, 1), 8, 8, 60.0);

  // The one point splats a 3x3 block at the principal pixel; everything else
  // in a full silhouette is a hole.
  Mask full(8, 8);
  full.bits.assign(64, 1);
  EXPECT_EQ(viewfill::hole_area(cloud, {cam, cam}, {full, full}), 2u * (64u - 9u));

  Mask block(8, 8);
  for (int y = 3; y <= 5; ++y)
    for (int x = 3; x <= 5; ++x) block.bits[y * 8 + x] = 1;
  EXPECT_EQ(viewfill::hole_area(cloud, {cam}, {block}), 0u);

  EXPECT_THROW(viewfill::hole_area(cloud, {cam, cam}, {full}), std::invalid_argument);
  EXPECT_THROW(viewfill::hole_area(cloud, {cam}, {Mask(4, 4)}), std::invalid_argument);
}

TEST(ReplayBuffer, RingEvictsOldestFirst) {
  ReplayBuffer buf(3);
  EXPECT_EQ(buf.capacity(), 3u);
  for (int i = 0; i < 5; ++i) buf.push(make_transition(0.3f, 0, static_cast<double>(i), false));
  ASSERT_EQ(buf.size(), 3u);
  EXPECT_DOUBLE_EQ(buf.at(0).reward, 2.0);
  EXPECT_DOUBLE_EQ(buf.at(1).reward, 3.0);
  EXPECT_DOUBLE_EQ(buf.at(2).reward, 4.0);

  EXPECT_THROW(ReplayBuffer(0), std::invalid_argument);

  Transition bad = make_transition(0.3f, 0, 0.0, false);
  bad.terminal = true;  // terminal flag contradicts a non-empty next state
  EXPECT_THROW(buf.push(std::move(bad)), std::invalid_argument);
  Transition bad2 = make_transition(0.3f, 0, 0.0, true);
  bad2.terminal = false;
  EXPECT_THROW(buf.push(std::move(bad2)), std::invalid_argument);
}

TEST(ReplayBuffer, SamplesUniformlyWithReplacement) {
  ReplayBuffer buf(4);
  for (int i = 0; i < 3; ++i) buf.push(make_transition(0.3f, 0, static_cast<double>(i), false));

  std::mt19937_64 rng(7);
  EXPECT_THROW(buf.sample(4, rng), std::runtime_error);  // underfilled

  std::array<int, 3> seen{};
  for (int round = 0; round < 2000; ++round)
    for (const Transition* t : buf.sample(3, rng)) ++seen[static_cast<std::size_t>(t->reward)];
  for (int i = 0; i < 3; ++i)
    EXPECT_NEAR(seen[i] / 6000.0, 1.0 / 3.0, 0.03) << "transition " << i;

  std::mt19937_64 a(11), b(11);
  for (int round = 0; round < 20; ++round) {
    const auto sa = buf.sample(3, a);
    const auto sb = buf.sample(3, b);
    for (std::size_t i = 0; i < sa.size(); ++i) EXPECT_EQ(sa[i], sb[i]);
  }
}

TEST(TdTargets, ImplementsDoubleDqnRule) {
  const QNetConfig c = tiny_config();
  const QNetwork net(c, 1), target(c, 2);

  std::vector<Transition> ts;
  ts.push_back(make_transition(0.2f, 1, -0.4, false));
  ts.push_back(make_transition(0.8f, 2, -0.9, false));
  ts.push_back(make_transition(0.5f, 0, -0.3, true));
  std::vector<const Transition*> batch{&ts[0], &ts[1], &ts[2]};

  const double gamma = 0.9;
  const std::vector<double> got = viewfill::td_targets(batch, net, target, gamma);
  ASSERT_EQ(got.size(), 3u);

  for (int i = 0; i < 2; ++i) {
    const Eigen::MatrixXd next = ts[i].next_state.to_matrix();
    const Eigen::VectorXd online = net.q_values(next);
    int best = 0;
    for (int a = 1; a < online.size(); ++a)
      if (online(a) > online(best)) best = a;
    EXPECT_DOUBLE_EQ(got[i], ts[i].reward + gamma * target.q_values(next)(best)) << "row " << i;
  }
  EXPECT_DOUBLE_EQ(got[2], -0.3);  // terminal: no bootstrap

  const std::vector<double> myopic = viewfill::td_targets(batch, net, target, 0.0);
  EXPECT_DOUBLE_EQ(myopic[0], -0.4);
  EXPECT_DOUBLE_EQ(myopic[1], -0.9);

  EXPECT_THROW(viewfill::td_targets(batch, net, target, 1.0), std::invalid_argument);
  EXPECT_THROW(viewfill::td_targets(batch, net, target, -0.1), std::invalid_argument);
}

TEST(TdLoss, ValueAndGradientMatchDefinition) {
  const QNetConfig c = tiny_config();
  QNetwork net(c, 3);

  std::vector<Transition> ts;
  ts.push_back(make_transition(0.3f, 1, 0.0, false));
  ts.push_back(make_transition(0.7f, 2, 0.0, false));
  std::vector<const Transition*> batch{&ts[0], &ts[1]};
  const std::vector<double> targets{0.3, -0.7};

  QNetwork::Gradients g(c);
  const double loss = viewfill::td_loss_and_gradients(net, batch, targets, g);

  double want = 0.0;
  for (int i = 0; i < 2; ++i) {
    const double err = net.q_values(ts[i].state.to_matrix())(ts[i].action) - targets[i];
    want += err * err / 2.0;
  }
  EXPECT_DOUBLE_EQ(loss, want);

  // Finite differences through the full loss, one parameter at a time.
  const Eigen::VectorXd analytic = QNetwork::flatten_gradients(g);
  const Eigen::VectorXd theta = net.flatten();
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    Eigen::VectorXd tp = theta;
    tp(i) += h;
    net.unflatten(tp);
    QNetwork::Gradients scratch(c);
    const double lp = viewfill::td_loss_and_gradients(net, batch, targets, scratch);
    tp(i) = theta(i) - h;
    net.unflatten(tp);
    scratch.set_zero();
    const double lm = viewfill::td_loss_and_gradients(net, batch, targets, scratch);
    const double fd = (lp - lm) / (2.0 * h);
    EXPECT_NEAR(analytic(i), fd, 1e-4 * std::max(1.0, std::abs(fd))) << "parameter " << i;
  }
  net.unflatten(theta);

  EXPECT_THROW(viewfill::td_loss_and_gradients(net, batch, {0.3}, g), std::invalid_argument);
  std::vector<Transition> bad_ts{make_transition(0.3f, c.actions, 0.0, false)};
  std::vector<const Transition*> bad{&bad_ts[0]};
  EXPECT_THROW(viewfill::td_loss_and_gradients(net, bad, {0.0}, g), std::invalid_argument);
}

TEST(TrainStep, RegressesTowardFixedTargets) {
  const QNetConfig c = tiny_config();
  QNetwork net(c, 5);
  const QNetwork target(c, 6);

  ReplayBuffer buf(8);
  for (int i = 0; i < 8; ++i)
    buf.push(make_transition(0.1f * static_cast<float>(i + 1), i % c.actions, (i % 3) * 0.2 - 0.3,
                             i % 4 == 0));

  // gamma = 0 turns the update into plain regression onto the rewards, so the
  // loss trend must be firmly downward.
  viewfill::TrainStepConfig tc;
  tc.batch = 8;
  tc.gamma = 0.0;
  tc.lr = 2e-2;
  tc.clip_norm = 10.0;

  std::mt19937_64 rng(17);
  double first = 0.0, last = 0.0;
  for (int step = 0; step < 300; ++step) {
    const double loss = viewfill::train_step(buf, net, target, rng, tc);
    ASSERT_TRUE(std::isfinite(loss));
    if (step < 10) first += loss;
    if (step >= 290) last += loss;
  }
  EXPECT_LT(last, 0.2 * first);
  EXPECT_TRUE(net.finite());

  // Deterministic given identical rng state.
  QNetwork na(c, 5), nb(c, 5);
  std::mt19937_64 ra(21), rb(21);
  for (int step = 0; step < 5; ++step)
    EXPECT_DOUBLE_EQ(viewfill::train_step(buf, na, target, ra, tc),
                     viewfill::train_step(buf, nb, target, rb, tc));
}

TEST(SyncTarget, CopiesParametersByValue) {
  const QNetConfig c = tiny_config();
  QNetwork net(c, 7), target(c, 8);
  ASSERT_NE(net.flatten(), target.flatten());

  viewfill::sync_target(net, target);
  EXPECT_EQ(net.flatten(), target.flatten());

  QNetwork::Gradients g(c);
  net.backward(Eigen::MatrixXd::Constant(c.input_dim, c.views, 0.3),
               Eigen::VectorXd::Ones(c.actions), g);
  net.apply_update(g, 0.1, 0.0);
  EXPECT_NE(net.flatten(), target.flatten());  // deep copy, not aliasing
}
