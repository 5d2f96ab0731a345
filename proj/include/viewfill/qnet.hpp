#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace viewfill {

struct QNetConfig {
  int input_dim = 0;    // flattened pixels per view
  int views = 20;
  int actions = 20;
  int enc_hidden = 256; // per-view encoder: input -> enc_hidden -> embed_dim
  int embed_dim = 128;
  int trunk_dim = 512;  // split evenly between the value and advantage heads

  void validate() const {
    if (input_dim <= 0 || views <= 0 || actions <= 0 || enc_hidden <= 0 || embed_dim <= 0)
      throw std::invalid_argument("QNetConfig: non-positive dimension");
    if (trunk_dim <= 0 || trunk_dim % 2 != 0)
      throw std::invalid_argument("QNetConfig: trunk_dim must be positive and even");
  }
};

/// Dueling Q-network over multi-view states. Each view (one column of the
/// state matrix) passes through a shared two-layer ReLU encoder; encodings are
/// pooled by elementwise max; a ReLU trunk layer produces a vector whose first
/// half feeds a scalar value head and second half a per-action advantage head:
/// Q = V + A - mean(A). All arithmetic is double precision.
class QNetwork {
 public:
  struct Gradients {
    Eigen::MatrixXd w1, w2, w3, wv, wa;
    Eigen::VectorXd b1, b2, b3, bv, ba;

    explicit Gradients(const QNetConfig& c)
        : w1(Eigen::MatrixXd::Zero(c.enc_hidden, c.input_dim)),
          w2(Eigen::MatrixXd::Zero(c.embed_dim, c.enc_hidden)),
          w3(Eigen::MatrixXd::Zero(c.trunk_dim, c.embed_dim)),
          wv(Eigen::MatrixXd::Zero(1, c.trunk_dim / 2)),
          wa(Eigen::MatrixXd::Zero(c.actions, c.trunk_dim / 2)),
          b1(Eigen::VectorXd::Zero(c.enc_hidden)),
          b2(Eigen::VectorXd::Zero(c.embed_dim)),
          b3(Eigen::VectorXd::Zero(c.trunk_dim)),
          bv(Eigen::VectorXd::Zero(1)),
          ba(Eigen::VectorXd::Zero(c.actions)) {}

    void set_zero() {
      w1.setZero(); w2.setZero(); w3.setZero(); wv.setZero(); wa.setZero();
      b1.setZero(); b2.setZero(); b3.setZero(); bv.setZero(); ba.setZero();
    }

    double squared_norm() const {
      return w1.squaredNorm() + w2.squaredNorm() + w3.squaredNorm() + wv.squaredNorm() +
             wa.squaredNorm() + b1.squaredNorm() + b2.squaredNorm() + b3.squaredNorm() +
             bv.squaredNorm() + ba.squaredNorm();
    }
  };

  QNetwork(const QNetConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    auto he = [&rng](Eigen::MatrixXd& m, int fan_in) {
      std::normal_distribution<double> g(0.0, std::sqrt(2.0 / fan_in));
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = g(rng);
    };
    const int half = cfg.trunk_dim / 2;
    w1_.resize(cfg.enc_hidden, cfg.input_dim);
    w2_.resize(cfg.embed_dim, cfg.enc_hidden);
    w3_.resize(cfg.trunk_dim, cfg.embed_dim);
    wv_.resize(1, half);
    wa_.resize(cfg.actions, half);
    he(w1_, cfg.input_dim);
    he(w2_, cfg.enc_hidden);
    he(w3_, cfg.embed_dim);
    he(wv_, half);
    he(wa_, half);
    b1_ = Eigen::VectorXd::Zero(cfg.enc_hidden);
    b2_ = Eigen::VectorXd::Zero(cfg.embed_dim);
    b3_ = Eigen::VectorXd::Zero(cfg.trunk_dim);
    bv_ = Eigen::VectorXd::Zero(1);
    ba_ = Eigen::VectorXd::Zero(cfg.actions);
  }

  const QNetConfig& config() const { return cfg_; }

  /// state: input_dim x views, one column per view.
  Eigen::VectorXd q_values(const Eigen::MatrixXd& state) const {
    check_state(state);
    const Eigen::MatrixXd h1 = ((w1_ * state).colwise() + b1_).cwiseMax(0.0);
    const Eigen::MatrixXd e = ((w2_ * h1).colwise() + b2_).cwiseMax(0.0);
    const Eigen::VectorXd m = e.rowwise().maxCoeff();
    const Eigen::VectorXd t = (w3_ * m + b3_).cwiseMax(0.0);
    return heads(t);
  }

  /// Forward pass that also accumulates d(dq . Q)/dtheta into g. Max pooling
  /// routes gradient to the first view attaining each row maximum.
  Eigen::VectorXd backward(const Eigen::MatrixXd& state, const Eigen::VectorXd& dq,
                           Gradients& g) const {
    check_state(state);
    if (dq.size() != cfg_.actions) throw std::invalid_argument("QNetwork: bad upstream size");

    const Eigen::MatrixXd pre1 = (w1_ * state).colwise() + b1_;
    const Eigen::MatrixXd h1 = pre1.cwiseMax(0.0);
    const Eigen::MatrixXd pre2 = (w2_ * h1).colwise() + b2_;
    const Eigen::MatrixXd e = pre2.cwiseMax(0.0);
    Eigen::VectorXd m(cfg_.embed_dim);
    std::vector<Eigen::Index> arg(cfg_.embed_dim);
    for (int r = 0; r < cfg_.embed_dim; ++r) m(r) = e.row(r).maxCoeff(&arg[r]);
    const Eigen::VectorXd pre3 = w3_ * m + b3_;
    const Eigen::VectorXd t = pre3.cwiseMax(0.0);
    const int half = cfg_.trunk_dim / 2;
    const Eigen::VectorXd q = heads(t);

    const Eigen::VectorXd da = dq.array() - dq.mean();  // dQ_i/dA_j = delta_ij - 1/actions
    const double dv = dq.sum();
    g.wa += da * t.tail(half).transpose();
    g.ba += da;
    g.wv += dv * t.head(half).transpose();
    g.bv(0) += dv;

    Eigen::VectorXd dt(cfg_.trunk_dim);
    dt.head(half) = wv_.transpose() * dv;
    dt.tail(half) = wa_.transpose() * da;
    const Eigen::VectorXd dpre3 =
        (dt.array() * (pre3.array() > 0.0).cast<double>()).matrix();
    g.w3 += dpre3 * m.transpose();
    g.b3 += dpre3;

    const Eigen::VectorXd dm = w3_.transpose() * dpre3;
    Eigen::MatrixXd de = Eigen::MatrixXd::Zero(cfg_.embed_dim, cfg_.views);
    for (int r = 0; r < cfg_.embed_dim; ++r) de(r, arg[r]) = dm(r);
    const Eigen::MatrixXd dpre2 = (de.array() * (pre2.array() > 0.0).cast<double>()).matrix();
    g.w2 += dpre2 * h1.transpose();
    g.b2 += dpre2.rowwise().sum();

    const Eigen::MatrixXd dh1 = w2_.transpose() * dpre2;
    const Eigen::MatrixXd dpre1 = (dh1.array() * (pre1.array() > 0.0).cast<double>()).matrix();
    g.w1 += dpre1 * state.transpose();
    g.b1 += dpre1.rowwise().sum();
    return q;
  }

  /// theta -= lr * g, with g rescaled when its global norm exceeds clip_norm
  /// (clip_norm <= 0 disables clipping).
  void apply_update(const Gradients& g, double lr, double clip_norm) {
    double scale = lr;
    if (clip_norm > 0.0) {
      const double n = std::sqrt(g.squared_norm());
      if (n > clip_norm) scale = lr * clip_norm / n;
    }
    w1_ -= scale * g.w1; b1_ -= scale * g.b1;
    w2_ -= scale * g.w2; b2_ -= scale * g.b2;
    w3_ -= scale * g.w3; b3_ -= scale * g.b3;
    wv_ -= scale * g.wv; bv_ -= scale * g.bv;
    wa_ -= scale * g.wa; ba_ -= scale * g.ba;
  }

  struct LayerRef {
    const Eigen::MatrixXd& w;
    const Eigen::VectorXd& b;
  };
  struct LayerMut {
    Eigen::MatrixXd& w;
    Eigen::VectorXd& b;
  };
  std::vector<LayerRef> layers() const {
    return {{w1_, b1_}, {w2_, b2_}, {w3_, b3_}, {wv_, bv_}, {wa_, ba_}};
  }
  std::vector<LayerMut> layers() {
    return {{w1_, b1_}, {w2_, b2_}, {w3_, b3_}, {wv_, bv_}, {wa_, ba_}};
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const LayerRef& l : layers()) n += static_cast<std::size_t>(l.w.size()) + l.b.size();
    return n;
  }

  Eigen::VectorXd flatten() const {
    Eigen::VectorXd v(param_count());
    Eigen::Index k = 0;
    for (const LayerRef& l : layers()) {
      v.segment(k, l.w.size()) = Eigen::Map<const Eigen::VectorXd>(l.w.data(), l.w.size());
      k += l.w.size();
      v.segment(k, l.b.size()) = l.b;
      k += l.b.size();
    }
    return v;
  }

  void unflatten(const Eigen::VectorXd& v) {
    if (v.size() != static_cast<Eigen::Index>(param_count()))
      throw std::invalid_argument("QNetwork: parameter vector size mismatch");
    Eigen::Index k = 0;
    for (LayerMut l : layers()) {
      Eigen::Map<Eigen::VectorXd>(l.w.data(), l.w.size()) = v.segment(k, l.w.size());
      k += l.w.size();
      l.b = v.segment(k, l.b.size());
      k += l.b.size();
    }
  }

  static Eigen::VectorXd flatten_gradients(const Gradients& g) {
    const Eigen::MatrixXd* ws[] = {&g.w1, &g.w2, &g.w3, &g.wv, &g.wa};
    const Eigen::VectorXd* bs[] = {&g.b1, &g.b2, &g.b3, &g.bv, &g.ba};
    Eigen::Index total = 0;
    for (int i = 0; i < 5; ++i) total += ws[i]->size() + bs[i]->size();
    Eigen::VectorXd v(total);
    Eigen::Index k = 0;
    for (int i = 0; i < 5; ++i) {
      v.segment(k, ws[i]->size()) =
          Eigen::Map<const Eigen::VectorXd>(ws[i]->data(), ws[i]->size());
      k += ws[i]->size();
      v.segment(k, bs[i]->size()) = *bs[i];
      k += bs[i]->size();
    }
    return v;
  }

  bool finite() const {
    for (const LayerRef& l : layers())
      if (!l.w.allFinite() || !l.b.allFinite()) return false;
    return true;
  }

 private:
  void check_state(const Eigen::MatrixXd& state) const {
    if (state.rows() != cfg_.input_dim || state.cols() != cfg_.views)
      throw std::invalid_argument("QNetwork: state shape mismatch");
  }

  Eigen::VectorXd heads(const Eigen::VectorXd& t) const {
    const int half = cfg_.trunk_dim / 2;
    const double v = (wv_ * t.head(half))(0) + bv_(0);
    const Eigen::VectorXd a = wa_ * t.tail(half) + ba_;
    return (a.array() + (v - a.mean())).matrix();
  }

  QNetConfig cfg_;
  Eigen::MatrixXd w1_, w2_, w3_, wv_, wa_;
  Eigen::VectorXd b1_, b2_, b3_, bv_, ba_;
};

}  // namespace viewfill
