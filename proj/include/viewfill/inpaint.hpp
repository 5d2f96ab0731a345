#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "viewfill/geometry.hpp"

namespace viewfill {

/// One inpainting task: fill `mask` in `observed` using the dense,
/// volume-projected `guide`. mask pixels must be holes of `observed`.
struct InpaintRequest {
  const DepthMap& observed;
  const DepthMap& guide;
  const Mask& mask;

  void validate() const {
    if (observed.width != guide.width || observed.height != guide.height ||
        observed.width != mask.width || observed.height != mask.height)
      throw std::invalid_argument("InpaintRequest: dimension mismatch");
    for (std::size_t i = 0; i < mask.bits.size(); ++i) {
      if (mask.bits[i] && observed.data[i] > 0.0f)
        throw std::invalid_argument("InpaintRequest: mask covers a valid pixel");
      if (guide.data[i] <= 0.0f) throw std::invalid_argument("InpaintRequest: guide has holes");
    }
  }
};

enum class Inpainter { kGuidedFill, kLaplacianFill, kOracle };

inline Inpainter inpainter_from_string(const std::string& s) {
  if (s == "guided") return Inpainter::kGuidedFill;
  if (s == "laplacian") return Inpainter::kLaplacianFill;
  if (s == "oracle") return Inpainter::kOracle;
  throw std::invalid_argument("unknown inpainter: " + s);
}

struct InpaintParams {
  double lambda = 1.0;           // laplacian: 1 reproduces guide gradients, 0 is harmonic fill
  double tol = 1e-6;             // laplacian: max absolute residual
  int max_sweeps = 20000;        // laplacian: Gauss-Seidel sweep cap
  const DepthMap* gt = nullptr;  // oracle only
  double sigma = 0.0;            // oracle: noise stddev, meters
  std::uint64_t noise_seed = 0;  // oracle
};

namespace detail {

constexpr int kNeighbors4[4][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};

/// Median of (observed - guide) over the 4-neighborhood boundary ring of the
/// mask; 0 when the ring is empty.
inline double boundary_offset(const InpaintRequest& req) {
  std::vector<double> diffs;
  const int w = req.mask.width, h = req.mask.height;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (req.mask.at(x, y) || !req.observed.valid(x, y)) continue;
      bool on_ring = false;
      for (const auto& n : kNeighbors4) {
        const int nx = x + n[0], ny = y + n[1];
        if (nx >= 0 && nx < w && ny >= 0 && ny < h && req.mask.at(nx, ny)) {
          on_ring = true;
          break;
        }
      }
      if (on_ring) diffs.push_back(static_cast<double>(req.observed.at(x, y)) - req.guide.at(x, y));
    }
  if (diffs.empty()) return 0.0;
  const std::size_t mid = diffs.size() / 2;
  std::nth_element(diffs.begin(), diffs.begin() + mid, diffs.end());
  double m = diffs[mid];
  if (diffs.size() % 2 == 0) {
    const double lo = *std::max_element(diffs.begin(), diffs.begin() + mid);
    m = 0.5 * (lo + m);
  }
  return m;
}

/// Gauss-Seidel solve of lap(D) = lambda * lap(guide) on the mask with
/// Dirichlet boundary = observed on the ring. Neighbors that are holes
/// outside the mask or off-image drop out of the stencil; a pixel with no
/// usable neighbors falls back to the raw guide value.
inline void laplacian_solve(const InpaintRequest& req, double lambda, double tol, int max_sweeps,
                            DepthMap& out) {
  const int w = req.mask.width, h = req.mask.height;

  struct Unknown {
    int x, y;
    int nbr[4];     // index into unknowns, or -1
    double bsum;    // sum of Dirichlet neighbor values
    double rhs;     // lambda * (deg*guide(x) - sum usable guide neighbors)
    int deg;
  };
  std::vector<int> id(static_cast<std::size_t>(w) * h, -1);
  std::vector<Unknown> unk;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (req.mask.at(x, y)) {
        id[static_cast<std::size_t>(y) * w + x] = static_cast<int>(unk.size());
        unk.push_back({x, y, {-1, -1, -1, -1}, 0.0, 0.0, 0});
      }

  for (Unknown& u : unk) {
    double gsum = 0.0;
    for (int k = 0; k < 4; ++k) {
      const int nx = u.x + kNeighbors4[k][0], ny = u.y + kNeighbors4[k][1];
      if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
      if (req.mask.at(nx, ny)) {
        u.nbr[u.deg] = id[static_cast<std::size_t>(ny) * w + nx];
        ++u.deg;
        gsum += req.guide.at(nx, ny);
      } else if (req.observed.valid(nx, ny)) {
        u.nbr[u.deg] = -1;
        u.bsum += req.observed.at(nx, ny);
        ++u.deg;
        gsum += req.guide.at(nx, ny);
      }
      // holes outside the mask contribute nothing
    }
    u.rhs = lambda * (u.deg * static_cast<double>(req.guide.at(u.x, u.y)) - gsum);
  }

  // init with the guided-fill estimate; the converged solution is unaffected
  const double delta = boundary_offset(req);
  std::vector<double> val(unk.size());
  for (std::size_t i = 0; i < unk.size(); ++i)
    val[i] = static_cast<double>(req.guide.at(unk[i].x, unk[i].y)) + delta;

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    for (std::size_t i = 0; i < unk.size(); ++i) {
      const Unknown& u = unk[i];
      if (u.deg == 0) continue;
      double sum = u.bsum + u.rhs;
      for (int k = 0; k < u.deg; ++k)
        if (u.nbr[k] >= 0) sum += val[static_cast<std::size_t>(u.nbr[k])];
      val[i] = sum / u.deg;
    }
    if ((sweep & 15) != 15 && sweep + 1 != max_sweeps) continue;
    double res = 0.0;
    for (std::size_t i = 0; i < unk.size(); ++i) {
      const Unknown& u = unk[i];
      if (u.deg == 0) continue;
      double sum = u.bsum + u.rhs;
      for (int k = 0; k < u.deg; ++k)
        if (u.nbr[k] >= 0) sum += val[static_cast<std::size_t>(u.nbr[k])];
      res = std::max(res, std::abs(u.deg * val[i] - sum));
    }
    if (res < tol) break;
  }

  for (std::size_t i = 0; i < unk.size(); ++i) {
    const Unknown& u = unk[i];
    out.at(u.x, u.y) = u.deg == 0 ? req.guide.at(u.x, u.y) : static_cast<float>(val[i]);
  }
}

}  // namespace detail

/// Fills the mask of `req.observed` and returns the result; pixels outside
/// the mask are returned unchanged.
inline DepthMap inpaint(const InpaintRequest& req, Inpainter method, const InpaintParams& params = {}) {
  req.validate();
  DepthMap out = req.observed;

  switch (method) {
    case Inpainter::kGuidedFill: {
      const double delta = detail::boundary_offset(req);
      for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
          if (req.mask.at(x, y))
            out.at(x, y) = static_cast<float>(std::max(1e-6, static_cast<double>(req.guide.at(x, y)) + delta));
      break;
    }
    case Inpainter::kLaplacianFill:
      detail::laplacian_solve(req, params.lambda, params.tol, params.max_sweeps, out);
      break;
    case Inpainter::kOracle: {
      if (!params.gt) throw std::invalid_argument("inpaint: oracle requires ground truth");
      if (params.gt->width != out.width || params.gt->height != out.height)
        throw std::invalid_argument("inpaint: ground-truth dimension mismatch");
      std::mt19937_64 rng(params.noise_seed);
      std::normal_distribution<double> noise(0.0, params.sigma);
      for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) {
          if (!req.mask.at(x, y)) continue;
          const float g = params.gt->at(x, y);
          if (g <= 0.0f) continue;  // ground truth is a hole here: leave the hole
          const double n = params.sigma > 0.0 ? noise(rng) : 0.0;
          out.at(x, y) = static_cast<float>(std::max(1e-6, static_cast<double>(g) + n));
        }
      break;
    }
  }
  return out;
}

struct InpaintMetrics {
  double l1_omega;
  double psnr;
  double ssim;
};

namespace detail {

/// 11x11 Gaussian window, sigma 1.5, normalized.
inline const std::vector<double>& ssim_window() {
  static const std::vector<double> win = [] {
    std::vector<double> w(121);
    double sum = 0.0;
    for (int y = -5; y <= 5; ++y)
      for (int x = -5; x <= 5; ++x) {
        const double g = std::exp(-(x * x + y * y) / (2.0 * 1.5 * 1.5));
        w[(y + 5) * 11 + (x + 5)] = g;
        sum += g;
      }
    for (double& v : w) v /= sum;
    return w;
  }();
  return win;
}

}  // namespace detail

/// L1 over the mask, PSNR over pixels valid in both maps (peak = d_max, capped
/// at 99 dB), and mean SSIM over the full rasters (11x11 Gaussian window,
/// standard constants, dynamic range d_max).
inline InpaintMetrics inpaint_metrics(const DepthMap& pred, const DepthMap& gt, const Mask& mask,
                                      double d_max) {
  if (pred.width != gt.width || pred.height != gt.height || pred.width != mask.width ||
      pred.height != mask.height)
    throw std::invalid_argument("inpaint_metrics: dimension mismatch");

  double l1 = 0.0;
  std::size_t n_mask = 0;
  for (std::size_t i = 0; i < mask.bits.size(); ++i)
    if (mask.bits[i]) {
      l1 += std::abs(static_cast<double>(pred.data[i]) - gt.data[i]);
      ++n_mask;
    }
  if (n_mask == 0) throw std::invalid_argument("inpaint_metrics: empty mask");
  l1 /= static_cast<double>(n_mask);

  double mse = 0.0;
  std::size_t n_valid = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i)
    if (pred.data[i] > 0.0f && gt.data[i] > 0.0f) {
      const double e = static_cast<double>(pred.data[i]) - gt.data[i];
      mse += e * e;
      ++n_valid;
    }
  double psnr = 99.0;
  if (n_valid > 0 && mse > 0.0) {
    mse /= static_cast<double>(n_valid);
    psnr = std::min(99.0, 10.0 * std::log10(d_max * d_max / mse));
  }

  // SSIM over the raw rasters (holes enter as 0)
  const auto& win = detail::ssim_window();
  const double c1 = (0.01 * d_max) * (0.01 * d_max);
  const double c2 = (0.03 * d_max) * (0.03 * d_max);
  const int w = pred.width, h = pred.height;
  double ssim_sum = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double mu_p = 0, mu_g = 0, wsum = 0;
      for (int dy = -5; dy <= 5; ++dy)
        for (int dx = -5; dx <= 5; ++dx) {
          const int xx = x + dx, yy = y + dy;
          if (xx < 0 || xx >= w || yy < 0 || yy >= h) continue;
          const double wt = win[(dy + 5) * 11 + (dx + 5)];
          mu_p += wt * pred.at(xx, yy);
          mu_g += wt * gt.at(xx, yy);
          wsum += wt;
        }
      mu_p /= wsum;
      mu_g /= wsum;
      double var_p = 0, var_g = 0, cov = 0;
      for (int dy = -5; dy <= 5; ++dy)
        for (int dx = -5; dx <= 5; ++dx) {
          const int xx = x + dx, yy = y + dy;
          if (xx < 0 || xx >= w || yy < 0 || yy >= h) continue;
          const double wt = win[(dy + 5) * 11 + (dx + 5)] / wsum;
          const double ep = pred.at(xx, yy) - mu_p, eg = gt.at(xx, yy) - mu_g;
          var_p += wt * ep * ep;
          var_g += wt * eg * eg;
          cov += wt * ep * eg;
        }
      ssim_sum += ((2 * mu_p * mu_g + c1) * (2 * cov + c2)) /
                  ((mu_p * mu_p + mu_g * mu_g + c1) * (var_p + var_g + c2));
    }
  const double ssim = ssim_sum / (static_cast<double>(w) * h);

  return InpaintMetrics{l1, psnr, ssim};
}

}  // namespace viewfill
