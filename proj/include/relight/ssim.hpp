#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "relight/frame.hpp"

namespace relight {

struct SsimConfig {
  int window_radius = 5;            // 11x11 uniform window
  double c1 = 0.01 * 0.01;          // stabilizers for dynamic range L = 1
  double c2 = 0.03 * 0.03;
  double mask_threshold = 0.7;
};

struct EmptyMaskError : std::runtime_error {
  EmptyMaskError() : std::runtime_error("masked_ssim_loss: empty mask") {}
};

namespace detail {

inline int reflect_index(int i, int n) {
  if (i < 0) return -i - 1;
  if (i >= n) return 2 * n - 1 - i;
  return i;
}

inline void check_window(const Frame& a, int radius) {
  if (radius < 1) throw std::invalid_argument("ssim: window_radius must be >= 1");
  if (2 * radius + 1 > a.width || 2 * radius + 1 > a.height) {
    throw std::invalid_argument("ssim: window does not fit within frame");
  }
}

// Uniform box mean over a (2r+1)^2 window with symmetric-reflection
// boundaries, separable per axis.
inline std::vector<double> box_mean(const std::vector<double>& in, int w,
                                    int h, int r) {
  std::vector<double> tmp(in.size()), out(in.size());
  const double inv = 1.0 / (2 * r + 1);
  for (int y = 0; y < h; ++y) {
    const double* row = in.data() + static_cast<std::size_t>(y) * w;
    double* trow = tmp.data() + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int k = -r; k <= r; ++k) s += row[reflect_index(x + k, w)];
      trow[x] = s * inv;
    }
  }
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) {
      double s = 0.0;
      for (int k = -r; k <= r; ++k) {
        s += tmp[static_cast<std::size_t>(reflect_index(y + k, h)) * w + x];
      }
      out[static_cast<std::size_t>(y) * w + x] = s * inv;
    }
  }
  return out;
}

// Adjoint of box_mean (scatter with the same reflected index map).
inline std::vector<double> box_mean_adjoint(const std::vector<double>& in,
                                            int w, int h, int r) {
  std::vector<double> tmp(in.size(), 0.0), out(in.size(), 0.0);
  const double inv = 1.0 / (2 * r + 1);
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) {
      const double v = in[static_cast<std::size_t>(y) * w + x] * inv;
      for (int k = -r; k <= r; ++k) {
        tmp[static_cast<std::size_t>(reflect_index(y + k, h)) * w + x] += v;
      }
    }
  }
  for (int y = 0; y < h; ++y) {
    const double* trow = tmp.data() + static_cast<std::size_t>(y) * w;
    double* orow = out.data() + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      const double v = trow[x] * inv;
      for (int k = -r; k <= r; ++k) orow[reflect_index(x + k, w)] += v;
    }
  }
  return out;
}

struct SsimFields {
  std::vector<double> mu_r, mu_t, s_tt, s_rt, s_rr;  // box means
};

inline SsimFields ssim_fields(const Frame& reference, const Frame& target,
                              const SsimConfig& cfg) {
  if (reference.channels != 1 || target.channels != 1) {
    throw std::invalid_argument("ssim: frames must be 1-channel luminance");
  }
  if (!reference.same_shape(target)) {
    throw std::invalid_argument("ssim: dimension mismatch");
  }
  check_window(reference, cfg.window_radius);
  const int w = reference.width, h = reference.height, r = cfg.window_radius;
  const std::size_t n = reference.data.size();
  std::vector<double> rr(n), tt(n), rt(n);
  for (std::size_t i = 0; i < n; ++i) {
    rr[i] = reference.data[i] * reference.data[i];
    tt[i] = target.data[i] * target.data[i];
    rt[i] = reference.data[i] * target.data[i];
  }
  SsimFields f;
  f.mu_r = box_mean(reference.data, w, h, r);
  f.mu_t = box_mean(target.data, w, h, r);
  f.s_rr = box_mean(rr, w, h, r);
  f.s_tt = box_mean(tt, w, h, r);
  f.s_rt = box_mean(rt, w, h, r);
  return f;
}

}  // namespace detail

// Per-pixel SSIM between two luminance frames:
//   (2 mu_r mu_t + c1)(2 cov + c2) / ((mu_r^2 + mu_t^2 + c1)(var_r + var_t + c2))
// with local statistics over a uniform window and symmetric-reflection
// boundary handling. The result reuses Frame storage as a scalar field.
inline Frame ssim_map(const Frame& reference, const Frame& target,
                      const SsimConfig& cfg = {}) {
  const auto f = detail::ssim_fields(reference, target, cfg);
  Frame out(reference.width, reference.height, 1, 0.0, target.index);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const double mu_r = f.mu_r[i], mu_t = f.mu_t[i];
    const double var_r = f.s_rr[i] - mu_r * mu_r;
    const double var_t = f.s_tt[i] - mu_t * mu_t;
    const double cov = f.s_rt[i] - mu_r * mu_t;
    const double num = (2.0 * mu_r * mu_t + cfg.c1) * (2.0 * cov + cfg.c2);
    const double den =
        (mu_r * mu_r + mu_t * mu_t + cfg.c1) * (var_r + var_t + cfg.c2);
    out.data[i] = num / den;
  }
  return out;
}

// Box means of an image and its square; reusable across many pairings with
// the same frame (the oracle's grid search leans on this).
struct BoxStats {
  std::vector<double> mu, s2;
};

inline BoxStats box_stats(const Frame& f, const SsimConfig& cfg = {}) {
  if (f.channels != 1) {
    throw std::invalid_argument("box_stats: 1-channel luminance only");
  }
  detail::check_window(f, cfg.window_radius);
  BoxStats s;
  s.mu = detail::box_mean(f.data, f.width, f.height, cfg.window_radius);
  std::vector<double> sq(f.data.size());
  for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = f.data[i] * f.data[i];
  s.s2 = detail::box_mean(sq, f.width, f.height, cfg.window_radius);
  return s;
}

// masked_ssim_loss with the per-frame box statistics precomputed; only the
// cross term B(r*t) is evaluated here.
inline double masked_ssim_loss_with_stats(const Frame& reference,
                                          const BoxStats& ref_stats,
                                          const Frame& target,
                                          const BoxStats& target_stats,
                                          const SpecularMask& mask,
                                          const SsimConfig& cfg = {}) {
  if (!reference.same_shape(target)) {
    throw std::invalid_argument("ssim: dimension mismatch");
  }
  if (mask.width != reference.width || mask.height != reference.height) {
    throw std::invalid_argument("masked_ssim_loss: mask dimension mismatch");
  }
  const std::size_t n = reference.data.size();
  std::vector<double> rt(n);
  for (std::size_t i = 0; i < n; ++i) {
    rt[i] = reference.data[i] * target.data[i];
  }
  const auto s_rt =
      detail::box_mean(rt, reference.width, reference.height, cfg.window_radius);
  double sum = 0.0;
  std::size_t kept = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask.keep[i]) continue;
    const double mu_r = ref_stats.mu[i], mu_t = target_stats.mu[i];
    const double var_r = ref_stats.s2[i] - mu_r * mu_r;
    const double var_t = target_stats.s2[i] - mu_t * mu_t;
    const double cov = s_rt[i] - mu_r * mu_t;
    const double num = (2.0 * mu_r * mu_t + cfg.c1) * (2.0 * cov + cfg.c2);
    const double den =
        (mu_r * mu_r + mu_t * mu_t + cfg.c1) * (var_r + var_t + cfg.c2);
    sum += 1.0 - num / den;
    ++kept;
  }
  if (kept == 0) throw EmptyMaskError{};
  return sum / static_cast<double>(kept);
}

// mean(1 - SSIM) over kept pixels only.
inline double masked_ssim_loss(const Frame& reference, const Frame& target,
                               const SpecularMask& mask,
                               const SsimConfig& cfg = {}) {
  return masked_ssim_loss_with_stats(reference, box_stats(reference, cfg),
                                     target, box_stats(target, cfg), mask, cfg);
}

// Analytic dL/d target for L = masked_ssim_loss(reference, target, ...).
inline Frame loss_gradient_wrt_target(const Frame& reference,
                                      const Frame& target,
                                      const SpecularMask& mask,
                                      const SsimConfig& cfg = {}) {
  if (mask.width != reference.width || mask.height != reference.height) {
    throw std::invalid_argument("loss_gradient: mask dimension mismatch");
  }
  const auto f = detail::ssim_fields(reference, target, cfg);
  const int w = reference.width, h = reference.height, r = cfg.window_radius;
  const std::size_t n = reference.data.size();
  const std::size_t kept = mask.kept_count();
  if (kept == 0) throw EmptyMaskError{};

  // dL/dS is -1/kept on kept pixels. Chain through S as a function of the
  // three target-dependent box means mu_t, s_tt, s_rt.
  std::vector<double> d_mu(n, 0.0), d_stt(n, 0.0), d_srt(n, 0.0);
  const double g = -1.0 / static_cast<double>(kept);
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask.keep[i]) continue;
    const double mu_r = f.mu_r[i], mu_t = f.mu_t[i];
    const double var_r = f.s_rr[i] - mu_r * mu_r;
    const double var_t = f.s_tt[i] - mu_t * mu_t;
    const double cov = f.s_rt[i] - mu_r * mu_t;
    const double a1 = 2.0 * mu_r * mu_t + cfg.c1;
    const double a2 = 2.0 * cov + cfg.c2;
    const double b1 = mu_r * mu_r + mu_t * mu_t + cfg.c1;
    const double b2 = var_r + var_t + cfg.c2;
    const double inv = 1.0 / (b1 * b2);
    const double s = a1 * a2 * inv;
    // dS/dmu_t with cov and var_t expanded through mu_t:
    const double ds_dmu = (2.0 * mu_r * a2 - 2.0 * mu_r * a1) * inv -
                          s * (2.0 * mu_t / b1) + s * (2.0 * mu_t / b2);
    const double ds_dstt = -s / b2;
    const double ds_dsrt = 2.0 * a1 * inv;
    d_mu[i] = g * ds_dmu;
    d_stt[i] = g * ds_dstt;
    d_srt[i] = g * ds_dsrt;
  }
  const auto a_mu = detail::box_mean_adjoint(d_mu, w, h, r);
  const auto a_stt = detail::box_mean_adjoint(d_stt, w, h, r);
  const auto a_srt = detail::box_mean_adjoint(d_srt, w, h, r);
  Frame out(w, h, 1, 0.0, target.index);
  for (std::size_t i = 0; i < n; ++i) {
    out.data[i] =
        a_mu[i] + a_stt[i] * 2.0 * target.data[i] + a_srt[i] * reference.data[i];
  }
  return out;
}

}  // namespace relight
