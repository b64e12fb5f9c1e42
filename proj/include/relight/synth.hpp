#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "relight/frame.hpp"
#include "relight/gamma.hpp"
#include "relight/rng.hpp"
#include "relight/ssim.hpp"

namespace relight {

// Ground-truth perturbation applied to each synthetic frame:
// degraded = clamp01(s * clean^g + o).
struct PerturbationTruth {
  std::vector<double> g, s, o;
};

struct SynthConfig {
  std::string base = "tube";  // "tube" or a path to a user image
  int length = 50;
  int width = 64;
  int height = 64;
  double walk_sigma = 0.08;  // std of the per-frame log-gamma random walk
  bool contrast_jitter = false;
  double contrast_scale_sigma = 0.05;
  double contrast_offset_sigma = 0.02;
  std::uint64_t rng_seed = 0;
  Frame user_base;  // decoded image for non-"tube" bases (set by the caller)

  void validate() const {
    if (length < 10) throw std::invalid_argument("SynthConfig: length >= 10");
    if (walk_sigma < 0.0) throw std::invalid_argument("SynthConfig: walk_sigma >= 0");
    if (width < 8 || height < 8) throw std::invalid_argument("SynthConfig: size >= 8");
  }
};

struct SynthResult {
  Sequence degraded;
  Sequence clean;
  PerturbationTruth truth;
};

namespace detail {

// Procedural "tube" pattern: radial falloff plus periodic ridges whose phase
// drifts slowly across frames, mimicking down-the-barrel endoscope footage.
inline Frame tube_frame(int w, int h, int t) {
  Frame f(w, h, 1, 0.0, t);
  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  const double rmax = std::sqrt(cx * cx + cy * cy);
  const double phase = 0.015 * t;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dx = (x - cx) / rmax, dy = (y - cy) / rmax;
      const double r = std::sqrt(dx * dx + dy * dy);
      const double falloff = 0.14 + 0.74 * std::exp(-2.2 * r * r);
      const double ridges =
          0.80 + 0.20 * std::cos(2.0 * 3.14159265358979323846 * (6.0 * r - phase));
      f.at(y, x) = std::min(std::max(falloff * ridges, 0.0), 1.0);
    }
  }
  return f;
}

}  // namespace detail

// Generates clean frames plus a degraded copy under a clamped log-gamma
// random walk (g in [1/3, 3]) and optional affine contrast jitter. Frames 0
// and 1 are never perturbed so they remain valid seeds.
inline SynthResult generate(const SynthConfig& cfg) {
  cfg.validate();
  SynthResult out;
  out.clean.fps = 18.0;
  out.degraded.fps = 18.0;

  const bool use_tube = cfg.base == "tube";
  if (!use_tube && cfg.user_base.data.empty()) {
    throw std::invalid_argument("generate: user base image not provided");
  }

  Rng rng(cfg.rng_seed);
  const double log_cap = std::log(3.0);
  double log_g = 0.0;
  out.truth.g.assign(cfg.length, 1.0);
  out.truth.s.assign(cfg.length, 1.0);
  out.truth.o.assign(cfg.length, 0.0);
  for (int t = 0; t < cfg.length; ++t) {
    if (t >= 2) {
      log_g += cfg.walk_sigma * rng.normal();
      log_g = std::min(std::max(log_g, -log_cap), log_cap);
      out.truth.g[t] = std::exp(log_g);
      if (cfg.contrast_jitter) {
        out.truth.s[t] = std::exp(cfg.contrast_scale_sigma * rng.normal());
        out.truth.o[t] = cfg.contrast_offset_sigma * rng.normal();
      }
    }
    Frame clean = use_tube ? detail::tube_frame(cfg.width, cfg.height, t)
                           : cfg.user_base;
    clean.index = t;
    Frame degraded = clean;
    const double g = out.truth.g[t], s = out.truth.s[t], o = out.truth.o[t];
    for (double& v : degraded.data) {
      v = std::min(std::max(s * std::pow(v, g) + o, 0.0), 1.0);
    }
    out.clean.frames.push_back(std::move(clean));
    out.degraded.frames.push_back(std::move(degraded));
  }
  return out;
}

// Re-applies a recorded truth to a clean sequence (test hook: the degraded
// output is reproducible bit-exactly from clean + truth).
inline Sequence apply_truth(const Sequence& clean, const PerturbationTruth& tr) {
  Sequence out;
  out.fps = clean.fps;
  for (std::size_t t = 0; t < clean.size(); ++t) {
    Frame f = clean.frames[t];
    for (double& v : f.data) {
      v = std::min(std::max(tr.s[t] * std::pow(v, tr.g[t]) + tr.o[t], 0.0), 1.0);
    }
    out.frames.push_back(std::move(f));
  }
  return out;
}

// Headline consistency metric: mean over adjacent pairs of the masked SSIM
// loss, masking from the later frame of each pair.
inline double adjacent_inconsistency(const Sequence& seq,
                                     const SsimConfig& ssim_cfg = {}) {
  if (seq.size() < 2) {
    throw std::invalid_argument("adjacent_inconsistency: need >= 2 frames");
  }
  double total = 0.0;
  for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
    const Frame a = luminance(seq.frames[t]);
    const Frame b = luminance(seq.frames[t + 1]);
    const SpecularMask mask =
        specular_mask(seq.frames[t + 1], ssim_cfg.mask_threshold);
    total += masked_ssim_loss(a, b, mask, ssim_cfg);
  }
  return total / static_cast<double>(seq.size() - 1);
}

inline void write_truth_csv(const PerturbationTruth& tr, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << "t,g,s,o\n";
    out.precision(17);
    for (std::size_t t = 0; t < tr.g.size(); ++t) {
      out << t << "," << tr.g[t] << "," << tr.s[t] << "," << tr.o[t] << "\n";
    }
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace relight
