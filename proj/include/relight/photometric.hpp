#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "relight/frame.hpp"

namespace relight {

// Pixel pair (p in frame i, p' in frame j) with a positive weight.
struct Correspondence {
  int xi = 0, yi = 0;
  int xj = 0, yj = 0;
  double weight = 1.0;
};

struct CorrespondenceSet {
  std::vector<Correspondence> pairs;

  static CorrespondenceSet identity(int width, int height) {
    CorrespondenceSet c;
    c.pairs.reserve(static_cast<std::size_t>(width) * height);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        c.pairs.push_back({x, y, x, y, 1.0});
      }
    }
    return c;
  }
};

// Per-frame brightness compensation e^{-a}(I - b).
struct AffineBrightness {
  double a = 0.0;
  double b = 0.0;
};

struct HuberConfig {
  double delta = 0.03;  // threshold in normalized intensity
};

inline double huber(double r, double delta) {
  const double ar = std::fabs(r);
  return ar <= delta ? 0.5 * r * r : delta * (ar - 0.5 * delta);
}

namespace detail {

inline void check_pair(const Frame& fi, const Frame& fj,
                       const Correspondence& p) {
  if (p.xi < 0 || p.xi >= fi.width || p.yi < 0 || p.yi >= fi.height ||
      p.xj < 0 || p.xj >= fj.width || p.yj < 0 || p.yj >= fj.height) {
    throw std::invalid_argument(
        "photometric: out-of-bounds correspondence (" + std::to_string(p.xi) +
        "," + std::to_string(p.yi) + ")->(" + std::to_string(p.xj) + "," +
        std::to_string(p.yj) + ")");
  }
  if (!(p.weight > 0.0)) {
    throw std::invalid_argument("photometric: non-positive weight");
  }
}

}  // namespace detail

// Affine-compensated Huber photometric energy over supplied correspondences:
//   sum_p w_p * Huber_delta((I_j[p'] - b_j) - e^{a_j - a_i} (I_i[p] - b_i))
inline double photometric_energy(const Frame& frame_i, const Frame& frame_j,
                                 const CorrespondenceSet& corr,
                                 AffineBrightness ab_i, AffineBrightness ab_j,
                                 const HuberConfig& cfg = {}) {
  if (frame_i.channels != 1 || frame_j.channels != 1) {
    throw std::invalid_argument("photometric_energy: 1-channel luminance only");
  }
  const double scale = std::exp(ab_j.a - ab_i.a);
  double e = 0.0;
  for (const auto& p : corr.pairs) {
    detail::check_pair(frame_i, frame_j, p);
    const double r = (frame_j.at(p.yj, p.xj) - ab_j.b) -
                     scale * (frame_i.at(p.yi, p.xi) - ab_i.b);
    e += p.weight * huber(r, cfg.delta);
  }
  return e;
}

struct AffineFit {
  AffineBrightness ab_j;  // relative to a_i = b_i = 0
  double energy = 0.0;    // Huber energy at the least-squares optimum
};

// Weighted least squares for I_j[p'] = s * I_i[p] + o with s > 0, reported
// as a_j = ln s, b_j = o with the gauge fixed at a_i = b_i = 0.
inline AffineFit fit_affine(const Frame& frame_i, const Frame& frame_j,
                            const CorrespondenceSet& corr,
                            const HuberConfig& cfg = {}) {
  if (corr.pairs.size() < 2) {
    throw std::invalid_argument("fit_affine: need at least 2 correspondences");
  }
  double sw = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (const auto& p : corr.pairs) {
    detail::check_pair(frame_i, frame_j, p);
    const double x = frame_i.at(p.yi, p.xi);
    const double y = frame_j.at(p.yj, p.xj);
    sw += p.weight;
    sx += p.weight * x;
    sy += p.weight * y;
    sxx += p.weight * x * x;
    sxy += p.weight * x * y;
  }
  const double mx = sx / sw, my = sy / sw;
  const double varx = sxx / sw - mx * mx;
  if (varx < 1e-12) {
    throw std::runtime_error("fit_affine: degenerate fit (constant intensities)");
  }
  const double s = (sxy / sw - mx * my) / varx;
  const double o = my - s * mx;
  if (!(s > 0.0)) {
    throw std::runtime_error("fit_affine: degenerate fit (non-positive scale)");
  }
  AffineFit fit;
  fit.ab_j = AffineBrightness{std::log(s), o};
  fit.energy =
      photometric_energy(frame_i, frame_j, corr, AffineBrightness{}, fit.ab_j, cfg);
  return fit;
}

// Mean over adjacent pairs of per-correspondence best-affine Huber energy.
// With one correspondence set reused for every pair, pass it repeated.
inline double sequence_photometric_score(
    const Sequence& seq, const std::vector<CorrespondenceSet>& corr_per_pair,
    const HuberConfig& cfg = {}) {
  if (seq.size() < 2) {
    throw std::invalid_argument("sequence_photometric_score: need >= 2 frames");
  }
  if (corr_per_pair.size() != seq.size() - 1) {
    throw std::invalid_argument(
        "sequence_photometric_score: one correspondence set per adjacent pair");
  }
  double total = 0.0;
  for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
    const Frame li = luminance(seq.frames[t]);
    const Frame lj = luminance(seq.frames[t + 1]);
    const auto fit = fit_affine(li, lj, corr_per_pair[t], cfg);
    total += fit.energy / static_cast<double>(corr_per_pair[t].pairs.size());
  }
  return total / static_cast<double>(seq.size() - 1);
}

// Line-oriented text format: `x_i y_i x_j y_j [weight]` per pair.
inline CorrespondenceSet load_correspondences(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  CorrespondenceSet c;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    Correspondence p;
    if (!(ss >> p.xi >> p.yi >> p.xj >> p.yj)) {
      throw std::runtime_error("bad correspondence line in " + path + ": " + line);
    }
    if (!(ss >> p.weight)) p.weight = 1.0;
    c.pairs.push_back(p);
  }
  return c;
}

}  // namespace relight
