#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "relight/frame.hpp"
#include "relight/gamma.hpp"
#include "relight/ssim.hpp"
#include "relight/trainer.hpp"

namespace relight {

// Per-frame exhaustive gamma search minimizing the same reference-set loss
// the trainer uses: a non-learned baseline and a ground-truth comparator.
struct OracleConfig {
  std::vector<double> grid;  // ascending, log-uniform, contains exactly 1.0
  SsimConfig ssim;
  int seed_count = 2;

  // 241 log-uniform points over [0.1, 10] (step 10^(1/120) ~= 2^(1/36)).
  static std::vector<double> default_grid() {
    std::vector<double> g(241);
    for (int k = 0; k < 241; ++k) {
      g[k] = std::pow(10.0, (k - 120) / 120.0);
    }
    g[120] = 1.0;
    return g;
  }

  OracleConfig() : grid(default_grid()) {}

  double log_step() const { return std::log(10.0) / 120.0; }
};

struct OracleFrameResult {
  GammaValue gamma{1.0};
  double loss = 0.0;
  bool skipped = false;  // empty mask: frame passed through with gamma 1
};

// Grid gamma minimizing the 4-reference mean masked SSIM loss for frame t.
// Ties break toward the gamma closest to 1, then toward the smaller gamma.
inline OracleFrameResult oracle_gamma(const Sequence& seq, int t,
                                      const std::vector<Frame>& prior_adjusted,
                                      const OracleConfig& cfg) {
  if (t < cfg.seed_count || t >= static_cast<int>(seq.size())) {
    throw std::invalid_argument("oracle_gamma: target index out of range");
  }
  const Frame& target = seq.frames[t];
  const SpecularMask mask = specular_mask(target, cfg.ssim.mask_threshold);
  OracleFrameResult best;
  if (mask.kept_count() == 0) {
    best.skipped = true;
    return best;
  }

  std::vector<Frame> raw_lum;
  std::vector<Frame> adjusted_lum(seq.size());
  for (const Frame& f : seq.frames) raw_lum.push_back(luminance(f));
  for (int j = cfg.seed_count; j < t; ++j) {
    adjusted_lum[j] = luminance(prior_adjusted[j]);
  }
  const auto refs =
      detail::reference_set(t, cfg.seed_count, raw_lum, adjusted_lum);
  std::vector<BoxStats> ref_stats;
  ref_stats.reserve(refs.size());
  for (const Frame* ref : refs) ref_stats.push_back(box_stats(*ref, cfg.ssim));

  bool first = true;
  for (double g : cfg.grid) {
    const Frame adj = luminance(apply_gamma(target, GammaValue{g}));
    const BoxStats adj_stats = box_stats(adj, cfg.ssim);
    double loss = 0.0;
    for (std::size_t k = 0; k < refs.size(); ++k) {
      loss += masked_ssim_loss_with_stats(*refs[k], ref_stats[k], adj,
                                          adj_stats, mask, cfg.ssim);
    }
    loss /= static_cast<double>(refs.size());
    bool better = first || loss < best.loss;
    if (!better && loss == best.loss) {
      const double d_new = std::abs(std::log(g));
      const double d_old = std::abs(std::log(best.gamma.value));
      better = d_new < d_old || (d_new == d_old && g < best.gamma.value);
    }
    if (better) {
      best.gamma = GammaValue{g};
      best.loss = loss;
      first = false;
    }
  }
  return best;
}

struct OracleTrace {
  Sequence enhanced;
  std::vector<GammaValue> gammas;
  std::vector<double> losses;
  std::vector<bool> skipped;
};

// Sequential oracle enhancement; the two seed frames pass through unchanged.
inline OracleTrace oracle_enhance(const Sequence& seq,
                                  const OracleConfig& cfg = {}) {
  if (seq.size() < 3) {
    throw std::invalid_argument("oracle_enhance: need at least 3 frames");
  }
  OracleTrace out;
  out.enhanced.fps = seq.fps;
  out.enhanced.frames.resize(seq.size());
  out.gammas.assign(seq.size(), GammaValue{1.0});
  out.losses.assign(seq.size(), 0.0);
  out.skipped.assign(seq.size(), false);
  for (int t = 0; t < cfg.seed_count; ++t) {
    out.enhanced.frames[t] = seq.frames[t];
  }
  for (int t = cfg.seed_count; t < static_cast<int>(seq.size()); ++t) {
    const auto r = oracle_gamma(seq, t, out.enhanced.frames, cfg);
    out.gammas[t] = r.gamma;
    out.losses[t] = r.loss;
    out.skipped[t] = r.skipped;
    out.enhanced.frames[t] = apply_gamma(seq.frames[t], r.gamma);
  }
  return out;
}

}  // namespace relight
