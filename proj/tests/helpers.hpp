#pragma once

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "relight/controller.hpp"
#include "relight/frame.hpp"
#include "relight/gamma.hpp"
#include "relight/rng.hpp"
#include "relight/ssim.hpp"

namespace testutil {

namespace fs = std::filesystem;

// Self-deleting temp directory.
struct TempDir {
  fs::path path;

  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() /
           (tag + "_" + std::to_string(std::rand()) + "_" +
            std::to_string(reinterpret_cast<std::uintptr_t>(this) & 0xffff));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string str() const { return path.string(); }
};

inline relight::Frame random_frame(relight::Rng& rng, int w, int h,
                                   int channels = 1, double lo = 0.0,
                                   double hi = 1.0) {
  relight::Frame f(w, h, channels);
  for (double& v : f.data) v = rng.uniform(lo, hi);
  return f;
}

inline relight::Frame constant_frame(int w, int h, double value,
                                     int channels = 1) {
  return relight::Frame(w, h, channels, value);
}

// Independent re-implementation of the trainer's objective for a forced
// gamma assignment: mean over targets of the mean masked SSIM loss against
// [prev1, prev2, raw0, raw1], with raw frames standing in for seed
// "adjusted" references. Used as the oracle for sequence_loss / backward.
inline double manual_sequence_loss(const relight::Sequence& seq,
                                   const std::vector<double>& gammas,
                                   const relight::SsimConfig& ssim_cfg,
                                   int seed_count = 2) {
  const int n = static_cast<int>(seq.size());
  std::vector<relight::Frame> raw_lum, adj_lum(n);
  for (const auto& f : seq.frames) raw_lum.push_back(relight::luminance(f));
  for (int t = seed_count; t < n; ++t) {
    adj_lum[t] = relight::luminance(
        relight::apply_gamma(seq.frames[t], relight::GammaValue{gammas[t]}));
  }
  double total = 0.0;
  int used = 0;
  for (int t = seed_count; t < n; ++t) {
    const auto mask =
        relight::specular_mask(seq.frames[t], ssim_cfg.mask_threshold);
    if (mask.kept_count() == 0) continue;
    auto prev = [&](int j) {
      return j >= seed_count ? &adj_lum[j] : &raw_lum[j];
    };
    const relight::Frame* refs[4] = {prev(t - 1), prev(t - 2), &raw_lum[0],
                                     &raw_lum[1]};
    double lt = 0.0;
    for (const auto* r : refs) {
      lt += relight::masked_ssim_loss(*r, adj_lum[t], mask, ssim_cfg);
    }
    total += lt / 4.0;
    ++used;
  }
  return total / used;
}

// Per-frame gammas from the public controller API (fresh zero state).
inline std::vector<double> forward_gammas(const relight::ControllerParams& p,
                                          const relight::Sequence& seq) {
  auto state = relight::ControllerState::zero(p.arch);
  std::vector<double> g;
  g.reserve(seq.size());
  for (const auto& f : seq.frames) {
    auto [gv, next] = relight::step(p, state, relight::controller_input(f, p.arch));
    state = std::move(next);
    g.push_back(gv.value);
  }
  return g;
}

// Training objective with the adjusted *reference* frames frozen at
// base_adj_lum while the targets follow `gammas`. This is the function whose
// exact gradient backward() computes: previous adjusted references are
// gradient-detached, so the finite-difference oracle must hold their pixel
// values fixed at the unperturbed operating point.
inline double detached_sequence_loss(
    const relight::Sequence& seq, const std::vector<double>& gammas,
    const std::vector<relight::Frame>& base_adj_lum,
    const relight::SsimConfig& ssim_cfg, int seed_count = 2) {
  const int n = static_cast<int>(seq.size());
  std::vector<relight::Frame> raw_lum;
  for (const auto& f : seq.frames) raw_lum.push_back(relight::luminance(f));
  double total = 0.0;
  int used = 0;
  for (int t = seed_count; t < n; ++t) {
    const auto mask =
        relight::specular_mask(seq.frames[t], ssim_cfg.mask_threshold);
    if (mask.kept_count() == 0) continue;
    const relight::Frame target = relight::luminance(
        relight::apply_gamma(seq.frames[t], relight::GammaValue{gammas[t]}));
    auto ref = [&](int j) {
      return j >= seed_count ? &base_adj_lum[j] : &raw_lum[j];
    };
    const relight::Frame* refs[4] = {ref(t - 1), ref(t - 2), &raw_lum[0],
                                     &raw_lum[1]};
    double lt = 0.0;
    for (const auto* r : refs) {
      lt += relight::masked_ssim_loss(*r, target, mask, ssim_cfg);
    }
    total += lt / 4.0;
    ++used;
  }
  return total / used;
}

// Adjusted-frame luminances at a given gamma assignment (references for the
// detached loss); seed slots stay empty.
inline std::vector<relight::Frame> adjusted_luminances(
    const relight::Sequence& seq, const std::vector<double>& gammas,
    int seed_count = 2) {
  std::vector<relight::Frame> adj(seq.size());
  for (std::size_t t = seed_count; t < seq.size(); ++t) {
    adj[t] = relight::luminance(
        relight::apply_gamma(seq.frames[t], relight::GammaValue{gammas[t]}));
  }
  return adj;
}

struct CliResult {
  int exit_code = -1;
  std::string out;
};

// Runs the CLI binary, capturing stdout. RELIGHT_CLI_PATH is injected by the
// build.
inline CliResult run_cli(const std::string& args) {
  static int counter = 0;
  const fs::path out_file =
      fs::temp_directory_path() /
      ("relight_cli_out_" + std::to_string(::getpid()) + "_" +
       std::to_string(counter++) + ".txt");
  const std::string cmd = std::string(RELIGHT_CLI_PATH) + " " + args + " > " +
                          out_file.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(out_file);
  std::stringstream ss;
  ss << in.rdbuf();
  r.out = ss.str();
  fs::remove(out_file);
  return r;
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace testutil
