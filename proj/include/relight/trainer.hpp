#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string_view>
#include <iostream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "relight/controller.hpp"
#include "relight/frame.hpp"
#include "relight/gamma.hpp"
#include "relight/rng.hpp"
#include "relight/ssim.hpp"

namespace relight {

struct TrainConfig {
  int seq_len = 10;
  int seed_count = 2;  // leading frames used raw as brightness anchors
  double learning_rate = 5e-5;
  int batch_size = 4;
  int epochs = 10;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (!(seq_len > seed_count && seed_count >= 2)) {
      throw std::invalid_argument("TrainConfig: need seq_len > seed_count >= 2");
    }
    if (!(learning_rate > 0.0)) {
      throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
    }
    if (batch_size < 1 || epochs < 1) {
      throw std::invalid_argument("TrainConfig: batch_size and epochs >= 1");
    }
  }
};

struct TrainReport {
  std::vector<double> epoch_mean_loss;
  std::vector<double> epoch_seconds;
  std::vector<double> sequence_loss_trace;  // per processed sequence, in order
};

namespace detail {

inline bool log_enabled() {
  const char* v = std::getenv("RELIGHT_LOG");
  return v != nullptr && std::string(v) != "0" && std::string(v) != "off";
}

// Reference luminances for target t: previous two adjusted frames (raw when
// the previous frame is a seed) plus the two raw seed frames.
inline std::vector<const Frame*> reference_set(
    int t, int seed_count, const std::vector<Frame>& raw_lum,
    const std::vector<Frame>& adjusted_lum) {
  auto prev = [&](int j) -> const Frame* {
    return j >= seed_count ? &adjusted_lum[j] : &raw_lum[j];
  };
  return {prev(t - 1), prev(t - 2), &raw_lum[0], &raw_lum[1]};
}

struct SequenceForward {
  std::vector<StepCache> caches;
  std::vector<Frame> raw_lum;
  std::vector<Frame> adjusted_lum;       // valid from index seed_count on
  std::vector<GammaValue> gammas;
  std::vector<SpecularMask> masks;       // per target index, from raw frames
  std::vector<char> target_used;         // indexed by frame, false when skipped
  double loss = 0.0;
  int used_targets = 0;
};

inline SequenceForward sequence_forward(const ControllerParams& params,
                                        const Sequence& seq,
                                        const TrainConfig& cfg,
                                        const SsimConfig& ssim_cfg) {
  cfg.validate();
  if (static_cast<int>(seq.size()) != cfg.seq_len) {
    throw std::invalid_argument("sequence length must equal cfg.seq_len");
  }
  const int n = cfg.seq_len;
  SequenceForward fw;
  fw.raw_lum.reserve(n);
  fw.adjusted_lum.resize(n);
  fw.masks.resize(n);
  fw.target_used.assign(n, 0);
  for (const Frame& f : seq.frames) fw.raw_lum.push_back(luminance(f));

  ControllerState state = ControllerState::zero(params.arch);
  for (int t = 0; t < n; ++t) {
    StepCache sc =
        step_forward(params, state, controller_input(seq.frames[t], params.arch));
    state.h = sc.h_new;
    state.c = sc.c_new;
    fw.gammas.push_back(sc.gamma);
    if (t >= cfg.seed_count) {
      fw.adjusted_lum[t] = luminance(apply_gamma(seq.frames[t], sc.gamma));
    }
    fw.caches.push_back(std::move(sc));
  }

  double total = 0.0;
  for (int t = cfg.seed_count; t < n; ++t) {
    fw.masks[t] = specular_mask(seq.frames[t], ssim_cfg.mask_threshold);
    if (fw.masks[t].kept_count() == 0) {
      if (log_enabled()) {
        std::cerr << "warning: frame " << t
                  << " fully specular, skipped in loss\n";
      }
      continue;
    }
    const auto refs = reference_set(t, cfg.seed_count, fw.raw_lum, fw.adjusted_lum);
    double loss_t = 0.0;
    for (const Frame* ref : refs) {
      loss_t += masked_ssim_loss(*ref, fw.adjusted_lum[t], fw.masks[t], ssim_cfg);
    }
    total += loss_t / static_cast<double>(refs.size());
    fw.target_used[t] = 1;
    ++fw.used_targets;
  }
  if (fw.used_targets == 0) {
    throw std::runtime_error("degenerate sequence: every target frame skipped");
  }
  fw.loss = total / fw.used_targets;
  return fw;
}

// Backward through one controller step. d_gamma is dL/dgamma at this step;
// d_h/d_c carry gradient from later steps and are replaced with the
// gradients for the previous state.
inline void step_backward(const ControllerParams& p, const StepCache& sc,
                          double d_gamma, Tensor& d_h, Tensor& d_c,
                          ControllerParams& grads) {
  const auto& a = p.arch;
  const int C = a.channels;
  const std::size_t plane = sc.h_new.plane();

  // head: gamma = clamp(relu(pre)); derivative vanishes when the ReLU is
  // off or the clamp is active.
  double d_pre = 0.0;
  if (sc.pre_head > 0.0 && sc.raw > kGammaMin && sc.raw < kGammaMax) {
    d_pre = d_gamma;
  }
  grads.head_bias[0] += d_pre;
  std::vector<double> d_fvec(C, 0.0);
  for (int ch = 0; ch < C; ++ch) {
    grads.head_weight[ch] += d_pre * sc.f_vec[ch];
    d_fvec[ch] = d_pre * p.head_weight[ch];
  }

  // global average pool + ReLU of conv2
  Tensor d_a2(C, sc.x3.h, sc.x3.w);
  const double inv = 1.0 / static_cast<double>(plane);
  for (int ch = 0; ch < C; ++ch) {
    const double dv = d_fvec[ch] * inv;
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t idx = ch * plane + i;
      d_a2.v[idx] = sc.a2.v[idx] > 0.0 ? dv : 0.0;
    }
  }
  Tensor d_h_conv2;
  nn::conv2d_backward(sc.h_new, p.conv2_weight, C, a.kernel, 1, 1, d_a2,
                      grads.conv2_weight, grads.conv2_bias, &d_h_conv2);

  // LSTM cell
  Tensor d_gates(4 * C, sc.h_new.h, sc.h_new.w);
  Tensor d_c_prev(C, sc.h_new.h, sc.h_new.w);
  for (int ch = 0; ch < C; ++ch) {
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t idx = ch * plane + i;
      const double dh = d_h_conv2.v[idx] + d_h.v[idx];
      const double go = sc.go.v[idx], gi = sc.gi.v[idx], gf = sc.gf.v[idx],
                   gg = sc.gg.v[idx], tc = sc.tanh_c.v[idx];
      const double d_o = dh * tc;
      const double dc = d_c.v[idx] + dh * go * (1.0 - tc * tc);
      const double d_i = dc * gg;
      const double d_g = dc * gi;
      const double d_f = dc * sc.c_prev.v[idx];
      d_c_prev.v[idx] = dc * gf;
      d_gates.v[(0 * C + ch) * plane + i] = d_i * gi * (1.0 - gi);
      d_gates.v[(1 * C + ch) * plane + i] = d_f * gf * (1.0 - gf);
      d_gates.v[(2 * C + ch) * plane + i] = d_o * go * (1.0 - go);
      d_gates.v[(3 * C + ch) * plane + i] = d_g * (1.0 - gg * gg);
    }
  }
  Tensor d_concat;
  nn::conv2d_backward(sc.concat, p.lstm_weight, 4 * C, a.kernel, 1, 1, d_gates,
                      grads.lstm_weight, grads.lstm_bias, &d_concat);

  // split concat gradient into x1 and h_prev parts
  Tensor d_a1(C, sc.h_new.h, sc.h_new.w);
  for (std::size_t i = 0; i < static_cast<std::size_t>(C) * plane; ++i) {
    d_a1.v[i] = sc.a1.v[i] > 0.0 ? d_concat.v[i] : 0.0;
    d_h.v[i] = d_concat.v[static_cast<std::size_t>(C) * plane + i];
  }
  d_c = std::move(d_c_prev);

  nn::conv2d_backward(sc.input, p.conv1_weight, C, a.kernel, 2, 1, d_a1,
                      grads.conv1_weight, grads.conv1_bias, nullptr);
}

}  // namespace detail

// Mean over non-skipped targets of the mean masked SSIM loss against each
// target's four reference frames.
inline double sequence_loss(const ControllerParams& params, const Sequence& seq,
                            const TrainConfig& cfg, const SsimConfig& ssim_cfg) {
  return detail::sequence_forward(params, seq, cfg, ssim_cfg).loss;
}

struct BackwardResult {
  double loss = 0.0;
  ControllerParams grads;  // same layout as the parameters
};

// Analytic gradients of sequence_loss via backpropagation through time.
// Previous adjusted reference frames are treated as constants.
inline BackwardResult backward(const ControllerParams& params,
                               const Sequence& seq, const TrainConfig& cfg,
                               const SsimConfig& ssim_cfg) {
  auto fw = detail::sequence_forward(params, seq, cfg, ssim_cfg);
  BackwardResult result;
  result.loss = fw.loss;
  result.grads = ControllerParams::zeros(params.arch);

  const int n = cfg.seq_len;
  std::vector<double> d_gamma(n, 0.0);
  const double target_scale = 1.0 / (4.0 * fw.used_targets);
  for (int t = cfg.seed_count; t < n; ++t) {
    if (!fw.target_used[t]) continue;
    const auto refs =
        detail::reference_set(t, cfg.seed_count, fw.raw_lum, fw.adjusted_lum);
    Frame d_target(fw.adjusted_lum[t].width, fw.adjusted_lum[t].height, 1);
    for (const Frame* ref : refs) {
      const Frame g =
          loss_gradient_wrt_target(*ref, fw.adjusted_lum[t], fw.masks[t], ssim_cfg);
      for (std::size_t i = 0; i < d_target.data.size(); ++i) {
        d_target.data[i] += g.data[i] * target_scale;
      }
    }
    // chain through luminance(apply_gamma(frame, gamma)) w.r.t. gamma
    const Frame dlum_dg =
        luminance(gamma_gradient(seq.frames[t], fw.gammas[t]));
    double acc = 0.0;
    for (std::size_t i = 0; i < d_target.data.size(); ++i) {
      acc += d_target.data[i] * dlum_dg.data[i];
    }
    d_gamma[t] = acc;
  }

  const int fs = params.arch.feature_size();
  Tensor d_h(params.arch.channels, fs, fs);
  Tensor d_c(params.arch.channels, fs, fs);
  for (int t = n - 1; t >= 0; --t) {
    detail::step_backward(params, fw.caches[t], d_gamma[t], d_h, d_c,
                          result.grads);
  }
  result.grads.for_each_tensor([](const char* name, std::vector<double>& v) {
    for (double x : v) {
      if (!std::isfinite(x)) {
        throw std::runtime_error(std::string("non-finite gradient in tensor ") +
                                 name);
      }
    }
  });
  return result;
}

namespace detail {

struct AdamState {
  ControllerParams m, v;
  long step = 0;

  explicit AdamState(const ControllerArch& a)
      : m(ControllerParams::zeros(a)), v(ControllerParams::zeros(a)) {}
};

inline void adam_update(ControllerParams& params, const ControllerParams& grads,
                        AdamState& st, const TrainConfig& cfg) {
  ++st.step;
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, st.step);
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, st.step);
  auto update = [&](std::vector<double>& p, const std::vector<double>& g,
                    std::vector<double>& m, std::vector<double>& v) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * g[i];
      v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * g[i] * g[i];
      const double mh = m[i] / bc1;
      const double vh = v[i] / bc2;
      p[i] -= cfg.learning_rate * mh / (std::sqrt(vh) + cfg.adam_epsilon);
    }
  };
  update(params.conv1_weight, grads.conv1_weight, st.m.conv1_weight, st.v.conv1_weight);
  update(params.conv1_bias, grads.conv1_bias, st.m.conv1_bias, st.v.conv1_bias);
  update(params.lstm_weight, grads.lstm_weight, st.m.lstm_weight, st.v.lstm_weight);
  update(params.lstm_bias, grads.lstm_bias, st.m.lstm_bias, st.v.lstm_bias);
  update(params.conv2_weight, grads.conv2_weight, st.m.conv2_weight, st.v.conv2_weight);
  update(params.conv2_bias, grads.conv2_bias, st.m.conv2_bias, st.v.conv2_bias);
  update(params.head_weight, grads.head_weight, st.m.head_weight, st.v.head_weight);
  update(params.head_bias, grads.head_bias, st.m.head_bias, st.v.head_bias);
}

}  // namespace detail

// Minibatch Adam with per-batch gradient averaging and deterministic
// shuffling. Sequences within a batch run on separate threads; the averaged
// gradient is accumulated in index order, so results do not depend on
// scheduling.
inline std::pair<ControllerParams, TrainReport> train(
    ControllerParams params, const std::vector<Sequence>& dataset,
    const TrainConfig& cfg, const SsimConfig& ssim_cfg) {
  cfg.validate();
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  for (const Sequence& s : dataset) {
    if (static_cast<int>(s.size()) != cfg.seq_len) {
      throw std::invalid_argument("train: every sequence must have seq_len frames");
    }
  }
  Rng rng(cfg.rng_seed);
  detail::AdamState adam(params.arch);
  TrainReport report;

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t count =
          std::min<std::size_t>(cfg.batch_size, order.size() - start);
      std::vector<BackwardResult> results(count);
      std::vector<std::thread> threads;
      threads.reserve(count);
      for (std::size_t i = 0; i < count; ++i) {
        threads.emplace_back([&, i] {
          results[i] =
              backward(params, dataset[order[start + i]], cfg, ssim_cfg);
        });
      }
      for (auto& th : threads) th.join();

      ControllerParams avg = ControllerParams::zeros(params.arch);
      const double inv = 1.0 / static_cast<double>(count);
      for (std::size_t i = 0; i < count; ++i) {
        epoch_loss += results[i].loss;
        report.sequence_loss_trace.push_back(results[i].loss);
        avg.for_each_tensor([&](const char* name, std::vector<double>& v) {
          const std::vector<double>* g = nullptr;
          results[i].grads.for_each_tensor(
              [&](const char* n2, const std::vector<double>& v2) {
                if (std::string_view(name) == n2) g = &v2;
              });
          for (std::size_t k = 0; k < v.size(); ++k) v[k] += (*g)[k] * inv;
        });
      }
      detail::adam_update(params, avg, adam, cfg);
    }
    const auto t1 = std::chrono::steady_clock::now();
    report.epoch_mean_loss.push_back(epoch_loss / dataset.size());
    report.epoch_seconds.push_back(
        std::chrono::duration<double>(t1 - t0).count());
    if (detail::log_enabled()) {
      std::cerr << "epoch " << (epoch + 1) << "/" << cfg.epochs
                << " mean_loss=" << report.epoch_mean_loss.back() << " ("
                << report.epoch_seconds.back() << "s)\n";
    }
  }
  return {std::move(params), std::move(report)};
}

// Sliding 10-frame (seq_len) windows over a longer snippet.
inline std::vector<Sequence> make_training_windows(const Sequence& snippet,
                                                   int stride = 1,
                                                   int window_len = 10) {
  if (stride < 1) throw std::invalid_argument("make_training_windows: stride >= 1");
  std::vector<Sequence> out;
  if (static_cast<int>(snippet.size()) < window_len) return out;
  for (std::size_t start = 0;
       start + window_len <= snippet.size();
       start += static_cast<std::size_t>(stride)) {
    Sequence w;
    w.fps = snippet.fps;
    w.frames.assign(snippet.frames.begin() + start,
                    snippet.frames.begin() + start + window_len);
    for (std::size_t i = 0; i < w.frames.size(); ++i) {
      w.frames[i].index = static_cast<int>(i);
    }
    out.push_back(std::move(w));
  }
  return out;
}

inline void write_train_report_csv(const TrainReport& report,
                                   const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << "epoch,mean_loss,seconds\n";
    out.precision(17);
    for (std::size_t e = 0; e < report.epoch_mean_loss.size(); ++e) {
      out << (e + 1) << "," << report.epoch_mean_loss[e] << ","
          << report.epoch_seconds[e] << "\n";
    }
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace relight
