#pragma once

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "relight/frame.hpp"
#include "relight/gamma.hpp"
#include "relight/rng.hpp"
#include "relight/tensor.hpp"

namespace relight {

// Recurrent gamma predictor:
//   x1 = ReLU(Conv(I))                    stride-2 3x3, 1 -> C channels
//   (x2, h, c) = ConvLSTM(x1, h, c)       3x3 gates over [x1; h], x2 = h
//   x3 = ReLU(Conv(x2))                   stride-1 3x3, C -> C
//   f  = global average pool of x3
//   gamma = clamp(ReLU(A . f + b))
//
// Gate convolution outputs 4C channels in the order i, f, o, g
// (sigmoid, sigmoid, sigmoid, tanh). No peephole connections.

struct ControllerArch {
  int channels = 8;
  int input_size = 64;
  int kernel = 3;

  int feature_size() const { return nn::conv_out_size(input_size, kernel, 2, 1); }
};

struct LoadError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ControllerParams {
  ControllerArch arch;
  std::vector<double> conv1_weight, conv1_bias;  // [C][1][k][k], [C]
  std::vector<double> lstm_weight, lstm_bias;    // [4C][2C][k][k], [4C]
  std::vector<double> conv2_weight, conv2_bias;  // [C][C][k][k], [C]
  std::vector<double> head_weight, head_bias;    // [C], [1]

  static ControllerParams zeros(ControllerArch a) {
    ControllerParams p;
    p.arch = a;
    const int k2 = a.kernel * a.kernel;
    p.conv1_weight.assign(static_cast<std::size_t>(a.channels) * k2, 0.0);
    p.conv1_bias.assign(a.channels, 0.0);
    p.lstm_weight.assign(static_cast<std::size_t>(4 * a.channels) *
                             (2 * a.channels) * k2,
                         0.0);
    p.lstm_bias.assign(4 * a.channels, 0.0);
    p.conv2_weight.assign(
        static_cast<std::size_t>(a.channels) * a.channels * k2, 0.0);
    p.conv2_bias.assign(a.channels, 0.0);
    p.head_weight.assign(a.channels, 0.0);
    p.head_bias.assign(1, 0.0);
    return p;
  }

  // Fresh init: kernels uniform in +-1/sqrt(fan-in), gate biases zero except
  // forget gate = 1, head bias = 1 so the untrained network predicts
  // gamma ~= 1 (identity enhancement).
  static ControllerParams init(ControllerArch a, Rng& rng) {
    ControllerParams p = zeros(a);
    const int k2 = a.kernel * a.kernel;
    auto fill = [&rng](std::vector<double>& v, int fan_in) {
      const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (double& x : v) x = rng.uniform(-s, s);
    };
    fill(p.conv1_weight, k2);
    fill(p.lstm_weight, 2 * a.channels * k2);
    fill(p.conv2_weight, a.channels * k2);
    fill(p.head_weight, a.channels);
    for (int ch = a.channels; ch < 2 * a.channels; ++ch) {
      p.lstm_bias[ch] = 1.0;  // forget gate
    }
    p.head_bias[0] = 1.0;
    return p;
  }

  template <typename Fn>
  void for_each_tensor(Fn&& fn) {
    fn("conv1.weight", conv1_weight);
    fn("conv1.bias", conv1_bias);
    fn("convlstm.weight", lstm_weight);
    fn("convlstm.bias", lstm_bias);
    fn("conv2.weight", conv2_weight);
    fn("conv2.bias", conv2_bias);
    fn("head.weight", head_weight);
    fn("head.bias", head_bias);
  }
  template <typename Fn>
  void for_each_tensor(Fn&& fn) const {
    const_cast<ControllerParams*>(this)->for_each_tensor(
        [&fn](const char* name, std::vector<double>& v) {
          fn(name, static_cast<const std::vector<double>&>(v));
        });
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each_tensor(
        [&n](const char*, const std::vector<double>& v) { n += v.size(); });
    return n;
  }
};

struct ControllerState {
  Tensor h, c;

  static ControllerState zero(const ControllerArch& a) {
    ControllerState s;
    const int fs = a.feature_size();
    s.h = Tensor(a.channels, fs, fs);
    s.c = Tensor(a.channels, fs, fs);
    return s;
  }
};

// Everything the backward pass needs from one forward step.
struct StepCache {
  Tensor input;       // 1 x S x S
  Tensor a1, x1;      // pre/post ReLU of conv1
  Tensor concat;      // [x1; h_prev]
  Tensor gates;       // pre-activation, 4C channels
  Tensor gi, gf, go, gg;  // activated gates
  Tensor c_prev, c_new, tanh_c, h_new;
  Tensor a2, x3;
  std::vector<double> f_vec;
  double pre_head = 0.0;  // A.f + b
  double raw = 0.0;       // after ReLU
  GammaValue gamma;
};

namespace detail {

inline Tensor frame_to_tensor(const Frame& f) {
  if (f.channels != 1) {
    throw std::invalid_argument("controller: input must be 1-channel");
  }
  Tensor t(1, f.height, f.width);
  t.v = f.data;
  return t;
}

inline void split_gates(const Tensor& gates, int C, Tensor& gi, Tensor& gf,
                        Tensor& go, Tensor& gg) {
  const int fs = gates.h;
  gi = Tensor(C, fs, fs);
  gf = Tensor(C, fs, fs);
  go = Tensor(C, fs, fs);
  gg = Tensor(C, fs, fs);
  const std::size_t plane = gates.plane();
  for (int ch = 0; ch < C; ++ch) {
    for (std::size_t i = 0; i < plane; ++i) {
      gi.v[ch * plane + i] = nn::sigmoid(gates.v[(0 * C + ch) * plane + i]);
      gf.v[ch * plane + i] = nn::sigmoid(gates.v[(1 * C + ch) * plane + i]);
      go.v[ch * plane + i] = nn::sigmoid(gates.v[(2 * C + ch) * plane + i]);
      gg.v[ch * plane + i] = std::tanh(gates.v[(3 * C + ch) * plane + i]);
    }
  }
}

inline StepCache step_forward(const ControllerParams& p,
                              const ControllerState& state,
                              const Frame& input) {
  const auto& a = p.arch;
  if (input.width != a.input_size || input.height != a.input_size) {
    throw std::invalid_argument("controller: input must be " +
                                std::to_string(a.input_size) + "x" +
                                std::to_string(a.input_size));
  }
  const int fs = a.feature_size();
  if (state.h.c != a.channels || state.h.h != fs || state.h.w != fs ||
      !state.h.same_shape(state.c)) {
    throw std::invalid_argument("controller: state shape mismatch");
  }
  StepCache sc;
  sc.input = frame_to_tensor(input);
  sc.a1 = nn::conv2d(sc.input, p.conv1_weight, p.conv1_bias, a.channels,
                     a.kernel, 2, 1);
  nn::check_finite(sc.a1.v, "conv1");
  sc.x1 = sc.a1;
  for (double& v : sc.x1.v) v = v > 0.0 ? v : 0.0;

  sc.concat = Tensor(2 * a.channels, fs, fs);
  std::copy(sc.x1.v.begin(), sc.x1.v.end(), sc.concat.v.begin());
  std::copy(state.h.v.begin(), state.h.v.end(),
            sc.concat.v.begin() + sc.x1.v.size());
  sc.gates = nn::conv2d(sc.concat, p.lstm_weight, p.lstm_bias, 4 * a.channels,
                        a.kernel, 1, 1);
  nn::check_finite(sc.gates.v, "convlstm");
  split_gates(sc.gates, a.channels, sc.gi, sc.gf, sc.go, sc.gg);

  sc.c_prev = state.c;
  sc.c_new = Tensor(a.channels, fs, fs);
  sc.tanh_c = Tensor(a.channels, fs, fs);
  sc.h_new = Tensor(a.channels, fs, fs);
  for (std::size_t i = 0; i < sc.c_new.v.size(); ++i) {
    sc.c_new.v[i] = sc.gf.v[i] * sc.c_prev.v[i] + sc.gi.v[i] * sc.gg.v[i];
    sc.tanh_c.v[i] = std::tanh(sc.c_new.v[i]);
    sc.h_new.v[i] = sc.go.v[i] * sc.tanh_c.v[i];
  }

  sc.a2 = nn::conv2d(sc.h_new, p.conv2_weight, p.conv2_bias, a.channels,
                     a.kernel, 1, 1);
  nn::check_finite(sc.a2.v, "conv2");
  sc.x3 = sc.a2;
  for (double& v : sc.x3.v) v = v > 0.0 ? v : 0.0;

  sc.f_vec.assign(a.channels, 0.0);
  const double inv = 1.0 / static_cast<double>(sc.x3.plane());
  for (int ch = 0; ch < a.channels; ++ch) {
    double s = 0.0;
    const double* plane =
        sc.x3.v.data() + static_cast<std::size_t>(ch) * sc.x3.plane();
    for (std::size_t i = 0; i < sc.x3.plane(); ++i) s += plane[i];
    sc.f_vec[ch] = s * inv;
  }

  sc.pre_head = p.head_bias[0];
  for (int ch = 0; ch < a.channels; ++ch) {
    sc.pre_head += p.head_weight[ch] * sc.f_vec[ch];
  }
  if (!std::isfinite(sc.pre_head)) {
    throw std::runtime_error("non-finite activation in layer head");
  }
  sc.raw = sc.pre_head > 0.0 ? sc.pre_head : 0.0;
  sc.gamma = clamp_gamma(sc.raw);
  return sc;
}

}  // namespace detail

// One recurrent step: consumes a 1-channel input_size x input_size luminance
// frame and the previous state, emits the clamped gamma and the new state.
inline std::pair<GammaValue, ControllerState> step(const ControllerParams& p,
                                                   const ControllerState& state,
                                                   const Frame& input) {
  auto sc = detail::step_forward(p, state, input);
  ControllerState next;
  next.h = std::move(sc.h_new);
  next.c = std::move(sc.c_new);
  return {sc.gamma, std::move(next)};
}

// Bilinear resample of a 1-channel frame (controller input path only; gamma
// always applies at native resolution).
inline Frame resample_bilinear(const Frame& f, int out_w, int out_h) {
  if (f.channels != 1) {
    throw std::invalid_argument("resample_bilinear: 1-channel only");
  }
  if (f.width == out_w && f.height == out_h) return f;
  Frame out(out_w, out_h, 1, 0.0, f.index);
  const double sx = static_cast<double>(f.width) / out_w;
  const double sy = static_cast<double>(f.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::min(std::max(fy, 0.0), static_cast<double>(f.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, f.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::min(std::max(fx, 0.0), static_cast<double>(f.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, f.width - 1);
      const double wx = fx - x0;
      out.at(y, x) = (1.0 - wy) * ((1.0 - wx) * f.at(y0, x0) + wx * f.at(y0, x1)) +
                     wy * ((1.0 - wx) * f.at(y1, x0) + wx * f.at(y1, x1));
    }
  }
  return out;
}

inline Frame controller_input(const Frame& f, const ControllerArch& a) {
  return resample_bilinear(luminance(f), a.input_size, a.input_size);
}

// Runs the controller over a sequence from a zero state and applies each
// predicted gamma to the full-resolution frame. Every frame is enhanced.
inline std::pair<Sequence, std::vector<GammaValue>> enhance_sequence(
    const ControllerParams& p, const Sequence& seq) {
  if (seq.empty()) {
    throw std::invalid_argument("enhance_sequence: empty sequence");
  }
  Sequence out;
  out.fps = seq.fps;
  out.frames.reserve(seq.size());
  std::vector<GammaValue> trace;
  trace.reserve(seq.size());
  ControllerState state = ControllerState::zero(p.arch);
  for (const Frame& f : seq.frames) {
    auto [g, next] = step(p, state, controller_input(f, p.arch));
    state = std::move(next);
    out.frames.push_back(apply_gamma(f, g));
    trace.push_back(g);
  }
  return {std::move(out), std::move(trace)};
}

// ---- weight serialization ----
// Self-describing JSON: format_version, architecture, and one
// { shape, data } entry per tensor. Doubles round-trip bit-exactly.

inline constexpr int kWeightsFormatVersion = 1;

namespace detail {

inline std::vector<std::size_t> tensor_shape(const ControllerParams& p,
                                             const std::string& name) {
  const auto C = static_cast<std::size_t>(p.arch.channels);
  const auto K = static_cast<std::size_t>(p.arch.kernel);
  if (name == "conv1.weight") return {C, 1, K, K};
  if (name == "conv1.bias") return {C};
  if (name == "convlstm.weight") return {4 * C, 2 * C, K, K};
  if (name == "convlstm.bias") return {4 * C};
  if (name == "conv2.weight") return {C, C, K, K};
  if (name == "conv2.bias") return {C};
  if (name == "head.weight") return {C};
  if (name == "head.bias") return {1};
  throw LoadError("unknown tensor " + name);
}

}  // namespace detail

inline void save_params(const ControllerParams& p, const std::string& path) {
  nlohmann::json j;
  j["format_version"] = kWeightsFormatVersion;
  j["architecture"] = {{"channels", p.arch.channels},
                       {"input_size", p.arch.input_size},
                       {"kernel", p.arch.kernel},
                       {"gate_order", "ifog"}};
  nlohmann::json tensors;
  p.for_each_tensor([&](const char* name, const std::vector<double>& v) {
    tensors[name] = {{"shape", detail::tensor_shape(p, name)}, {"data", v}};
  });
  j["tensors"] = std::move(tensors);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw LoadError("cannot write " + tmp);
    out << j.dump(1) << "\n";
  }
  std::filesystem::rename(tmp, path);
}

inline ControllerParams load_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("invalid weights file " + path + ": " + e.what());
  }
  if (!j.contains("format_version")) {
    throw LoadError("weights file missing format_version");
  }
  if (j["format_version"].get<int>() != kWeightsFormatVersion) {
    throw LoadError("unsupported weights format_version " +
                    j["format_version"].dump());
  }
  ControllerArch arch;
  arch.channels = j.at("architecture").at("channels").get<int>();
  arch.input_size = j.at("architecture").at("input_size").get<int>();
  arch.kernel = j.at("architecture").at("kernel").get<int>();
  ControllerParams p = ControllerParams::zeros(arch);
  const auto& tensors = j.at("tensors");
  p.for_each_tensor([&](const char* name, std::vector<double>& v) {
    if (!tensors.contains(name)) {
      throw LoadError(std::string("weights file missing tensor ") + name);
    }
    const auto& entry = tensors.at(name);
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    std::size_t expect = 1;
    for (auto d : shape) expect *= d;
    const auto want = detail::tensor_shape(p, name);
    if (shape != want) {
      throw LoadError(std::string("shape mismatch for tensor ") + name);
    }
    const auto data = entry.at("data").get<std::vector<double>>();
    if (data.size() != expect || expect != v.size()) {
      throw LoadError(std::string("data size mismatch for tensor ") + name);
    }
    v = data;
  });
  return p;
}

}  // namespace relight
