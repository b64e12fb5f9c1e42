#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace relight {

// A normalized-intensity image: values in [0,1], row-major,
// channel-interleaved. channels is 1 (luma) or 3 (RGB).
struct Frame {
  int width = 0;
  int height = 0;
  int channels = 1;
  int index = 0;
  std::vector<double> data;

  Frame() = default;
  Frame(int w, int h, int c, double fill = 0.0, int idx = 0)
      : width(w), height(h), channels(c), index(idx),
        data(static_cast<std::size_t>(w) * h * c, fill) {
    if (w <= 0 || h <= 0 || (c != 1 && c != 3)) {
      throw std::invalid_argument("Frame: bad dimensions " + std::to_string(w) +
                                  "x" + std::to_string(h) + "x" +
                                  std::to_string(c));
    }
  }

  double& at(int y, int x, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int y, int x, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * height;
  }

  bool same_shape(const Frame& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }

  // Checks the [0,1] range invariant; used on untrusted inputs.
  void validate() const {
    if (data.size() != static_cast<std::size_t>(width) * height * channels) {
      throw std::invalid_argument("Frame: data length does not match shape");
    }
    for (double v : data) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw std::invalid_argument("Frame: intensity outside [0,1]");
      }
    }
  }
};

struct Sequence {
  std::vector<Frame> frames;
  double fps = 18.0;

  std::size_t size() const { return frames.size(); }
  bool empty() const { return frames.empty(); }
};

// Per-pixel keep flags; false marks specular pixels excluded from the loss.
struct SpecularMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> keep;

  std::size_t kept_count() const {
    std::size_t n = 0;
    for (auto k : keep) n += (k != 0);
    return n;
  }
};

// RGB -> luma with the fixed BT.601 weights; identity copy on 1-channel.
inline Frame luminance(const Frame& f) {
  if (f.channels == 1) return f;
  if (f.channels != 3) {
    throw std::invalid_argument("luminance: expected 1 or 3 channels");
  }
  Frame out(f.width, f.height, 1, 0.0, f.index);
  const std::size_t n = f.pixel_count();
  for (std::size_t p = 0; p < n; ++p) {
    out.data[p] = 0.299 * f.data[3 * p] + 0.587 * f.data[3 * p + 1] +
                  0.114 * f.data[3 * p + 2];
  }
  return out;
}

// keep[p] = (luminance <= threshold); strictly-above pixels are specular.
inline SpecularMask specular_mask(const Frame& f, double threshold = 0.7) {
  const Frame lum = luminance(f);
  SpecularMask m;
  m.width = f.width;
  m.height = f.height;
  m.keep.resize(lum.data.size());
  for (std::size_t p = 0; p < lum.data.size(); ++p) {
    m.keep[p] = lum.data[p] <= threshold ? 1 : 0;
  }
  return m;
}

}  // namespace relight
