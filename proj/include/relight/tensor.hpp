#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace relight {

// Dense CHW feature map.
struct Tensor {
  int c = 0, h = 0, w = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int c_, int h_, int w_, double fill = 0.0)
      : c(c_), h(h_), w(w_),
        v(static_cast<std::size_t>(c_) * h_ * w_, fill) {}

  double& at(int ch, int y, int x) {
    return v[(static_cast<std::size_t>(ch) * h + y) * w + x];
  }
  double at(int ch, int y, int x) const {
    return v[(static_cast<std::size_t>(ch) * h + y) * w + x];
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool same_shape(const Tensor& o) const {
    return c == o.c && h == o.h && w == o.w;
  }
};

namespace nn {

inline int conv_out_size(int in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

// Plain 2D convolution (cross-correlation), zero padding.
// Weights are flat [out_c][in_c][k][k]; bias may be empty.
inline Tensor conv2d(const Tensor& in, const std::vector<double>& weight,
                     const std::vector<double>& bias, int out_c, int kernel,
                     int stride, int pad) {
  const int oh = conv_out_size(in.h, kernel, stride, pad);
  const int ow = conv_out_size(in.w, kernel, stride, pad);
  Tensor out(out_c, oh, ow);
  for (int oc = 0; oc < out_c; ++oc) {
    const double b = bias.empty() ? 0.0 : bias[oc];
    double* oplane = out.v.data() + static_cast<std::size_t>(oc) * out.plane();
    for (std::size_t i = 0; i < out.plane(); ++i) oplane[i] = b;
    for (int ic = 0; ic < in.c; ++ic) {
      const double* iplane =
          in.v.data() + static_cast<std::size_t>(ic) * in.plane();
      for (int ky = 0; ky < kernel; ++ky) {
        for (int kx = 0; kx < kernel; ++kx) {
          const double wv =
              weight[((static_cast<std::size_t>(oc) * in.c + ic) * kernel + ky) *
                         kernel +
                     kx];
          if (wv == 0.0) continue;
          // valid ox range so that ix = ox*stride - pad + kx stays in bounds
          const int shift = kx - pad;
          const int ox_lo = shift < 0 ? (-shift + stride - 1) / stride : 0;
          const int ox_hi = std::min(ow, (in.w - 1 - shift) / stride + 1);
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= in.h) continue;
            const double* irow =
                iplane + static_cast<std::size_t>(iy) * in.w + shift;
            double* orow = oplane + static_cast<std::size_t>(oy) * ow;
            for (int ox = ox_lo; ox < ox_hi; ++ox) {
              orow[ox] += wv * irow[ox * stride];
            }
          }
        }
      }
    }
  }
  return out;
}

// Backward pass: accumulates into d_weight/d_bias, writes d_in when non-null.
inline void conv2d_backward(const Tensor& in, const std::vector<double>& weight,
                            int out_c, int kernel, int stride, int pad,
                            const Tensor& d_out, std::vector<double>& d_weight,
                            std::vector<double>& d_bias, Tensor* d_in) {
  if (d_in) *d_in = Tensor(in.c, in.h, in.w);
  for (int oc = 0; oc < out_c; ++oc) {
    const double* dplane =
        d_out.v.data() + static_cast<std::size_t>(oc) * d_out.plane();
    double bacc = 0.0;
    for (std::size_t i = 0; i < d_out.plane(); ++i) bacc += dplane[i];
    d_bias[oc] += bacc;
    for (int ic = 0; ic < in.c; ++ic) {
      const double* iplane =
          in.v.data() + static_cast<std::size_t>(ic) * in.plane();
      double* giplane =
          d_in ? d_in->v.data() + static_cast<std::size_t>(ic) * in.plane()
               : nullptr;
      for (int ky = 0; ky < kernel; ++ky) {
        for (int kx = 0; kx < kernel; ++kx) {
          const std::size_t widx =
              ((static_cast<std::size_t>(oc) * in.c + ic) * kernel + ky) *
                  kernel +
              kx;
          const double wv = weight[widx];
          double wacc = 0.0;
          const int shift = kx - pad;
          const int ox_lo = shift < 0 ? (-shift + stride - 1) / stride : 0;
          const int ox_hi = std::min(d_out.w, (in.w - 1 - shift) / stride + 1);
          for (int oy = 0; oy < d_out.h; ++oy) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= in.h) continue;
            const double* irow =
                iplane + static_cast<std::size_t>(iy) * in.w + shift;
            const double* drow = dplane + static_cast<std::size_t>(oy) * d_out.w;
            double* girow =
                giplane ? giplane + static_cast<std::size_t>(iy) * in.w + shift
                        : nullptr;
            if (girow) {
              for (int ox = ox_lo; ox < ox_hi; ++ox) {
                wacc += irow[ox * stride] * drow[ox];
                girow[ox * stride] += wv * drow[ox];
              }
            } else {
              for (int ox = ox_lo; ox < ox_hi; ++ox) {
                wacc += irow[ox * stride] * drow[ox];
              }
            }
          }
          d_weight[widx] += wacc;
        }
      }
    }
  }
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline void check_finite(const std::vector<double>& v, const char* layer) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw std::runtime_error(std::string("non-finite activation in layer ") +
                               layer);
    }
  }
}

}  // namespace nn
}  // namespace relight
