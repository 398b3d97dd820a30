#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "naf/common.hpp"

namespace naf {

// Dense H×W×C grid, row-major (H, then W, then C), contiguous.
// Images, VFM features and guidance maps all use this one representation.
template <typename T>
struct Tensor3T {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<T> data;

  Tensor3T() = default;
  Tensor3T(int h, int w, int c, T fill = T(0)) : height(h), width(w), channels(c) {
    if (h < 1 || w < 1 || c < 1) throw ShapeError("tensor dims must be >= 1");
    data.assign(static_cast<size_t>(h) * w * c, fill);
  }

  size_t size() const { return data.size(); }

  T& at(int r, int c, int ch) {
    return data[(static_cast<size_t>(r) * width + c) * channels + ch];
  }
  const T& at(int r, int c, int ch) const {
    return data[(static_cast<size_t>(r) * width + c) * channels + ch];
  }

  // Pointer to the channel vector at (r, c).
  T* pixel(int r, int c) { return data.data() + (static_cast<size_t>(r) * width + c) * channels; }
  const T* pixel(int r, int c) const {
    return data.data() + (static_cast<size_t>(r) * width + c) * channels;
  }

  bool same_shape(const Tensor3T& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }

  template <typename U>
  Tensor3T<U> cast() const {
    Tensor3T<U> out;
    out.height = height;
    out.width = width;
    out.channels = channels;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

using Tensor3 = Tensor3T<float>;

template <typename T>
bool all_finite(const Tensor3T<T>& t) {
  for (T v : t.data)
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

enum class ResizeMode { kNearest, kBilinear, kBicubic };

inline ResizeMode resize_mode_from_string(const std::string& s) {
  if (s == "nearest") return ResizeMode::kNearest;
  if (s == "bilinear") return ResizeMode::kBilinear;
  if (s == "bicubic") return ResizeMode::kBicubic;
  throw ConfigError("unknown resize mode '" + s + "'");
}

namespace detail {

// Half-pixel-center source coordinate (align-corners=false).
inline double source_coord(int out_idx, int in_size, int out_size) {
  const double scale = static_cast<double>(in_size) / out_size;
  return (out_idx + 0.5) * scale - 0.5;
}

inline int clamp_index(int i, int size) { return i < 0 ? 0 : (i >= size ? size - 1 : i); }

// Catmull-Rom weights (a = -0.5) for taps at offsets {-1, 0, 1, 2} around the
// integer base, with t the fractional position in [0, 1).
inline void catmull_rom_weights(double t, double w[4]) {
  const double a = -0.5;
  const double t2 = t * t, t3 = t2 * t;
  w[0] = a * (t3 - 2.0 * t2 + t);
  w[1] = (a + 2.0) * t3 - (a + 3.0) * t2 + 1.0;
  w[2] = -(a + 2.0) * t3 + (2.0 * a + 3.0) * t2 - a * t;
  w[3] = a * (t3 - t2);
}

}  // namespace detail

// Resize with half-pixel centers. Interpolations are written in anchored form
// (base + w·(tap − base)) so constant inputs come out bit-identical.
template <typename T>
Tensor3T<T> resize(const Tensor3T<T>& t, int out_h, int out_w, ResizeMode mode) {
  if (out_h < 1 || out_w < 1) throw ShapeError("resize target must be >= 1");
  const int C = t.channels;
  Tensor3T<T> out(out_h, out_w, C);

  if (mode == ResizeMode::kNearest) {
    parallel_for(out_h, [&](int r) {
      const int sr = detail::clamp_index(
          static_cast<int>(std::floor(detail::source_coord(r, t.height, out_h) + 0.5)), t.height);
      for (int c = 0; c < out_w; ++c) {
        const int sc = detail::clamp_index(
            static_cast<int>(std::floor(detail::source_coord(c, t.width, out_w) + 0.5)), t.width);
        const T* src = t.pixel(sr, sc);
        T* dst = out.pixel(r, c);
        for (int ch = 0; ch < C; ++ch) dst[ch] = src[ch];
      }
    });
    return out;
  }

  if (mode == ResizeMode::kBilinear) {
    parallel_for(out_h, [&](int r) {
      const double sy = detail::source_coord(r, t.height, out_h);
      const int y0 = detail::clamp_index(static_cast<int>(std::floor(sy)), t.height);
      const int y1 = detail::clamp_index(y0 + 1, t.height);
      const T fy = static_cast<T>(std::max(0.0, std::min(1.0, sy - std::floor(sy))));
      for (int c = 0; c < out_w; ++c) {
        const double sx = detail::source_coord(c, t.width, out_w);
        const int x0 = detail::clamp_index(static_cast<int>(std::floor(sx)), t.width);
        const int x1 = detail::clamp_index(x0 + 1, t.width);
        const T fx = static_cast<T>(std::max(0.0, std::min(1.0, sx - std::floor(sx))));
        const T* p00 = t.pixel(y0, x0);
        const T* p01 = t.pixel(y0, x1);
        const T* p10 = t.pixel(y1, x0);
        const T* p11 = t.pixel(y1, x1);
        T* dst = out.pixel(r, c);
        for (int ch = 0; ch < C; ++ch) {
          const T top = p00[ch] + fx * (p01[ch] - p00[ch]);
          const T bot = p10[ch] + fx * (p11[ch] - p10[ch]);
          dst[ch] = top + fy * (bot - top);
        }
      }
    });
    return out;
  }

  // Bicubic. Edge taps are clamped (replicate border).
  parallel_for(out_h, [&](int r) {
    const double sy = detail::source_coord(r, t.height, out_h);
    const int by = static_cast<int>(std::floor(sy));
    double wy[4];
    detail::catmull_rom_weights(sy - by, wy);
    int ys[4];
    for (int i = 0; i < 4; ++i) ys[i] = detail::clamp_index(by - 1 + i, t.height);
    for (int c = 0; c < out_w; ++c) {
      const double sx = detail::source_coord(c, t.width, out_w);
      const int bx = static_cast<int>(std::floor(sx));
      double wx[4];
      detail::catmull_rom_weights(sx - bx, wx);
      int xs[4];
      for (int i = 0; i < 4; ++i) xs[i] = detail::clamp_index(bx - 1 + i, t.width);
      T* dst = out.pixel(r, c);
      for (int ch = 0; ch < C; ++ch) {
        // Anchor on the (0,0) tap; weights sum to 1, so the anchored form is
        // the same sum but exact on constants.
        const T anchor = t.at(ys[1], xs[1], ch);
        double acc = 0.0;
        for (int i = 0; i < 4; ++i)
          for (int j = 0; j < 4; ++j)
            acc += wy[i] * wx[j] * static_cast<double>(t.at(ys[i], xs[j], ch) - anchor);
        dst[ch] = anchor + static_cast<T>(acc);
      }
    }
  });
  return out;
}

// Transpose of bilinear resize as a linear map: scatters grad_out (shape of
// the resize output) back onto an in_h×in_w grid. Used by the bilinear
// key-pooling backward.
template <typename T>
Tensor3T<T> resize_bilinear_transpose(const Tensor3T<T>& grad_out, int in_h, int in_w) {
  const int C = grad_out.channels;
  Tensor3T<T> grad_in(in_h, in_w, C);
  for (int r = 0; r < grad_out.height; ++r) {
    const double sy = detail::source_coord(r, in_h, grad_out.height);
    const int y0 = detail::clamp_index(static_cast<int>(std::floor(sy)), in_h);
    const int y1 = detail::clamp_index(y0 + 1, in_h);
    const T fy = static_cast<T>(std::max(0.0, std::min(1.0, sy - std::floor(sy))));
    for (int c = 0; c < grad_out.width; ++c) {
      const double sx = detail::source_coord(c, in_w, grad_out.width);
      const int x0 = detail::clamp_index(static_cast<int>(std::floor(sx)), in_w);
      const int x1 = detail::clamp_index(x0 + 1, in_w);
      const T fx = static_cast<T>(std::max(0.0, std::min(1.0, sx - std::floor(sx))));
      const T* g = grad_out.pixel(r, c);
      for (int ch = 0; ch < C; ++ch) {
        grad_in.at(y0, x0, ch) += (T(1) - fy) * (T(1) - fx) * g[ch];
        grad_in.at(y0, x1, ch) += (T(1) - fy) * fx * g[ch];
        grad_in.at(y1, x0, ch) += fy * (T(1) - fx) * g[ch];
        grad_in.at(y1, x1, ch) += fy * fx * g[ch];
      }
    }
  }
  return grad_in;
}

// Mean over non-overlapping s×s blocks, per channel. Anchored on the block's
// top-left value so constants are exact; summation order is fixed row-major.
template <typename T>
Tensor3T<T> block_avg_pool(const Tensor3T<T>& t, int s) {
  if (s < 1) throw ShapeError("pool factor must be >= 1");
  if (t.height % s != 0 || t.width % s != 0)
    throw ShapeError("dims " + std::to_string(t.height) + "x" + std::to_string(t.width) +
                     " not divisible by " + std::to_string(s));
  if (s == 1) return t;
  const int oh = t.height / s, ow = t.width / s, C = t.channels;
  const T inv = T(1) / static_cast<T>(s * s);
  Tensor3T<T> out(oh, ow, C);
  parallel_for(oh, [&](int r) {
    for (int c = 0; c < ow; ++c) {
      T* dst = out.pixel(r, c);
      const T* anchor = t.pixel(r * s, c * s);
      for (int ch = 0; ch < C; ++ch) {
        T acc = T(0);
        for (int i = 0; i < s; ++i)
          for (int j = 0; j < s; ++j) acc += t.at(r * s + i, c * s + j, ch) - anchor[ch];
        dst[ch] = anchor[ch] + acc * inv;
      }
    }
  });
  return out;
}

// Scatter of block_avg_pool's transpose: each block element gets grad/s².
template <typename T>
Tensor3T<T> block_avg_pool_transpose(const Tensor3T<T>& grad_out, int s) {
  const int C = grad_out.channels;
  Tensor3T<T> grad_in(grad_out.height * s, grad_out.width * s, C);
  const T inv = T(1) / static_cast<T>(s * s);
  for (int r = 0; r < grad_out.height; ++r)
    for (int c = 0; c < grad_out.width; ++c) {
      const T* g = grad_out.pixel(r, c);
      for (int i = 0; i < s; ++i)
        for (int j = 0; j < s; ++j) {
          T* dst = grad_in.pixel(r * s + i, c * s + j);
          for (int ch = 0; ch < C; ++ch) dst[ch] = g[ch] * inv;
        }
    }
  return grad_in;
}

// Zero-padded "same" convolution spec. Weights are laid out
// [tap][in][out] with taps row-major over the kernel window.
template <typename T>
struct ConvSpecT {
  int kernel_size = 1;  // 1 or 3
  int in_channels = 0;
  int out_channels = 0;
  std::vector<T> weights;  // kernel_size² × in × out
  std::vector<T> bias;     // out

  ConvSpecT() = default;
  ConvSpecT(int k, int cin, int cout) : kernel_size(k), in_channels(cin), out_channels(cout) {
    if (k != 1 && k != 3) throw ConfigError("kernel_size must be 1 or 3");
    weights.assign(static_cast<size_t>(k) * k * cin * cout, T(0));
    bias.assign(static_cast<size_t>(cout), T(0));
  }

  size_t weight_count() const { return weights.size(); }
  size_t param_count() const { return weights.size() + bias.size(); }

  T& w(int tap, int cin, int cout_idx) {
    return weights[(static_cast<size_t>(tap) * in_channels + cin) * out_channels + cout_idx];
  }
  const T& w(int tap, int cin, int cout_idx) const {
    return weights[(static_cast<size_t>(tap) * in_channels + cin) * out_channels + cout_idx];
  }

  template <typename U>
  ConvSpecT<U> cast() const {
    ConvSpecT<U> out(kernel_size, in_channels, out_channels);
    for (size_t i = 0; i < weights.size(); ++i) out.weights[i] = static_cast<U>(weights[i]);
    for (size_t i = 0; i < bias.size(); ++i) out.bias[i] = static_cast<U>(bias[i]);
    return out;
  }
};

using ConvSpec = ConvSpecT<float>;

template <typename T>
Tensor3T<T> conv2d_forward(const Tensor3T<T>& t, const ConvSpecT<T>& spec) {
  if (t.channels != spec.in_channels)
    throw ShapeError("conv input has " + std::to_string(t.channels) + " channels, spec expects " +
                     std::to_string(spec.in_channels));
  const int K = spec.kernel_size, pad = K / 2;
  const int H = t.height, W = t.width;
  const int Ci = spec.in_channels, Co = spec.out_channels;
  Tensor3T<T> out(H, W, Co);
  parallel_for(H, [&](int r) {
    std::vector<T> acc(static_cast<size_t>(Co));
    for (int c = 0; c < W; ++c) {
      for (int o = 0; o < Co; ++o) acc[o] = spec.bias[o];
      for (int ki = 0; ki < K; ++ki) {
        const int ir = r + ki - pad;
        if (ir < 0 || ir >= H) continue;
        for (int kj = 0; kj < K; ++kj) {
          const int ic = c + kj - pad;
          if (ic < 0 || ic >= W) continue;
          const T* src = t.pixel(ir, ic);
          const T* wp = spec.weights.data() +
                        static_cast<size_t>(ki * K + kj) * Ci * Co;
          for (int i = 0; i < Ci; ++i) {
            const T x = src[i];
            const T* wrow = wp + static_cast<size_t>(i) * Co;
            for (int o = 0; o < Co; ++o) acc[o] += x * wrow[o];
          }
        }
      }
      T* dst = out.pixel(r, c);
      for (int o = 0; o < Co; ++o) dst[o] = acc[o];
    }
  });
  return out;
}

template <typename T>
struct Conv2dGrads {
  Tensor3T<T> grad_input;
  std::vector<T> grad_weights;
  std::vector<T> grad_bias;
};

// Exact reverse-mode gradients of conv2d_forward. Accumulation is sequential
// row-major so repeated runs are bit-identical.
template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor3T<T>& t, const ConvSpecT<T>& spec,
                               const Tensor3T<T>& grad_out) {
  if (t.channels != spec.in_channels) throw ShapeError("conv backward: input channel mismatch");
  if (grad_out.height != t.height || grad_out.width != t.width ||
      grad_out.channels != spec.out_channels)
    throw ShapeError("conv backward: grad_out shape mismatch");
  const int K = spec.kernel_size, pad = K / 2;
  const int H = t.height, W = t.width;
  const int Ci = spec.in_channels, Co = spec.out_channels;

  Conv2dGrads<T> g;
  g.grad_input = Tensor3T<T>(H, W, Ci);
  g.grad_weights.assign(spec.weights.size(), T(0));
  g.grad_bias.assign(spec.bias.size(), T(0));

  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      const T* go = grad_out.pixel(r, c);
      for (int o = 0; o < Co; ++o) g.grad_bias[o] += go[o];
      for (int ki = 0; ki < K; ++ki) {
        const int ir = r + ki - pad;
        if (ir < 0 || ir >= H) continue;
        for (int kj = 0; kj < K; ++kj) {
          const int ic = c + kj - pad;
          if (ic < 0 || ic >= W) continue;
          const T* src = t.pixel(ir, ic);
          T* gin = g.grad_input.pixel(ir, ic);
          const size_t tap_off = static_cast<size_t>(ki * K + kj) * Ci * Co;
          for (int i = 0; i < Ci; ++i) {
            const T* wrow = spec.weights.data() + tap_off + static_cast<size_t>(i) * Co;
            T* gwrow = g.grad_weights.data() + tap_off + static_cast<size_t>(i) * Co;
            T acc = T(0);
            for (int o = 0; o < Co; ++o) {
              acc += wrow[o] * go[o];
              gwrow[o] += src[i] * go[o];
            }
            gin[i] += acc;
          }
        }
      }
    }
  }
  return g;
}

}  // namespace naf
