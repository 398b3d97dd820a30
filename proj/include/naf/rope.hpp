#pragma once

#include <cmath>
#include <vector>

#include "naf/common.hpp"
#include "naf/tensor.hpp"

namespace naf {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

// 2D axial rotary embedding configuration. Channels pair up as (2c, 2c+1);
// the first C/4 pairs rotate with the normalized row coordinate, the next
// C/4 with the column coordinate. Wavelengths follow λ_i = base^(i/n) with
// n = C/4 bands per axis.
struct RopeConfig {
  int channels = 0;   // C, divisible by 4
  double base = 100.0;
  int grid_h = 0;     // high-resolution grid the coordinates normalize against
  int grid_w = 0;

  void validate() const {
    if (channels < 4 || channels % 4 != 0)
      throw ConfigError("rope channels must be a positive multiple of 4");
    if (base <= 1.0) throw ConfigError("rope base must be > 1");
    if (grid_h < 1 || grid_w < 1) throw ConfigError("rope grid must be >= 1");
  }

  RopeConfig with_grid(int h, int w) const {
    RopeConfig c = *this;
    c.grid_h = h;
    c.grid_w = w;
    return c;
  }
};

// One rotation angle per channel pair, radians.
struct PhaseVector {
  std::vector<double> angles;  // C/2
};

inline std::vector<double> wavelengths(const RopeConfig& cfg) {
  cfg.validate();
  const int n = cfg.channels / 4;
  std::vector<double> lam(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    lam[static_cast<size_t>(i)] = std::pow(cfg.base, static_cast<double>(i) / n);
  return lam;
}

namespace detail {

// Index → [-1, 1], endpoints inclusive; a 1-length axis maps to 0.
inline double normalized_coord(int idx, int size) {
  if (size <= 1) return 0.0;
  return -1.0 + 2.0 * static_cast<double>(idx) / (size - 1);
}

}  // namespace detail

inline PhaseVector phase_angles(const RopeConfig& cfg, int row, int col) {
  cfg.validate();
  if (row < 0 || row >= cfg.grid_h || col < 0 || col >= cfg.grid_w)
    throw BoundsError("position (" + std::to_string(row) + "," + std::to_string(col) +
                      ") outside grid " + std::to_string(cfg.grid_h) + "x" +
                      std::to_string(cfg.grid_w));
  const int n = cfg.channels / 4;
  const double py = detail::normalized_coord(row, cfg.grid_h);
  const double px = detail::normalized_coord(col, cfg.grid_w);
  PhaseVector ph;
  ph.angles.resize(static_cast<size_t>(cfg.channels / 2));
  const std::vector<double> lam = wavelengths(cfg);
  for (int c = 0; c < n; ++c) {
    ph.angles[static_cast<size_t>(c)] = kTwoPi * py / lam[static_cast<size_t>(c)];
    ph.angles[static_cast<size_t>(c + n)] = kTwoPi * px / lam[static_cast<size_t>(c)];
  }
  return ph;
}

inline PhaseVector relative_phase(const RopeConfig& cfg, int p_row, int p_col, int q_row,
                                  int q_col) {
  const PhaseVector a = phase_angles(cfg, p_row, p_col);
  const PhaseVector b = phase_angles(cfg, q_row, q_col);
  PhaseVector d;
  d.angles.resize(a.angles.size());
  for (size_t i = 0; i < a.angles.size(); ++i) d.angles[i] = b.angles[i] - a.angles[i];
  return d;
}

// Rotates each channel pair by its position phase:
//   out = [cosΦ·x − sinΦ·y, sinΦ·x + cosΦ·y].
template <typename T>
Tensor3T<T> apply_rope(const Tensor3T<T>& g, const RopeConfig& cfg) {
  cfg.validate();
  if (g.channels != cfg.channels)
    throw ShapeError("rope expects " + std::to_string(cfg.channels) + " channels, got " +
                     std::to_string(g.channels));
  if (g.height != cfg.grid_h || g.width != cfg.grid_w)
    throw ShapeError("rope grid mismatch");

  const int pairs = cfg.channels / 2;
  Tensor3T<T> out(g.height, g.width, g.channels);
  parallel_for(g.height, [&](int r) {
    for (int c = 0; c < g.width; ++c) {
      const PhaseVector ph = phase_angles(cfg, r, c);
      const T* src = g.pixel(r, c);
      T* dst = out.pixel(r, c);
      for (int p = 0; p < pairs; ++p) {
        const T cs = static_cast<T>(std::cos(ph.angles[static_cast<size_t>(p)]));
        const T sn = static_cast<T>(std::sin(ph.angles[static_cast<size_t>(p)]));
        const T x = src[2 * p], y = src[2 * p + 1];
        dst[2 * p] = cs * x - sn * y;
        dst[2 * p + 1] = sn * x + cs * y;
      }
    }
  });
  return out;
}

// Transpose of apply_rope: rotation by −Φ.
template <typename T>
Tensor3T<T> apply_rope_backward(const Tensor3T<T>& grad_out, const RopeConfig& cfg) {
  cfg.validate();
  if (grad_out.channels != cfg.channels || grad_out.height != cfg.grid_h ||
      grad_out.width != cfg.grid_w)
    throw ShapeError("rope backward shape mismatch");

  const int pairs = cfg.channels / 2;
  Tensor3T<T> out(grad_out.height, grad_out.width, grad_out.channels);
  parallel_for(grad_out.height, [&](int r) {
    for (int c = 0; c < grad_out.width; ++c) {
      const PhaseVector ph = phase_angles(cfg, r, c);
      const T* src = grad_out.pixel(r, c);
      T* dst = out.pixel(r, c);
      for (int p = 0; p < pairs; ++p) {
        const T cs = static_cast<T>(std::cos(ph.angles[static_cast<size_t>(p)]));
        const T sn = static_cast<T>(std::sin(ph.angles[static_cast<size_t>(p)]));
        const T x = src[2 * p], y = src[2 * p + 1];
        dst[2 * p] = cs * x + sn * y;
        dst[2 * p + 1] = -sn * x + cs * y;
      }
    }
  });
  return out;
}

}  // namespace naf
