#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "naf/common.hpp"
#include "naf/tensor.hpp"

namespace naf {

struct BilateralConfig {
  double sigma_s = 1.0;  // spatial: pixels for jbf, LR cells for jbu
  double sigma_r = 0.1;  // range, in guidance-value units
  int radius = 4;        // window half-width, (2r+1)² taps

  void validate() const {
    if (sigma_s <= 0.0 || sigma_r <= 0.0) throw ConfigError("bilateral sigmas must be > 0");
    if (radius < 0) throw ConfigError("bilateral radius must be >= 0");
  }
};

// Joint bilateral filter:
//   w(p,q) = exp(−‖p−q‖²/2σ_s² − ‖G_p−G_q‖²/2σ_r²),
// normalized over the (2r+1)² window, truncated at borders. Anchored on the
// center tap so constant signals pass through exactly.
template <typename T>
Tensor3T<T> jbf(const Tensor3T<T>& signal, const Tensor3T<T>& guidance,
                const BilateralConfig& cfg) {
  cfg.validate();
  if (signal.height != guidance.height || signal.width != guidance.width)
    throw ShapeError("signal and guidance must share spatial dims");
  const int H = signal.height, W = signal.width;
  const int d = signal.channels, gc = guidance.channels;
  const double inv2ss = 1.0 / (2.0 * cfg.sigma_s * cfg.sigma_s);
  const double inv2sr = 1.0 / (2.0 * cfg.sigma_r * cfg.sigma_r);

  Tensor3T<T> out(H, W, d);
  parallel_for(H, [&](int pr) {
    for (int pc = 0; pc < W; ++pc) {
      const T* gp = guidance.pixel(pr, pc);
      const T* anchor = signal.pixel(pr, pc);
      double z = 0.0;
      std::vector<double> acc(static_cast<size_t>(d), 0.0);
      for (int qr = std::max(0, pr - cfg.radius); qr <= std::min(H - 1, pr + cfg.radius); ++qr)
        for (int qc = std::max(0, pc - cfg.radius); qc <= std::min(W - 1, pc + cfg.radius); ++qc) {
          const T* gq = guidance.pixel(qr, qc);
          double range = 0.0;
          for (int ch = 0; ch < gc; ++ch) {
            const double diff = static_cast<double>(gp[ch]) - static_cast<double>(gq[ch]);
            range += diff * diff;
          }
          const double dy = pr - qr, dx = pc - qc;
          const double w = std::exp(-(dy * dy + dx * dx) * inv2ss - range * inv2sr);
          z += w;
          const T* v = signal.pixel(qr, qc);
          for (int ch = 0; ch < d; ++ch)
            acc[static_cast<size_t>(ch)] +=
                w * (static_cast<double>(v[ch]) - static_cast<double>(anchor[ch]));
        }
      T* dst = out.pixel(pr, pc);
      for (int ch = 0; ch < d; ++ch)
        dst[ch] = anchor[ch] + static_cast<T>(acc[static_cast<size_t>(ch)] / z);
    }
  });
  return out;
}

// Joint bilateral upsampling. For each HR position p the window is the LR
// cells around floor(p/s); spatial distance is measured in LR units between
// p/s and the integer cell coordinates, range distance between the HR
// guidance at p and at each cell's HR center pixel.
template <typename T>
Tensor3T<T> jbu(const Tensor3T<T>& f_lr, const Tensor3T<T>& guidance_hr, int s,
                const BilateralConfig& cfg) {
  cfg.validate();
  if (s < 1) throw ConfigError("scale must be >= 1");
  if (guidance_hr.height != s * f_lr.height || guidance_hr.width != s * f_lr.width)
    throw ShapeError("guidance dims must be scale × feature dims");
  const int H = guidance_hr.height, W = guidance_hr.width;
  const int d = f_lr.channels, gc = guidance_hr.channels;
  const int half = (s - 1) / 2;  // HR offset of a cell's center pixel
  const double inv2ss = 1.0 / (2.0 * cfg.sigma_s * cfg.sigma_s);
  const double inv2sr = 1.0 / (2.0 * cfg.sigma_r * cfg.sigma_r);

  Tensor3T<T> out(H, W, d);
  parallel_for(H, [&](int pr) {
    for (int pc = 0; pc < W; ++pc) {
      const double ply = static_cast<double>(pr) / s;
      const double plx = static_cast<double>(pc) / s;
      const int ar = pr / s, ac = pc / s;
      const T* gp = guidance_hr.pixel(pr, pc);
      const T* anchor = f_lr.pixel(ar, ac);
      double z = 0.0;
      std::vector<double> acc(static_cast<size_t>(d), 0.0);
      for (int qr = std::max(0, ar - cfg.radius); qr <= std::min(f_lr.height - 1, ar + cfg.radius);
           ++qr)
        for (int qc = std::max(0, ac - cfg.radius);
             qc <= std::min(f_lr.width - 1, ac + cfg.radius); ++qc) {
          const T* gq = guidance_hr.pixel(qr * s + half, qc * s + half);
          double range = 0.0;
          for (int ch = 0; ch < gc; ++ch) {
            const double diff = static_cast<double>(gp[ch]) - static_cast<double>(gq[ch]);
            range += diff * diff;
          }
          const double dy = ply - qr, dx = plx - qc;
          const double w = std::exp(-(dy * dy + dx * dx) * inv2ss - range * inv2sr);
          z += w;
          const T* v = f_lr.pixel(qr, qc);
          for (int ch = 0; ch < d; ++ch)
            acc[static_cast<size_t>(ch)] +=
                w * (static_cast<double>(v[ch]) - static_cast<double>(anchor[ch]));
        }
      T* dst = out.pixel(pr, pc);
      for (int ch = 0; ch < d; ++ch)
        dst[ch] = anchor[ch] + static_cast<T>(acc[static_cast<size_t>(ch)] / z);
    }
  });
  return out;
}

}  // namespace naf
