#pragma once

#include <cmath>
#include <limits>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "naf/attention.hpp"
#include "naf/common.hpp"
#include "naf/rng.hpp"
#include "naf/tensor.hpp"
#include "naf/training.hpp"

namespace naf {

enum class NoiseKind { kGaussian, kChannelSaltPepper };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::kGaussian;
  double level = 0.1;  // σ for gaussian, corruption probability for salt-pepper
  bool has_range = false;
  double level_lo = 0.0, level_hi = 0.0;  // per-sample uniform draw when has_range
  uint64_t seed = 0;

  void validate() const {
    if (kind == NoiseKind::kGaussian && level < 0.0) throw ConfigError("sigma must be >= 0");
    if (kind == NoiseKind::kChannelSaltPepper && (level < 0.0 || level > 1.0))
      throw ConfigError("corruption probability must be in [0,1]");
    if (has_range && level_lo > level_hi) throw ConfigError("noise range must have lo <= hi");
  }
};

// out = img + σ·z, z i.i.d. standard normal. Values are left unclipped;
// clamping happens at metric time only.
inline Tensor3 add_gaussian_noise(const Tensor3& img, const NoiseSpec& spec) {
  if (spec.kind != NoiseKind::kGaussian) throw ConfigError("noise spec is not gaussian");
  spec.validate();
  Tensor3 out = img;
  Rng rng(spec.seed);
  const float sigma = static_cast<float>(spec.level);
  for (auto& v : out.data) v += sigma * static_cast<float>(rng.normal());
  return out;
}

// Per (pixel, channel): with probability p replace the value, equiprobably by
// 0.0 or 1.0; otherwise leave it.
inline Tensor3 add_channel_salt_pepper(const Tensor3& img, const NoiseSpec& spec) {
  if (spec.kind != NoiseKind::kChannelSaltPepper)
    throw ConfigError("noise spec is not channel salt-pepper");
  spec.validate();
  Tensor3 out = img;
  Rng rng(spec.seed);
  for (auto& v : out.data)
    if (rng.uniform() < spec.level) v = rng.uniform() < 0.5 ? 1.0f : 0.0f;
  return out;
}

inline Tensor3 add_noise(const Tensor3& img, const NoiseSpec& spec) {
  return spec.kind == NoiseKind::kGaussian ? add_gaussian_noise(img, spec)
                                           : add_channel_salt_pepper(img, spec);
}

// 10·log10(peak²/MSE); +inf for identical inputs.
template <typename T>
double psnr(const Tensor3T<T>& a, const Tensor3T<T>& b, double peak = 1.0) {
  if (!a.same_shape(b)) throw ShapeError("psnr: shape mismatch");
  double mse = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
    mse += d * d;
  }
  mse /= static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

inline Tensor3 clamp01(const Tensor3& t) {
  Tensor3 out = t;
  for (auto& v : out.data) v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
  return out;
}

namespace detail {

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

inline const std::vector<double>& ssim_kernel() {
  static const std::vector<double> k = [] {
    std::vector<double> k2(kSsimWindow * kSsimWindow);
    const int r = kSsimWindow / 2;
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i)
      for (int j = 0; j < kSsimWindow; ++j) {
        const double dy = i - r, dx = j - r;
        const double v = std::exp(-(dy * dy + dx * dx) / (2.0 * kSsimSigma * kSsimSigma));
        k2[static_cast<size_t>(i) * kSsimWindow + j] = v;
        sum += v;
      }
    for (auto& v : k2) v /= sum;
    return k2;
  }();
  return k;
}

// Valid-mode correlation with the SSIM window, per channel.
template <typename T>
Tensor3T<T> ssim_filter(const Tensor3T<T>& x) {
  const auto& k = ssim_kernel();
  const int W = kSsimWindow;
  const int oh = x.height - W + 1, ow = x.width - W + 1, C = x.channels;
  Tensor3T<T> out(oh, ow, C);
  parallel_for(oh, [&](int r) {
    for (int c = 0; c < ow; ++c) {
      T* dst = out.pixel(r, c);
      for (int ch = 0; ch < C; ++ch) {
        double acc = 0.0;
        for (int i = 0; i < W; ++i)
          for (int j = 0; j < W; ++j)
            acc += k[static_cast<size_t>(i) * W + j] *
                   static_cast<double>(x.at(r + i, c + j, ch));
        dst[ch] = static_cast<T>(acc);
      }
    }
  });
  return out;
}

// Transpose of ssim_filter: scatters a valid-grid gradient back to the full
// image grid.
template <typename T>
Tensor3T<T> ssim_filter_transpose(const Tensor3T<T>& g, int full_h, int full_w) {
  const auto& k = ssim_kernel();
  const int W = kSsimWindow;
  Tensor3T<T> out(full_h, full_w, g.channels);
  for (int r = 0; r < g.height; ++r)
    for (int c = 0; c < g.width; ++c)
      for (int ch = 0; ch < g.channels; ++ch) {
        const T gv = g.at(r, c, ch);
        for (int i = 0; i < W; ++i)
          for (int j = 0; j < W; ++j)
            out.at(r + i, c + j, ch) += static_cast<T>(k[static_cast<size_t>(i) * W + j]) * gv;
      }
  return out;
}

template <typename T>
struct SsimMaps {
  Tensor3T<T> mu_x, mu_y, mxx, myy, mxy;
  Tensor3T<T> a1, a2, b1, b2, s;
};

template <typename T>
SsimMaps<T> ssim_maps(const Tensor3T<T>& x, const Tensor3T<T>& y) {
  constexpr double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;  // peak = 1
  SsimMaps<T> m;
  m.mu_x = ssim_filter(x);
  m.mu_y = ssim_filter(y);
  Tensor3T<T> xx = x, yy = y, xy = x;
  for (size_t i = 0; i < x.data.size(); ++i) {
    xx.data[i] = x.data[i] * x.data[i];
    yy.data[i] = y.data[i] * y.data[i];
    xy.data[i] = x.data[i] * y.data[i];
  }
  m.mxx = ssim_filter(xx);
  m.myy = ssim_filter(yy);
  m.mxy = ssim_filter(xy);

  const size_t n = m.mu_x.data.size();
  m.a1 = m.mu_x;
  m.a2 = m.mu_x;
  m.b1 = m.mu_x;
  m.b2 = m.mu_x;
  m.s = m.mu_x;
  for (size_t i = 0; i < n; ++i) {
    const T mux = m.mu_x.data[i], muy = m.mu_y.data[i];
    const T sig_x = m.mxx.data[i] - mux * mux;
    const T sig_y = m.myy.data[i] - muy * muy;
    const T sig_xy = m.mxy.data[i] - mux * muy;
    m.a1.data[i] = T(2) * mux * muy + static_cast<T>(C1);
    m.a2.data[i] = T(2) * sig_xy + static_cast<T>(C2);
    m.b1.data[i] = mux * mux + muy * muy + static_cast<T>(C1);
    m.b2.data[i] = sig_x + sig_y + static_cast<T>(C2);
    m.s.data[i] = (m.a1.data[i] * m.a2.data[i]) / (m.b1.data[i] * m.b2.data[i]);
  }
  return m;
}

}  // namespace detail

// Mean local SSIM, 11×11 Gaussian window (σ = 1.5), C1 = (0.01·peak)²,
// C2 = (0.03·peak)², valid windows only, averaged over channels.
template <typename T>
double ssim(const Tensor3T<T>& a, const Tensor3T<T>& b) {
  if (!a.same_shape(b)) throw ShapeError("ssim: shape mismatch");
  if (a.height < detail::kSsimWindow || a.width < detail::kSsimWindow)
    throw ShapeError("ssim needs images of at least 11x11");
  const auto maps = detail::ssim_maps(a, b);
  double acc = 0.0;
  for (T v : maps.s.data) acc += static_cast<double>(v);
  return acc / static_cast<double>(maps.s.data.size());
}

// SSIM together with its gradient w.r.t. the first argument.
template <typename T>
std::pair<double, Tensor3T<T>> ssim_with_grad(const Tensor3T<T>& x, const Tensor3T<T>& y) {
  if (!x.same_shape(y)) throw ShapeError("ssim: shape mismatch");
  if (x.height < detail::kSsimWindow || x.width < detail::kSsimWindow)
    throw ShapeError("ssim needs images of at least 11x11");
  const auto m = detail::ssim_maps(x, y);
  const size_t n = m.s.data.size();
  const T inv_n = static_cast<T>(1.0 / static_cast<double>(n));

  double value = 0.0;
  Tensor3T<T> d_mu_x = m.mu_x, d_mxx = m.mu_x, d_mxy = m.mu_x;  // same shape holders
  for (size_t i = 0; i < n; ++i) {
    value += static_cast<double>(m.s.data[i]);
    const T mux = m.mu_x.data[i], muy = m.mu_y.data[i];
    const T a1 = m.a1.data[i], a2 = m.a2.data[i], b1 = m.b1.data[i], b2 = m.b2.data[i];
    const T s = m.s.data[i];
    const T g_s = inv_n;
    const T g_a1 = g_s * a2 / (b1 * b2);
    const T g_a2 = g_s * a1 / (b1 * b2);
    const T g_b1 = -g_s * s / b1;
    const T g_b2 = -g_s * s / b2;
    // a1 = 2 μx μy + C1; a2 = 2 σxy + C2; b1 = μx²+μy²+C1; b2 = σx+σy+C2
    const T g_sig_xy = T(2) * g_a2;
    const T g_sig_x = g_b2;
    T g_mux = T(2) * muy * g_a1 + T(2) * mux * g_b1;
    // σx = mxx − μx², σxy = mxy − μx μy
    g_mux += -T(2) * mux * g_sig_x - muy * g_sig_xy;
    d_mu_x.data[i] = g_mux;
    d_mxx.data[i] = g_sig_x;
    d_mxy.data[i] = g_sig_xy;
  }

  Tensor3T<T> grad = detail::ssim_filter_transpose(d_mu_x, x.height, x.width);
  const Tensor3T<T> gxx = detail::ssim_filter_transpose(d_mxx, x.height, x.width);
  const Tensor3T<T> gxy = detail::ssim_filter_transpose(d_mxy, x.height, x.width);
  for (size_t i = 0; i < grad.data.size(); ++i)
    grad.data[i] += T(2) * x.data[i] * gxx.data[i] + y.data[i] * gxy.data[i];
  return {value / static_cast<double>(n), std::move(grad)};
}

struct RestorationWeights {
  double l1 = 1.0;
  double l2 = 5.0;
  double ssim = 0.2;
};

// λ1·L1 + λ2·L2 + λ3·(1 − SSIM) with analytic gradient w.r.t. pred. The L1
// subgradient at 0 is taken as 0.
template <typename T>
std::pair<double, Tensor3T<T>> restoration_loss(const Tensor3T<T>& pred, const Tensor3T<T>& target,
                                                const RestorationWeights& w = {}) {
  if (!pred.same_shape(target)) throw ShapeError("restoration loss: shape mismatch");
  const size_t n = pred.data.size();
  const double inv_n = 1.0 / static_cast<double>(n);

  double l1 = 0.0, l2 = 0.0;
  Tensor3T<T> grad(pred.height, pred.width, pred.channels);
  for (size_t i = 0; i < n; ++i) {
    const double diff = static_cast<double>(pred.data[i]) - static_cast<double>(target.data[i]);
    l1 += std::abs(diff);
    l2 += diff * diff;
    const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
    grad.data[i] = static_cast<T>((w.l1 * sign + w.l2 * 2.0 * diff) * inv_n);
  }
  l1 *= inv_n;
  l2 *= inv_n;

  auto [ssim_value, ssim_grad] = ssim_with_grad(pred, target);
  for (size_t i = 0; i < n; ++i)
    grad.data[i] -= static_cast<T>(w.ssim) * ssim_grad.data[i];
  const double loss = w.l1 * l1 + w.l2 * l2 + w.ssim * (1.0 - ssim_value);
  return {loss, std::move(grad)};
}

// Same-resolution NAF: keys equal queries (identity pooling) and the values
// are the noisy RGB pixels themselves.
template <typename T>
Tensor3T<T> denoise_forward(const Tensor3T<T>& noisy, const EncoderParamsT<T>& enc,
                            const RopeConfig& rope, const AttnConfig& cfg) {
  if (cfg.scale != 1) throw ConfigError("denoising runs at scale 1");
  return naf_forward(noisy, noisy, enc, rope, cfg);
}

struct DenoiseTrainConfig {
  int iterations = 1000;
  int image_size = 64;
  AdamConfig adam;
  uint64_t seed = 0;

  int encoder_depth = 1;
  int guidance_channels = 32;
  double rope_base = 100.0;
  AttnConfig attn;  // scale must stay 1; kernel default 15 per the extension

  DenoiseTrainConfig() {
    attn.scale = 1;
    attn.kernel = 15;
  }
};

// Denoiser training: corrupt a clean image, filter it with the guidance from
// the corrupted image itself, and minimize the combined restoration loss.
inline TrainResult train_denoiser(const DenoiseTrainConfig& config, const NoiseSpec& noise,
                                  ImageSource& source, std::ostream* csv = nullptr) {
  if (config.attn.scale != 1) throw ConfigError("denoising runs at scale 1");
  if (config.iterations < 0) throw ConfigError("iterations must be >= 0");
  if (config.image_size < detail::kSsimWindow)
    throw ConfigError("image size must cover the SSIM window");
  noise.validate();

  TrainResult result;
  result.params = init_encoder(config.encoder_depth, config.guidance_channels,
                               mix_seed(config.seed, 1));
  result.sigma = static_cast<float>(config.attn.sigma);
  const bool learn_sigma = config.attn.positional_mode == PositionalMode::kGaussian ||
                           config.attn.positional_mode == PositionalMode::kManhattan;

  RopeConfig rope;
  rope.channels = config.guidance_channels;
  rope.base = config.rope_base;
  rope.grid_h = rope.grid_w = config.image_size;

  AdamState adam;
  Rng run_rng(mix_seed(config.seed, 2));
  if (csv) *csv << "iteration,stage,loss\n";

  for (int it = 0; it < config.iterations; ++it) {
    const Tensor3 clean = source.next(config.image_size);
    NoiseSpec draw = noise;
    if (noise.has_range) draw.level = run_rng.uniform(noise.level_lo, noise.level_hi);
    draw.seed = mix_seed(noise.seed, static_cast<uint64_t>(it) + 1);
    const Tensor3 noisy = add_noise(clean, draw);

    AttnConfig cfg = config.attn;
    cfg.sigma = result.sigma;
    const Tensor3 pred = denoise_forward(noisy, result.params, rope, cfg);
    auto [loss, grad] = restoration_loss(pred, clean);
    if (!std::isfinite(loss))
      throw TrainingDiverged("denoiser loss diverged at iteration " + std::to_string(it));
    result.log.push_back({it, 0, loss});
    if (csv) *csv << it << ",0," << loss << "\n";

    NafGrads<float> g = naf_backward(noisy, noisy, result.params, rope, cfg, grad);
    float gsigma = g.sigma;
    adam_update(detail::collect_param_ptrs(result.params, learn_sigma ? &result.sigma : nullptr),
                detail::collect_grad_values(g.enc, learn_sigma ? &gsigma : nullptr), adam,
                config.adam);
    if (learn_sigma && result.sigma < 1e-3f) result.sigma = 1e-3f;
  }
  return result;
}

}  // namespace naf
