#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "naf/attention.hpp"
#include "naf/common.hpp"
#include "naf/npy.hpp"
#include "naf/png_io.hpp"
#include "naf/rope.hpp"
#include "naf/tensor.hpp"

namespace naf {

// Per-channel-pair contribution to the rotated inner product:
//   a_c = dot·cosΔΦ − cross·sinΔΦ.
struct ChannelTerm {
  int pair_index = 0;
  double dot = 0.0;    // G_c(p)·G_c(q')
  double cross = 0.0;  // G_c(p)×G_c(q') (z component)
  double delta_phi = 0.0;
  double a_c = 0.0;
};

// Magnitude-phase form of the same term: a_c = r_p·r_q·cos(ψ + ΔΦ).
struct PolarTerm {
  double r_p = 0.0;
  double r_q = 0.0;
  double psi = 0.0;  // angle from G_c(p) to G_c(q'); 0 by convention when a magnitude is 0
  double delta_phi = 0.0;
};

// Splits ⟨RoPE(G)_p, RoPE(G)_q'⟩ into its C/2 per-pair terms.
template <typename T>
std::vector<ChannelTerm> channel_decomposition(const Tensor3T<T>& guidance, const RopeConfig& rope,
                                               int p_row, int p_col, int q_row, int q_col) {
  const RopeConfig cfg = rope.with_grid(guidance.height, guidance.width);
  if (guidance.channels != cfg.channels) throw ShapeError("guidance/rope channel mismatch");
  const PhaseVector dphi = relative_phase(cfg, p_row, p_col, q_row, q_col);
  const T* gp = guidance.pixel(p_row, p_col);
  const T* gq = guidance.pixel(q_row, q_col);

  std::vector<ChannelTerm> terms(static_cast<size_t>(cfg.channels / 2));
  for (int c = 0; c < cfg.channels / 2; ++c) {
    ChannelTerm& t = terms[static_cast<size_t>(c)];
    t.pair_index = c;
    const double px = gp[2 * c], py = gp[2 * c + 1];
    const double qx = gq[2 * c], qy = gq[2 * c + 1];
    t.dot = px * qx + py * qy;
    t.cross = px * qy - py * qx;
    t.delta_phi = dphi.angles[static_cast<size_t>(c)];
    t.a_c = t.dot * std::cos(t.delta_phi) - t.cross * std::sin(t.delta_phi);
  }
  return terms;
}

template <typename T>
PolarTerm polar_form(const Tensor3T<T>& guidance, const RopeConfig& rope, int p_row, int p_col,
                     int q_row, int q_col, int pair_index) {
  if (pair_index < 0 || pair_index >= rope.channels / 2)
    throw BoundsError("pair index out of range");
  const auto terms = channel_decomposition(guidance, rope, p_row, p_col, q_row, q_col);
  const ChannelTerm& t = terms[static_cast<size_t>(pair_index)];
  const T* gp = guidance.pixel(p_row, p_col);
  const T* gq = guidance.pixel(q_row, q_col);
  PolarTerm out;
  out.r_p = std::hypot(static_cast<double>(gp[2 * pair_index]),
                       static_cast<double>(gp[2 * pair_index + 1]));
  out.r_q = std::hypot(static_cast<double>(gq[2 * pair_index]),
                       static_cast<double>(gq[2 * pair_index + 1]));
  out.psi = (out.r_p == 0.0 || out.r_q == 0.0) ? 0.0 : std::atan2(t.cross, t.dot);
  out.delta_phi = t.delta_phi;
  return out;
}

// Pooled attention score: mean over the s² HR pixels of an LR cell of the
// per-pair sums. Equals ⟨Q_p, K_cell⟩ with average-pooled keys.
template <typename T>
double pooled_score(const Tensor3T<T>& guidance, const RopeConfig& rope, int p_row, int p_col,
                    int cell_row, int cell_col, int s) {
  if (guidance.height % s != 0 || guidance.width % s != 0)
    throw ShapeError("guidance dims not divisible by scale");
  if (cell_row < 0 || cell_col < 0 || cell_row >= guidance.height / s ||
      cell_col >= guidance.width / s)
    throw BoundsError("LR cell outside grid");
  double acc = 0.0;
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < s; ++j) {
      const auto terms =
          channel_decomposition(guidance, rope, p_row, p_col, cell_row * s + i, cell_col * s + j);
      for (const ChannelTerm& t : terms) acc += t.a_c;
    }
  return acc / (s * s);
}

// Softmax attention weights of one query as a k×k grid (out-of-window cells
// are zero), written as NPY plus a min/max-scaled grayscale PNG.
template <typename T>
Tensor3T<float> export_attention_map(const Tensor3T<T>& f_lr, const Tensor3T<T>& image,
                                     const EncoderParamsT<T>& enc, const RopeConfig& rope,
                                     const AttnConfig& cfg, int p_row, int p_col,
                                     const std::string& out_prefix) {
  const auto ctx = detail::build_attention_inputs(f_lr, image, enc, rope, cfg);
  const NeighborIndex nb =
      neighborhood(p_row, p_col, cfg.scale, cfg.kernel, f_lr.height, f_lr.width);
  const int C = enc.channels;
  const bool is_rope = cfg.positional_mode == PositionalMode::kRope;
  const T* q = ctx.queries.pixel(p_row, p_col);
  const T* raw_q = is_rope ? nullptr : ctx.raw.pixel(p_row, p_col);

  std::vector<T> logits(nb.cells.size());
  T max_logit = std::numeric_limits<T>::lowest();
  for (size_t i = 0; i < nb.cells.size(); ++i) {
    const auto [cr, cc] = nb.cells[i];
    logits[i] = attention_logits(q, ctx.keys.pixel(cr, cc), C, p_row, p_col, cr, cc, cfg,
                                 image.height, image.width, raw_q,
                                 is_rope ? nullptr : ctx.raw_keys.pixel(cr, cc));
    max_logit = std::max(max_logit, logits[i]);
  }
  T z = T(0);
  for (T& l : logits) {
    l = std::exp(l - max_logit);
    z += l;
  }

  const int r = (cfg.kernel - 1) / 2;
  Tensor3T<float> map(cfg.kernel, cfg.kernel, 1, 0.0f);
  for (size_t i = 0; i < nb.cells.size(); ++i) {
    const auto [cr, cc] = nb.cells[i];
    map.at(cr - nb.anchor_row + r, cc - nb.anchor_col + r, 0) =
        static_cast<float>(logits[i] / z);
  }
  if (nb.cells.size() == 1)
    map.at(nb.cells[0].first - nb.anchor_row + r, nb.cells[0].second - nb.anchor_col + r, 0) = 1.0f;

  save_npy(map, out_prefix + ".npy");

  float lo = map.data[0], hi = map.data[0];
  for (float v : map.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  Tensor3 shaded(cfg.kernel, cfg.kernel, 1);
  const float span = hi > lo ? hi - lo : 1.0f;
  for (size_t i = 0; i < map.data.size(); ++i) shaded.data[i] = (map.data[i] - lo) / span;
  save_png(shaded, out_prefix + ".png");
  return map;
}

// Per-offset mean over channel pairs of cos(ΔΦ_c) and sin(ΔΦ_c) for a
// window×window offset grid centered at zero. Height pairs respond to the
// row offset, width pairs to the column offset, scaled by the config grid's
// [-1,1] normalization.
inline std::pair<Tensor3T<double>, Tensor3T<double>> mean_trig_maps(const RopeConfig& cfg,
                                                                    int window) {
  cfg.validate();
  if (window < 1 || window % 2 == 0) throw ConfigError("window must be odd and >= 1");
  const int r = (window - 1) / 2;
  const int n = cfg.channels / 4;
  const std::vector<double> lam = wavelengths(cfg);
  const double step_y = cfg.grid_h <= 1 ? 0.0 : 2.0 / (cfg.grid_h - 1);
  const double step_x = cfg.grid_w <= 1 ? 0.0 : 2.0 / (cfg.grid_w - 1);

  Tensor3T<double> cos_map(window, window, 1), sin_map(window, window, 1);
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) {
      double cs = 0.0, sn = 0.0;
      for (int c = 0; c < n; ++c) {
        const double phy = kTwoPi * dy * step_y / lam[static_cast<size_t>(c)];
        const double phx = kTwoPi * dx * step_x / lam[static_cast<size_t>(c)];
        cs += std::cos(phy) + std::cos(phx);
        sn += std::sin(phy) + std::sin(phx);
      }
      cos_map.at(dy + r, dx + r, 0) = cs / (2 * n);
      sin_map.at(dy + r, dx + r, 0) = sn / (2 * n);
    }
  return {std::move(cos_map), std::move(sin_map)};
}

}  // namespace naf
