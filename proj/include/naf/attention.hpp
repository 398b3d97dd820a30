#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "naf/common.hpp"
#include "naf/encoder.hpp"
#include "naf/rope.hpp"
#include "naf/tensor.hpp"

namespace naf {

enum class PositionalMode { kRope, kGaussian, kManhattan, kNone };
enum class KeyMode { kAvgPool, kMaxPool, kBilinear };

inline PositionalMode positional_mode_from_string(const std::string& s) {
  if (s == "rope") return PositionalMode::kRope;
  if (s == "gaussian") return PositionalMode::kGaussian;
  if (s == "manhattan") return PositionalMode::kManhattan;
  if (s == "none") return PositionalMode::kNone;
  throw ConfigError("unknown positional mode '" + s + "'");
}
inline std::string to_string(PositionalMode m) {
  switch (m) {
    case PositionalMode::kRope: return "rope";
    case PositionalMode::kGaussian: return "gaussian";
    case PositionalMode::kManhattan: return "manhattan";
    default: return "none";
  }
}

inline KeyMode key_mode_from_string(const std::string& s) {
  if (s == "avgpool") return KeyMode::kAvgPool;
  if (s == "maxpool") return KeyMode::kMaxPool;
  if (s == "bilinear") return KeyMode::kBilinear;
  throw ConfigError("unknown key mode '" + s + "'");
}
inline std::string to_string(KeyMode m) {
  switch (m) {
    case KeyMode::kAvgPool: return "avgpool";
    case KeyMode::kMaxPool: return "maxpool";
    default: return "bilinear";
  }
}

struct AttnConfig {
  int scale = 1;    // s; HR grid is s× the LR grid
  int kernel = 9;   // k, odd; LR cells per window side
  PositionalMode positional_mode = PositionalMode::kRope;
  KeyMode key_mode = KeyMode::kAvgPool;
  double logit_scale = 0.0;  // <= 0 means the 1/√C default
  double sigma = 1.0;        // spatial bandwidth, gaussian/manhattan only

  void validate() const {
    if (scale < 1) throw ConfigError("scale must be >= 1");
    if (kernel < 1 || kernel % 2 == 0) throw ConfigError("kernel must be odd and >= 1");
    if (positional_mode == PositionalMode::kGaussian ||
        positional_mode == PositionalMode::kManhattan) {
      if (sigma <= 0.0) throw ConfigError("sigma must be > 0");
    }
  }

  double effective_logit_scale(int guidance_channels) const {
    return logit_scale > 0.0 ? logit_scale : 1.0 / std::sqrt(static_cast<double>(guidance_channels));
  }
};

// In-bounds LR cells of the k×k window centered on the anchor cell of one HR
// position, row-major.
struct NeighborIndex {
  int anchor_row = 0;
  int anchor_col = 0;
  std::vector<std::pair<int, int>> cells;
};

inline NeighborIndex neighborhood(int p_row, int p_col, int s, int k, int h_lr, int w_lr) {
  if (p_row < 0 || p_col < 0 || p_row >= s * h_lr || p_col >= s * w_lr)
    throw BoundsError("HR position (" + std::to_string(p_row) + "," + std::to_string(p_col) +
                      ") outside grid " + std::to_string(s * h_lr) + "x" + std::to_string(s * w_lr));
  NeighborIndex n;
  n.anchor_row = p_row / s;
  n.anchor_col = p_col / s;
  const int r = (k - 1) / 2;
  const int r0 = std::max(0, n.anchor_row - r), r1 = std::min(h_lr - 1, n.anchor_row + r);
  const int c0 = std::max(0, n.anchor_col - r), c1 = std::min(w_lr - 1, n.anchor_col + r);
  n.cells.reserve(static_cast<size_t>(r1 - r0 + 1) * (c1 - c0 + 1));
  for (int rr = r0; rr <= r1; ++rr)
    for (int cc = c0; cc <= c1; ++cc) n.cells.emplace_back(rr, cc);
  return n;
}

// LR attention keys from the (already position-encoded) guidance map.
// avgpool is the block mean; maxpool takes per-channel block maxima
// (ties to the first occurrence in row-major order); bilinear resamples
// instead of pooling.
template <typename T>
Tensor3T<T> compute_keys(const Tensor3T<T>& guidance, int s, KeyMode mode) {
  if (guidance.height % s != 0 || guidance.width % s != 0)
    throw ShapeError("guidance dims not divisible by scale " + std::to_string(s));
  if (s == 1) return guidance;
  switch (mode) {
    case KeyMode::kAvgPool:
      return block_avg_pool(guidance, s);
    case KeyMode::kBilinear:
      return resize(guidance, guidance.height / s, guidance.width / s, ResizeMode::kBilinear);
    case KeyMode::kMaxPool: {
      const int oh = guidance.height / s, ow = guidance.width / s, C = guidance.channels;
      Tensor3T<T> out(oh, ow, C);
      parallel_for(oh, [&](int r) {
        for (int c = 0; c < ow; ++c) {
          T* dst = out.pixel(r, c);
          for (int ch = 0; ch < C; ++ch) {
            T best = guidance.at(r * s, c * s, ch);
            for (int i = 0; i < s; ++i)
              for (int j = 0; j < s; ++j) {
                const T v = guidance.at(r * s + i, c * s + j, ch);
                if (v > best) best = v;
              }
            dst[ch] = best;
          }
        }
      });
      return out;
    }
  }
  throw ConfigError("unreachable key mode");
}

namespace detail {

// Continuous index → [-1, 1] over a size-n axis.
inline double normalized_coord_cont(double idx, int size) {
  if (size <= 1) return 0.0;
  return -1.0 + 2.0 * idx / (size - 1);
}

inline double spatial_distance(PositionalMode mode, int p_row, int p_col, int cell_row,
                               int cell_col, int s, int hr_h, int hr_w) {
  const double py = normalized_coord_cont(p_row, hr_h);
  const double px = normalized_coord_cont(p_col, hr_w);
  const double half = (s - 1) * 0.5;
  const double qy = normalized_coord_cont(cell_row * s + half, hr_h);
  const double qx = normalized_coord_cont(cell_col * s + half, hr_w);
  const double dy = py - qy, dx = px - qx;
  return mode == PositionalMode::kGaussian ? dy * dy + dx * dx : std::abs(dy) + std::abs(dx);
}

template <typename T>
T dot(const T* a, const T* b, int n) {
  T acc = T(0);
  for (int i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace detail

// Attention logit for one (query position, LR cell) pair.
//   rope:                logit_scale·⟨q, key⟩            (q, key RoPE-encoded)
//   gaussian/manhattan:  logit_scale·⟨raw_q, raw_key⟩ − dist(p, cell center)/(2σ²)
//   none:                logit_scale·⟨raw_q, raw_key⟩
// Non-rope modes need the raw (un-rotated) guidance vectors.
template <typename T>
T attention_logits(const T* q, const T* key, int channels, int p_row, int p_col, int cell_row,
                   int cell_col, const AttnConfig& cfg, int hr_h, int hr_w,
                   const T* raw_q = nullptr, const T* raw_key = nullptr) {
  const T scale = static_cast<T>(cfg.effective_logit_scale(channels));
  if (cfg.positional_mode == PositionalMode::kRope)
    return scale * detail::dot(q, key, channels);
  if (raw_q == nullptr || raw_key == nullptr)
    throw ConfigError("non-rope positional modes need the raw guidance vectors");
  T logit = scale * detail::dot(raw_q, raw_key, channels);
  if (cfg.positional_mode != PositionalMode::kNone) {
    const double d = detail::spatial_distance(cfg.positional_mode, p_row, p_col, cell_row,
                                              cell_col, cfg.scale, hr_h, hr_w);
    logit -= static_cast<T>(d / (2.0 * cfg.sigma * cfg.sigma));
  }
  return logit;
}

namespace detail {

template <typename T>
struct AttnContext {
  Tensor3T<T> raw;      // Enc(I), HR grid
  Tensor3T<T> queries;  // raw or RoPE(raw), HR grid
  Tensor3T<T> keys;     // pooled queries, LR grid
  Tensor3T<T> raw_keys; // pooled raw guidance (non-rope modes); unused for rope
  bool rope_applied = false;
};

template <typename T>
AttnContext<T> build_attention_inputs(const Tensor3T<T>& f_lr, const Tensor3T<T>& image,
                                      const EncoderParamsT<T>& enc, const RopeConfig& rope,
                                      const AttnConfig& cfg) {
  cfg.validate();
  if (image.channels != 3) throw ShapeError("guidance image must be RGB");
  if (image.height % f_lr.height != 0 || image.width % f_lr.width != 0)
    throw ConfigError("image dims imply a non-integer upsampling scale");
  if (image.height / f_lr.height != cfg.scale || image.width / f_lr.width != cfg.scale)
    throw ShapeError("image dims must be scale × feature dims");
  if (rope.channels != enc.channels)
    throw ShapeError("rope channels must match guidance channels");

  AttnContext<T> ctx;
  ctx.raw = encode(image, enc);
  if (cfg.positional_mode == PositionalMode::kRope) {
    const RopeConfig rg = rope.with_grid(image.height, image.width);
    ctx.queries = apply_rope(ctx.raw, rg);
    ctx.keys = compute_keys(ctx.queries, cfg.scale, cfg.key_mode);
    ctx.rope_applied = true;
  } else {
    ctx.queries = ctx.raw;
    ctx.keys = compute_keys(ctx.raw, cfg.scale, cfg.key_mode);
    ctx.raw_keys = ctx.keys;
  }
  return ctx;
}

}  // namespace detail

// Cross-scale neighborhood attention: every HR position takes a softmax-
// weighted convex combination of the LR features in its k×k cell window.
// Aggregation is anchored on the anchor cell's value, so constant features
// pass through bit-exactly; a single-cell neighborhood is a plain copy.
template <typename T>
Tensor3T<T> naf_forward(const Tensor3T<T>& f_lr, const Tensor3T<T>& image,
                        const EncoderParamsT<T>& enc, const RopeConfig& rope,
                        const AttnConfig& cfg) {
  const auto ctx = detail::build_attention_inputs(f_lr, image, enc, rope, cfg);
  const int C = enc.channels, d = f_lr.channels;
  const int hr_h = image.height, hr_w = image.width;
  const bool is_rope = cfg.positional_mode == PositionalMode::kRope;

  Tensor3T<T> out(hr_h, hr_w, d);
  parallel_for(hr_h, [&](int pr) {
    std::vector<T> logits, weights;
    for (int pc = 0; pc < hr_w; ++pc) {
      const NeighborIndex nb = neighborhood(pr, pc, cfg.scale, cfg.kernel, f_lr.height, f_lr.width);
      T* dst = out.pixel(pr, pc);
      if (nb.cells.size() == 1) {
        const T* v = f_lr.pixel(nb.cells[0].first, nb.cells[0].second);
        for (int ch = 0; ch < d; ++ch) dst[ch] = v[ch];
        continue;
      }
      const T* q = ctx.queries.pixel(pr, pc);
      const T* raw_q = is_rope ? nullptr : ctx.raw.pixel(pr, pc);
      logits.resize(nb.cells.size());
      T max_logit = std::numeric_limits<T>::lowest();
      for (size_t i = 0; i < nb.cells.size(); ++i) {
        const auto [cr, cc] = nb.cells[i];
        const T* key = ctx.keys.pixel(cr, cc);
        logits[i] = attention_logits(q, key, C, pr, pc, cr, cc, cfg, hr_h, hr_w, raw_q,
                                     is_rope ? nullptr : ctx.raw_keys.pixel(cr, cc));
        max_logit = std::max(max_logit, logits[i]);
      }
      weights.resize(nb.cells.size());
      T z = T(0);
      for (size_t i = 0; i < logits.size(); ++i) {
        weights[i] = std::exp(logits[i] - max_logit);
        z += weights[i];
      }
      const T* anchor = f_lr.pixel(nb.anchor_row, nb.anchor_col);
      for (int ch = 0; ch < d; ++ch) {
        T acc = T(0);
        for (size_t i = 0; i < nb.cells.size(); ++i)
          acc += weights[i] * (f_lr.at(nb.cells[i].first, nb.cells[i].second, ch) - anchor[ch]);
        dst[ch] = anchor[ch] + acc / z;
      }
    }
  });
  return out;
}

template <typename T>
struct NafGrads {
  Tensor3T<T> f_lr;
  EncoderParamsT<T> enc;
  T sigma = T(0);
};

// Reverse-mode gradients of naf_forward w.r.t. the LR features, the encoder
// parameters and (gaussian/manhattan) the spatial bandwidth. Queries are
// walked row-major sequentially so gradient accumulation is deterministic.
template <typename T>
NafGrads<T> naf_backward(const Tensor3T<T>& f_lr, const Tensor3T<T>& image,
                         const EncoderParamsT<T>& enc, const RopeConfig& rope,
                         const AttnConfig& cfg, const Tensor3T<T>& grad_out) {
  const auto ctx = detail::build_attention_inputs(f_lr, image, enc, rope, cfg);
  const int C = enc.channels, d = f_lr.channels;
  const int hr_h = image.height, hr_w = image.width;
  if (grad_out.height != hr_h || grad_out.width != hr_w || grad_out.channels != d)
    throw ShapeError("naf backward: grad_out shape mismatch");
  const bool is_rope = cfg.positional_mode == PositionalMode::kRope;
  const T scale = static_cast<T>(cfg.effective_logit_scale(C));

  NafGrads<T> grads;
  grads.f_lr = Tensor3T<T>(f_lr.height, f_lr.width, d);
  Tensor3T<T> grad_q(hr_h, hr_w, C);          // w.r.t. ctx.queries
  Tensor3T<T> grad_k(f_lr.height, f_lr.width, C);  // w.r.t. ctx.keys
  double grad_sigma = 0.0;

  std::vector<T> logits, weights, gdotv;
  for (int pr = 0; pr < hr_h; ++pr) {
    for (int pc = 0; pc < hr_w; ++pc) {
      const NeighborIndex nb = neighborhood(pr, pc, cfg.scale, cfg.kernel, f_lr.height, f_lr.width);
      const T* go = grad_out.pixel(pr, pc);
      if (nb.cells.size() == 1) {
        T* gv = grads.f_lr.pixel(nb.cells[0].first, nb.cells[0].second);
        for (int ch = 0; ch < d; ++ch) gv[ch] += go[ch];
        continue;
      }
      const T* q = ctx.queries.pixel(pr, pc);
      const T* raw_q = is_rope ? nullptr : ctx.raw.pixel(pr, pc);
      logits.resize(nb.cells.size());
      T max_logit = std::numeric_limits<T>::lowest();
      for (size_t i = 0; i < nb.cells.size(); ++i) {
        const auto [cr, cc] = nb.cells[i];
        logits[i] = attention_logits(q, ctx.keys.pixel(cr, cc), C, pr, pc, cr, cc, cfg, hr_h, hr_w,
                                     raw_q, is_rope ? nullptr : ctx.raw_keys.pixel(cr, cc));
        max_logit = std::max(max_logit, logits[i]);
      }
      weights.resize(nb.cells.size());
      T z = T(0);
      for (size_t i = 0; i < logits.size(); ++i) {
        weights[i] = std::exp(logits[i] - max_logit);
        z += weights[i];
      }
      for (auto& w : weights) w /= z;

      gdotv.resize(nb.cells.size());
      for (size_t i = 0; i < nb.cells.size(); ++i) {
        const auto [cr, cc] = nb.cells[i];
        gdotv[i] = detail::dot(go, f_lr.pixel(cr, cc), d);
        // value path
        T* gv = grads.f_lr.pixel(cr, cc);
        for (int ch = 0; ch < d; ++ch) gv[ch] += weights[i] * go[ch];
      }
      // Softmax backward is invariant to constant shifts of ⟨g,V⟩; anchoring
      // makes the constant-features case cancel exactly.
      const T g_anchor = detail::dot(go, f_lr.pixel(nb.anchor_row, nb.anchor_col), d);
      T sum_wg = T(0);
      for (size_t i = 0; i < nb.cells.size(); ++i) {
        gdotv[i] -= g_anchor;
        sum_wg += weights[i] * gdotv[i];
      }
      // softmax backward, then into the logit inputs
      T* gq = grad_q.pixel(pr, pc);
      for (size_t i = 0; i < nb.cells.size(); ++i) {
        const auto [cr, cc] = nb.cells[i];
        const T dlogit = weights[i] * (gdotv[i] - sum_wg);
        const T* key = is_rope ? ctx.keys.pixel(cr, cc) : ctx.raw_keys.pixel(cr, cc);
        T* gk = grad_k.pixel(cr, cc);
        const T* qq = is_rope ? q : raw_q;
        for (int ch = 0; ch < C; ++ch) {
          gq[ch] += scale * dlogit * key[ch];
          gk[ch] += scale * dlogit * qq[ch];
        }
        if (cfg.positional_mode == PositionalMode::kGaussian ||
            cfg.positional_mode == PositionalMode::kManhattan) {
          const double dist = detail::spatial_distance(cfg.positional_mode, pr, pc, cr, cc,
                                                       cfg.scale, hr_h, hr_w);
          grad_sigma += static_cast<double>(dlogit) * dist / (cfg.sigma * cfg.sigma * cfg.sigma);
        }
      }
    }
  }

  // Keys backward through the pooling, joined with the query path.
  Tensor3T<T> grad_g(hr_h, hr_w, C);
  if (cfg.scale == 1) {
    grad_g = grad_k;  // identity pooling
  } else {
    switch (cfg.key_mode) {
      case KeyMode::kAvgPool:
        grad_g = block_avg_pool_transpose(grad_k, cfg.scale);
        break;
      case KeyMode::kBilinear:
        grad_g = resize_bilinear_transpose(grad_k, hr_h, hr_w);
        break;
      case KeyMode::kMaxPool: {
        const Tensor3T<T>& pooled_src = ctx.queries;  // keys were pooled from this
        const int s = cfg.scale;
        for (int r = 0; r < grad_k.height; ++r)
          for (int c = 0; c < grad_k.width; ++c)
            for (int ch = 0; ch < C; ++ch) {
              int br = r * s, bc = c * s;
              T best = pooled_src.at(br, bc, ch);
              for (int i = 0; i < s; ++i)
                for (int j = 0; j < s; ++j) {
                  const T v = pooled_src.at(r * s + i, c * s + j, ch);
                  if (v > best) {
                    best = v;
                    br = r * s + i;
                    bc = c * s + j;
                  }
                }
              grad_g.at(br, bc, ch) += grad_k.at(r, c, ch);
            }
        break;
      }
    }
  }
  for (size_t i = 0; i < grad_g.data.size(); ++i) grad_g.data[i] += grad_q.data[i];

  if (is_rope) {
    const RopeConfig rg = rope.with_grid(hr_h, hr_w);
    grad_g = apply_rope_backward(grad_g, rg);
  }
  EncoderGrads<T> eg = encode_backward(image, enc, grad_g);
  grads.enc = std::move(eg.params);
  grads.sigma = static_cast<T>(grad_sigma);
  return grads;
}

// Dense oracle: full HR×LR attention with −∞ logits outside the neighborhood
// mask. Semantically identical to naf_forward; meant for small grids.
template <typename T>
Tensor3T<T> dense_reference(const Tensor3T<T>& f_lr, const Tensor3T<T>& image,
                            const EncoderParamsT<T>& enc, const RopeConfig& rope,
                            const AttnConfig& cfg) {
  const auto ctx = detail::build_attention_inputs(f_lr, image, enc, rope, cfg);
  const int C = enc.channels, d = f_lr.channels;
  const int hr_h = image.height, hr_w = image.width;
  const int n_cells = f_lr.height * f_lr.width;
  const bool is_rope = cfg.positional_mode == PositionalMode::kRope;
  const T neg_inf = -std::numeric_limits<T>::infinity();

  Tensor3T<T> out(hr_h, hr_w, d);
  parallel_for(hr_h, [&](int pr) {
    std::vector<T> logits(static_cast<size_t>(n_cells));
    std::vector<char> in_window(static_cast<size_t>(n_cells));
    for (int pc = 0; pc < hr_w; ++pc) {
      const NeighborIndex nb = neighborhood(pr, pc, cfg.scale, cfg.kernel, f_lr.height, f_lr.width);
      std::fill(in_window.begin(), in_window.end(), 0);
      for (const auto& [cr, cc] : nb.cells) in_window[static_cast<size_t>(cr) * f_lr.width + cc] = 1;

      const T* q = ctx.queries.pixel(pr, pc);
      const T* raw_q = is_rope ? nullptr : ctx.raw.pixel(pr, pc);
      T max_logit = neg_inf;
      int live = 0;
      for (int cell = 0; cell < n_cells; ++cell) {
        if (!in_window[static_cast<size_t>(cell)]) {
          logits[static_cast<size_t>(cell)] = neg_inf;
          continue;
        }
        const int cr = cell / f_lr.width, cc = cell % f_lr.width;
        logits[static_cast<size_t>(cell)] =
            attention_logits(q, ctx.keys.pixel(cr, cc), C, pr, pc, cr, cc, cfg, hr_h, hr_w, raw_q,
                             is_rope ? nullptr : ctx.raw_keys.pixel(cr, cc));
        max_logit = std::max(max_logit, logits[static_cast<size_t>(cell)]);
        ++live;
      }
      T* dst = out.pixel(pr, pc);
      if (live == 1) {
        const T* v = f_lr.pixel(nb.cells[0].first, nb.cells[0].second);
        for (int ch = 0; ch < d; ++ch) dst[ch] = v[ch];
        continue;
      }
      T z = T(0);
      for (int cell = 0; cell < n_cells; ++cell) {
        T& l = logits[static_cast<size_t>(cell)];
        l = l == neg_inf ? T(0) : std::exp(l - max_logit);  // reuse as weight
        z += l;
      }
      const T* anchor = f_lr.pixel(nb.anchor_row, nb.anchor_col);
      for (int ch = 0; ch < d; ++ch) {
        T acc = T(0);
        for (int cell = 0; cell < n_cells; ++cell) {
          if (!in_window[static_cast<size_t>(cell)]) continue;
          acc += logits[static_cast<size_t>(cell)] *
                 (f_lr.data[static_cast<size_t>(cell) * d + ch] - anchor[ch]);
        }
        dst[ch] = anchor[ch] + acc / z;
      }
    }
  });
  return out;
}

}  // namespace naf
