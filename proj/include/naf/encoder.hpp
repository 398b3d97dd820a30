#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "naf/common.hpp"
#include "naf/rng.hpp"
#include "naf/tensor.hpp"

namespace naf {

enum class Activation { kRelu, kSoftplus };

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "softplus") return Activation::kSoftplus;
  throw ConfigError("unknown activation '" + s + "'");
}

inline std::string to_string(Activation a) {
  return a == Activation::kRelu ? "relu" : "softplus";
}

// Dual-branch guidance encoder parameters. Each branch is L conv blocks
// (conv + activation, widths 3→C then C→C) followed by an unactivated 1×1
// projection C→C/2. The pixel branch uses 1×1 kernels throughout; the
// context trunk uses 3×3.
template <typename T>
struct EncoderParamsT {
  std::vector<ConvSpecT<T>> pixel_branch;    // L convs + final projection
  std::vector<ConvSpecT<T>> context_branch;  // L convs + final projection
  int depth = 0;        // L
  int channels = 0;     // C (guidance channels; each branch outputs C/2)
  Activation activation = Activation::kRelu;

  template <typename U>
  EncoderParamsT<U> cast() const {
    EncoderParamsT<U> out;
    out.depth = depth;
    out.channels = channels;
    out.activation = activation;
    for (const auto& s : pixel_branch) out.pixel_branch.push_back(s.template cast<U>());
    for (const auto& s : context_branch) out.context_branch.push_back(s.template cast<U>());
    return out;
  }

  // Same nesting, all values zero. Used as a gradient/optimizer-state holder.
  EncoderParamsT zeros_like() const {
    EncoderParamsT out = *this;
    for (auto& s : out.pixel_branch) {
      std::fill(s.weights.begin(), s.weights.end(), T(0));
      std::fill(s.bias.begin(), s.bias.end(), T(0));
    }
    for (auto& s : out.context_branch) {
      std::fill(s.weights.begin(), s.weights.end(), T(0));
      std::fill(s.bias.begin(), s.bias.end(), T(0));
    }
    return out;
  }
};

using EncoderParams = EncoderParamsT<float>;

template <typename T>
size_t param_count(const EncoderParamsT<T>& p) {
  size_t n = 0;
  for (const auto& s : p.pixel_branch) n += s.param_count();
  for (const auto& s : p.context_branch) n += s.param_count();
  return n;
}

// Kaiming-uniform (fan-in, ReLU gain) weights, zero biases, deterministic in
// the seed. Draw order is fixed: pixel branch then context, layer by layer.
inline EncoderParams init_encoder(int L, int C, uint64_t seed) {
  if (L < 1) throw ConfigError("encoder depth must be >= 1");
  if (C < 4 || C % 2 != 0) throw ConfigError("guidance channels must be even and >= 4");
  EncoderParams p;
  p.depth = L;
  p.channels = C;
  Rng rng(seed);

  auto fill = [&rng](ConvSpec& s) {
    const double fan_in = static_cast<double>(s.kernel_size) * s.kernel_size * s.in_channels;
    const double bound = std::sqrt(6.0 / fan_in);
    for (auto& w : s.weights) w = static_cast<float>(rng.uniform(-bound, bound));
  };

  auto build_branch = [&](int trunk_kernel) {
    std::vector<ConvSpec> branch;
    for (int l = 0; l < L; ++l) {
      const int cin = l == 0 ? 3 : C;
      ConvSpec s(trunk_kernel, cin, C);
      fill(s);
      branch.push_back(std::move(s));
    }
    ConvSpec proj(1, C, C / 2);
    fill(proj);
    branch.push_back(std::move(proj));
    return branch;
  };

  p.pixel_branch = build_branch(1);
  p.context_branch = build_branch(3);
  return p;
}

namespace detail {

template <typename T>
void activate_inplace(Tensor3T<T>& t, Activation act) {
  if (act == Activation::kRelu) {
    for (T& v : t.data) v = v > T(0) ? v : T(0);
  } else {
    for (T& v : t.data) v = static_cast<T>(std::log1p(std::exp(static_cast<double>(v))));
  }
}

// grad ← grad ⊙ act'(pre), with pre the pre-activation values.
template <typename T>
void activate_backward_inplace(Tensor3T<T>& grad, const Tensor3T<T>& pre, Activation act) {
  if (act == Activation::kRelu) {
    for (size_t i = 0; i < grad.data.size(); ++i)
      if (pre.data[i] <= T(0)) grad.data[i] = T(0);
  } else {
    for (size_t i = 0; i < grad.data.size(); ++i) {
      const double x = static_cast<double>(pre.data[i]);
      grad.data[i] *= static_cast<T>(1.0 / (1.0 + std::exp(-x)));
    }
  }
}

// Runs one branch, optionally recording every pre-activation map (the
// backward pass needs them).
template <typename T>
Tensor3T<T> run_branch(const Tensor3T<T>& img, const std::vector<ConvSpecT<T>>& branch,
                       Activation act, std::vector<Tensor3T<T>>* pre_acts) {
  Tensor3T<T> x = img;
  for (size_t l = 0; l + 1 < branch.size(); ++l) {
    Tensor3T<T> pre = conv2d_forward(x, branch[l]);
    if (pre_acts) pre_acts->push_back(pre);
    activate_inplace(pre, act);
    x = std::move(pre);
  }
  return conv2d_forward(x, branch.back());
}

}  // namespace detail

// Enc_θ(I): both branches on the RGB image, concatenated along channels.
// Output channels [0, C/2) come from the pixel branch, [C/2, C) from context.
template <typename T>
Tensor3T<T> encode(const Tensor3T<T>& img, const EncoderParamsT<T>& params) {
  if (img.channels != 3) throw ShapeError("encoder expects an RGB image (3 channels)");
  const int half = params.channels / 2;
  const Tensor3T<T> px = detail::run_branch(
      img, params.pixel_branch, params.activation, static_cast<std::vector<Tensor3T<T>>*>(nullptr));
  const Tensor3T<T> cx =
      detail::run_branch(img, params.context_branch, params.activation,
                         static_cast<std::vector<Tensor3T<T>>*>(nullptr));
  Tensor3T<T> out(img.height, img.width, params.channels);
  parallel_for(img.height, [&](int r) {
    for (int c = 0; c < img.width; ++c) {
      T* dst = out.pixel(r, c);
      const T* a = px.pixel(r, c);
      const T* b = cx.pixel(r, c);
      for (int ch = 0; ch < half; ++ch) dst[ch] = a[ch];
      for (int ch = 0; ch < half; ++ch) dst[half + ch] = b[ch];
    }
  });
  return out;
}

template <typename T>
struct EncoderGrads {
  EncoderParamsT<T> params;  // gradient w.r.t. every weight/bias
  Tensor3T<T> image;         // gradient w.r.t. the input image
};

namespace detail {

template <typename T>
Tensor3T<T> branch_backward(const Tensor3T<T>& img, const std::vector<ConvSpecT<T>>& branch,
                            Activation act, const Tensor3T<T>& grad_out,
                            std::vector<ConvSpecT<T>>& grad_branch) {
  // Recompute forward, keeping pre-activations and layer inputs.
  std::vector<Tensor3T<T>> inputs;  // input to conv l
  std::vector<Tensor3T<T>> pre_acts;
  Tensor3T<T> x = img;
  for (size_t l = 0; l + 1 < branch.size(); ++l) {
    inputs.push_back(x);
    Tensor3T<T> pre = conv2d_forward(x, branch[l]);
    pre_acts.push_back(pre);
    activate_inplace(pre, act);
    x = std::move(pre);
  }
  inputs.push_back(x);  // input to the projection

  Tensor3T<T> g = grad_out;
  for (size_t l = branch.size(); l-- > 0;) {
    Conv2dGrads<T> cg = conv2d_backward(inputs[l], branch[l], g);
    grad_branch[l].weights = std::move(cg.grad_weights);
    grad_branch[l].bias = std::move(cg.grad_bias);
    g = std::move(cg.grad_input);
    if (l > 0) activate_backward_inplace(g, pre_acts[l - 1], act);
  }
  return g;
}

}  // namespace detail

// Exact reverse-mode gradients through both branches and the concat split.
template <typename T>
EncoderGrads<T> encode_backward(const Tensor3T<T>& img, const EncoderParamsT<T>& params,
                                const Tensor3T<T>& grad_out) {
  if (img.channels != 3) throw ShapeError("encoder expects an RGB image (3 channels)");
  if (grad_out.height != img.height || grad_out.width != img.width ||
      grad_out.channels != params.channels)
    throw ShapeError("encoder backward: grad_out shape mismatch");

  const int half = params.channels / 2;
  Tensor3T<T> gpx(img.height, img.width, half);
  Tensor3T<T> gcx(img.height, img.width, half);
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) {
      const T* g = grad_out.pixel(r, c);
      T* a = gpx.pixel(r, c);
      T* b = gcx.pixel(r, c);
      for (int ch = 0; ch < half; ++ch) a[ch] = g[ch];
      for (int ch = 0; ch < half; ++ch) b[ch] = g[half + ch];
    }

  EncoderGrads<T> out;
  out.params = params.zeros_like();
  const Tensor3T<T> gi_px =
      detail::branch_backward(img, params.pixel_branch, params.activation, gpx, out.params.pixel_branch);
  const Tensor3T<T> gi_cx = detail::branch_backward(img, params.context_branch, params.activation,
                                                    gcx, out.params.context_branch);
  out.image = gi_px;
  for (size_t i = 0; i < out.image.data.size(); ++i) out.image.data[i] += gi_cx.data[i];
  return out;
}

}  // namespace naf
