#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <memory>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "naf/attention.hpp"
#include "naf/common.hpp"
#include "naf/encoder.hpp"
#include "naf/png_io.hpp"
#include "naf/rng.hpp"
#include "naf/rope.hpp"
#include "naf/tensor.hpp"

namespace naf {

// Fixed random patch projection standing in for a VFM: non-overlapping
// patch×patch RGB blocks → out_dim features, no activation.
struct SyntheticTeacher {
  int patch = 8;
  int out_dim = 16;
  std::vector<float> weights;  // (patch·patch·3) × out_dim, row-major
  uint64_t seed = 0;
};

inline SyntheticTeacher make_teacher(int patch, int out_dim, uint64_t seed) {
  if (patch < 1 || out_dim < 1) throw ConfigError("teacher patch and out_dim must be >= 1");
  SyntheticTeacher t;
  t.patch = patch;
  t.out_dim = out_dim;
  t.seed = seed;
  const int fan_in = patch * patch * 3;
  t.weights.resize(static_cast<size_t>(fan_in) * out_dim);
  Rng rng(mix_seed(seed, 0x7eacULL));
  const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& w : t.weights) w = static_cast<float>(rng.normal() * scale);
  return t;
}

template <typename T>
Tensor3T<T> teacher_features(const Tensor3T<T>& img, const SyntheticTeacher& teacher) {
  if (img.channels != 3) throw ShapeError("teacher expects an RGB image");
  if (img.height % teacher.patch != 0 || img.width % teacher.patch != 0)
    throw ShapeError("image dims must be divisible by the teacher patch");
  const int P = teacher.patch, D = teacher.out_dim;
  const int oh = img.height / P, ow = img.width / P;
  Tensor3T<T> out(oh, ow, D);
  parallel_for(oh, [&](int r) {
    for (int c = 0; c < ow; ++c) {
      T* dst = out.pixel(r, c);
      for (int o = 0; o < D; ++o) dst[o] = T(0);
      int idx = 0;
      for (int i = 0; i < P; ++i)
        for (int j = 0; j < P; ++j) {
          const T* px = img.pixel(r * P + i, c * P + j);
          for (int ch = 0; ch < 3; ++ch, ++idx) {
            const T x = px[ch];
            const float* wrow = teacher.weights.data() + static_cast<size_t>(idx) * D;
            for (int o = 0; o < D; ++o) dst[o] += x * static_cast<T>(wrow[o]);
          }
        }
    }
  });
  return out;
}

template <typename T>
struct TrainPair {
  Tensor3T<T> image;  // the HR image (guidance source)
  Tensor3T<T> f_lr;   // teacher features of the downsampled image
  Tensor3T<T> f_hr;   // teacher features of the HR image (target)
};

// Generalized pair construction: input features come from the image resized
// to in_size (bilinear), targets from the image itself.
template <typename T>
TrainPair<T> make_pair_scaled(const Tensor3T<T>& img_hr, const SyntheticTeacher& teacher,
                              int in_h, int in_w) {
  if (in_h % teacher.patch != 0 || in_w % teacher.patch != 0)
    throw ShapeError("input size must be divisible by the teacher patch");
  TrainPair<T> p;
  p.f_hr = teacher_features(img_hr, teacher);
  const Tensor3T<T> small = resize(img_hr, in_h, in_w, ResizeMode::kBilinear);
  p.f_lr = teacher_features(small, teacher);
  p.image = img_hr;
  return p;
}

// The ×2 case: bilinear downsample by a factor of 2 for the input features.
template <typename T>
TrainPair<T> make_pair(const Tensor3T<T>& img_hr, const SyntheticTeacher& teacher) {
  if (img_hr.height % (2 * teacher.patch) != 0 || img_hr.width % (2 * teacher.patch) != 0)
    throw ShapeError("image dims must be divisible by 2× the teacher patch");
  return make_pair_scaled(img_hr, teacher, img_hr.height / 2, img_hr.width / 2);
}

// Mean squared error and its gradient w.r.t. pred.
template <typename T>
std::pair<double, Tensor3T<T>> l2_loss(const Tensor3T<T>& pred, const Tensor3T<T>& target) {
  if (!pred.same_shape(target)) throw ShapeError("l2 loss: shape mismatch");
  const double inv_n = 1.0 / static_cast<double>(pred.size());
  double loss = 0.0;
  Tensor3T<T> grad(pred.height, pred.width, pred.channels);
  for (size_t i = 0; i < pred.data.size(); ++i) {
    const double diff = static_cast<double>(pred.data[i]) - static_cast<double>(target.data[i]);
    loss += diff * diff;
    grad.data[i] = static_cast<T>(2.0 * diff * inv_n);
  }
  return {loss * inv_n, std::move(grad)};
}

// ---------------------------------------------------------------------------
// Image sources

class ImageSource {
 public:
  virtual ~ImageSource() = default;
  // Next RGB image with H = W = size, values in [0, 1].
  virtual Tensor3 next(int size) = 0;
};

// Piecewise-smooth random fields: solid color tiles (crisp edges at roughly
// the 16-pixel scale) under a smooth shading octave, plus one random
// rectangle for larger object structure. Edges at the tile scale are what
// make the guidance signal worth learning at desk scale.
inline Tensor3 synthetic_field(int h, int w, uint64_t seed) {
  Rng rng(seed);
  const int th = std::max(2, h / 16), tw = std::max(2, w / 16);
  Tensor3 tiles(th, tw, 3);
  for (auto& v : tiles.data) v = static_cast<float>(rng.uniform());
  Tensor3 img = resize(tiles, h, w, ResizeMode::kNearest);

  const int sh = std::max(2, h / 8), sw = std::max(2, w / 8);
  Tensor3 shade(sh, sw, 3);
  for (auto& v : shade.data) v = static_cast<float>(rng.uniform());
  const Tensor3 soft = resize(shade, h, w, ResizeMode::kBilinear);
  for (size_t i = 0; i < img.data.size(); ++i)
    img.data[i] = 0.75f * img.data[i] + 0.25f * soft.data[i];

  const int rr = rng.uniform_int(0, h - 1), rc = rng.uniform_int(0, w - 1);
  const int rh = rng.uniform_int(h / 8 + 1, h / 2), rw = rng.uniform_int(w / 8 + 1, w / 2);
  float color[3];
  for (float& c : color) c = static_cast<float>(rng.uniform());
  for (int r = rr; r < std::min(h, rr + rh); ++r)
    for (int c = rc; c < std::min(w, rc + rw); ++c)
      for (int ch = 0; ch < 3; ++ch)
        img.at(r, c, ch) = 0.65f * color[ch] + 0.35f * img.at(r, c, ch);

  for (auto& v : img.data) v = std::min(1.0f, std::max(0.0f, v));
  return img;
}

class SyntheticImageSource : public ImageSource {
 public:
  explicit SyntheticImageSource(uint64_t seed) : seed_(seed) {}
  Tensor3 next(int size) override {
    return synthetic_field(size, size, mix_seed(seed_, counter_++));
  }

 private:
  uint64_t seed_;
  uint64_t counter_ = 0;
};

// PNG directory, lexicographic order, cycled; images are resized to the
// requested size.
class DirectoryImageSource : public ImageSource {
 public:
  explicit DirectoryImageSource(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw ConfigError("image source '" + dir + "' is not a directory");
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && e.path().extension() == ".png")
        paths_.push_back(e.path().string());
    std::sort(paths_.begin(), paths_.end());
    if (paths_.empty()) throw ConfigError("image source '" + dir + "' contains no PNG files");
  }

  Tensor3 next(int size) override {
    const Tensor3 img = load_png(paths_[cursor_]);
    cursor_ = (cursor_ + 1) % paths_.size();
    if (img.height == size && img.width == size) return img;
    return resize(img, size, size, ResizeMode::kBilinear);
  }

 private:
  std::vector<std::string> paths_;
  size_t cursor_ = 0;
};

// ---------------------------------------------------------------------------
// Optimizer

// Visits parameters of both branches in a fixed order; fn(value_ref, index).
template <typename T, typename Fn>
void for_each_param(EncoderParamsT<T>& p, Fn&& fn) {
  size_t idx = 0;
  for (auto* branch : {&p.pixel_branch, &p.context_branch})
    for (auto& spec : *branch) {
      for (auto& w : spec.weights) fn(w, idx++);
      for (auto& b : spec.bias) fn(b, idx++);
    }
}

struct AdamState {
  std::vector<double> m, v;
  int64_t step = 0;

  void ensure(size_t n) {
    if (m.size() != n) {
      m.assign(n, 0.0);
      v.assign(n, 0.0);
    }
  }
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline void adam_update(std::vector<float*> params, const std::vector<float>& grads,
                        AdamState& state, const AdamConfig& cfg) {
  state.ensure(params.size());
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    *params[i] -= static_cast<float>(cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.eps));
  }
}

// ---------------------------------------------------------------------------
// Training loop

struct TrainStage {
  int iterations = 0;
  int target_size = 64;            // image size the source yields
  std::vector<int> input_sizes;    // each divides target_size; drawn uniformly
};

struct TrainConfig {
  std::vector<TrainStage> stages;
  int batch_size = 1;
  AdamConfig adam;
  uint64_t seed = 0;

  int encoder_depth = 1;
  int guidance_channels = 32;
  double rope_base = 100.0;
  AttnConfig attn;  // scale is derived per sample; kernel/modes are used

  void validate(int teacher_patch) const {
    if (stages.empty()) throw ConfigError("at least one training stage is required");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    for (size_t si = 0; si < stages.size(); ++si) {
      const TrainStage& st = stages[si];
      if (st.iterations < 0) throw ConfigError("stage iterations must be >= 0");
      if (st.target_size % teacher_patch != 0)
        throw ConfigError("stage target size must be divisible by the teacher patch");
      if (st.input_sizes.empty()) throw ConfigError("stage needs at least one input size");
      for (int in : st.input_sizes) {
        if (in < teacher_patch || in % teacher_patch != 0)
          throw ConfigError("stage input sizes must be positive multiples of the teacher patch");
        if (st.target_size % in != 0)
          throw ConfigError("stage input sizes must divide the target size");
      }
      if (si == 0 && (st.input_sizes.size() != 1 || st.input_sizes[0] * 2 != st.target_size))
        throw ConfigError("stage 1 must use input size = target size / 2");
    }
  }
};

struct LossRow {
  int iteration = 0;
  int stage = 0;
  double loss = 0.0;
};

struct TrainResult {
  EncoderParams params;
  float sigma = 1.0f;
  std::vector<LossRow> log;
};

struct TrainingDiverged : std::runtime_error {
  explicit TrainingDiverged(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {

inline std::vector<float*> collect_param_ptrs(EncoderParams& p, float* sigma) {
  std::vector<float*> ptrs;
  for_each_param(p, [&](float& v, size_t) { ptrs.push_back(&v); });
  if (sigma) ptrs.push_back(sigma);
  return ptrs;
}

inline std::vector<float> collect_grad_values(EncoderParams& g, const float* gsigma) {
  std::vector<float> vals;
  for_each_param(g, [&](float& v, size_t) { vals.push_back(v); });
  if (gsigma) vals.push_back(*gsigma);
  return vals;
}

inline std::string diagnostic_dump(int iteration, int stage, double loss) {
  return "loss diverged to " + std::to_string(loss) + " at iteration " +
         std::to_string(iteration) + " (stage " + std::to_string(stage) + ")";
}

}  // namespace detail

// Self-supervised upsampler training: per iteration draw an image, build the
// (F_lr, F_hr) pair with the teacher, run naf_forward against the image
// guidance, take the mean-squared loss and one Adam step. Deterministic for a
// fixed (config, seed, source order).
inline TrainResult train(const TrainConfig& config, const SyntheticTeacher& teacher,
                         ImageSource& source, std::ostream* csv = nullptr) {
  config.validate(teacher.patch);
  TrainResult result;
  result.params = init_encoder(config.encoder_depth, config.guidance_channels,
                               mix_seed(config.seed, 1));
  result.sigma = static_cast<float>(config.attn.sigma);
  const bool learn_sigma = config.attn.positional_mode == PositionalMode::kGaussian ||
                           config.attn.positional_mode == PositionalMode::kManhattan;

  RopeConfig rope;
  rope.channels = config.guidance_channels;
  rope.base = config.rope_base;
  rope.grid_h = rope.grid_w = 1;  // set per sample

  AdamState adam;
  Rng run_rng(mix_seed(config.seed, 2));
  if (csv) *csv << "iteration,stage,loss\n";

  int iteration = 0;
  for (size_t si = 0; si < config.stages.size(); ++si) {
    const TrainStage& st = config.stages[si];
    for (int it = 0; it < st.iterations; ++it, ++iteration) {
      EncoderParams grad_sum = result.params.zeros_like();
      float grad_sigma_sum = 0.0f;
      double loss_sum = 0.0;

      for (int b = 0; b < config.batch_size; ++b) {
        const int in_size = st.input_sizes[static_cast<size_t>(
            run_rng.uniform_int(0, static_cast<int>(st.input_sizes.size()) - 1))];
        const Tensor3 img = source.next(st.target_size);
        const TrainPair<float> pair = make_pair_scaled(img, teacher, in_size, in_size);

        AttnConfig cfg = config.attn;
        cfg.scale = st.target_size / in_size;
        cfg.sigma = result.sigma;
        const Tensor3 guidance =
            resize(img, pair.f_hr.height, pair.f_hr.width, ResizeMode::kBilinear);

        const Tensor3 pred = naf_forward(pair.f_lr, guidance, result.params, rope, cfg);
        auto [loss, grad] = l2_loss(pred, pair.f_hr);
        loss_sum += loss;
        NafGrads<float> g = naf_backward(pair.f_lr, guidance, result.params, rope, cfg, grad);
        std::vector<float*> dst;
        for_each_param(grad_sum, [&](float& v, size_t) { dst.push_back(&v); });
        size_t k = 0;
        for_each_param(g.enc, [&](float& v, size_t) { *dst[k++] += v; });
        grad_sigma_sum += g.sigma;
      }

      const float inv_b = 1.0f / static_cast<float>(config.batch_size);
      for_each_param(grad_sum, [&](float& v, size_t) { v *= inv_b; });
      grad_sigma_sum *= inv_b;
      const double loss = loss_sum / config.batch_size;

      if (!std::isfinite(loss))
        throw TrainingDiverged(detail::diagnostic_dump(iteration, static_cast<int>(si), loss));

      result.log.push_back({iteration, static_cast<int>(si), loss});
      if (csv) *csv << iteration << "," << si << "," << loss << "\n";

      adam_update(detail::collect_param_ptrs(result.params, learn_sigma ? &result.sigma : nullptr),
                  detail::collect_grad_values(grad_sum, learn_sigma ? &grad_sigma_sum : nullptr),
                  adam, config.adam);
      if (learn_sigma && result.sigma < 1e-3f) result.sigma = 1e-3f;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Gradient checking (double-precision shadow evaluation)

enum class GradScope { kRope, kEncoder, kAttention, kFull };

inline GradScope grad_scope_from_string(const std::string& s) {
  if (s == "rope") return GradScope::kRope;
  if (s == "encoder") return GradScope::kEncoder;
  if (s == "attention") return GradScope::kAttention;
  if (s == "full") return GradScope::kFull;
  throw ConfigError("unknown grad scope '" + s + "'");
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string where;  // offending parameter (component + flat index)
  int index = -1;
};

namespace detail {

inline double rel_err(double a, double b) {
  if (a == b) return 0.0;
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

template <typename Forward>
void fd_check(GradCheckResult& res, const std::string& name, int index, double& slot,
              double analytic, double eps, Forward&& forward) {
  const double saved = slot;
  slot = saved + eps;
  const double up = forward();
  slot = saved - eps;
  const double down = forward();
  slot = saved;
  const double fd = (up - down) / (2.0 * eps);
  const double e = rel_err(analytic, fd);
  if (e > res.max_rel_error) {
    res.max_rel_error = e;
    res.where = name;
    res.index = index;
  }
}

inline Tensor3T<double> random_tensor_d(int h, int w, int c, Rng& rng, double lo = -1.0,
                                        double hi = 1.0) {
  Tensor3T<double> t(h, w, c);
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// Smallest |pre-activation| the encoder's ReLU layers see on this input.
// Finite differences are only meaningful when every kink clears the step, so
// check instances are redrawn until this margin is satisfied.
inline double min_preactivation_abs(const Tensor3T<double>& img,
                                    const EncoderParamsT<double>& params) {
  double margin = std::numeric_limits<double>::infinity();
  for (const auto* branch : {&params.pixel_branch, &params.context_branch}) {
    Tensor3T<double> x = img;
    for (size_t l = 0; l + 1 < branch->size(); ++l) {
      Tensor3T<double> pre = conv2d_forward(x, (*branch)[l]);
      for (double v : pre.data) margin = std::min(margin, std::abs(v));
      activate_inplace(pre, params.activation);
      x = std::move(pre);
    }
  }
  return margin;
}

inline Tensor3T<double> draw_clear_of_kinks(int h, int w, Rng& rng,
                                            const EncoderParamsT<double>& params, double eps) {
  for (int attempt = 0; attempt < 500; ++attempt) {
    Tensor3T<double> img = random_tensor_d(h, w, 3, rng, 0.0, 1.0);
    if (params.activation != Activation::kRelu ||
        min_preactivation_abs(img, params) > 2.0 * eps)
      return img;
  }
  throw ConfigError("could not draw a kink-free gradient-check instance");
}

}  // namespace detail

// Compares every analytic gradient against central finite differences on a
// tiny double-precision instance. Returns the worst relative error and the
// parameter that produced it.
inline GradCheckResult grad_check(GradScope scope, uint64_t seed, double eps = 1e-4) {
  if (eps < 1e-5 || eps > 1e-2) throw ConfigError("grad_check eps must be in [1e-5, 1e-2]");
  Rng rng(mix_seed(seed, 77));
  GradCheckResult res;

  if (scope == GradScope::kRope) {
    RopeConfig cfg;
    cfg.channels = 8;
    cfg.base = 100.0;
    cfg.grid_h = cfg.grid_w = 4;
    Tensor3T<double> g = detail::random_tensor_d(4, 4, 8, rng);
    Tensor3T<double> co = detail::random_tensor_d(4, 4, 8, rng);
    const Tensor3T<double> analytic = apply_rope_backward(co, cfg);
    auto forward = [&] {
      const Tensor3T<double> out = apply_rope(g, cfg);
      double acc = 0.0;
      for (size_t i = 0; i < out.data.size(); ++i) acc += out.data[i] * co.data[i];
      return acc;
    };
    for (size_t i = 0; i < g.data.size(); ++i)
      detail::fd_check(res, "rope.input[" + std::to_string(i) + "]", static_cast<int>(i),
                       g.data[i], analytic.data[i], eps, forward);
    return res;
  }

  if (scope == GradScope::kEncoder) {
    EncoderParamsT<double> params = init_encoder(1, 8, mix_seed(seed, 5)).cast<double>();
    Tensor3T<double> img = detail::draw_clear_of_kinks(4, 4, rng, params, eps);
    Tensor3T<double> co = detail::random_tensor_d(4, 4, 8, rng);
    auto forward = [&] {
      const Tensor3T<double> out = encode(img, params);
      double acc = 0.0;
      for (size_t i = 0; i < out.data.size(); ++i) acc += out.data[i] * co.data[i];
      return acc;
    };
    const EncoderGrads<double> analytic = encode_backward(img, params, co);
    {
      std::vector<double*> slots;
      for_each_param(params, [&](double& v, size_t) { slots.push_back(&v); });
      std::vector<double> analytic_vals;
      EncoderParamsT<double> ga = analytic.params;
      for_each_param(ga, [&](double& v, size_t) { analytic_vals.push_back(v); });
      for (size_t i = 0; i < slots.size(); ++i)
        detail::fd_check(res, "encoder.param[" + std::to_string(i) + "]", static_cast<int>(i),
                         *slots[i], analytic_vals[i], eps, forward);
    }
    for (size_t i = 0; i < img.data.size(); ++i)
      detail::fd_check(res, "encoder.image[" + std::to_string(i) + "]", static_cast<int>(i),
                       img.data[i], analytic.image.data[i], eps, forward);
    return res;
  }

  // attention and full share the tiny NAF instance
  const std::vector<std::pair<PositionalMode, KeyMode>> combos =
      scope == GradScope::kAttention
          ? std::vector<std::pair<PositionalMode, KeyMode>>{
                {PositionalMode::kRope, KeyMode::kAvgPool},
                {PositionalMode::kGaussian, KeyMode::kAvgPool},
                {PositionalMode::kNone, KeyMode::kAvgPool}}
          : std::vector<std::pair<PositionalMode, KeyMode>>{{PositionalMode::kRope,
                                                             KeyMode::kAvgPool}};

  for (const auto& [pos_mode, key_mode] : combos) {
    EncoderParamsT<double> params = init_encoder(1, 8, mix_seed(seed, 9)).cast<double>();
    Tensor3T<double> f_lr = detail::random_tensor_d(3, 3, 2, rng);
    Tensor3T<double> img = detail::draw_clear_of_kinks(6, 6, rng, params, eps);
    RopeConfig rope;
    rope.channels = 8;
    rope.base = 100.0;
    rope.grid_h = rope.grid_w = 6;
    AttnConfig cfg;
    cfg.scale = 2;
    cfg.kernel = 3;
    cfg.positional_mode = pos_mode;
    cfg.key_mode = key_mode;
    cfg.sigma = 0.8;

    Tensor3T<double> co = detail::random_tensor_d(6, 6, 2, rng);
    Tensor3T<double> target = detail::random_tensor_d(6, 6, 2, rng);
    const bool full = scope == GradScope::kFull;

    auto forward = [&] {
      const Tensor3T<double> out = naf_forward(f_lr, img, params, rope, cfg);
      if (full) return l2_loss(out, target).first;
      double acc = 0.0;
      for (size_t i = 0; i < out.data.size(); ++i) acc += out.data[i] * co.data[i];
      return acc;
    };

    NafGrads<double> analytic;
    if (full) {
      const Tensor3T<double> out = naf_forward(f_lr, img, params, rope, cfg);
      analytic = naf_backward(f_lr, img, params, rope, cfg, l2_loss(out, target).second);
    } else {
      analytic = naf_backward(f_lr, img, params, rope, cfg, co);
    }

    const std::string tag = to_string(pos_mode);
    {
      std::vector<double*> slots;
      for_each_param(params, [&](double& v, size_t) { slots.push_back(&v); });
      std::vector<double> analytic_vals;
      for_each_param(analytic.enc, [&](double& v, size_t) { analytic_vals.push_back(v); });
      for (size_t i = 0; i < slots.size(); ++i)
        detail::fd_check(res, tag + ".param[" + std::to_string(i) + "]", static_cast<int>(i),
                         *slots[i], analytic_vals[i], eps, forward);
    }
    for (size_t i = 0; i < f_lr.data.size(); ++i)
      detail::fd_check(res, tag + ".f_lr[" + std::to_string(i) + "]", static_cast<int>(i),
                       f_lr.data[i], analytic.f_lr.data[i], eps, forward);
    if (pos_mode == PositionalMode::kGaussian || pos_mode == PositionalMode::kManhattan)
      detail::fd_check(res, tag + ".sigma", -1, cfg.sigma, analytic.sigma, eps, forward);
  }
  return res;
}

}  // namespace naf
