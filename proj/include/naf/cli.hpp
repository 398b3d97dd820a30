#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "naf/attention.hpp"
#include "naf/bench.hpp"
#include "naf/checkpoint.hpp"
#include "naf/common.hpp"
#include "naf/filters.hpp"
#include "naf/flops.hpp"
#include "naf/npy.hpp"
#include "naf/png_io.hpp"
#include "naf/restoration.hpp"
#include "naf/spectral.hpp"
#include "naf/training.hpp"

namespace naf {

inline int run_cli(std::vector<std::string> args);

namespace cli_detail {

using nlohmann::json;

// Exit codes: 0 success, 1 runtime failure, 2 usage/config error.
inline constexpr int kOk = 0;
inline constexpr int kRuntimeError = 1;
inline constexpr int kUsageError = 2;

inline void write_manifest(const std::string& path, const json& manifest) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest '" + path + "'");
  out << manifest.dump(2) << "\n";
}

inline json base_manifest(const std::string& command, const std::vector<std::string>& argv) {
  json m;
  m["command"] = command;
  m["version"] = kVersion;
  m["argv"] = argv;  // fully resolved; `naf replay` re-runs exactly this
  return m;
}

// Loads a tensor by extension: .npy raw floats, .png mapped to [0,1].
inline Tensor3 load_tensor_auto(const std::string& path) {
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".png") return load_png(path);
  return load_npy(path);
}

inline void save_tensor_auto(const Tensor3& t, const std::string& path) {
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".png")
    save_png(t, path);
  else
    save_npy(t, path);
}

inline int parse_int(const std::string& s, const std::string& what) {
  try {
    size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw ConfigError(what + ": '" + s + "' is not an integer");
    return v;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError(what + ": '" + s + "' is not an integer");
  }
}

inline double parse_double(const std::string& s, const std::string& what) {
  try {
    size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw ConfigError(what + ": '" + s + "' is not a number");
    return v;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError(what + ": '" + s + "' is not a number");
  }
}

inline std::vector<int> parse_int_list(const std::string& csv) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(parse_int(item, "size list"));
  return out;
}

struct UpsampleOpts {
  std::string features, image, weights, out;
  std::string scale = "auto";
  std::string pos = "rope", keys = "avgpool";
  int kernel = 0;  // 0 → checkpoint value
  double logit_scale = 0.0;
  double sigma = 0.0;  // 0 → checkpoint value or 1.0
  int threads = 1;
};

inline int cmd_upsample(const UpsampleOpts& o) {
  set_num_threads(o.threads);
  const Tensor3 f_lr = load_npy(o.features);
  const Tensor3 image = load_png(o.image);
  const Checkpoint ckpt = load_checkpoint(o.weights);

  AttnConfig cfg;
  cfg.kernel = o.kernel > 0 ? o.kernel : ckpt.kernel_size;
  cfg.positional_mode = positional_mode_from_string(o.pos);
  cfg.key_mode = key_mode_from_string(o.keys);
  cfg.logit_scale = o.logit_scale;
  cfg.sigma = o.sigma > 0.0 ? o.sigma : (ckpt.sigma ? static_cast<double>(*ckpt.sigma) : 1.0);

  int s;
  if (o.scale == "auto") {
    s = std::max(1, static_cast<int>(std::lround(static_cast<double>(image.height) / f_lr.height)));
  } else {
    s = parse_int(o.scale, "--scale");
    if (s < 1) throw ConfigError("scale must be >= 1");
  }
  cfg.scale = s;

  RopeConfig rope;
  rope.channels = ckpt.params.channels;
  rope.base = ckpt.rope_base;
  rope.grid_h = rope.grid_w = 1;  // set inside naf_forward per guidance grid

  json steps = json::array();
  Tensor3 guidance = image;
  if (image.height != s * f_lr.height || image.width != s * f_lr.width) {
    guidance = resize(image, s * f_lr.height, s * f_lr.width, ResizeMode::kBilinear);
    steps.push_back({{"op", "resize_guidance"},
                     {"mode", "bilinear"},
                     {"to", {guidance.height, guidance.width}}});
  }
  steps.push_back({{"op", "naf"}, {"scale", s}, {"kernel", cfg.kernel}});
  Tensor3 out = naf_forward(f_lr, guidance, ckpt.params, rope, cfg);
  if (out.height != image.height || out.width != image.width) {
    out = resize(out, image.height, image.width, ResizeMode::kBilinear);
    steps.push_back({{"op", "resize_output"},
                     {"mode", "bilinear"},
                     {"to", {image.height, image.width}}});
  }
  save_npy(out, o.out);

  json m = base_manifest(
      "upsample", {"upsample", "--features", o.features, "--image", o.image, "--weights",
                   o.weights, "--scale", o.scale, "--kernel", std::to_string(cfg.kernel), "--pos",
                   o.pos, "--keys", o.keys, "--logit-scale", std::to_string(o.logit_scale),
                   "--sigma", std::to_string(o.sigma), "--threads", std::to_string(o.threads),
                   "--out", o.out});
  m["inputs"] = {o.features, o.image, o.weights};
  m["outputs"] = {o.out};
  m["config"] = {{"scale", s},          {"kernel", cfg.kernel},
                 {"pos", o.pos},        {"keys", o.keys},
                 {"logit_scale", cfg.effective_logit_scale(ckpt.params.channels)},
                 {"sigma", cfg.sigma},  {"threads", o.threads}};
  m["steps"] = steps;
  write_manifest(o.out + ".manifest.json", m);
  return kOk;
}

struct TrainOpts {
  std::string task = "upsample";
  std::string out, images, log;
  bool synthetic = false;
  uint64_t seed = 0;
  int iterations = 500;
  int target_size = 64;
  int stage2_iterations = 0;
  int stage2_target = 128;
  std::string stage2_inputs;
  int batch = 1;
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  int teacher_patch = 8, teacher_dim = 16;
  int channels = 32, depth = 1;
  int kernel = 0;  // 0 → task default (9 upsample, 15 denoise)
  std::string pos = "rope", keys = "avgpool";
  double rope_base = 100.0, sigma = 1.0;
  int threads = 1;
  // denoise task
  std::string noise = "gaussian";
  double noise_level = 0.1;
  std::string noise_range;
  int image_size = 64;
};

inline std::unique_ptr<ImageSource> make_source(const TrainOpts& o) {
  if (!o.images.empty()) return std::make_unique<DirectoryImageSource>(o.images);
  if (!o.synthetic)
    throw ConfigError("training needs --images <dir> or --synthetic");
  return std::make_unique<SyntheticImageSource>(mix_seed(o.seed, 3));
}

inline std::vector<std::string> train_argv(const TrainOpts& o) {
  std::vector<std::string> v = {"train",
                                "--task", o.task,
                                "--out", o.out,
                                "--seed", std::to_string(o.seed),
                                "--iterations", std::to_string(o.iterations),
                                "--target-size", std::to_string(o.target_size),
                                "--stage2-iterations", std::to_string(o.stage2_iterations),
                                "--stage2-target", std::to_string(o.stage2_target),
                                "--batch", std::to_string(o.batch),
                                "--lr", std::to_string(o.lr),
                                "--teacher-patch", std::to_string(o.teacher_patch),
                                "--teacher-dim", std::to_string(o.teacher_dim),
                                "--channels", std::to_string(o.channels),
                                "--depth", std::to_string(o.depth),
                                "--kernel", std::to_string(o.kernel),
                                "--pos", o.pos,
                                "--keys", o.keys,
                                "--rope-base", std::to_string(o.rope_base),
                                "--sigma", std::to_string(o.sigma),
                                "--noise", o.noise,
                                "--noise-level", std::to_string(o.noise_level),
                                "--image-size", std::to_string(o.image_size),
                                "--threads", std::to_string(o.threads)};
  if (!o.stage2_inputs.empty()) {
    v.push_back("--stage2-inputs");
    v.push_back(o.stage2_inputs);
  }
  if (!o.noise_range.empty()) {
    v.push_back("--noise-range");
    v.push_back(o.noise_range);
  }
  if (!o.log.empty()) {
    v.push_back("--log");
    v.push_back(o.log);
  }
  if (!o.images.empty()) {
    v.push_back("--images");
    v.push_back(o.images);
  } else {
    v.push_back("--synthetic");
  }
  return v;
}

inline int cmd_train(const TrainOpts& o) {
  set_num_threads(o.threads);
  // gradient integrity gate: no training result is reported unless the
  // end-to-end gradients verify
  const GradCheckResult gate = grad_check(GradScope::kFull, o.seed);
  if (gate.max_rel_error >= 1e-4)
    throw std::runtime_error("gradient integrity check failed (rel err " +
                             std::to_string(gate.max_rel_error) + " at " + gate.where + ")");
  auto source = make_source(o);
  std::ofstream log_file;
  std::ostream* log = nullptr;
  if (!o.log.empty()) {
    log_file.open(o.log);
    if (!log_file) throw IoError("cannot write log '" + o.log + "'");
    log = &log_file;
  }

  TrainResult result;
  int kernel_for_ckpt = o.kernel;
  if (o.task == "upsample") {
    const SyntheticTeacher teacher = make_teacher(o.teacher_patch, o.teacher_dim, o.seed);
    TrainConfig cfg;
    cfg.seed = o.seed;
    cfg.batch_size = o.batch;
    cfg.adam = {o.lr, o.beta1, o.beta2, o.adam_eps};
    cfg.encoder_depth = o.depth;
    cfg.guidance_channels = o.channels;
    cfg.rope_base = o.rope_base;
    cfg.attn.kernel = o.kernel > 0 ? o.kernel : 9;
    cfg.attn.positional_mode = positional_mode_from_string(o.pos);
    cfg.attn.key_mode = key_mode_from_string(o.keys);
    cfg.attn.sigma = o.sigma;
    kernel_for_ckpt = cfg.attn.kernel;
    cfg.stages.push_back({o.iterations, o.target_size, {o.target_size / 2}});
    if (o.stage2_iterations > 0) {
      TrainStage st2;
      st2.iterations = o.stage2_iterations;
      st2.target_size = o.stage2_target;
      st2.input_sizes = o.stage2_inputs.empty() ? std::vector<int>{o.stage2_target / 2}
                                                : parse_int_list(o.stage2_inputs);
      cfg.stages.push_back(st2);
    }
    result = train(cfg, teacher, *source, log);
  } else if (o.task == "denoise") {
    DenoiseTrainConfig cfg;
    cfg.seed = o.seed;
    cfg.iterations = o.iterations;
    cfg.image_size = o.image_size;
    cfg.adam = {o.lr, o.beta1, o.beta2, o.adam_eps};
    cfg.encoder_depth = o.depth;
    cfg.guidance_channels = o.channels;
    cfg.rope_base = o.rope_base;
    cfg.attn.kernel = o.kernel > 0 ? o.kernel : 15;
    cfg.attn.positional_mode = positional_mode_from_string(o.pos);
    cfg.attn.key_mode = key_mode_from_string(o.keys);
    cfg.attn.sigma = o.sigma;
    kernel_for_ckpt = cfg.attn.kernel;

    NoiseSpec noise;
    noise.kind = o.noise == "gaussian" ? NoiseKind::kGaussian : NoiseKind::kChannelSaltPepper;
    if (o.noise != "gaussian" && o.noise != "salt-pepper")
      throw ConfigError("--noise must be gaussian or salt-pepper");
    noise.level = o.noise_level;
    noise.seed = mix_seed(o.seed, 4);
    if (!o.noise_range.empty()) {
      const auto sep = o.noise_range.find(':');
      if (sep == std::string::npos) throw ConfigError("--noise-range expects lo:hi");
      noise.has_range = true;
      noise.level_lo = parse_double(o.noise_range.substr(0, sep), "--noise-range lo");
      noise.level_hi = parse_double(o.noise_range.substr(sep + 1), "--noise-range hi");
    }
    result = train_denoiser(cfg, noise, *source, log);
  } else {
    throw ConfigError("--task must be upsample or denoise");
  }

  Checkpoint ckpt;
  ckpt.params = result.params;
  ckpt.rope_base = o.rope_base;
  ckpt.kernel_size = kernel_for_ckpt;
  const PositionalMode pm = positional_mode_from_string(o.pos);
  if (pm == PositionalMode::kGaussian || pm == PositionalMode::kManhattan)
    ckpt.sigma = result.sigma;
  save_checkpoint(o.out, ckpt);

  json m = base_manifest("train", train_argv(o));
  m["inputs"] = o.images.empty() ? json::array() : json::array({o.images});
  m["outputs"] = {o.out};
  m["seeds"] = {{"seed", o.seed}};
  m["config"] = {{"task", o.task},         {"iterations", o.iterations},
                 {"batch", o.batch},       {"lr", o.lr},
                 {"channels", o.channels}, {"depth", o.depth},
                 {"kernel", kernel_for_ckpt}, {"pos", o.pos},
                 {"keys", o.keys},         {"final_loss",
                                            result.log.empty() ? 0.0 : result.log.back().loss}};
  write_manifest(o.out + "/run_manifest.json", m);
  return kOk;
}

struct DenoiseOpts {
  std::string input, weights, out, reference, metrics_csv;
  std::string pos = "rope", keys = "avgpool";
  int kernel = 0;
  int threads = 1;
};

inline int cmd_denoise(const DenoiseOpts& o) {
  set_num_threads(o.threads);
  const Tensor3 noisy = load_png(o.input);
  const Checkpoint ckpt = load_checkpoint(o.weights);

  AttnConfig cfg;
  cfg.scale = 1;
  cfg.kernel = o.kernel > 0 ? o.kernel : ckpt.kernel_size;
  cfg.positional_mode = positional_mode_from_string(o.pos);
  cfg.key_mode = key_mode_from_string(o.keys);
  if (ckpt.sigma) cfg.sigma = static_cast<double>(*ckpt.sigma);

  RopeConfig rope;
  rope.channels = ckpt.params.channels;
  rope.base = ckpt.rope_base;
  rope.grid_h = noisy.height;
  rope.grid_w = noisy.width;

  const Tensor3 denoised = denoise_forward(noisy, ckpt.params, rope, cfg);
  save_png(denoised, o.out);

  json metrics;
  if (!o.reference.empty()) {
    const Tensor3 ref = load_png(o.reference);
    const Tensor3 den_c = clamp01(denoised), noisy_c = clamp01(noisy);
    const double p_out = psnr(den_c, ref), s_out = ssim(den_c, ref);
    const double p_in = psnr(noisy_c, ref), s_in = ssim(noisy_c, ref);
    std::cout << "PSNR=" << p_out << " SSIM=" << s_out << "\n";
    std::cout << "PSNR=" << p_in << " SSIM=" << s_in << " (input)\n";
    metrics = {{"psnr", p_out}, {"ssim", s_out}, {"psnr_input", p_in}, {"ssim_input", s_in}};
    if (!o.metrics_csv.empty()) {
      std::ofstream csv(o.metrics_csv);
      csv << "which,psnr,ssim\noutput," << p_out << "," << s_out << "\ninput," << p_in << ","
          << s_in << "\n";
    }
  }

  std::vector<std::string> argv = {"denoise", "--input", o.input,  "--weights",
                                   o.weights, "--out",   o.out,    "--kernel",
                                   std::to_string(cfg.kernel), "--pos", o.pos,
                                   "--keys", o.keys, "--threads", std::to_string(o.threads)};
  if (!o.reference.empty()) {
    argv.push_back("--reference");
    argv.push_back(o.reference);
  }
  if (!o.metrics_csv.empty()) {
    argv.push_back("--metrics-csv");
    argv.push_back(o.metrics_csv);
  }
  json m = base_manifest("denoise", argv);
  m["inputs"] = {o.input, o.weights};
  m["outputs"] = {o.out};
  m["config"] = {{"kernel", cfg.kernel}, {"pos", o.pos}, {"keys", o.keys}};
  if (!metrics.is_null()) m["metrics"] = metrics;
  write_manifest(o.out + ".manifest.json", m);
  return kOk;
}

struct AnalyzeOpts {
  std::string features, image, weights, out;
  std::string map_pos;  // "row,col"
  int trig_window = 0;
  int trig_channels = 256;
  double trig_base = 100.0;
  int trig_grid = 0;  // 0 → window itself
  std::string scale = "auto";
  std::string pos = "rope", keys = "avgpool";
  int kernel = 0;
  int threads = 1;
};

inline int cmd_analyze(const AnalyzeOpts& o) {
  set_num_threads(o.threads);
  if (o.map_pos.empty() && o.trig_window == 0)
    throw ConfigError("analyze needs --map r,c and/or --trig-window N");

  json outputs = json::array();
  if (o.trig_window > 0) {
    RopeConfig rc;
    rc.channels = o.trig_channels;
    rc.base = o.trig_base;
    rc.grid_h = rc.grid_w = o.trig_grid > 0 ? o.trig_grid : o.trig_window;
    const auto [cos_map, sin_map] = mean_trig_maps(rc, o.trig_window);
    save_npy(cos_map.cast<float>(), o.out + ".cos.npy");
    save_npy(sin_map.cast<float>(), o.out + ".sin.npy");
    outputs.push_back(o.out + ".cos.npy");
    outputs.push_back(o.out + ".sin.npy");
  }

  if (!o.map_pos.empty()) {
    if (o.features.empty() || o.image.empty() || o.weights.empty())
      throw ConfigError("--map needs --features, --image and --weights");
    const auto sep = o.map_pos.find(',');
    if (sep == std::string::npos) throw ConfigError("--map expects row,col");
    const int pr = parse_int(o.map_pos.substr(0, sep), "--map row");
    const int pc = parse_int(o.map_pos.substr(sep + 1), "--map col");

    const Tensor3 f_lr = load_npy(o.features);
    const Tensor3 image = load_png(o.image);
    const Checkpoint ckpt = load_checkpoint(o.weights);
    AttnConfig cfg;
    cfg.kernel = o.kernel > 0 ? o.kernel : ckpt.kernel_size;
    cfg.positional_mode = positional_mode_from_string(o.pos);
    cfg.key_mode = key_mode_from_string(o.keys);
    if (ckpt.sigma) cfg.sigma = static_cast<double>(*ckpt.sigma);
    cfg.scale = o.scale == "auto" ? std::max(1, static_cast<int>(std::lround(
                                           static_cast<double>(image.height) / f_lr.height)))
                                  : parse_int(o.scale, "--scale");
    RopeConfig rope;
    rope.channels = ckpt.params.channels;
    rope.base = ckpt.rope_base;
    Tensor3 guidance = image;
    if (image.height != cfg.scale * f_lr.height || image.width != cfg.scale * f_lr.width)
      guidance = resize(image, cfg.scale * f_lr.height, cfg.scale * f_lr.width,
                        ResizeMode::kBilinear);
    export_attention_map(f_lr, guidance, ckpt.params, rope, cfg, pr, pc, o.out);
    outputs.push_back(o.out + ".npy");
    outputs.push_back(o.out + ".png");
  }

  std::vector<std::string> argv = {"analyze", "--out", o.out};
  if (!o.map_pos.empty()) {
    for (const auto& kv : std::vector<std::pair<std::string, std::string>>{
             {"--features", o.features}, {"--image", o.image}, {"--weights", o.weights},
             {"--map", o.map_pos},       {"--scale", o.scale}, {"--pos", o.pos},
             {"--keys", o.keys}}) {
      argv.push_back(kv.first);
      argv.push_back(kv.second);
    }
    argv.push_back("--kernel");
    argv.push_back(std::to_string(o.kernel));
  }
  if (o.trig_window > 0) {
    argv.insert(argv.end(),
                {"--trig-window", std::to_string(o.trig_window), "--trig-channels",
                 std::to_string(o.trig_channels), "--trig-base", std::to_string(o.trig_base),
                 "--trig-grid", std::to_string(o.trig_grid)});
  }
  json m = base_manifest("analyze", argv);
  m["outputs"] = outputs;
  write_manifest(o.out + ".manifest.json", m);
  return kOk;
}

struct FilterOpts {
  std::string method;  // jbf | jbu | resize
  std::string signal, guidance, out;
  double sigma_s = 1.0, sigma_r = 0.1;
  int radius = 4;
  int scale = 2;
  std::string resize_mode = "bilinear";
  int out_h = 0, out_w = 0;
  int threads = 1;
};

inline int cmd_filter(const FilterOpts& o) {
  set_num_threads(o.threads);
  const Tensor3 signal = load_tensor_auto(o.signal);
  Tensor3 out;
  if (o.method == "jbf") {
    if (o.guidance.empty()) throw ConfigError("jbf needs --guidance");
    out = jbf(signal, load_tensor_auto(o.guidance), {o.sigma_s, o.sigma_r, o.radius});
  } else if (o.method == "jbu") {
    if (o.guidance.empty()) throw ConfigError("jbu needs --guidance");
    out = jbu(signal, load_tensor_auto(o.guidance), o.scale, {o.sigma_s, o.sigma_r, o.radius});
  } else if (o.method == "resize") {
    if (o.out_h < 1 || o.out_w < 1) throw ConfigError("resize needs --out-h and --out-w");
    out = resize(signal, o.out_h, o.out_w, resize_mode_from_string(o.resize_mode));
  } else {
    throw ConfigError("--method must be jbf, jbu or resize");
  }
  save_tensor_auto(out, o.out);

  std::vector<std::string> argv = {"filter",
                                   "--method", o.method,
                                   "--signal", o.signal,
                                   "--out", o.out,
                                   "--sigma-s", std::to_string(o.sigma_s),
                                   "--sigma-r", std::to_string(o.sigma_r),
                                   "--radius", std::to_string(o.radius),
                                   "--scale", std::to_string(o.scale),
                                   "--resize-mode", o.resize_mode,
                                   "--out-h", std::to_string(o.out_h),
                                   "--out-w", std::to_string(o.out_w),
                                   "--threads", std::to_string(o.threads)};
  if (!o.guidance.empty()) {
    argv.push_back("--guidance");
    argv.push_back(o.guidance);
  }
  json m = base_manifest("filter", argv);
  m["inputs"] = o.guidance.empty() ? json::array({o.signal}) : json::array({o.signal, o.guidance});
  m["outputs"] = {o.out};
  write_manifest(o.out + ".manifest.json", m);
  return kOk;
}

struct BenchOpts {
  std::string sizes;
  int repeats = 7;
  int scale = 2, kernel = 9, channels = 32, depth = 1, dim = 16;
  std::string pos = "rope", keys = "avgpool";
  uint64_t seed = 0;
  std::string out;
  bool dense = false;
  int threads = 1;
};

inline int cmd_bench(const BenchOpts& o) {
  set_num_threads(o.threads);
  const std::vector<int> sizes = parse_int_list(o.sizes);
  const EncoderParams enc = init_encoder(o.depth, o.channels, o.seed);
  AttnConfig cfg;
  cfg.scale = o.scale;
  cfg.kernel = o.kernel;
  cfg.positional_mode = positional_mode_from_string(o.pos);
  cfg.key_mode = key_mode_from_string(o.keys);
  RopeConfig rope;
  rope.channels = o.channels;
  rope.base = 100.0;
  rope.grid_h = rope.grid_w = 1;

  const auto rows = bench_throughput(cfg, enc, rope, sizes, o.repeats, o.dim, o.seed, &std::cerr);
  if (o.out.empty()) {
    write_bench_csv(rows, std::cout);
  } else {
    std::ofstream f(o.out);
    if (!f) throw IoError("cannot write '" + o.out + "'");
    write_bench_csv(rows, f);
  }

  if (o.dense) {
    // Relative cost of the dense oracle at the largest configured size.
    const int n = *std::max_element(sizes.begin(), sizes.end());
    Rng rng(o.seed);
    Tensor3 f_lr(n, n, o.dim);
    for (auto& v : f_lr.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    Tensor3 img(n * o.scale, n * o.scale, 3);
    for (auto& v : img.data) v = static_cast<float>(rng.uniform());
    const double t_dense = detail::median_ms_of(
        [&] { volatile float s = dense_reference(f_lr, img, enc, rope, cfg).data[0]; (void)s; },
        std::max(5, o.repeats));
    const double t_local = detail::median_ms_of(
        [&] { volatile float s = naf_forward(f_lr, img, enc, rope, cfg).data[0]; (void)s; },
        std::max(5, o.repeats));
    std::cout << "dense_ms=" << t_dense << " neighborhood_ms=" << t_local
              << " speedup=" << t_dense / t_local << "\n";
  }

  if (!o.out.empty()) {
    json m = base_manifest(
        "bench", {"bench", "--sizes", o.sizes, "--repeats", std::to_string(o.repeats), "--scale",
                  std::to_string(o.scale), "--kernel", std::to_string(o.kernel), "--channels",
                  std::to_string(o.channels), "--depth", std::to_string(o.depth), "--dim",
                  std::to_string(o.dim), "--pos", o.pos, "--keys", o.keys, "--seed",
                  std::to_string(o.seed), "--threads", std::to_string(o.threads), "--out", o.out});
    m["outputs"] = {o.out};
    write_manifest(o.out + ".manifest.json", m);
  }
  return kOk;
}

struct FlopsOpts {
  int scale = 16, kernel = 9, channels = 256, depth = 2;
  int h_lr = 28, w_lr = 28, dim = 384;
  std::string pos = "rope";
  std::string out;
};

inline int cmd_flops(const FlopsOpts& o) {
  const EncoderParams enc = init_encoder(o.depth, o.channels, 0);
  AttnConfig cfg;
  cfg.scale = o.scale;
  cfg.kernel = o.kernel;
  cfg.positional_mode = positional_mode_from_string(o.pos);
  const FlopsBreakdown f = flops_estimate(cfg, enc, o.h_lr, o.w_lr, o.dim);

  json j = {{"encoder", f.encoder},
            {"rope", f.rope},
            {"logits", f.logits},
            {"aggregation", f.aggregation},
            {"total", f.total},
            {"total_gflops", f.total / 1e9},
            {"dense_logits", f.dense_logits},
            {"locality_ratio", f.locality_ratio},
            {"params", param_count(enc)}};
  std::cout << j.dump(2) << "\n";
  if (!o.out.empty()) {
    std::ofstream file(o.out);
    if (!file) throw IoError("cannot write '" + o.out + "'");
    file << j.dump(2) << "\n";
    json m = base_manifest(
        "flops", {"flops", "--scale", std::to_string(o.scale), "--kernel",
                  std::to_string(o.kernel), "--channels", std::to_string(o.channels), "--depth",
                  std::to_string(o.depth), "--h-lr", std::to_string(o.h_lr), "--w-lr",
                  std::to_string(o.w_lr), "--dim", std::to_string(o.dim), "--pos", o.pos, "--out",
                  o.out});
    m["outputs"] = {o.out};
    write_manifest(o.out + ".manifest.json", m);
  }
  return kOk;
}

struct GradcheckOpts {
  std::string scope;
  uint64_t seed = 0;
  double eps = 1e-4;
};

inline int cmd_gradcheck(const GradcheckOpts& o) {
  const GradCheckResult r = grad_check(grad_scope_from_string(o.scope), o.seed, o.eps);
  std::cout << "scope=" << o.scope << " max_rel_error=" << r.max_rel_error
            << " worst=" << r.where << "\n";
  return r.max_rel_error < 1e-4 ? kOk : kRuntimeError;
}

inline int cmd_replay(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest '" + manifest_path + "'");
  json m;
  try {
    in >> m;
  } catch (const json::exception& e) {
    throw FormatError("manifest: " + std::string(e.what()));
  }
  if (!m.contains("argv")) throw FormatError("manifest has no argv to replay");
  return run_cli(m["argv"].get<std::vector<std::string>>());
}

}  // namespace cli_detail

// Command-line front end; also callable in-process (tests use this).
inline int run_cli(std::vector<std::string> args) {
  using namespace cli_detail;
  CLI::App app{"Neighborhood attention filtering: image-guided feature upsampling, "
               "classical joint-bilateral baselines, spectral analysis and denoising"};
  app.set_config("--config", "", "INI/TOML file with option defaults (flags take precedence)");
  app.require_subcommand(1);

  UpsampleOpts up;
  auto* sub_up = app.add_subcommand("upsample", "Upsample NPY features guided by a PNG image");
  sub_up->add_option("--features", up.features, "LR features, NPY (H,W,C) float32")->required();
  sub_up->add_option("--image", up.image, "guidance image, PNG")->required();
  sub_up->add_option("--weights", up.weights, "checkpoint directory")->required();
  sub_up->add_option("--out", up.out, "output NPY path")->required();
  sub_up->add_option("--scale", up.scale, "auto or integer upsampling factor");
  sub_up->add_option("--kernel", up.kernel, "neighborhood size (0 = checkpoint value)");
  sub_up->add_option("--pos", up.pos, "rope|gaussian|manhattan|none");
  sub_up->add_option("--keys", up.keys, "avgpool|maxpool|bilinear");
  sub_up->add_option("--logit-scale", up.logit_scale, "0 = 1/sqrt(C)");
  sub_up->add_option("--sigma", up.sigma, "spatial bandwidth (0 = checkpoint/1.0)");
  sub_up->add_option("--threads", up.threads, "worker cap (results are identical)");

  TrainOpts tr;
  auto* sub_tr = app.add_subcommand("train", "Train the guidance encoder");
  sub_tr->add_option("--task", tr.task, "upsample|denoise");
  sub_tr->add_option("--out", tr.out, "checkpoint output directory")->required();
  sub_tr->add_option("--seed", tr.seed, "run seed")->required();
  sub_tr->add_option("--iterations", tr.iterations, "stage-1 iterations");
  sub_tr->add_option("--target-size", tr.target_size, "stage-1 image size");
  sub_tr->add_option("--stage2-iterations", tr.stage2_iterations, "stage-2 iterations (0 = off)");
  sub_tr->add_option("--stage2-target", tr.stage2_target, "stage-2 target image size");
  sub_tr->add_option("--stage2-inputs", tr.stage2_inputs, "comma list of stage-2 input sizes");
  sub_tr->add_option("--batch", tr.batch, "batch size");
  sub_tr->add_option("--lr", tr.lr, "Adam learning rate");
  sub_tr->add_option("--beta1", tr.beta1, "Adam beta1");
  sub_tr->add_option("--beta2", tr.beta2, "Adam beta2");
  sub_tr->add_option("--adam-eps", tr.adam_eps, "Adam epsilon");
  sub_tr->add_option("--teacher-patch", tr.teacher_patch, "synthetic teacher patch size");
  sub_tr->add_option("--teacher-dim", tr.teacher_dim, "synthetic teacher output dim");
  sub_tr->add_option("--channels", tr.channels, "guidance channels C");
  sub_tr->add_option("--depth", tr.depth, "encoder blocks L");
  sub_tr->add_option("--kernel", tr.kernel, "attention kernel size (0 = task default)");
  sub_tr->add_option("--pos", tr.pos, "rope|gaussian|manhattan|none");
  sub_tr->add_option("--keys", tr.keys, "avgpool|maxpool|bilinear");
  sub_tr->add_option("--rope-base", tr.rope_base, "rope wavelength base");
  sub_tr->add_option("--sigma", tr.sigma, "initial spatial bandwidth");
  sub_tr->add_option("--images", tr.images, "PNG directory image source");
  sub_tr->add_flag("--synthetic", tr.synthetic, "use the seeded synthetic image source");
  sub_tr->add_option("--log", tr.log, "loss CSV path");
  sub_tr->add_option("--noise", tr.noise, "denoise task: gaussian|salt-pepper");
  sub_tr->add_option("--noise-level", tr.noise_level, "denoise task: sigma or probability");
  sub_tr->add_option("--noise-range", tr.noise_range, "denoise task: lo:hi per-sample draw");
  sub_tr->add_option("--image-size", tr.image_size, "denoise task: training crop size");
  sub_tr->add_option("--threads", tr.threads, "worker cap");

  DenoiseOpts de;
  auto* sub_de = app.add_subcommand("denoise", "Denoise a PNG with a trained checkpoint");
  sub_de->add_option("--input", de.input, "noisy PNG")->required();
  sub_de->add_option("--weights", de.weights, "checkpoint directory")->required();
  sub_de->add_option("--out", de.out, "output PNG")->required();
  sub_de->add_option("--kernel", de.kernel, "neighborhood size (0 = checkpoint value)");
  sub_de->add_option("--pos", de.pos, "rope|gaussian|manhattan|none");
  sub_de->add_option("--keys", de.keys, "avgpool|maxpool|bilinear");
  sub_de->add_option("--reference", de.reference, "clean PNG; prints PSNR/SSIM");
  sub_de->add_option("--metrics-csv", de.metrics_csv, "optional metrics CSV");
  sub_de->add_option("--threads", de.threads, "worker cap");

  AnalyzeOpts an;
  auto* sub_an = app.add_subcommand("analyze", "Attention-map and spectral exports");
  sub_an->add_option("--out", an.out, "output path prefix")->required();
  sub_an->add_option("--features", an.features, "LR features NPY (for --map)");
  sub_an->add_option("--image", an.image, "guidance PNG (for --map)");
  sub_an->add_option("--weights", an.weights, "checkpoint directory (for --map)");
  sub_an->add_option("--map", an.map_pos, "HR query position row,col");
  sub_an->add_option("--scale", an.scale, "auto or integer");
  sub_an->add_option("--kernel", an.kernel, "neighborhood size (0 = checkpoint value)");
  sub_an->add_option("--pos", an.pos, "rope|gaussian|manhattan|none");
  sub_an->add_option("--keys", an.keys, "avgpool|maxpool|bilinear");
  sub_an->add_option("--trig-window", an.trig_window, "export mean cos/sin maps for this window");
  sub_an->add_option("--trig-channels", an.trig_channels, "rope channels for --trig-window");
  sub_an->add_option("--trig-base", an.trig_base, "rope base for --trig-window");
  sub_an->add_option("--trig-grid", an.trig_grid, "normalization grid (0 = window)");
  sub_an->add_option("--threads", an.threads, "worker cap");

  FilterOpts fi;
  auto* sub_fi = app.add_subcommand("filter", "Classical baselines: jbf, jbu, resize");
  sub_fi->add_option("--method", fi.method, "jbf|jbu|resize")->required();
  sub_fi->add_option("--signal", fi.signal, "input NPY or PNG")->required();
  sub_fi->add_option("--out", fi.out, "output NPY or PNG")->required();
  sub_fi->add_option("--guidance", fi.guidance, "guidance NPY or PNG (jbf/jbu)");
  sub_fi->add_option("--sigma-s", fi.sigma_s, "spatial sigma");
  sub_fi->add_option("--sigma-r", fi.sigma_r, "range sigma");
  sub_fi->add_option("--radius", fi.radius, "window half-width");
  sub_fi->add_option("--scale", fi.scale, "jbu upsampling factor");
  sub_fi->add_option("--resize-mode", fi.resize_mode, "nearest|bilinear|bicubic");
  sub_fi->add_option("--out-h", fi.out_h, "resize target height");
  sub_fi->add_option("--out-w", fi.out_w, "resize target width");
  sub_fi->add_option("--threads", fi.threads, "worker cap");

  BenchOpts be;
  auto* sub_be = app.add_subcommand("bench", "Median wall-times over LR grid sizes");
  sub_be->add_option("--sizes", be.sizes, "comma list of LR grid sizes")->required();
  sub_be->add_option("--repeats", be.repeats, "timed repeats (>= 5)");
  sub_be->add_option("--scale", be.scale, "upsampling factor");
  sub_be->add_option("--kernel", be.kernel, "neighborhood size");
  sub_be->add_option("--channels", be.channels, "guidance channels");
  sub_be->add_option("--depth", be.depth, "encoder blocks");
  sub_be->add_option("--dim", be.dim, "feature dim");
  sub_be->add_option("--pos", be.pos, "positional mode");
  sub_be->add_option("--keys", be.keys, "key mode");
  sub_be->add_option("--seed", be.seed, "input generation seed");
  sub_be->add_option("--out", be.out, "CSV path (stdout when omitted)");
  sub_be->add_flag("--dense", be.dense, "also time the dense oracle at the largest size");
  sub_be->add_option("--threads", be.threads, "worker cap");

  FlopsOpts fl;
  auto* sub_fl = app.add_subcommand("flops", "Analytic FLOPs/parameter breakdown");
  sub_fl->add_option("--scale", fl.scale, "upsampling factor");
  sub_fl->add_option("--kernel", fl.kernel, "neighborhood size");
  sub_fl->add_option("--channels", fl.channels, "guidance channels");
  sub_fl->add_option("--depth", fl.depth, "encoder blocks");
  sub_fl->add_option("--h-lr", fl.h_lr, "LR grid height");
  sub_fl->add_option("--w-lr", fl.w_lr, "LR grid width");
  sub_fl->add_option("--dim", fl.dim, "feature dim");
  sub_fl->add_option("--pos", fl.pos, "positional mode");
  sub_fl->add_option("--out", fl.out, "optional JSON output path");

  GradcheckOpts gc;
  auto* sub_gc = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
  sub_gc->add_option("--scope", gc.scope, "rope|encoder|attention|full")->required();
  sub_gc->add_option("--seed", gc.seed, "seed")->required();
  sub_gc->add_option("--eps", gc.eps, "finite-difference step in [1e-5, 1e-2]");

  std::string replay_path;
  auto* sub_re = app.add_subcommand("replay", "Re-run a command from its manifest");
  sub_re->add_option("manifest", replay_path, "run manifest JSON")->required();

  try {
    std::reverse(args.begin(), args.end());
    app.parse(args);
    if (sub_up->parsed()) return cmd_upsample(up);
    if (sub_tr->parsed()) return cmd_train(tr);
    if (sub_de->parsed()) return cmd_denoise(de);
    if (sub_an->parsed()) return cmd_analyze(an);
    if (sub_fi->parsed()) return cmd_filter(fi);
    if (sub_be->parsed()) return cmd_bench(be);
    if (sub_fl->parsed()) return cmd_flops(fl);
    if (sub_gc->parsed()) return cmd_gradcheck(gc);
    if (sub_re->parsed()) return cmd_replay(replay_path);
    return cli_detail::kUsageError;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return cli_detail::kUsageError;
  } catch (const ConfigError& e) {
    std::cerr << "naf: " << e.what() << "\n";
    return cli_detail::kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "naf: " << e.what() << "\n";
    return cli_detail::kRuntimeError;
  }
}

}  // namespace naf
