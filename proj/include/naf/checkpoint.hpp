#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "naf/common.hpp"
#include "naf/encoder.hpp"
#include "naf/npy.hpp"

namespace naf {

// On-disk model format: a directory with one NPY per parameter tensor plus a
// manifest. Conv weights are stored as (k², in, out), biases as (1, 1, out).
struct Checkpoint {
  EncoderParams params;
  double rope_base = 100.0;
  int kernel_size = 9;
  std::optional<float> sigma;  // present for gaussian/manhattan models
};

namespace detail {

inline Tensor3 weights_as_tensor(const ConvSpec& s) {
  Tensor3 t(s.kernel_size * s.kernel_size, s.in_channels, s.out_channels);
  t.data.assign(s.weights.begin(), s.weights.end());
  return t;
}

inline Tensor3 bias_as_tensor(const ConvSpec& s) {
  Tensor3 t(1, 1, s.out_channels);
  t.data.assign(s.bias.begin(), s.bias.end());
  return t;
}

inline std::vector<std::string> layer_names(int L) {
  std::vector<std::string> names;
  for (const char* branch : {"pixel", "context"}) {
    for (int l = 0; l < L; ++l) names.push_back(std::string(branch) + "." + std::to_string(l));
    names.push_back(std::string(branch) + ".proj");
  }
  return names;
}

}  // namespace detail

inline void save_checkpoint(const std::string& dir, const Checkpoint& ckpt) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  const auto& p = ckpt.params;

  nlohmann::json manifest;
  manifest["version"] = kVersion;
  manifest["L"] = p.depth;
  manifest["C"] = p.channels;
  manifest["rope_base"] = ckpt.rope_base;
  manifest["kernel_size"] = ckpt.kernel_size;
  manifest["activation"] = to_string(p.activation);

  std::vector<std::string> tensor_names;
  auto dump = [&](const ConvSpec& s, const std::string& stem) {
    save_npy(detail::weights_as_tensor(s), dir + "/" + stem + ".weight.npy");
    save_npy(detail::bias_as_tensor(s), dir + "/" + stem + ".bias.npy");
    tensor_names.push_back(stem + ".weight");
    tensor_names.push_back(stem + ".bias");
  };
  const auto names = detail::layer_names(p.depth);
  size_t idx = 0;
  for (const auto& s : p.pixel_branch) dump(s, names[idx++]);
  for (const auto& s : p.context_branch) dump(s, names[idx++]);

  if (ckpt.sigma) {
    Tensor3 t(1, 1, 1);
    t.data[0] = *ckpt.sigma;
    save_npy(t, dir + "/sigma.npy");
    tensor_names.push_back("sigma");
    manifest["sigma"] = true;
  }
  manifest["tensor_names"] = tensor_names;

  std::ofstream out(dir + "/manifest.json");
  if (!out) throw IoError("cannot write checkpoint manifest in '" + dir + "'");
  out << manifest.dump(2) << "\n";
}

inline Checkpoint load_checkpoint(const std::string& dir) {
  std::ifstream in(dir + "/manifest.json");
  if (!in) throw IoError("no checkpoint manifest in '" + dir + "'");
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint manifest: " + std::string(e.what()));
  }

  Checkpoint ckpt;
  const int L = manifest.at("L").get<int>();
  const int C = manifest.at("C").get<int>();
  ckpt.rope_base = manifest.at("rope_base").get<double>();
  ckpt.kernel_size = manifest.at("kernel_size").get<int>();

  // Rebuild the expected structure, then overwrite with the stored tensors,
  // validating every shape along the way.
  ckpt.params = init_encoder(L, C, 0);
  if (manifest.contains("activation"))
    ckpt.params.activation = activation_from_string(manifest["activation"].get<std::string>());

  auto load_layer = [&](ConvSpec& s, const std::string& stem) {
    const Tensor3 w = load_npy(dir + "/" + stem + ".weight.npy");
    if (w.height != s.kernel_size * s.kernel_size || w.width != s.in_channels ||
        w.channels != s.out_channels)
      throw ShapeError("checkpoint tensor '" + stem + ".weight' has unexpected shape");
    s.weights.assign(w.data.begin(), w.data.end());
    const Tensor3 b = load_npy(dir + "/" + stem + ".bias.npy");
    if (b.height != 1 || b.width != 1 || b.channels != s.out_channels)
      throw ShapeError("checkpoint tensor '" + stem + ".bias' has unexpected shape");
    s.bias.assign(b.data.begin(), b.data.end());
  };
  const auto names = detail::layer_names(L);
  size_t idx = 0;
  for (auto& s : ckpt.params.pixel_branch) load_layer(s, names[idx++]);
  for (auto& s : ckpt.params.context_branch) load_layer(s, names[idx++]);

  if (manifest.value("sigma", false)) {
    const Tensor3 t = load_npy(dir + "/sigma.npy");
    if (t.size() != 1) throw ShapeError("checkpoint tensor 'sigma' must be a scalar");
    ckpt.sigma = t.data[0];
  }
  return ckpt;
}

}  // namespace naf
