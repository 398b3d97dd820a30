#pragma once

#include <algorithm>

#include "naf/attention.hpp"
#include "naf/encoder.hpp"

namespace naf {

// Analytic FLOP model. Convolutions count 2·H·W·k²·Cin·Cout (one multiply and
// one add per weight application); logits and aggregation stages count
// 2·elements per inner-product slot; the rope stage counts the 4 multiplies
// and 2 adds of each pair rotation. Border truncation is ignored — the window
// is min(k², LR cells) everywhere.
struct FlopsBreakdown {
  double encoder = 0.0;
  double rope = 0.0;
  double logits = 0.0;
  double aggregation = 0.0;
  double total = 0.0;
  double dense_logits = 0.0;   // logits cost if every LR cell were attended
  double locality_ratio = 0.0; // neighborhood/dense logits ratio
};

template <typename T>
FlopsBreakdown flops_estimate(const AttnConfig& cfg, const EncoderParamsT<T>& enc, int h_lr,
                              int w_lr, int d) {
  cfg.validate();
  const double H = static_cast<double>(cfg.scale) * h_lr;
  const double W = static_cast<double>(cfg.scale) * w_lr;
  const double C = enc.channels;
  FlopsBreakdown f;

  for (const auto* branch : {&enc.pixel_branch, &enc.context_branch})
    for (const auto& s : *branch)
      f.encoder += 2.0 * H * W * s.kernel_size * s.kernel_size *
                   static_cast<double>(s.in_channels) * s.out_channels;

  if (cfg.positional_mode == PositionalMode::kRope) f.rope = 3.0 * H * W * C;

  const double cells = static_cast<double>(h_lr) * w_lr;
  const double window = std::min(static_cast<double>(cfg.kernel) * cfg.kernel, cells);
  f.logits = H * W * window * 2.0 * C;
  f.aggregation = H * W * window * 2.0 * d;
  f.dense_logits = H * W * cells * 2.0 * C;
  f.locality_ratio = window / cells;
  f.total = f.encoder + f.rope + f.logits + f.aggregation;
  return f;
}

}  // namespace naf
