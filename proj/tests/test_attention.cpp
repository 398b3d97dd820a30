#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "naf/attention.hpp"
#include "naf/training.hpp"
#include "test_util.hpp"

using naf::AttnConfig;
using naf::EncoderParams;
using naf::KeyMode;
using naf::PositionalMode;
using naf::RopeConfig;
using naf::Tensor3;
using naf::Tensor3T;
using naf_test::max_abs_diff;
using naf_test::random_tensor;

namespace {

RopeConfig rope_for(int channels) {
  RopeConfig r;
  r.channels = channels;
  r.base = 100.0;
  r.grid_h = r.grid_w = 1;  // naf_forward re-grids to the guidance dims
  return r;
}

AttnConfig cfg_basic(int s, int k) {
  AttnConfig c;
  c.scale = s;
  c.kernel = k;
  return c;
}

}  // namespace

TEST_CASE("neighborhood geometry") {
  const auto corner = naf::neighborhood(0, 0, 4, 3, 8, 8);
  REQUIRE(corner.anchor_row == 0);
  REQUIRE(corner.anchor_col == 0);
  REQUIRE(corner.cells.size() == 4);
  REQUIRE(corner.cells.front() == std::pair<int, int>{0, 0});
  REQUIRE(corner.cells.back() == std::pair<int, int>{1, 1});

  const auto interior = naf::neighborhood(18, 18, 4, 3, 8, 8);
  REQUIRE(interior.anchor_row == 4);
  REQUIRE(interior.anchor_col == 4);
  REQUIRE(interior.cells.size() == 9);
  REQUIRE(interior.cells.front() == std::pair<int, int>{3, 3});
  REQUIRE(interior.cells.back() == std::pair<int, int>{5, 5});

  for (int pr : {0, 7, 13, 31})
    for (int pc : {0, 5, 31}) {
      const auto n1 = naf::neighborhood(pr, pc, 4, 1, 8, 8);
      REQUIRE(n1.cells.size() == 1);
      REQUIRE(n1.cells[0] == std::pair<int, int>{pr / 4, pc / 4});
    }

  REQUIRE_THROWS_AS(naf::neighborhood(32, 0, 4, 3, 8, 8), naf::BoundsError);
  REQUIRE_THROWS_AS(naf::neighborhood(0, -1, 4, 3, 8, 8), naf::BoundsError);
}

TEST_CASE("compute_keys modes") {
  const Tensor3 g = random_tensor(6, 6, 4, 3);
  for (auto mode : {KeyMode::kAvgPool, KeyMode::kMaxPool, KeyMode::kBilinear}) {
    REQUIRE(naf::compute_keys(g, 1, mode).data == g.data);  // s=1 identity
    const Tensor3 constant(6, 6, 4, 2.5f);
    for (float v : naf::compute_keys(constant, 2, mode).data) REQUIRE(v == 2.5f);
  }
  const Tensor3 avg = naf::compute_keys(g, 2, KeyMode::kAvgPool);
  REQUIRE(avg.data == naf::block_avg_pool(g, 2).data);

  const Tensor3 mx = naf::compute_keys(g, 3, KeyMode::kMaxPool);
  for (int ch = 0; ch < 4; ++ch) {
    float want = g.at(0, 0, ch);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) want = std::max(want, g.at(i, j, ch));
    REQUIRE(mx.at(0, 0, ch) == want);
  }
  REQUIRE_THROWS_AS(naf::compute_keys(g, 4, KeyMode::kAvgPool), naf::ShapeError);
}

TEST_CASE("attention_logits mode semantics") {
  const int C = 8;
  std::vector<float> q = {1, 0, 0, 1, 0.5f, -0.5f, 0.25f, 2};
  std::vector<float> orth = {0, 1, -1, 0, 0.5f, 0.5f, 2, -0.25f};

  AttnConfig rope_cfg = cfg_basic(1, 3);
  const double norm2 = [&] {
    double acc = 0;
    for (float v : q) acc += double(v) * v;
    return acc;
  }();
  // rope mode, zero phases collapse to a plain scaled inner product
  const float self = naf::attention_logits(q.data(), q.data(), C, 0, 0, 0, 0, rope_cfg, 1, 1);
  REQUIRE_THAT(self, Catch::Matchers::WithinRel(norm2 / std::sqrt(8.0), 1e-6));

  AttnConfig none_cfg = cfg_basic(1, 3);
  none_cfg.positional_mode = PositionalMode::kNone;
  REQUIRE(naf::attention_logits(q.data(), orth.data(), C, 0, 0, 0, 0, none_cfg, 3, 3, q.data(),
                                orth.data()) == 0.0f);
  REQUIRE_THROWS_AS(naf::attention_logits(q.data(), orth.data(), C, 0, 0, 0, 0, none_cfg, 3, 3),
                    naf::ConfigError);

  // gaussian at zero distance equals the none-mode logit
  AttnConfig gauss_cfg = none_cfg;
  gauss_cfg.positional_mode = PositionalMode::kGaussian;
  gauss_cfg.sigma = 0.7;
  const float g0 = naf::attention_logits(q.data(), q.data(), C, 1, 1, 1, 1, gauss_cfg, 3, 3,
                                         q.data(), orth.data());
  const float n0 = naf::attention_logits(q.data(), q.data(), C, 1, 1, 1, 1, none_cfg, 3, 3,
                                         q.data(), orth.data());
  REQUIRE(g0 == n0);
  // and strictly less once there is spatial offset
  const float g1 = naf::attention_logits(q.data(), q.data(), C, 0, 0, 1, 1, gauss_cfg, 3, 3,
                                         q.data(), orth.data());
  const float n1 = naf::attention_logits(q.data(), q.data(), C, 0, 0, 1, 1, none_cfg, 3, 3,
                                         q.data(), orth.data());
  REQUIRE(g1 < n1);
}

TEST_CASE("naf_forward contracts") {
  const EncoderParams enc = naf::init_encoder(1, 8, 5);
  const RopeConfig rope = rope_for(8);

  // constant features pass through bit-exactly
  const Tensor3 image = random_tensor(8, 8, 3, 7, 0.0, 1.0);
  const Tensor3 constant(4, 4, 5, 3.25f);
  const Tensor3 out = naf::naf_forward(constant, image, enc, rope, cfg_basic(2, 3));
  for (float v : out.data) REQUIRE(v == 3.25f);

  // s=1, k=1 is the exact identity
  const Tensor3 f = random_tensor(6, 6, 4, 9);
  const Tensor3 img1 = random_tensor(6, 6, 3, 11, 0.0, 1.0);
  REQUIRE(naf::naf_forward(f, img1, enc, rope, cfg_basic(1, 1)).data == f.data);

  // shape and scale errors
  REQUIRE_THROWS_AS(naf::naf_forward(f, random_tensor(9, 9, 3, 1, 0.0, 1.0), enc, rope,
                                     cfg_basic(2, 3)),
                    naf::ConfigError);  // 9/6 non-integer
  REQUIRE_THROWS_AS(naf::naf_forward(f, random_tensor(18, 18, 3, 1, 0.0, 1.0), enc, rope,
                                     cfg_basic(2, 3)),
                    naf::ShapeError);  // integer 3 but cfg says 2
  REQUIRE_THROWS_AS(naf::naf_forward(f, Tensor3(6, 6, 1), enc, rope, cfg_basic(1, 3)),
                    naf::ShapeError);
}

TEST_CASE("naf_forward equals the dense oracle across modes") {
  const EncoderParams enc = naf::init_encoder(1, 8, 13);
  const RopeConfig rope = rope_for(8);
  int checked = 0;
  for (auto pos : {PositionalMode::kRope, PositionalMode::kGaussian, PositionalMode::kManhattan,
                   PositionalMode::kNone})
    for (auto key : {KeyMode::kAvgPool, KeyMode::kMaxPool, KeyMode::kBilinear})
      for (int s : {1, 2, 4}) {
        AttnConfig cfg = cfg_basic(s, 3);
        cfg.positional_mode = pos;
        cfg.key_mode = key;
        cfg.sigma = 0.6;
        const Tensor3 f = random_tensor(4, 4, 5, 100 + checked);
        const Tensor3 img = random_tensor(4 * s, 4 * s, 3, 200 + checked, 0.0, 1.0);
        const Tensor3 a = naf::naf_forward(f, img, enc, rope, cfg);
        const Tensor3 b = naf::dense_reference(f, img, enc, rope, cfg);
        REQUIRE(max_abs_diff(a, b) < 1e-5);
        ++checked;
      }
  REQUIRE(checked == 36);
}

TEST_CASE("dense oracle with a window covering everything is full attention") {
  const EncoderParams enc = naf::init_encoder(1, 8, 17);
  const RopeConfig rope = rope_for(8);
  AttnConfig cfg = cfg_basic(2, 13);  // k ≥ 2·max(H,W)+1 ⇒ nothing is masked
  const Tensor3 f = random_tensor(4, 4, 3, 21);
  const Tensor3 img = random_tensor(8, 8, 3, 23, 0.0, 1.0);
  const Tensor3 masked = naf::dense_reference(f, img, enc, rope, cfg);

  // independent unmasked softmax over all cells
  const Tensor3T<double> fd = f.cast<double>();
  const auto G = naf::encode(img.cast<double>(), enc.cast<double>());
  const auto GR = naf::apply_rope(G, rope.with_grid(8, 8));
  const auto K = naf::block_avg_pool(GR, 2);
  const double scale = 1.0 / std::sqrt(8.0);
  for (int pr = 0; pr < 8; ++pr)
    for (int pc = 0; pc < 8; ++pc) {
      std::vector<double> w(16);
      double z = 0.0;
      for (int cell = 0; cell < 16; ++cell) {
        double dot = 0.0;
        for (int ch = 0; ch < 8; ++ch)
          dot += GR.at(pr, pc, ch) * K.at(cell / 4, cell % 4, ch);
        w[static_cast<size_t>(cell)] = std::exp(scale * dot);
        z += w[static_cast<size_t>(cell)];
      }
      for (int ch = 0; ch < 3; ++ch) {
        double acc = 0.0;
        for (int cell = 0; cell < 16; ++cell)
          acc += w[static_cast<size_t>(cell)] / z * fd.at(cell / 4, cell % 4, ch);
        REQUIRE_THAT(static_cast<double>(masked.at(pr, pc, ch)),
                     Catch::Matchers::WithinAbs(acc, 1e-5));
      }
    }
}

TEST_CASE("locality: cells outside the window cannot influence the output") {
  const EncoderParams enc = naf::init_encoder(1, 8, 29);
  const RopeConfig rope = rope_for(8);
  const AttnConfig cfg = cfg_basic(2, 3);
  Tensor3 f = random_tensor(6, 6, 4, 31);
  const Tensor3 img = random_tensor(12, 12, 3, 33, 0.0, 1.0);
  const Tensor3 base = naf::naf_forward(f, img, enc, rope, cfg);

  // p = (0,0): window is cells {0,1}×{0,1}; poke a far cell
  f.at(5, 5, 0) += 100.0f;
  const Tensor3 poked = naf::naf_forward(f, img, enc, rope, cfg);
  for (int ch = 0; ch < 4; ++ch) REQUIRE(poked.at(0, 0, ch) == base.at(0, 0, ch));
  REQUIRE(poked.at(11, 11, 0) != base.at(11, 11, 0));
}

TEST_CASE("value-linearity of the aggregation") {
  const EncoderParams enc = naf::init_encoder(1, 8, 37);
  const RopeConfig rope = rope_for(8);
  const AttnConfig cfg = cfg_basic(2, 3);
  const Tensor3 x = random_tensor(4, 4, 3, 41);
  const Tensor3 y = random_tensor(4, 4, 3, 43);
  const Tensor3 img = random_tensor(8, 8, 3, 47, 0.0, 1.0);
  const float a = 1.7f, b = -0.6f;
  Tensor3 mix(4, 4, 3);
  for (size_t i = 0; i < mix.data.size(); ++i) mix.data[i] = a * x.data[i] + b * y.data[i];
  const Tensor3 fx = naf::naf_forward(x, img, enc, rope, cfg);
  const Tensor3 fy = naf::naf_forward(y, img, enc, rope, cfg);
  const Tensor3 fmix = naf::naf_forward(mix, img, enc, rope, cfg);
  for (size_t i = 0; i < fmix.data.size(); ++i)
    REQUIRE_THAT(fmix.data[i], Catch::Matchers::WithinAbs(a * fx.data[i] + b * fy.data[i], 1e-5));
}

TEST_CASE("outputs stay within the window's value extrema") {
  const EncoderParams enc = naf::init_encoder(1, 8, 53);
  const RopeConfig rope = rope_for(8);
  const AttnConfig cfg = cfg_basic(2, 3);
  const Tensor3 f = random_tensor(5, 5, 2, 59);
  const Tensor3 img = random_tensor(10, 10, 3, 61, 0.0, 1.0);
  const Tensor3 out = naf::naf_forward(f, img, enc, rope, cfg);
  for (int pr = 0; pr < 10; ++pr)
    for (int pc = 0; pc < 10; ++pc) {
      const auto nb = naf::neighborhood(pr, pc, 2, 3, 5, 5);
      for (int ch = 0; ch < 2; ++ch) {
        float lo = f.at(nb.cells[0].first, nb.cells[0].second, ch), hi = lo;
        for (const auto& [cr, cc] : nb.cells) {
          lo = std::min(lo, f.at(cr, cc, ch));
          hi = std::max(hi, f.at(cr, cc, ch));
        }
        REQUIRE(out.at(pr, pc, ch) >= lo - 1e-6f);
        REQUIRE(out.at(pr, pc, ch) <= hi + 1e-6f);
      }
    }
}

TEST_CASE("worker count does not change results") {
  const EncoderParams enc = naf::init_encoder(1, 8, 97);
  const RopeConfig rope = rope_for(8);
  const AttnConfig cfg = cfg_basic(2, 3);
  const Tensor3 f = random_tensor(6, 6, 4, 101);
  const Tensor3 img = random_tensor(12, 12, 3, 103, 0.0, 1.0);
  const Tensor3 single = naf::naf_forward(f, img, enc, rope, cfg);
  naf::set_num_threads(4);
  const Tensor3 multi = naf::naf_forward(f, img, enc, rope, cfg);
  naf::set_num_threads(1);
  REQUIRE(single.data == multi.data);
}

TEST_CASE("naf_backward edge cases") {
  const EncoderParams enc = naf::init_encoder(1, 8, 67);
  const RopeConfig rope = rope_for(8);
  const AttnConfig cfg = cfg_basic(2, 3);
  const Tensor3 f = random_tensor(4, 4, 3, 71);
  const Tensor3 img = random_tensor(8, 8, 3, 73, 0.0, 1.0);

  auto zero = naf::naf_backward(f, img, enc, rope, cfg, Tensor3(8, 8, 3, 0.0f));
  for (float v : zero.f_lr.data) REQUIRE(v == 0.0f);
  naf::for_each_param(zero.enc, [](float& v, size_t) { REQUIRE(v == 0.0f); });
  REQUIRE(zero.sigma == 0.0f);

  // constant features: output is independent of the attention weights, so
  // encoder gradients vanish
  const Tensor3 constant(4, 4, 3, 1.5f);
  auto gc = naf::naf_backward(constant, img, enc, rope, cfg, random_tensor(8, 8, 3, 79));
  naf::for_each_param(gc.enc, [](float& v, size_t) { REQUIRE(std::abs(v) < 1e-6f); });
}

TEST_CASE("attention gradients match finite differences (all scopes)") {
  for (uint64_t seed = 0; seed < 5; ++seed) {
    const auto r = naf::grad_check(naf::GradScope::kAttention, seed);
    INFO(r.where);
    REQUIRE(r.max_rel_error < 1e-4);
  }
  REQUIRE_THROWS_AS(naf::grad_check(naf::GradScope::kAttention, 0, 1.0), naf::ConfigError);
}

TEST_CASE("maxpool and bilinear key-mode gradients (tie-screened instances)") {
  const double eps = 1e-4;
  for (auto key : {KeyMode::kMaxPool, KeyMode::kBilinear}) {
    naf::EncoderParamsT<double> params = naf::init_encoder(1, 8, 83).cast<double>();
    RopeConfig rope = rope_for(8);
    AttnConfig cfg = cfg_basic(2, 3);
    cfg.key_mode = key;

    naf::Rng rng(89);
    Tensor3T<double> img(6, 6, 3);
    // redraw until the instance is clear of ReLU kinks and (for maxpool) the
    // block maxima are separated enough that FD cannot flip the argmax
    for (int attempt = 0;; ++attempt) {
      REQUIRE(attempt < 500);
      for (auto& v : img.data) v = rng.uniform(0.0, 1.0);
      if (naf::detail::min_preactivation_abs(img, params) < 2 * eps) continue;
      if (key == KeyMode::kMaxPool) {
        const auto GR = naf::apply_rope(naf::encode(img, params), rope.with_grid(6, 6));
        double min_gap = 1e9;
        for (int br = 0; br < 3; ++br)
          for (int bc = 0; bc < 3; ++bc)
            for (int ch = 0; ch < 8; ++ch) {
              double best = -1e9, second = -1e9;
              for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j) {
                  const double v = GR.at(br * 2 + i, bc * 2 + j, ch);
                  if (v > best) {
                    second = best;
                    best = v;
                  } else if (v > second) {
                    second = v;
                  }
                }
              min_gap = std::min(min_gap, best - second);
            }
        if (min_gap < 20 * eps) continue;
      }
      break;
    }

    Tensor3T<double> f_lr(3, 3, 2);
    for (auto& v : f_lr.data) v = rng.uniform(-1.0, 1.0);
    Tensor3T<double> co(6, 6, 2);
    for (auto& v : co.data) v = rng.uniform(-1.0, 1.0);

    auto forward = [&] {
      const auto out = naf::naf_forward(f_lr, img, params, rope, cfg);
      double acc = 0.0;
      for (size_t i = 0; i < out.data.size(); ++i) acc += out.data[i] * co.data[i];
      return acc;
    };
    const auto analytic = naf::naf_backward(f_lr, img, params, rope, cfg, co);

    std::vector<double*> slots;
    naf::for_each_param(params, [&](double& v, size_t) { slots.push_back(&v); });
    std::vector<double> expect;
    auto ae = analytic.enc;
    naf::for_each_param(ae, [&](double& v, size_t) { expect.push_back(v); });
    double worst = 0.0;
    for (size_t i = 0; i < slots.size(); ++i) {
      const double saved = *slots[i];
      *slots[i] = saved + eps;
      const double up = forward();
      *slots[i] = saved - eps;
      const double down = forward();
      *slots[i] = saved;
      const double fd = (up - down) / (2 * eps);
      worst = std::max(worst, std::abs(fd - expect[i]) /
                                  std::max({std::abs(fd), std::abs(expect[i]), 1e-6}));
    }
    INFO(naf::to_string(key));
    REQUIRE(worst < 1e-4);
  }
}
