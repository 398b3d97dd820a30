#include <catch2/catch_amalgamated.hpp>

#include "naf/checkpoint.hpp"
#include "naf/encoder.hpp"
#include "naf/training.hpp"
#include "test_util.hpp"

using naf::EncoderParams;
using naf::Tensor3;
using naf_test::max_abs_diff;
using naf_test::random_tensor;
using naf_test::scratch_dir;

TEST_CASE("init is deterministic in the seed") {
  const EncoderParams a = naf::init_encoder(2, 16, 42);
  const EncoderParams b = naf::init_encoder(2, 16, 42);
  const EncoderParams c = naf::init_encoder(2, 16, 43);
  REQUIRE(a.pixel_branch[0].weights == b.pixel_branch[0].weights);
  REQUIRE(a.context_branch[1].weights == b.context_branch[1].weights);
  REQUIRE(a.pixel_branch[0].weights != c.pixel_branch[0].weights);
  for (const auto& s : a.pixel_branch)
    for (float v : s.bias) REQUIRE(v == 0.0f);
}

TEST_CASE("parameter counts") {
  REQUIRE(naf::param_count(naf::init_encoder(2, 256, 0)) == 729856u);
  // L=1, C=4 minimal structure: pixel [1x1 3→4 | proj 4→2], context [3x3 3→4 | proj 4→2]
  const EncoderParams tiny = naf::init_encoder(1, 4, 0);
  REQUIRE(tiny.pixel_branch.size() == 2);
  REQUIRE(tiny.pixel_branch[0].kernel_size == 1);
  REQUIRE(tiny.pixel_branch[0].in_channels == 3);
  REQUIRE(tiny.pixel_branch[0].out_channels == 4);
  REQUIRE(tiny.pixel_branch[1].kernel_size == 1);
  REQUIRE(tiny.pixel_branch[1].out_channels == 2);
  REQUIRE(tiny.context_branch[0].kernel_size == 3);
  REQUIRE(tiny.context_branch[1].kernel_size == 1);
  REQUIRE(naf::param_count(tiny) == (12 + 4) + (8 + 2) + (108 + 4) + (8 + 2));

  // doubling C roughly quadruples the count (the C→C 3×3 term dominates)
  const size_t c256 = naf::param_count(naf::init_encoder(2, 256, 0));
  const size_t c512 = naf::param_count(naf::init_encoder(2, 512, 0));
  REQUIRE(static_cast<double>(c512) / c256 > 3.5);
  REQUIRE(static_cast<double>(c512) / c256 < 4.5);

  REQUIRE_THROWS_AS(naf::init_encoder(0, 8, 0), naf::ConfigError);
  REQUIRE_THROWS_AS(naf::init_encoder(1, 5, 0), naf::ConfigError);
}

TEST_CASE("encode basics") {
  const EncoderParams p = naf::init_encoder(1, 8, 3);
  const Tensor3 zero(4, 5, 3, 0.0f);
  const Tensor3 out = naf::encode(zero, p);
  REQUIRE(out.height == 4);
  REQUIRE(out.width == 5);
  REQUIRE(out.channels == 8);
  for (float v : out.data) REQUIRE(v == 0.0f);  // zero biases, ReLU(0) = 0

  REQUIRE_THROWS_AS(naf::encode(Tensor3(4, 4, 1), p), naf::ShapeError);
}

TEST_CASE("encode equals the conv composition oracle") {
  const EncoderParams p = naf::init_encoder(2, 8, 5);
  const Tensor3 img = random_tensor(6, 6, 3, 17, 0.0, 1.0);
  const Tensor3 out = naf::encode(img, p);

  auto run = [&](const std::vector<naf::ConvSpec>& branch) {
    Tensor3 x = img;
    for (size_t l = 0; l + 1 < branch.size(); ++l) {
      x = naf::conv2d_forward(x, branch[l]);
      for (auto& v : x.data) v = v > 0 ? v : 0;
    }
    return naf::conv2d_forward(x, branch.back());
  };
  const Tensor3 px = run(p.pixel_branch);
  const Tensor3 cx = run(p.context_branch);
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 6; ++c)
      for (int ch = 0; ch < 4; ++ch) {
        REQUIRE(out.at(r, c, ch) == px.at(r, c, ch));
        REQUIRE(out.at(r, c, 4 + ch) == cx.at(r, c, ch));
      }
}

TEST_CASE("translation covariance in the interior") {
  const EncoderParams p = naf::init_encoder(2, 8, 7);
  const Tensor3 big = random_tensor(10, 10, 3, 19, 0.0, 1.0);
  Tensor3 a(9, 9, 3), b(9, 9, 3);
  for (int r = 0; r < 9; ++r)
    for (int c = 0; c < 9; ++c)
      for (int ch = 0; ch < 3; ++ch) {
        a.at(r, c, ch) = big.at(r, c, ch);
        b.at(r, c, ch) = big.at(r + 1, c + 1, ch);
      }
  const Tensor3 ga = naf::encode(a, p);
  const Tensor3 gb = naf::encode(b, p);
  // gb(r,c) == ga(r+1,c+1) wherever both are ≥ 2 pixels from every border
  for (int r = 2; r < 7 - 1; ++r)
    for (int c = 2; c < 7 - 1; ++c)
      for (int ch = 0; ch < 8; ++ch) REQUIRE(gb.at(r, c, ch) == ga.at(r + 1, c + 1, ch));
}

TEST_CASE("branch separation") {
  EncoderParams p = naf::init_encoder(1, 8, 9);
  const Tensor3 img = random_tensor(5, 5, 3, 23, 0.0, 1.0);
  const Tensor3 base = naf::encode(img, p);
  p.pixel_branch[0].weights[0] += 0.5f;
  const Tensor3 poked = naf::encode(img, p);
  bool pixel_changed = false;
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 5; ++c) {
      for (int ch = 4; ch < 8; ++ch) REQUIRE(poked.at(r, c, ch) == base.at(r, c, ch));
      for (int ch = 0; ch < 4; ++ch) pixel_changed |= poked.at(r, c, ch) != base.at(r, c, ch);
    }
  REQUIRE(pixel_changed);
}

TEST_CASE("encode_backward edge cases") {
  const EncoderParams p = naf::init_encoder(1, 8, 11);
  const Tensor3 img = random_tensor(4, 4, 3, 29, 0.0, 1.0);

  const auto zero = naf::encode_backward(img, p, Tensor3(4, 4, 8, 0.0f));
  naf::EncoderParams zp = zero.params;
  naf::for_each_param(zp, [](float& v, size_t) { REQUIRE(v == 0.0f); });
  for (float v : zero.image.data) REQUIRE(v == 0.0f);

  // grad only in pixel-branch channels → context weights receive nothing
  Tensor3 gpix(4, 4, 8, 0.0f);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c)
      for (int ch = 0; ch < 4; ++ch) gpix.at(r, c, ch) = 1.0f;
  auto g = naf::encode_backward(img, p, gpix);
  for (const auto& s : g.params.context_branch) {
    for (float v : s.weights) REQUIRE(v == 0.0f);
    for (float v : s.bias) REQUIRE(v == 0.0f);
  }
}

TEST_CASE("encoder gradients match finite differences") {
  for (uint64_t seed = 0; seed < 3; ++seed) {
    const auto r = naf::grad_check(naf::GradScope::kEncoder, seed);
    INFO(r.where);
    REQUIRE(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("softplus activation gradients also check out") {
  naf::EncoderParamsT<double> params = naf::init_encoder(1, 8, 31).cast<double>();
  params.activation = naf::Activation::kSoftplus;
  naf::Rng rng(33);
  naf::Tensor3T<double> img(4, 4, 3);
  for (auto& v : img.data) v = rng.uniform(0.0, 1.0);
  naf::Tensor3T<double> co(4, 4, 8);
  for (auto& v : co.data) v = rng.uniform(-1.0, 1.0);

  auto loss = [&] {
    const auto out = naf::encode(img, params);
    double acc = 0.0;
    for (size_t i = 0; i < out.data.size(); ++i) acc += out.data[i] * co.data[i];
    return acc;
  };
  const auto analytic = naf::encode_backward(img, params, co);
  std::vector<double*> slots;
  naf::for_each_param(params, [&](double& v, size_t) { slots.push_back(&v); });
  std::vector<double> expect;
  auto ap = analytic.params;
  naf::for_each_param(ap, [&](double& v, size_t) { expect.push_back(v); });
  double worst = 0.0;
  for (size_t i = 0; i < slots.size(); ++i) {
    const double saved = *slots[i];
    *slots[i] = saved + 1e-3;
    const double up = loss();
    *slots[i] = saved - 1e-3;
    const double down = loss();
    *slots[i] = saved;
    const double fd = (up - down) / 2e-3;
    worst = std::max(worst, std::abs(fd - expect[i]) /
                                std::max({std::abs(fd), std::abs(expect[i]), 1e-6}));
  }
  REQUIRE(worst < 1e-4);
}

TEST_CASE("checkpoint round-trip is bit-identical and validates shapes") {
  const auto dir = scratch_dir("encoder") + "/ckpt";
  naf::Checkpoint ck;
  ck.params = naf::init_encoder(2, 8, 77);
  ck.rope_base = 50.0;
  ck.kernel_size = 5;
  ck.sigma = 0.75f;
  naf::save_checkpoint(dir, ck);

  const naf::Checkpoint back = naf::load_checkpoint(dir);
  REQUIRE(back.rope_base == 50.0);
  REQUIRE(back.kernel_size == 5);
  REQUIRE(back.sigma.has_value());
  REQUIRE(*back.sigma == 0.75f);
  REQUIRE(back.params.depth == 2);
  REQUIRE(back.params.channels == 8);
  for (size_t l = 0; l < ck.params.pixel_branch.size(); ++l) {
    REQUIRE(back.params.pixel_branch[l].weights == ck.params.pixel_branch[l].weights);
    REQUIRE(back.params.context_branch[l].bias == ck.params.context_branch[l].bias);
  }

  // corrupt one stored tensor's shape → load must fail shape validation
  naf::save_npy(Tensor3(2, 2, 2), dir + "/pixel.0.weight.npy");
  REQUIRE_THROWS_AS(naf::load_checkpoint(dir), naf::ShapeError);
  REQUIRE_THROWS_AS(naf::load_checkpoint(dir + "_missing"), naf::IoError);
}
