#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "naf/filters.hpp"
#include "test_util.hpp"

using naf::BilateralConfig;
using naf::Tensor3;
using naf_test::max_abs_diff;
using naf_test::random_tensor;

namespace {

// Independent spatial Gaussian filter (truncated window, renormalized).
Tensor3 gaussian_oracle(const Tensor3& signal, double sigma_s, int radius) {
  Tensor3 out(signal.height, signal.width, signal.channels);
  for (int pr = 0; pr < signal.height; ++pr)
    for (int pc = 0; pc < signal.width; ++pc)
      for (int ch = 0; ch < signal.channels; ++ch) {
        double z = 0.0, acc = 0.0;
        for (int qr = std::max(0, pr - radius); qr <= std::min(signal.height - 1, pr + radius); ++qr)
          for (int qc = std::max(0, pc - radius); qc <= std::min(signal.width - 1, pc + radius);
               ++qc) {
            const double dy = pr - qr, dx = pc - qc;
            const double w = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma_s * sigma_s));
            z += w;
            acc += w * signal.at(qr, qc, ch);
          }
        out.at(pr, pc, ch) = static_cast<float>(acc / z);
      }
  return out;
}

// Literal evaluation of the JBU weight formula.
Tensor3 jbu_oracle(const Tensor3& f_lr, const Tensor3& g_hr, int s, const BilateralConfig& cfg) {
  const int half = (s - 1) / 2;
  Tensor3 out(g_hr.height, g_hr.width, f_lr.channels);
  for (int pr = 0; pr < g_hr.height; ++pr)
    for (int pc = 0; pc < g_hr.width; ++pc) {
      const int ar = pr / s, ac = pc / s;
      double z = 0.0;
      std::vector<double> acc(static_cast<size_t>(f_lr.channels), 0.0);
      for (int qr = std::max(0, ar - cfg.radius); qr <= std::min(f_lr.height - 1, ar + cfg.radius);
           ++qr)
        for (int qc = std::max(0, ac - cfg.radius);
             qc <= std::min(f_lr.width - 1, ac + cfg.radius); ++qc) {
          double range = 0.0;
          for (int ch = 0; ch < g_hr.channels; ++ch) {
            const double diff =
                g_hr.at(pr, pc, ch) - g_hr.at(qr * s + half, qc * s + half, ch);
            range += diff * diff;
          }
          const double dy = static_cast<double>(pr) / s - qr;
          const double dx = static_cast<double>(pc) / s - qc;
          const double w = std::exp(-(dy * dy + dx * dx) / (2 * cfg.sigma_s * cfg.sigma_s) -
                                    range / (2 * cfg.sigma_r * cfg.sigma_r));
          z += w;
          for (int ch = 0; ch < f_lr.channels; ++ch)
            acc[static_cast<size_t>(ch)] += w * f_lr.at(qr, qc, ch);
        }
      for (int ch = 0; ch < f_lr.channels; ++ch)
        out.at(pr, pc, ch) = static_cast<float>(acc[static_cast<size_t>(ch)] / z);
    }
  return out;
}

}  // namespace

TEST_CASE("jbf basics") {
  // constant signal passes through bit-exactly
  const Tensor3 guidance = random_tensor(6, 6, 3, 3, 0.0, 1.0);
  const Tensor3 constant(6, 6, 2, 0.37f);
  const Tensor3 out = naf::jbf(constant, guidance, {1.0, 0.2, 2});
  for (float v : out.data) REQUIRE(v == 0.37f);

  // huge spatial sigma + constant guidance → box mean
  const Tensor3 signal = random_tensor(6, 6, 2, 5);
  const Tensor3 flat(6, 6, 3, 0.5f);
  const Tensor3 boxed = naf::jbf(signal, flat, {1e9, 0.2, 2});
  for (int pr = 0; pr < 6; ++pr)
    for (int pc = 0; pc < 6; ++pc)
      for (int ch = 0; ch < 2; ++ch) {
        double acc = 0.0;
        int n = 0;
        for (int qr = std::max(0, pr - 2); qr <= std::min(5, pr + 2); ++qr)
          for (int qc = std::max(0, pc - 2); qc <= std::min(5, pc + 2); ++qc) {
            acc += signal.at(qr, qc, ch);
            ++n;
          }
        REQUIRE_THAT(boxed.at(pr, pc, ch), Catch::Matchers::WithinAbs(acc / n, 1e-5));
      }

  REQUIRE_THROWS_AS(naf::jbf(signal, Tensor3(3, 3, 1), {1, 1, 1}), naf::ShapeError);
  REQUIRE_THROWS_AS(naf::jbf(signal, flat, {0.0, 1, 1}), naf::ConfigError);
}

TEST_CASE("jbf impulse response is the truncated normalized gaussian") {
  Tensor3 impulse(5, 5, 1, 0.0f);
  impulse.at(2, 2, 0) = 1.0f;
  const Tensor3 flat(5, 5, 1, 0.25f);
  const Tensor3 out = naf::jbf(impulse, flat, {1.0, 1.0, 2});
  for (int pr = 0; pr < 5; ++pr)
    for (int pc = 0; pc < 5; ++pc) {
      double z = 0.0;
      for (int qr = std::max(0, pr - 2); qr <= std::min(4, pr + 2); ++qr)
        for (int qc = std::max(0, pc - 2); qc <= std::min(4, pc + 2); ++qc) {
          const double dy = pr - qr, dx = pc - qc;
          z += std::exp(-(dy * dy + dx * dx) / 2.0);
        }
      const double dy = pr - 2, dx = pc - 2;
      const double expect =
          (std::abs(dy) <= 2 && std::abs(dx) <= 2) ? std::exp(-(dy * dy + dx * dx) / 2.0) / z : 0.0;
      REQUIRE_THAT(out.at(pr, pc, 0), Catch::Matchers::WithinAbs(expect, 1e-6));
    }
}

TEST_CASE("jbf converges to the spatial gaussian as sigma_r grows") {
  const Tensor3 signal = random_tensor(8, 8, 2, 7);
  const Tensor3 guidance = random_tensor(8, 8, 3, 9, 0.0, 1.0);
  const Tensor3 a = naf::jbf(signal, guidance, {1.5, 1e6, 3});
  const Tensor3 b = gaussian_oracle(signal, 1.5, 3);
  REQUIRE(max_abs_diff(a, b) < 1e-4);
}

TEST_CASE("jbf mirror symmetry") {
  const Tensor3 signal = random_tensor(5, 7, 2, 11);
  const Tensor3 guidance = random_tensor(5, 7, 3, 13, 0.0, 1.0);
  auto mirror = [](const Tensor3& t) {
    Tensor3 m(t.height, t.width, t.channels);
    for (int r = 0; r < t.height; ++r)
      for (int c = 0; c < t.width; ++c)
        for (int ch = 0; ch < t.channels; ++ch) m.at(r, c, ch) = t.at(r, t.width - 1 - c, ch);
    return m;
  };
  const Tensor3 direct = mirror(naf::jbf(signal, guidance, {1.0, 0.3, 2}));
  const Tensor3 mirrored = naf::jbf(mirror(signal), mirror(guidance), {1.0, 0.3, 2});
  REQUIRE(direct.data == mirrored.data);
}

TEST_CASE("jbu identity, constants and oracle") {
  const Tensor3 f = random_tensor(4, 4, 2, 17);
  const Tensor3 g_same = random_tensor(4, 4, 3, 19, 0.0, 1.0);
  const Tensor3 ident = naf::jbu(f, g_same, 1, {1.0, 0.2, 0});
  REQUIRE(ident.data == f.data);

  const Tensor3 g_hr = random_tensor(8, 8, 3, 23, 0.0, 1.0);
  const Tensor3 constant(4, 4, 2, -1.25f);
  for (float v : naf::jbu(constant, g_hr, 2, {1.0, 0.2, 2}).data) REQUIRE(v == -1.25f);

  const Tensor3 f2 = random_tensor(3, 3, 2, 29);
  const Tensor3 g2 = random_tensor(6, 6, 3, 31, 0.0, 1.0);
  const BilateralConfig cfg{1.2, 0.25, 2};
  REQUIRE(max_abs_diff(naf::jbu(f2, g2, 2, cfg), jbu_oracle(f2, g2, 2, cfg)) < 1e-5);

  REQUIRE_THROWS_AS(naf::jbu(f2, Tensor3(5, 6, 3), 2, cfg), naf::ShapeError);
}

TEST_CASE("filters produce convex combinations") {
  const Tensor3 f = random_tensor(4, 4, 2, 37);
  const Tensor3 g = random_tensor(8, 8, 3, 41, 0.0, 1.0);
  const Tensor3 out = naf::jbu(f, g, 2, {0.8, 0.15, 1});
  float lo = f.data[0], hi = f.data[0];
  for (float v : f.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  for (float v : out.data) {
    REQUIRE(v >= lo - 1e-6f);
    REQUIRE(v <= hi + 1e-6f);
  }
}
