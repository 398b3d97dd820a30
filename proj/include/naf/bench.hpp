#pragma once

#include <sys/resource.h>

#include <algorithm>
#include <chrono>
#include <ostream>
#include <string>
#include <vector>

#include "naf/attention.hpp"
#include "naf/common.hpp"
#include "naf/rng.hpp"

namespace naf {

struct BenchRow {
  int h_lr = 0, w_lr = 0;
  int h_hr = 0, w_hr = 0;
  double median_ms = 0.0;
  double peak_rss_mb = 0.0;
};

inline double peak_rss_mb() {
  rusage ru{};
  getrusage(RUSAGE_SELF, &ru);
  return static_cast<double>(ru.ru_maxrss) / 1024.0;  // ru_maxrss is KiB on Linux
}

namespace detail {

template <typename Fn>
double median_ms_of(Fn&& fn, int repeats) {
  fn();  // warm-up, discarded
  std::vector<double> times;
  times.reserve(static_cast<size_t>(repeats));
  for (int i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  std::sort(times.begin(), times.end());
  const size_t n = times.size();
  return n % 2 == 1 ? times[n / 2] : 0.5 * (times[n / 2 - 1] + times[n / 2]);
}

}  // namespace detail

// Times naf_forward on random inputs for each LR grid size. The monotone
// time-vs-output-area expectation is a soft check: violations are reported on
// the given warning stream, not fatal (timing noise is real).
inline std::vector<BenchRow> bench_throughput(const AttnConfig& cfg, const EncoderParams& enc,
                                              const RopeConfig& rope, const std::vector<int>& sizes,
                                              int repeats, int feature_dim, uint64_t seed,
                                              std::ostream* warn = nullptr) {
  if (repeats < 5) throw ConfigError("bench needs repeats >= 5");
  if (sizes.empty()) throw ConfigError("bench needs at least one size");

  std::vector<BenchRow> rows;
  Rng rng(seed);
  for (int n : sizes) {
    if (n < 1) throw ConfigError("bench sizes must be >= 1");
    Tensor3 f_lr(n, n, feature_dim);
    for (auto& v : f_lr.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    Tensor3 img(n * cfg.scale, n * cfg.scale, 3);
    for (auto& v : img.data) v = static_cast<float>(rng.uniform());

    BenchRow row;
    row.h_lr = row.w_lr = n;
    row.h_hr = row.w_hr = n * cfg.scale;
    row.median_ms = detail::median_ms_of(
        [&] {
          volatile float sink = naf_forward(f_lr, img, enc, rope, cfg).data[0];
          (void)sink;
        },
        repeats);
    row.peak_rss_mb = peak_rss_mb();
    rows.push_back(row);
  }

  if (warn) {
    for (size_t i = 1; i < rows.size(); ++i) {
      const double area_prev = static_cast<double>(rows[i - 1].h_hr) * rows[i - 1].w_hr;
      const double area = static_cast<double>(rows[i].h_hr) * rows[i].w_hr;
      if (area >= area_prev && rows[i].median_ms < rows[i - 1].median_ms)
        *warn << "warning: non-monotone timing between sizes " << rows[i - 1].h_lr << " and "
              << rows[i].h_lr << "\n";
    }
  }
  return rows;
}

inline void write_bench_csv(const std::vector<BenchRow>& rows, std::ostream& out) {
  out << "h_lr,w_lr,h_hr,w_hr,median_ms,peak_rss_mb\n";
  for (const auto& r : rows)
    out << r.h_lr << "," << r.w_lr << "," << r.h_hr << "," << r.w_hr << "," << r.median_ms << ","
        << r.peak_rss_mb << "\n";
}

}  // namespace naf
