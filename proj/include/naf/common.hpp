#pragma once

#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace naf {

inline constexpr const char* kVersion = "0.1.0";

// Error taxonomy. Everything derives from std::runtime_error so callers can
// catch broadly; the distinct types let tests pin the failure class.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error("format error: " + msg) {}
};
struct UnsupportedTensorError : std::runtime_error {
  explicit UnsupportedTensorError(const std::string& msg)
      : std::runtime_error("unsupported tensor: " + msg) {}
};
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};
struct BoundsError : std::runtime_error {
  explicit BoundsError(const std::string& msg) : std::runtime_error("bounds error: " + msg) {}
};
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error("i/o error: " + msg) {}
};

namespace detail {
inline int& thread_count_ref() {
  static int n = 1;
  return n;
}
}  // namespace detail

// Worker cap for the data-parallel loops. Results are bit-identical for any
// value because parallelism only ever partitions disjoint output elements.
inline void set_num_threads(int n) {
  detail::thread_count_ref() = n < 1 ? 1 : n;
}
inline int num_threads() { return detail::thread_count_ref(); }

// Runs fn(i) for i in [0, count). Each index must write only its own outputs.
template <typename Fn>
void parallel_for(int count, Fn&& fn) {
  const int workers = std::min(num_threads(), count);
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  const int chunk = (count + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const int lo = w * chunk;
    const int hi = std::min(count, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (int i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace naf
