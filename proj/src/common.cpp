#include "fmx/common.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

namespace fmx {

std::string to_hex(std::uint64_t x) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[x & 0xf];
    x >>= 4;
  }
  return s;
}

namespace {
std::atomic<int> g_max_threads{0};  // 0 = hardware concurrency
}

void set_max_threads(int n) { g_max_threads.store(n); }

int max_threads() {
  int n = g_max_threads.load();
  if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
  return std::max(1, n);
}

void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& chunk_fn) {
  if (n <= 0) return;
  const int threads = static_cast<int>(std::min<std::int64_t>(max_threads(), n));
  if (threads == 1) {
    chunk_fn(0, n);
    return;
  }
  const std::int64_t step = (n + threads - 1) / threads;
  std::vector<std::thread> pool;
  pool.reserve(threads - 1);
  for (int t = 1; t < threads; ++t) {
    const std::int64_t lo = t * step;
    const std::int64_t hi = std::min<std::int64_t>(n, lo + step);
    if (lo >= hi) break;
    pool.emplace_back(chunk_fn, lo, hi);
  }
  chunk_fn(0, std::min<std::int64_t>(n, step));
  for (auto& th : pool) th.join();
}

}  // namespace fmx
