#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fmx {

// Error taxonomy. The CLI maps these onto distinct exit codes.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct RunError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Row-major 2D grid.
template <typename T>
struct Raster {
  int rows = 0;
  int cols = 0;
  std::vector<T> v;

  Raster() = default;
  Raster(int r, int c, T fill = T{}) : rows(r), cols(c), v(static_cast<size_t>(r) * c, fill) {}

  T& operator()(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  const T& operator()(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
  size_t size() const { return v.size(); }
  bool same_shape(const Raster& o) const { return rows == o.rows && cols == o.cols; }
};

inline constexpr std::uint64_t kFnvOffset = 1469598103934665603ull;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ull;

inline std::uint64_t fnv1a64(const void* data, size_t n, std::uint64_t h = kFnvOffset) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = kFnvOffset) {
  return fnv1a64(s.data(), s.size(), h);
}

std::string to_hex(std::uint64_t x);

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Deterministic RNG with named substreams, so independently seeded pieces of a
// run (init, shuffling, masks, ...) do not interact.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), eng_(splitmix64(seed)) {}

  Rng derive(std::string_view tag) const { return Rng(splitmix64(seed_ ^ fnv1a64(tag))); }
  Rng derive(std::string_view tag, std::uint64_t idx) const {
    return Rng(splitmix64(splitmix64(seed_ ^ fnv1a64(tag)) + idx));
  }

  std::uint64_t seed() const { return seed_; }
  std::mt19937_64& engine() { return eng_; }

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(eng_);
  }
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {  // inclusive
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(eng_);
  }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(eng_);
  }
  double gamma(double shape, double scale) {
    return std::gamma_distribution<double>(shape, scale)(eng_);
  }

  template <typename T>
  void shuffle(std::vector<T>& xs) {
    std::shuffle(xs.begin(), xs.end(), eng_);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 eng_;
};

// Static partition of [0, n) over worker threads. Each index is touched by
// exactly one thread, so results are bitwise identical for any thread count.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& chunk_fn);

void set_max_threads(int n);
int max_threads();

}  // namespace fmx
