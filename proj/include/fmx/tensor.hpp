#pragma once

#include <cstddef>
#include <vector>

namespace fmx {

// Dense NCHW float tensor.
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<float> v;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_), v(static_cast<size_t>(n_) * c_ * h_ * w_, 0.0f) {}

  size_t size() const { return v.size(); }
  long plane() const { return static_cast<long>(h) * w; }
  long sample_size() const { return static_cast<long>(c) * h * w; }

  float* data() { return v.data(); }
  const float* data() const { return v.data(); }

  float* at(int ni, int ci) { return v.data() + (static_cast<long>(ni) * c + ci) * plane(); }
  const float* at(int ni, int ci) const {
    return v.data() + (static_cast<long>(ni) * c + ci) * plane();
  }

  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
};

}  // namespace fmx
