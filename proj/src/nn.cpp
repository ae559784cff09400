#include "fmx/nn.hpp"

#include <cmath>
#include <cstring>

#include "fmx/common.hpp"
#include "fmx/kernels.hpp"

namespace fmx::nn {

namespace {
constexpr float kBnEps = 1e-5f;
constexpr float kBnMomentum = 0.1f;

void add_bias(Tensor& y, const float* b) {
  for (int ni = 0; ni < y.n; ++ni)
    for (int ci = 0; ci < y.c; ++ci) {
      float* plane = y.at(ni, ci);
      const float bv = b[ci];
      for (long i = 0; i < y.plane(); ++i) plane[i] += bv;
    }
}

void accumulate_bias_grad(const Tensor& dy, float* db) {
  for (int ni = 0; ni < dy.n; ++ni)
    for (int ci = 0; ci < dy.c; ++ci) db[ci] += kern::sum(dy.at(ni, ci), static_cast<int>(dy.plane()));
}

// W stored [rows, cols] row-major -> out [cols, rows]
void transpose(const float* w, int rows, int cols, float* out) {
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out[static_cast<long>(c) * rows + r] = w[static_cast<long>(r) * cols + c];
}

}  // namespace

int conv_out_dim(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

void im2col(const float* img, int c, int h, int w, int kh, int kw, int stride, int pad,
            float* col) {
  const int ho = conv_out_dim(h, kh, stride, pad);
  const int wo = conv_out_dim(w, kw, stride, pad);
  long row = 0;
  for (int ci = 0; ci < c; ++ci) {
    const float* chan = img + static_cast<long>(ci) * h * w;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx, ++row) {
        float* dst = col + row * static_cast<long>(ho) * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int y = oy * stride - pad + ky;
          float* drow = dst + static_cast<long>(oy) * wo;
          if (y < 0 || y >= h) {
            std::memset(drow, 0, sizeof(float) * wo);
            continue;
          }
          const float* srow = chan + static_cast<long>(y) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int x = ox * stride - pad + kx;
            drow[ox] = (x >= 0 && x < w) ? srow[x] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im(const float* col, int c, int h, int w, int kh, int kw, int stride, int pad,
            float* img) {
  const int ho = conv_out_dim(h, kh, stride, pad);
  const int wo = conv_out_dim(w, kw, stride, pad);
  long row = 0;
  for (int ci = 0; ci < c; ++ci) {
    float* chan = img + static_cast<long>(ci) * h * w;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx, ++row) {
        const float* src = col + row * static_cast<long>(ho) * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int y = oy * stride - pad + ky;
          if (y < 0 || y >= h) continue;
          float* drow = chan + static_cast<long>(y) * w;
          const float* srow = src + static_cast<long>(oy) * wo;
          for (int ox = 0; ox < wo; ++ox) {
            const int x = ox * stride - pad + kx;
            if (x >= 0 && x < w) drow[x] += srow[ox];
          }
        }
      }
    }
  }
}

Conv2d::Conv2d(ModelParams* p, const std::string& prefix, int cin, int cout, int k, int stride,
               int pad)
    : p_(p), cin_(cin), cout_(cout), k_(k), stride_(stride), pad_(pad) {
  wi_ = p->find(prefix + ".w");
  if (wi_ < 0) wi_ = p->add(prefix + ".w", {cout, cin, k, k}, true);
  bi_ = p->find(prefix + ".b");
  if (bi_ < 0) bi_ = p->add(prefix + ".b", {cout}, true);
}

Tensor Conv2d::forward(const Tensor& x) {
  x_ = x;
  const int ho = conv_out_dim(x.h, k_, stride_, pad_);
  const int wo = conv_out_dim(x.w, k_, stride_, pad_);
  const int kdim = cin_ * k_ * k_;
  const long hw = static_cast<long>(ho) * wo;
  Tensor y(x.n, cout_, ho, wo);
  std::vector<float> col(static_cast<size_t>(kdim) * hw);
  const float* w = p_->entries[wi_].value.data();
  for (int ni = 0; ni < x.n; ++ni) {
    im2col(x.at(ni, 0), cin_, x.h, x.w, k_, k_, stride_, pad_, col.data());
    kern::gemm(cout_, static_cast<int>(hw), kdim, 1.0f, w, kdim, col.data(),
               static_cast<int>(hw), 0.0f, y.at(ni, 0), static_cast<int>(hw));
  }
  add_bias(y, p_->entries[bi_].value.data());
  return y;
}

Tensor Conv2d::backward(const Tensor& dy) {
  const int kdim = cin_ * k_ * k_;
  const long hw = static_cast<long>(dy.h) * dy.w;
  auto& we = p_->entries[wi_];
  auto& be = p_->entries[bi_];
  accumulate_bias_grad(dy, be.grad.data());

  std::vector<float> col(static_cast<size_t>(kdim) * hw);
  std::vector<float> wt(static_cast<size_t>(kdim) * cout_);
  transpose(we.value.data(), cout_, kdim, wt.data());
  std::vector<float> dcol(static_cast<size_t>(kdim) * hw);
  Tensor dx(x_.n, cin_, x_.h, x_.w);
  for (int ni = 0; ni < x_.n; ++ni) {
    im2col(x_.at(ni, 0), cin_, x_.h, x_.w, k_, k_, stride_, pad_, col.data());
    // dW[cout, kdim] += dY[cout, hw] * col[kdim, hw]^T
    kern::gemm_nt(cout_, kdim, static_cast<int>(hw), 1.0f, dy.at(ni, 0), static_cast<int>(hw),
                  col.data(), static_cast<int>(hw), 1.0f, we.grad.data(), kdim);
    // dcol[kdim, hw] = W^T[kdim, cout] * dY[cout, hw]
    kern::gemm(kdim, static_cast<int>(hw), cout_, 1.0f, wt.data(), cout_, dy.at(ni, 0),
               static_cast<int>(hw), 0.0f, dcol.data(), static_cast<int>(hw));
    col2im(dcol.data(), cin_, x_.h, x_.w, k_, k_, stride_, pad_, dx.at(ni, 0));
  }
  return dx;
}

ConvTranspose2d::ConvTranspose2d(ModelParams* p, const std::string& prefix, int cin, int cout,
                                 int k, int stride, int pad, int outpad)
    : p_(p), cin_(cin), cout_(cout), k_(k), stride_(stride), pad_(pad), outpad_(outpad) {
  wi_ = p->find(prefix + ".w");
  if (wi_ < 0) wi_ = p->add(prefix + ".w", {cin, cout, k, k}, true);
  bi_ = p->find(prefix + ".b");
  if (bi_ < 0) bi_ = p->add(prefix + ".b", {cout}, true);
}

Tensor ConvTranspose2d::forward(const Tensor& x) {
  x_ = x;
  const int ho = (x.h - 1) * stride_ - 2 * pad_ + k_ + outpad_;
  const int wo = (x.w - 1) * stride_ - 2 * pad_ + k_ + outpad_;
  const int kdim = cout_ * k_ * k_;
  const long hw_in = static_cast<long>(x.h) * x.w;
  Tensor y(x.n, cout_, ho, wo);

  // W[cin, kdim] -> W^T[kdim, cin]
  std::vector<float> wt(static_cast<size_t>(kdim) * cin_);
  transpose(p_->entries[wi_].value.data(), cin_, kdim, wt.data());
  std::vector<float> col(static_cast<size_t>(kdim) * hw_in);
  for (int ni = 0; ni < x.n; ++ni) {
    kern::gemm(kdim, static_cast<int>(hw_in), cin_, 1.0f, wt.data(), cin_, x.at(ni, 0),
               static_cast<int>(hw_in), 0.0f, col.data(), static_cast<int>(hw_in));
    col2im(col.data(), cout_, ho, wo, k_, k_, stride_, pad_, y.at(ni, 0));
  }
  add_bias(y, p_->entries[bi_].value.data());
  return y;
}

Tensor ConvTranspose2d::backward(const Tensor& dy) {
  const int kdim = cout_ * k_ * k_;
  const long hw_in = static_cast<long>(x_.h) * x_.w;
  auto& we = p_->entries[wi_];
  auto& be = p_->entries[bi_];
  accumulate_bias_grad(dy, be.grad.data());

  std::vector<float> dcol(static_cast<size_t>(kdim) * hw_in);
  Tensor dx(x_.n, cin_, x_.h, x_.w);
  for (int ni = 0; ni < x_.n; ++ni) {
    im2col(dy.at(ni, 0), cout_, dy.h, dy.w, k_, k_, stride_, pad_, dcol.data());
    // dW[cin, kdim] += X[cin, hw_in] * dcol[kdim, hw_in]^T
    kern::gemm_nt(cin_, kdim, static_cast<int>(hw_in), 1.0f, x_.at(ni, 0),
                  static_cast<int>(hw_in), dcol.data(), static_cast<int>(hw_in), 1.0f,
                  we.grad.data(), kdim);
    // dX[cin, hw_in] = W[cin, kdim] * dcol[kdim, hw_in]
    kern::gemm(cin_, static_cast<int>(hw_in), kdim, 1.0f, we.value.data(), kdim, dcol.data(),
               static_cast<int>(hw_in), 0.0f, dx.at(ni, 0), static_cast<int>(hw_in));
  }
  return dx;
}

BatchNorm2d::BatchNorm2d(ModelParams* p, const std::string& prefix, int channels)
    : p_(p), channels_(channels) {
  gi_ = p->find(prefix + ".gamma");
  if (gi_ < 0) gi_ = p->add(prefix + ".gamma", {channels}, true);
  bi_ = p->find(prefix + ".beta");
  if (bi_ < 0) bi_ = p->add(prefix + ".beta", {channels}, true);
  rmi_ = p->find(prefix + ".running_mean");
  if (rmi_ < 0) rmi_ = p->add(prefix + ".running_mean", {channels}, false, true);
  rvi_ = p->find(prefix + ".running_var");
  if (rvi_ < 0) rvi_ = p->add(prefix + ".running_var", {channels}, false, true);
}

bool BatchNorm2d::frozen() const { return !p_->entries[gi_].trainable; }

Tensor BatchNorm2d::forward(const Tensor& x, Mode mode) {
  x_ = x;
  mu_.assign(channels_, 0.0f);
  var_.assign(channels_, 0.0f);
  const long plane = x.plane();
  const long cnt = static_cast<long>(x.n) * plane;
  used_batch_stats_ = (mode == Mode::train) && !frozen();

  auto& rm = p_->entries[rmi_].value;
  auto& rv = p_->entries[rvi_].value;
  if (used_batch_stats_) {
    for (int ci = 0; ci < channels_; ++ci) {
      float s = 0.0f, ss = 0.0f;
      for (int ni = 0; ni < x.n; ++ni) {
        const float* pl = x.at(ni, ci);
        s += kern::sum(pl, static_cast<int>(plane));
        ss += kern::sumsq(pl, static_cast<int>(plane));
      }
      const float m = s / static_cast<float>(cnt);
      float v = ss / static_cast<float>(cnt) - m * m;
      if (v < 0.0f) v = 0.0f;
      mu_[ci] = m;
      var_[ci] = v;
      const float unbiased = cnt > 1 ? v * static_cast<float>(cnt) / static_cast<float>(cnt - 1) : v;
      rm[ci] = (1.0f - kBnMomentum) * rm[ci] + kBnMomentum * m;
      rv[ci] = (1.0f - kBnMomentum) * rv[ci] + kBnMomentum * unbiased;
    }
  } else {
    for (int ci = 0; ci < channels_; ++ci) {
      mu_[ci] = rm[ci];
      var_[ci] = rv[ci];
    }
  }

  const float* g = p_->entries[gi_].value.data();
  const float* b = p_->entries[bi_].value.data();
  Tensor y(x.n, x.c, x.h, x.w);
  for (int ci = 0; ci < channels_; ++ci) {
    const float invstd = 1.0f / std::sqrt(var_[ci] + kBnEps);
    const float scale = g[ci] * invstd;
    const float shift = b[ci] - scale * mu_[ci];
    for (int ni = 0; ni < x.n; ++ni) {
      const float* src = x.at(ni, ci);
      float* dst = y.at(ni, ci);
      for (long i = 0; i < plane; ++i) dst[i] = scale * src[i] + shift;
    }
  }
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& dy) {
  const long plane = dy.plane();
  const long cnt = static_cast<long>(dy.n) * plane;
  const float* g = p_->entries[gi_].value.data();
  auto& dgamma = p_->entries[gi_].grad;
  auto& dbeta = p_->entries[bi_].grad;

  Tensor dx(dy.n, dy.c, dy.h, dy.w);
  for (int ci = 0; ci < channels_; ++ci) {
    const float invstd = 1.0f / std::sqrt(var_[ci] + kBnEps);
    // reductions over the channel
    float sum_dy = 0.0f, sum_dy_xhat = 0.0f;
    for (int ni = 0; ni < dy.n; ++ni) {
      const float* d = dy.at(ni, ci);
      const float* xv = x_.at(ni, ci);
      sum_dy += kern::sum(d, static_cast<int>(plane));
      for (long i = 0; i < plane; ++i) sum_dy_xhat += d[i] * (xv[i] - mu_[ci]) * invstd;
    }
    dgamma[ci] += sum_dy_xhat;
    dbeta[ci] += sum_dy;

    if (used_batch_stats_) {
      const float m = static_cast<float>(cnt);
      const float k1 = g[ci] * invstd / m;
      for (int ni = 0; ni < dy.n; ++ni) {
        const float* d = dy.at(ni, ci);
        const float* xv = x_.at(ni, ci);
        float* o = dx.at(ni, ci);
        for (long i = 0; i < plane; ++i) {
          const float xhat = (xv[i] - mu_[ci]) * invstd;
          o[i] = k1 * (m * d[i] - sum_dy - xhat * sum_dy_xhat);
        }
      }
    } else {
      const float scale = g[ci] * invstd;
      for (int ni = 0; ni < dy.n; ++ni) {
        const float* d = dy.at(ni, ci);
        float* o = dx.at(ni, ci);
        for (long i = 0; i < plane; ++i) o[i] = scale * d[i];
      }
    }
  }
  return dx;
}

Tensor MaxPool2d::forward(const Tensor& x) {
  n_ = x.n;
  c_ = x.c;
  h_ = x.h;
  w_ = x.w;
  const int ho = x.h / 2, wo = x.w / 2;
  Tensor y(x.n, x.c, ho, wo);
  argmax_.assign(y.size(), 0);
  long oi = 0;
  for (int ni = 0; ni < x.n; ++ni)
    for (int ci = 0; ci < x.c; ++ci) {
      const float* pl = x.at(ni, ci);
      float* out = y.at(ni, ci);
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox, ++oi) {
          const int y0 = oy * 2, x0 = ox * 2;
          int best = y0 * x.w + x0;
          float bv = pl[best];
          const int cand[3] = {y0 * x.w + x0 + 1, (y0 + 1) * x.w + x0, (y0 + 1) * x.w + x0 + 1};
          for (int cc : cand)
            if (pl[cc] > bv) {
              bv = pl[cc];
              best = cc;
            }
          out[static_cast<long>(oy) * wo + ox] = bv;
          argmax_[oi] = best;
        }
    }
  return y;
}

Tensor MaxPool2d::backward(const Tensor& dy) {
  Tensor dx(n_, c_, h_, w_);
  long oi = 0;
  for (int ni = 0; ni < dy.n; ++ni)
    for (int ci = 0; ci < dy.c; ++ci) {
      float* out = dx.at(ni, ci);
      const float* d = dy.at(ni, ci);
      for (long i = 0; i < dy.plane(); ++i, ++oi) out[argmax_[oi]] += d[i];
    }
  return dx;
}

Tensor ReLU::forward(const Tensor& x) {
  y_ = Tensor(x.n, x.c, x.h, x.w);
  kern::relu_forward(static_cast<int>(x.size()), x.data(), y_.data());
  return y_;
}

Tensor ReLU::backward(const Tensor& dy) {
  Tensor dx(dy.n, dy.c, dy.h, dy.w);
  kern::relu_backward(static_cast<int>(dy.size()), y_.data(), dy.data(), dx.data());
  return dx;
}

Tensor Tanh::forward(const Tensor& x) {
  y_ = Tensor(x.n, x.c, x.h, x.w);
  for (size_t i = 0; i < x.size(); ++i) y_.v[i] = std::tanh(x.v[i]);
  return y_;
}

Tensor Tanh::backward(const Tensor& dy) {
  Tensor dx(dy.n, dy.c, dy.h, dy.w);
  for (size_t i = 0; i < dy.size(); ++i) dx.v[i] = dy.v[i] * (1.0f - y_.v[i] * y_.v[i]);
  return dx;
}

Tensor Sigmoid::forward(const Tensor& x) {
  y_ = Tensor(x.n, x.c, x.h, x.w);
  for (size_t i = 0; i < x.size(); ++i) y_.v[i] = 1.0f / (1.0f + std::exp(-x.v[i]));
  return y_;
}

Tensor Sigmoid::backward(const Tensor& dy) {
  Tensor dx(dy.n, dy.c, dy.h, dy.w);
  for (size_t i = 0; i < dy.size(); ++i) dx.v[i] = dy.v[i] * y_.v[i] * (1.0f - y_.v[i]);
  return dx;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  Tensor y(a.n, a.c + b.c, a.h, a.w);
  const size_t pa = a.plane() * a.c, pb = b.plane() * b.c;
  for (int ni = 0; ni < a.n; ++ni) {
    std::memcpy(y.at(ni, 0), a.at(ni, 0), pa * sizeof(float));
    std::memcpy(y.at(ni, a.c), b.at(ni, 0), pb * sizeof(float));
  }
  return y;
}

void split_channels(const Tensor& d, int ca, Tensor& da, Tensor& db) {
  da = Tensor(d.n, ca, d.h, d.w);
  db = Tensor(d.n, d.c - ca, d.h, d.w);
  for (int ni = 0; ni < d.n; ++ni) {
    std::memcpy(da.at(ni, 0), d.at(ni, 0), da.sample_size() * sizeof(float));
    std::memcpy(db.at(ni, 0), d.at(ni, ca), db.sample_size() * sizeof(float));
  }
}

}  // namespace fmx::nn
