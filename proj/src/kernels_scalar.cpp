#include <cmath>
#include <cstring>

#include "fmx/kernels.hpp"

namespace fmx::kern::scalar {

void gemm(int m, int n, int k, float alpha, const float* a, int lda, const float* b, int ldb,
          float beta, float* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    float* crow = c + static_cast<long>(i) * ldc;
    if (beta == 0.0f) {
      std::memset(crow, 0, sizeof(float) * n);
    } else if (beta != 1.0f) {
      for (int j = 0; j < n; ++j) crow[j] *= beta;
    }
    const float* arow = a + static_cast<long>(i) * lda;
    for (int p = 0; p < k; ++p) {
      const float ap = alpha * arow[p];
      const float* brow = b + static_cast<long>(p) * ldb;
      for (int j = 0; j < n; ++j) crow[j] += ap * brow[j];
    }
  }
}

void gemm_nt(int m, int n, int k, float alpha, const float* a, int lda, const float* b, int ldb,
             float beta, float* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    float* crow = c + static_cast<long>(i) * ldc;
    const float* arow = a + static_cast<long>(i) * lda;
    for (int j = 0; j < n; ++j) {
      const float* brow = b + static_cast<long>(j) * ldb;
      float acc = 0.0f;
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] = alpha * acc + (beta == 0.0f ? 0.0f : beta * crow[j]);
    }
  }
}

float dot(const float* a, const float* b, int n) {
  float acc = 0.0f;
  for (int i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

float sum(const float* a, int n) {
  float acc = 0.0f;
  for (int i = 0; i < n; ++i) acc += a[i];
  return acc;
}

float sumsq(const float* a, int n) {
  float acc = 0.0f;
  for (int i = 0; i < n; ++i) acc += a[i] * a[i];
  return acc;
}

void axpy(int n, float alpha, const float* x, float* y) {
  for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale(int n, float alpha, float* x) {
  for (int i = 0; i < n; ++i) x[i] *= alpha;
}

void relu_forward(int n, const float* x, float* y) {
  for (int i = 0; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward(int n, const float* x, const float* dy, float* dx) {
  for (int i = 0; i < n; ++i) dx[i] = x[i] > 0.0f ? dy[i] : 0.0f;
}

void adam_step(int n, float* w, const float* g, float* m, float* v, float lr, float beta1,
               float beta2, float eps, float bias_corr1, float bias_corr2) {
  for (int i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0f - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0f - beta2) * g[i] * g[i];
    const float mhat = m[i] / bias_corr1;
    const float vhat = v[i] / bias_corr2;
    w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace fmx::kern::scalar
