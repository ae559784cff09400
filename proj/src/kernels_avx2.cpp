// AVX2+FMA kernel variants. This translation unit is compiled with
// -mavx2 -mfma; it must only be reached through the dispatch layer after a
// runtime cpuid check.

#include "fmx/kernels.hpp"

#if defined(FMX_HAVE_AVX2_BUILD)

#include <immintrin.h>

#include <cmath>
#include <cstring>

namespace fmx::kern::avx2 {

namespace {

inline float hsum(__m256 x) {
  __m128 lo = _mm256_castps256_ps128(x);
  __m128 hi = _mm256_extractf128_ps(x, 1);
  lo = _mm_add_ps(lo, hi);
  lo = _mm_hadd_ps(lo, lo);
  lo = _mm_hadd_ps(lo, lo);
  return _mm_cvtss_f32(lo);
}

// 4x16 register-blocked panel: C[i..i+4, j..j+16] += alpha * A * B
inline void panel_4x16(int k, float alpha, const float* a, int lda, const float* b, int ldb,
                       float* c, int ldc) {
  __m256 acc00 = _mm256_loadu_ps(c + 0 * ldc);
  __m256 acc01 = _mm256_loadu_ps(c + 0 * ldc + 8);
  __m256 acc10 = _mm256_loadu_ps(c + 1 * ldc);
  __m256 acc11 = _mm256_loadu_ps(c + 1 * ldc + 8);
  __m256 acc20 = _mm256_loadu_ps(c + 2 * ldc);
  __m256 acc21 = _mm256_loadu_ps(c + 2 * ldc + 8);
  __m256 acc30 = _mm256_loadu_ps(c + 3 * ldc);
  __m256 acc31 = _mm256_loadu_ps(c + 3 * ldc + 8);
  for (int p = 0; p < k; ++p) {
    const __m256 b0 = _mm256_loadu_ps(b + static_cast<long>(p) * ldb);
    const __m256 b1 = _mm256_loadu_ps(b + static_cast<long>(p) * ldb + 8);
    const __m256 a0 = _mm256_set1_ps(alpha * a[0 * lda + p]);
    const __m256 a1 = _mm256_set1_ps(alpha * a[1 * lda + p]);
    const __m256 a2 = _mm256_set1_ps(alpha * a[2 * lda + p]);
    const __m256 a3 = _mm256_set1_ps(alpha * a[3 * lda + p]);
    acc00 = _mm256_fmadd_ps(a0, b0, acc00);
    acc01 = _mm256_fmadd_ps(a0, b1, acc01);
    acc10 = _mm256_fmadd_ps(a1, b0, acc10);
    acc11 = _mm256_fmadd_ps(a1, b1, acc11);
    acc20 = _mm256_fmadd_ps(a2, b0, acc20);
    acc21 = _mm256_fmadd_ps(a2, b1, acc21);
    acc30 = _mm256_fmadd_ps(a3, b0, acc30);
    acc31 = _mm256_fmadd_ps(a3, b1, acc31);
  }
  _mm256_storeu_ps(c + 0 * ldc, acc00);
  _mm256_storeu_ps(c + 0 * ldc + 8, acc01);
  _mm256_storeu_ps(c + 1 * ldc, acc10);
  _mm256_storeu_ps(c + 1 * ldc + 8, acc11);
  _mm256_storeu_ps(c + 2 * ldc, acc20);
  _mm256_storeu_ps(c + 2 * ldc + 8, acc21);
  _mm256_storeu_ps(c + 3 * ldc, acc30);
  _mm256_storeu_ps(c + 3 * ldc + 8, acc31);
}

inline void panel_1x8(int k, float alpha, const float* a, const float* b, int ldb, float* c) {
  __m256 acc = _mm256_loadu_ps(c);
  for (int p = 0; p < k; ++p) {
    const __m256 bv = _mm256_loadu_ps(b + static_cast<long>(p) * ldb);
    acc = _mm256_fmadd_ps(_mm256_set1_ps(alpha * a[p]), bv, acc);
  }
  _mm256_storeu_ps(c, acc);
}

inline void rows_tail_scalar(int rows, int jlo, int jhi, int k, float alpha, const float* a,
                             int lda, const float* b, int ldb, float* c, int ldc) {
  for (int i = 0; i < rows; ++i) {
    float* crow = c + static_cast<long>(i) * ldc;
    const float* arow = a + static_cast<long>(i) * lda;
    for (int p = 0; p < k; ++p) {
      const float ap = alpha * arow[p];
      const float* brow = b + static_cast<long>(p) * ldb;
      for (int j = jlo; j < jhi; ++j) crow[j] += ap * brow[j];
    }
  }
}

}  // namespace

void gemm(int m, int n, int k, float alpha, const float* a, int lda, const float* b, int ldb,
          float beta, float* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    float* crow = c + static_cast<long>(i) * ldc;
    if (beta == 0.0f) {
      std::memset(crow, 0, sizeof(float) * n);
    } else if (beta != 1.0f) {
      scale(n, beta, crow);
    }
  }
  int i = 0;
  for (; i + 4 <= m; i += 4) {
    const float* arows = a + static_cast<long>(i) * lda;
    float* crows = c + static_cast<long>(i) * ldc;
    int j = 0;
    for (; j + 16 <= n; j += 16) panel_4x16(k, alpha, arows, lda, b + j, ldb, crows + j, ldc);
    for (int r = 0; r < 4; ++r) {
      int jj = j;
      for (; jj + 8 <= n; jj += 8)
        panel_1x8(k, alpha, arows + static_cast<long>(r) * lda, b + jj, ldb,
                  crows + static_cast<long>(r) * ldc + jj);
      if (jj < n)
        rows_tail_scalar(1, jj, n, k, alpha, arows + static_cast<long>(r) * lda, lda, b, ldb,
                         crows + static_cast<long>(r) * ldc, ldc);
    }
  }
  for (; i < m; ++i) {
    const float* arow = a + static_cast<long>(i) * lda;
    float* crow = c + static_cast<long>(i) * ldc;
    int j = 0;
    for (; j + 8 <= n; j += 8) panel_1x8(k, alpha, arow, b + j, ldb, crow + j);
    if (j < n) rows_tail_scalar(1, j, n, k, alpha, arow, lda, b, ldb, crow, ldc);
  }
}

void gemm_nt(int m, int n, int k, float alpha, const float* a, int lda, const float* b, int ldb,
             float beta, float* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    float* crow = c + static_cast<long>(i) * ldc;
    const float* arow = a + static_cast<long>(i) * lda;
    for (int j = 0; j < n; ++j) {
      const float acc = dot(arow, b + static_cast<long>(j) * ldb, k);
      crow[j] = alpha * acc + (beta == 0.0f ? 0.0f : beta * crow[j]);
    }
  }
}

float dot(const float* a, const float* b, int n) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  int i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
  }
  float acc = hsum(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

float sum(const float* a, int n) {
  __m256 acc0 = _mm256_setzero_ps();
  int i = 0;
  for (; i + 8 <= n; i += 8) acc0 = _mm256_add_ps(acc0, _mm256_loadu_ps(a + i));
  float acc = hsum(acc0);
  for (; i < n; ++i) acc += a[i];
  return acc;
}

float sumsq(const float* a, int n) {
  __m256 acc0 = _mm256_setzero_ps();
  int i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(a + i);
    acc0 = _mm256_fmadd_ps(v, v, acc0);
  }
  float acc = hsum(acc0);
  for (; i < n; ++i) acc += a[i] * a[i];
  return acc;
}

void axpy(int n, float alpha, const float* x, float* y) {
  const __m256 av = _mm256_set1_ps(alpha);
  int i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale(int n, float alpha, float* x) {
  const __m256 av = _mm256_set1_ps(alpha);
  int i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(x + i, _mm256_mul_ps(av, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) x[i] *= alpha;
}

void relu_forward(int n, const float* x, float* y) {
  const __m256 zero = _mm256_setzero_ps();
  int i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_max_ps(zero, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward(int n, const float* x, const float* dy, float* dx) {
  const __m256 zero = _mm256_setzero_ps();
  int i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
    _mm256_storeu_ps(dx + i, _mm256_and_ps(mask, _mm256_loadu_ps(dy + i)));
  }
  for (; i < n; ++i) dx[i] = x[i] > 0.0f ? dy[i] : 0.0f;
}

void adam_step(int n, float* w, const float* g, float* m, float* v, float lr, float beta1,
               float beta2, float eps, float bias_corr1, float bias_corr2) {
  const __m256 b1 = _mm256_set1_ps(beta1);
  const __m256 b2 = _mm256_set1_ps(beta2);
  const __m256 ob1 = _mm256_set1_ps(1.0f - beta1);
  const __m256 ob2 = _mm256_set1_ps(1.0f - beta2);
  const __m256 bc1 = _mm256_set1_ps(bias_corr1);
  const __m256 bc2 = _mm256_set1_ps(bias_corr2);
  const __m256 epsv = _mm256_set1_ps(eps);
  const __m256 lrv = _mm256_set1_ps(lr);
  int i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 gv = _mm256_loadu_ps(g + i);
    __m256 mv = _mm256_loadu_ps(m + i);
    __m256 vv = _mm256_loadu_ps(v + i);
    mv = _mm256_fmadd_ps(ob1, gv, _mm256_mul_ps(b1, mv));
    vv = _mm256_fmadd_ps(ob2, _mm256_mul_ps(gv, gv), _mm256_mul_ps(b2, vv));
    _mm256_storeu_ps(m + i, mv);
    _mm256_storeu_ps(v + i, vv);
    const __m256 mhat = _mm256_div_ps(mv, bc1);
    const __m256 vhat = _mm256_div_ps(vv, bc2);
    const __m256 denom = _mm256_add_ps(_mm256_sqrt_ps(vhat), epsv);
    const __m256 upd = _mm256_mul_ps(lrv, _mm256_div_ps(mhat, denom));
    _mm256_storeu_ps(w + i, _mm256_sub_ps(_mm256_loadu_ps(w + i), upd));
  }
  if (i < n)
    scalar::adam_step(n - i, w + i, g + i, m + i, v + i, lr, beta1, beta2, eps, bias_corr1,
                      bias_corr2);
}

}  // namespace fmx::kern::avx2

#endif  // FMX_HAVE_AVX2_BUILD
