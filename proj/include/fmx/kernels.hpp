#pragma once

// Data-parallel f32 kernels behind the NN stack: GEMM, reductions, elementwise
// ops, and the Adam update. Every kernel has a scalar reference implementation
// and (on x86-64 with AVX2+FMA) a vectorized variant selected at runtime.
// The scalar path is the semantic reference; vector variants are equivalence-
// tested against it. FMX_KERNELS=scalar|avx2 overrides detection.

namespace fmx::kern {

enum class Isa { scalar, avx2 };

Isa active_isa();
const char* isa_name(Isa isa);
void force_isa(Isa isa);  // test hook; throws if the ISA is unsupported

// C[M x N] = alpha * A[M x K] * B[K x N] + beta * C, row-major.
// lda/ldb/ldc are row strides in elements.
void gemm(int m, int n, int k, float alpha, const float* a, int lda, const float* b, int ldb,
          float beta, float* c, int ldc);

// C[M x N] = alpha * A[M x K] * B^T + beta * C, with B stored row-major [N x K].
void gemm_nt(int m, int n, int k, float alpha, const float* a, int lda, const float* b, int ldb,
             float beta, float* c, int ldc);

float dot(const float* a, const float* b, int n);
float sum(const float* a, int n);
float sumsq(const float* a, int n);

void axpy(int n, float alpha, const float* x, float* y);  // y += alpha * x
void scale(int n, float alpha, float* x);

void relu_forward(int n, const float* x, float* y);
// dx = dy where x > 0, else 0
void relu_backward(int n, const float* x, const float* dy, float* dx);

// In-place Adam update for one parameter array.
// m <- b1*m + (1-b1)*g ; v <- b2*v + (1-b2)*g^2
// w <- w - lr * (m / bc1) / (sqrt(v / bc2) + eps)
void adam_step(int n, float* w, const float* g, float* m, float* v, float lr, float beta1,
               float beta2, float eps, float bias_corr1, float bias_corr2);

namespace scalar {
void gemm(int m, int n, int k, float alpha, const float* a, int lda, const float* b, int ldb,
          float beta, float* c, int ldc);
void gemm_nt(int m, int n, int k, float alpha, const float* a, int lda, const float* b, int ldb,
             float beta, float* c, int ldc);
float dot(const float* a, const float* b, int n);
float sum(const float* a, int n);
float sumsq(const float* a, int n);
void axpy(int n, float alpha, const float* x, float* y);
void scale(int n, float alpha, float* x);
void relu_forward(int n, const float* x, float* y);
void relu_backward(int n, const float* x, const float* dy, float* dx);
void adam_step(int n, float* w, const float* g, float* m, float* v, float lr, float beta1,
               float beta2, float eps, float bias_corr1, float bias_corr2);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define FMX_HAVE_AVX2_BUILD 1
namespace avx2 {
void gemm(int m, int n, int k, float alpha, const float* a, int lda, const float* b, int ldb,
          float beta, float* c, int ldc);
void gemm_nt(int m, int n, int k, float alpha, const float* a, int lda, const float* b, int ldb,
             float beta, float* c, int ldc);
float dot(const float* a, const float* b, int n);
float sum(const float* a, int n);
float sumsq(const float* a, int n);
void axpy(int n, float alpha, const float* x, float* y);
void scale(int n, float alpha, float* x);
void relu_forward(int n, const float* x, float* y);
void relu_backward(int n, const float* x, const float* dy, float* dx);
void adam_step(int n, float* w, const float* g, float* m, float* v, float lr, float beta1,
               float beta2, float eps, float bias_corr1, float bias_corr2);
}  // namespace avx2
#endif

}  // namespace fmx::kern
