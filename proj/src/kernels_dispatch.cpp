#include <cstdlib>
#include <cstring>
#include <stdexcept>

#include "fmx/kernels.hpp"

namespace fmx::kern {

namespace {

bool avx2_supported() {
#if defined(FMX_HAVE_AVX2_BUILD)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa detect() {
  if (const char* env = std::getenv("FMX_KERNELS")) {
    if (std::strcmp(env, "scalar") == 0) return Isa::scalar;
    if (std::strcmp(env, "avx2") == 0) {
      if (!avx2_supported()) throw std::runtime_error("FMX_KERNELS=avx2: cpu lacks avx2+fma");
      return Isa::avx2;
    }
  }
  return avx2_supported() ? Isa::avx2 : Isa::scalar;
}

Isa& isa_slot() {
  static Isa isa = detect();
  return isa;
}

}  // namespace

Isa active_isa() { return isa_slot(); }

const char* isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

void force_isa(Isa isa) {
  if (isa == Isa::avx2 && !avx2_supported())
    throw std::runtime_error("force_isa: cpu lacks avx2+fma");
  isa_slot() = isa;
}

#if defined(FMX_HAVE_AVX2_BUILD)
#define FMX_DISPATCH(fn, ...) \
  return active_isa() == Isa::avx2 ? avx2::fn(__VA_ARGS__) : scalar::fn(__VA_ARGS__)
#else
#define FMX_DISPATCH(fn, ...) return scalar::fn(__VA_ARGS__)
#endif

void gemm(int m, int n, int k, float alpha, const float* a, int lda, const float* b, int ldb,
          float beta, float* c, int ldc) {
  FMX_DISPATCH(gemm, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void gemm_nt(int m, int n, int k, float alpha, const float* a, int lda, const float* b, int ldb,
             float beta, float* c, int ldc) {
  FMX_DISPATCH(gemm_nt, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

float dot(const float* a, const float* b, int n) { FMX_DISPATCH(dot, a, b, n); }
float sum(const float* a, int n) { FMX_DISPATCH(sum, a, n); }
float sumsq(const float* a, int n) { FMX_DISPATCH(sumsq, a, n); }

void axpy(int n, float alpha, const float* x, float* y) { FMX_DISPATCH(axpy, n, alpha, x, y); }
void scale(int n, float alpha, float* x) { FMX_DISPATCH(scale, n, alpha, x); }

void relu_forward(int n, const float* x, float* y) { FMX_DISPATCH(relu_forward, n, x, y); }
void relu_backward(int n, const float* x, const float* dy, float* dx) {
  FMX_DISPATCH(relu_backward, n, x, dy, dx);
}

void adam_step(int n, float* w, const float* g, float* m, float* v, float lr, float beta1,
               float beta2, float eps, float bias_corr1, float bias_corr2) {
  FMX_DISPATCH(adam_step, n, w, g, m, v, lr, beta1, beta2, eps, bias_corr1, bias_corr2);
}

}  // namespace fmx::kern
