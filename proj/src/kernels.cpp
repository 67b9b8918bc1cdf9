#include "vp/kernels.hpp"

#include <cmath>

namespace vp::kernels {

namespace {
constexpr real kGeluC = real(0.7978845608028654);  // sqrt(2/pi)
constexpr real kGeluA = real(0.044715);

inline void matmul_row(const real* a, const real* b, real* c,
                       std::size_t k, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) c[j] = 0;
  for (std::size_t p = 0; p < k; ++p) {
    const real av = a[p];
    const real* brow = b + p * n;
    for (std::size_t j = 0; j < n; ++j) c[j] += av * brow[j];
  }
}
}  // namespace

void matmul_serial(const real* a, const real* b, real* c,
                   std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    matmul_row(a + i * k, b, c + i * n, k, n);
}

void matmul_omp(const real* a, const real* b, real* c,
                std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < (long long)m; ++i)
    matmul_row(a + i * k, b, c + i * n, k, n);
}

void matmul_nt_acc_serial(const real* a, const real* b, real* c,
                          std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const real* arow = a + i * k;
    real* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const real* brow = b + j * k;
      real acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

void matmul_nt_acc_omp(const real* a, const real* b, real* c,
                       std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < (long long)m; ++i) {
    const real* arow = a + i * k;
    real* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const real* brow = b + j * k;
      real acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

void matmul_tn_acc_serial(const real* a, const real* b, real* c,
                          std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    real* crow = c + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const real av = a[i * k + p];
      const real* brow = b + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_tn_acc_omp(const real* a, const real* b, real* c,
                       std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (long long p = 0; p < (long long)k; ++p) {
    real* crow = c + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const real av = a[i * k + p];
      const real* brow = b + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gelu_serial(const real* x, real* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const real v = x[i];
    y[i] = real(0.5) * v * (real(1) + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  }
}

void gelu_omp(const real* x, real* y, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < (long long)n; ++i) {
    const real v = x[i];
    y[i] = real(0.5) * v * (real(1) + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  }
}

real gelu_grad_at(real x) {
  const real u = kGeluC * (x + kGeluA * x * x * x);
  const real t = std::tanh(u);
  const real du = kGeluC * (real(1) + real(3) * kGeluA * x * x);
  return real(0.5) * (real(1) + t) + real(0.5) * x * (real(1) - t * t) * du;
}

}  // namespace vp::kernels
