#pragma once

// Dense kernels. Each has a serial reference (used by tests as the oracle)
// and an OpenMP variant parallelized over independent output rows, so the
// per-element reduction order is fixed and results match the serial path
// bit for bit.

#include "vp/real.hpp"

#include <cstddef>

namespace vp::kernels {

// c[m x n] = a[m x k] * b[k x n]
void matmul_serial(const real* a, const real* b, real* c,
                   std::size_t m, std::size_t k, std::size_t n);
void matmul_omp(const real* a, const real* b, real* c,
                std::size_t m, std::size_t k, std::size_t n);

// c[m x n] += a[m x k] * b[n x k]^T
void matmul_nt_acc_serial(const real* a, const real* b, real* c,
                          std::size_t m, std::size_t k, std::size_t n);
void matmul_nt_acc_omp(const real* a, const real* b, real* c,
                       std::size_t m, std::size_t k, std::size_t n);

// c[k x n] += a[m x k]^T * b[m x n]
void matmul_tn_acc_serial(const real* a, const real* b, real* c,
                          std::size_t m, std::size_t k, std::size_t n);
void matmul_tn_acc_omp(const real* a, const real* b, real* c,
                       std::size_t m, std::size_t k, std::size_t n);

void gelu_serial(const real* x, real* y, std::size_t n);
void gelu_omp(const real* x, real* y, std::size_t n);

real gelu_grad_at(real x);

}  // namespace vp::kernels
