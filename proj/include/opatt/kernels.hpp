#pragma once

// Dense row-major matrix kernels used by the autodiff graph.
//
// Two implementations share one signature set:
//   serial::  plain triple loops, kept as the reference the tests and the
//             benchmark compare against;
//   parallel:: cache-friendly loop orders with OpenMP over output rows.
//
// Every kernel accumulates into its output (C += ...). In the parallel
// kernels each output element is reduced by exactly one thread in a fixed
// order, so results do not depend on the thread count.

#include <cstddef>
#include <span>

namespace opatt::kernels {

namespace serial {

// C[m x n] += A[m x k] * B[k x n]
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, std::span<const T> a,
             std::span<const T> b, std::span<T> c);

// C[m x n] += A[m x k] * B[n x k]^T
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, std::span<const T> a,
             std::span<const T> b, std::span<T> c);

// C[m x n] += A[k x m]^T * B[k x n]
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, std::span<const T> a,
             std::span<const T> b, std::span<T> c);

}  // namespace serial

namespace parallel {

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, std::span<const T> a,
             std::span<const T> b, std::span<T> c);

template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, std::span<const T> a,
             std::span<const T> b, std::span<T> c);

template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, std::span<const T> a,
             std::span<const T> b, std::span<T> c);

// y[i] += x[i]
template <typename T>
void axpy(T alpha, std::span<const T> x, std::span<T> y);

}  // namespace parallel

// Below this many multiply-adds a kernel never opens a parallel region.
inline constexpr std::size_t kParallelWork = std::size_t{1} << 16;

}  // namespace opatt::kernels
