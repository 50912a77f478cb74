#include "opatt/kernels.hpp"

#include <omp.h>

#include <algorithm>

namespace opatt::kernels {

namespace serial {

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, std::span<const T> a,
             std::span<const T> b, std::span<T> c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] += acc;
    }
  }
}

template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, std::span<const T> a,
             std::span<const T> b, std::span<T> c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
      c[i * n + j] += acc;
    }
  }
}

template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, std::span<const T> a,
             std::span<const T> b, std::span<T> c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * b[p * n + j];
      c[i * n + j] += acc;
    }
  }
}

}  // namespace serial

namespace parallel {

namespace {

bool go_parallel(std::size_t work) {
  return work >= kParallelWork && !omp_in_parallel() && omp_get_max_threads() > 1;
}

}  // namespace

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, std::span<const T> a,
             std::span<const T> b, std::span<T> c) {
  const T* __restrict pa = a.data();
  const T* __restrict pb = b.data();
  T* __restrict pc = c.data();
  const auto rows = static_cast<std::ptrdiff_t>(m);
  if (n == 1) {
#pragma omp parallel for schedule(static) if (go_parallel(m * k))
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
      const T* row = pa + static_cast<std::size_t>(i) * k;
      T acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += row[p] * pb[p];
      pc[i] += acc;
    }
    return;
  }
#pragma omp parallel for schedule(static) if (go_parallel(m * n * k))
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    T* crow = pc + static_cast<std::size_t>(i) * n;
    const T* arow = pa + static_cast<std::size_t>(i) * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, std::span<const T> a,
             std::span<const T> b, std::span<T> c) {
  const T* __restrict pa = a.data();
  const T* __restrict pb = b.data();
  T* __restrict pc = c.data();
  const auto rows = static_cast<std::ptrdiff_t>(m);
  if (n == 1) {
    // C[i, 0] += dot(A[i, :], B[0, :])
#pragma omp parallel for schedule(static) if (go_parallel(m * k))
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
      const T* arow = pa + static_cast<std::size_t>(i) * k;
      T acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * pb[p];
      pc[i] += acc;
    }
    return;
  }
  if (k == 1) {
#pragma omp parallel for schedule(static) if (go_parallel(m * n))
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
      const T av = pa[i];
      T* crow = pc + static_cast<std::size_t>(i) * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * pb[j];
    }
    return;
  }
#pragma omp parallel for schedule(static) if (go_parallel(m * n * k))
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    const T* arow = pa + static_cast<std::size_t>(i) * k;
    T* crow = pc + static_cast<std::size_t>(i) * n;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = pb + j * k;
      T acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, std::span<const T> a,
             std::span<const T> b, std::span<T> c) {
  const T* __restrict pa = a.data();
  const T* __restrict pb = b.data();
  T* __restrict pc = c.data();
  // Blocks of output rows; A is read row by row inside each block.
  constexpr std::size_t kBlock = 64;
  const auto blocks = static_cast<std::ptrdiff_t>((m + kBlock - 1) / kBlock);
#pragma omp parallel for schedule(static) if (go_parallel(m * n * k))
  for (std::ptrdiff_t blk = 0; blk < blocks; ++blk) {
    const std::size_t i0 = static_cast<std::size_t>(blk) * kBlock;
    const std::size_t i1 = std::min(m, i0 + kBlock);
    for (std::size_t p = 0; p < k; ++p) {
      const T* arow = pa + p * m;
      const T* brow = pb + p * n;
      if (n == 1) {
        const T bv = brow[0];
        for (std::size_t i = i0; i < i1; ++i) pc[i] += arow[i] * bv;
        continue;
      }
      for (std::size_t i = i0; i < i1; ++i) {
        const T av = arow[i];
        T* crow = pc + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

template <typename T>
void axpy(T alpha, std::span<const T> x, std::span<T> y) {
  const auto len = static_cast<std::ptrdiff_t>(x.size());
  const T* __restrict px = x.data();
  T* __restrict py = y.data();
#pragma omp parallel for simd schedule(static) if (go_parallel(x.size()))
  for (std::ptrdiff_t i = 0; i < len; ++i) py[i] += alpha * px[i];
}

}  // namespace parallel

#define OPATT_INSTANTIATE_KERNELS(T)                                                        \
  template void serial::gemm_nn<T>(std::size_t, std::size_t, std::size_t,                  \
                                   std::span<const T>, std::span<const T>, std::span<T>);   \
  template void serial::gemm_nt<T>(std::size_t, std::size_t, std::size_t,                  \
                                   std::span<const T>, std::span<const T>, std::span<T>);   \
  template void serial::gemm_tn<T>(std::size_t, std::size_t, std::size_t,                  \
                                   std::span<const T>, std::span<const T>, std::span<T>);   \
  template void parallel::gemm_nn<T>(std::size_t, std::size_t, std::size_t,                \
                                     std::span<const T>, std::span<const T>, std::span<T>); \
  template void parallel::gemm_nt<T>(std::size_t, std::size_t, std::size_t,                \
                                     std::span<const T>, std::span<const T>, std::span<T>); \
  template void parallel::gemm_tn<T>(std::size_t, std::size_t, std::size_t,                \
                                     std::span<const T>, std::span<const T>, std::span<T>); \
  template void parallel::axpy<T>(T, std::span<const T>, std::span<T>);

OPATT_INSTANTIATE_KERNELS(float)
OPATT_INSTANTIATE_KERNELS(double)

#undef OPATT_INSTANTIATE_KERNELS

}  // namespace opatt::kernels
