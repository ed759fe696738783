#pragma once

// Dense inner loops behind the tensor ops. Every kernel has a scalar
// reference implementation; vectorized variants are selected at runtime
// from what the CPU reports and are equivalence-tested against the scalar
// path. Within one process the active backend is fixed unless changed
// explicitly, so reductions happen in a fixed order.

#include <cstddef>
#include <string_view>

namespace imu2emg::simd {

enum class Backend { scalar, avx2, neon };

std::string_view backend_name(Backend b);
Backend parse_backend(std::string_view name);
bool backend_available(Backend b);
Backend best_backend();
Backend active_backend();
/// Throws ConfigError when `b` is not usable on this CPU/build.
void set_backend(Backend b);

template <typename T>
struct KernelTable {
  // C[m x n] += A[m x k] * B[k x n]; row-major with leading dimensions.
  void (*gemm)(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
               const T* b, std::size_t ldb, T* c, std::size_t ldc);
  T (*dot)(const T* x, const T* y, std::size_t n);
  // y += alpha * x
  void (*axpy)(std::size_t n, T alpha, const T* x, T* y);
  // out = x * y elementwise
  void (*mul)(std::size_t n, const T* x, const T* y, T* out);
  // y += x
  void (*add)(std::size_t n, const T* x, T* y);
  // out = exp(x); out may alias x
  void (*exp)(std::size_t n, const T* x, T* out);
};

template <typename T>
const KernelTable<T>& kernels();
template <typename T>
const KernelTable<T>& kernels(Backend b);

// Contiguous-operand helpers built on the active table.
// C[m x n] += A[m x k] * B[k x n]
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);
// C[m x n] += A[m x k] * B[n x k]^T
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);
// C[m x n] += A[k x m]^T * B[k x n]
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);

namespace detail {
template <typename T>
const KernelTable<T>& scalar_table();
// nullptr when the variant was not compiled into this build.
template <typename T>
const KernelTable<T>* avx2_table();
template <typename T>
const KernelTable<T>* neon_table();
}  // namespace detail

}  // namespace imu2emg::simd
