#include <atomic>
#include <vector>

#include "imu2emg/core/errors.hpp"
#include "imu2emg/simd/kernels.hpp"

namespace imu2emg::simd {
namespace {

bool cpu_has_avx2() {
#if defined(IMU2EMG_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

std::atomic<int>& active_slot() {
  static std::atomic<int> slot{static_cast<int>(best_backend())};
  return slot;
}

template <typename T>
thread_local std::vector<T> transpose_scratch;

template <typename T>
T* transposed(const T* src, std::size_t rows, std::size_t cols) {
  auto& buf = transpose_scratch<T>;
  buf.resize(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) buf[c * rows + r] = src[r * cols + c];
  return buf.data();
}

}  // namespace

std::string_view backend_name(Backend b) {
  switch (b) {
    case Backend::scalar:
      return "scalar";
    case Backend::avx2:
      return "avx2";
    case Backend::neon:
      return "neon";
  }
  return "unknown";
}

Backend parse_backend(std::string_view name) {
  if (name == "scalar") return Backend::scalar;
  if (name == "avx2") return Backend::avx2;
  if (name == "neon") return Backend::neon;
  if (name == "auto") return best_backend();
  throw ConfigError("unknown kernel backend '" + std::string(name) + "'");
}

bool backend_available(Backend b) {
  switch (b) {
    case Backend::scalar:
      return true;
    case Backend::avx2:
      return cpu_has_avx2() && detail::avx2_table<float>() != nullptr;
    case Backend::neon:
      return detail::neon_table<float>() != nullptr;
  }
  return false;
}

Backend best_backend() {
  if (backend_available(Backend::avx2)) return Backend::avx2;
  if (backend_available(Backend::neon)) return Backend::neon;
  return Backend::scalar;
}

Backend active_backend() { return static_cast<Backend>(active_slot().load()); }

void set_backend(Backend b) {
  if (!backend_available(b))
    throw ConfigError("kernel backend '" + std::string(backend_name(b)) + "' is not available");
  active_slot().store(static_cast<int>(b));
}

template <typename T>
const KernelTable<T>& kernels(Backend b) {
  switch (b) {
    case Backend::avx2:
      if (const auto* t = detail::avx2_table<T>(); t && cpu_has_avx2()) return *t;
      break;
    case Backend::neon:
      if (const auto* t = detail::neon_table<T>()) return *t;
      break;
    case Backend::scalar:
      break;
  }
  return detail::scalar_table<T>();
}

template <typename T>
const KernelTable<T>& kernels() {
  return kernels<T>(active_backend());
}

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  if (m == 0 || n == 0 || k == 0) return;
  kernels<T>().gemm(m, n, k, a, k, b, n, c, n);
}

template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  if (m == 0 || n == 0 || k == 0) return;
  const T* bt = transposed(b, n, k);  // [k x n]
  kernels<T>().gemm(m, n, k, a, k, bt, n, c, n);
}

template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  if (m == 0 || n == 0 || k == 0) return;
  const T* at = transposed(a, k, m);  // [m x k]
  kernels<T>().gemm(m, n, k, at, k, b, n, c, n);
}

#define IMU2EMG_INSTANTIATE(T)                                                              \
  template const KernelTable<T>& kernels<T>(Backend);                                       \
  template const KernelTable<T>& kernels<T>();                                              \
  template void gemm_nn<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*); \
  template void gemm_nt<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*); \
  template void gemm_tn<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*);

IMU2EMG_INSTANTIATE(float)
IMU2EMG_INSTANTIATE(double)
#undef IMU2EMG_INSTANTIATE

}  // namespace imu2emg::simd
