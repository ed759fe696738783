#include "imu2emg/simd/kernels.hpp"

#if defined(__aarch64__) && defined(__ARM_NEON)
#include <arm_neon.h>

#include <cmath>

namespace imu2emg::simd::detail {
namespace {

struct F32 {
  using T = float;
  using V = float32x4_t;
  static constexpr std::size_t W = 4;
  static V load(const T* p) { return vld1q_f32(p); }
  static void store(T* p, V v) { vst1q_f32(p, v); }
  static V set1(T x) { return vdupq_n_f32(x); }
  static V zero() { return vdupq_n_f32(0.0f); }
  static V fmadd(V a, V b, V c) { return vfmaq_f32(c, a, b); }
  static V mul(V a, V b) { return vmulq_f32(a, b); }
  static V add(V a, V b) { return vaddq_f32(a, b); }
  static T hsum(V v) { return vaddvq_f32(v); }
};

struct F64 {
  using T = double;
  using V = float64x2_t;
  static constexpr std::size_t W = 2;
  static V load(const T* p) { return vld1q_f64(p); }
  static void store(T* p, V v) { vst1q_f64(p, v); }
  static V set1(T x) { return vdupq_n_f64(x); }
  static V zero() { return vdupq_n_f64(0.0); }
  static V fmadd(V a, V b, V c) { return vfmaq_f64(c, a, b); }
  static V mul(V a, V b) { return vmulq_f64(a, b); }
  static V add(V a, V b) { return vaddq_f64(a, b); }
  static T hsum(V v) { return vaddvq_f64(v); }
};

template <class S>
void gemm(std::size_t m, std::size_t n, std::size_t k, const typename S::T* a, std::size_t lda,
          const typename S::T* b, std::size_t ldb, typename S::T* c, std::size_t ldc) {
  using T = typename S::T;
  constexpr std::size_t W = S::W;
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * lda;
    T* crow = c + i * ldc;
    std::size_t j = 0;
    for (; j + W <= n; j += W) {
      auto r = S::load(crow + j);
      for (std::size_t p = 0; p < k; ++p) r = S::fmadd(S::set1(arow[p]), S::load(b + p * ldb + j), r);
      S::store(crow + j, r);
    }
    for (; j < n; ++j) {
      T s = crow[j];
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * b[p * ldb + j];
      crow[j] = s;
    }
  }
}

template <class S>
typename S::T dot(const typename S::T* x, const typename S::T* y, std::size_t n) {
  constexpr std::size_t W = S::W;
  auto acc = S::zero();
  std::size_t i = 0;
  for (; i + W <= n; i += W) acc = S::fmadd(S::load(x + i), S::load(y + i), acc);
  typename S::T s = S::hsum(acc);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

template <class S>
void axpy(std::size_t n, typename S::T alpha, const typename S::T* x, typename S::T* y) {
  constexpr std::size_t W = S::W;
  const auto av = S::set1(alpha);
  std::size_t i = 0;
  for (; i + W <= n; i += W) S::store(y + i, S::fmadd(av, S::load(x + i), S::load(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

template <class S>
void mul(std::size_t n, const typename S::T* x, const typename S::T* y, typename S::T* out) {
  constexpr std::size_t W = S::W;
  std::size_t i = 0;
  for (; i + W <= n; i += W) S::store(out + i, S::mul(S::load(x + i), S::load(y + i)));
  for (; i < n; ++i) out[i] = x[i] * y[i];
}

template <class S>
void add(std::size_t n, const typename S::T* x, typename S::T* y) {
  constexpr std::size_t W = S::W;
  std::size_t i = 0;
  for (; i + W <= n; i += W) S::store(y + i, S::add(S::load(x + i), S::load(y + i)));
  for (; i < n; ++i) y[i] += x[i];
}

template <class S>
void exp_scalar(std::size_t n, const typename S::T* x, typename S::T* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(x[i]);
}

template <class S>
const KernelTable<typename S::T>* table() {
  static const KernelTable<typename S::T> t{&gemm<S>, &dot<S>, &axpy<S>, &mul<S>, &add<S>, &exp_scalar<S>};
  return &t;
}

}  // namespace

template <>
const KernelTable<float>* neon_table<float>() {
  return table<F32>();
}
template <>
const KernelTable<double>* neon_table<double>() {
  return table<F64>();
}

}  // namespace imu2emg::simd::detail

#else

namespace imu2emg::simd::detail {
template <>
const KernelTable<float>* neon_table<float>() {
  return nullptr;
}
template <>
const KernelTable<double>* neon_table<double>() {
  return nullptr;
}
}  // namespace imu2emg::simd::detail

#endif
