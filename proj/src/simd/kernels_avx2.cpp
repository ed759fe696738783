// Compiled with -mavx2 -mfma on x86-64. Only reached after the dispatcher
// has confirmed CPU support.
#include "imu2emg/simd/kernels.hpp"

#if defined(IMU2EMG_HAVE_AVX2)
#include <immintrin.h>

#include <cmath>
#include <type_traits>

namespace imu2emg::simd::detail {
namespace {

struct F32 {
  using T = float;
  using V = __m256;
  static constexpr std::size_t W = 8;
  static V load(const T* p) { return _mm256_loadu_ps(p); }
  static void store(T* p, V v) { _mm256_storeu_ps(p, v); }
  static V set1(T x) { return _mm256_set1_ps(x); }
  static V zero() { return _mm256_setzero_ps(); }
  static V fmadd(V a, V b, V c) { return _mm256_fmadd_ps(a, b, c); }
  static V mul(V a, V b) { return _mm256_mul_ps(a, b); }
  static V add(V a, V b) { return _mm256_add_ps(a, b); }
  static T hsum(V v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 shuf = _mm_movehdup_ps(lo);
    __m128 sums = _mm_add_ps(lo, shuf);
    shuf = _mm_movehl_ps(shuf, sums);
    sums = _mm_add_ss(sums, shuf);
    return _mm_cvtss_f32(sums);
  }
};

struct F64 {
  using T = double;
  using V = __m256d;
  static constexpr std::size_t W = 4;
  static V load(const T* p) { return _mm256_loadu_pd(p); }
  static void store(T* p, V v) { _mm256_storeu_pd(p, v); }
  static V set1(T x) { return _mm256_set1_pd(x); }
  static V zero() { return _mm256_setzero_pd(); }
  static V fmadd(V a, V b, V c) { return _mm256_fmadd_pd(a, b, c); }
  static V mul(V a, V b) { return _mm256_mul_pd(a, b); }
  static V add(V a, V b) { return _mm256_add_pd(a, b); }
  static T hsum(V v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d high64 = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, high64));
  }
};

// 4-row x 2-vector register tile; tails fall back to narrower tiles and
// finally scalar columns.
template <class S>
void gemm(std::size_t m, std::size_t n, std::size_t k, const typename S::T* a, std::size_t lda,
          const typename S::T* b, std::size_t ldb, typename S::T* c, std::size_t ldc) {
  using T = typename S::T;
  using V = typename S::V;
  constexpr std::size_t W = S::W;
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    const T* a0 = a + (i + 0) * lda;
    const T* a1 = a + (i + 1) * lda;
    const T* a2 = a + (i + 2) * lda;
    const T* a3 = a + (i + 3) * lda;
    T* c0 = c + (i + 0) * ldc;
    T* c1 = c + (i + 1) * ldc;
    T* c2 = c + (i + 2) * ldc;
    T* c3 = c + (i + 3) * ldc;
    std::size_t j = 0;
    for (; j + 2 * W <= n; j += 2 * W) {
      V r00 = S::load(c0 + j), r01 = S::load(c0 + j + W);
      V r10 = S::load(c1 + j), r11 = S::load(c1 + j + W);
      V r20 = S::load(c2 + j), r21 = S::load(c2 + j + W);
      V r30 = S::load(c3 + j), r31 = S::load(c3 + j + W);
      for (std::size_t p = 0; p < k; ++p) {
        const T* brow = b + p * ldb + j;
        const V b0 = S::load(brow);
        const V b1 = S::load(brow + W);
        V av = S::set1(a0[p]);
        r00 = S::fmadd(av, b0, r00);
        r01 = S::fmadd(av, b1, r01);
        av = S::set1(a1[p]);
        r10 = S::fmadd(av, b0, r10);
        r11 = S::fmadd(av, b1, r11);
        av = S::set1(a2[p]);
        r20 = S::fmadd(av, b0, r20);
        r21 = S::fmadd(av, b1, r21);
        av = S::set1(a3[p]);
        r30 = S::fmadd(av, b0, r30);
        r31 = S::fmadd(av, b1, r31);
      }
      S::store(c0 + j, r00);
      S::store(c0 + j + W, r01);
      S::store(c1 + j, r10);
      S::store(c1 + j + W, r11);
      S::store(c2 + j, r20);
      S::store(c2 + j + W, r21);
      S::store(c3 + j, r30);
      S::store(c3 + j + W, r31);
    }
    for (; j + W <= n; j += W) {
      V r0 = S::load(c0 + j), r1 = S::load(c1 + j), r2 = S::load(c2 + j), r3 = S::load(c3 + j);
      for (std::size_t p = 0; p < k; ++p) {
        const V bv = S::load(b + p * ldb + j);
        r0 = S::fmadd(S::set1(a0[p]), bv, r0);
        r1 = S::fmadd(S::set1(a1[p]), bv, r1);
        r2 = S::fmadd(S::set1(a2[p]), bv, r2);
        r3 = S::fmadd(S::set1(a3[p]), bv, r3);
      }
      S::store(c0 + j, r0);
      S::store(c1 + j, r1);
      S::store(c2 + j, r2);
      S::store(c3 + j, r3);
    }
    for (; j < n; ++j) {
      T s0 = c0[j], s1 = c1[j], s2 = c2[j], s3 = c3[j];
      for (std::size_t p = 0; p < k; ++p) {
        const T bv = b[p * ldb + j];
        s0 += a0[p] * bv;
        s1 += a1[p] * bv;
        s2 += a2[p] * bv;
        s3 += a3[p] * bv;
      }
      c0[j] = s0;
      c1[j] = s1;
      c2[j] = s2;
      c3[j] = s3;
    }
  }
  for (; i < m; ++i) {
    const T* arow = a + i * lda;
    T* crow = c + i * ldc;
    std::size_t j = 0;
    for (; j + W <= n; j += W) {
      V r = S::load(crow + j);
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
  using V = typename S::V;
  constexpr std::size_t W = S::W;
  V acc0 = S::zero(), acc1 = S::zero();
  std::size_t i = 0;
  for (; i + 2 * W <= n; i += 2 * W) {
    acc0 = S::fmadd(S::load(x + i), S::load(y + i), acc0);
    acc1 = S::fmadd(S::load(x + i + W), S::load(y + i + W), acc1);
  }
  for (; i + W <= n; i += W) acc0 = S::fmadd(S::load(x + i), S::load(y + i), acc0);
  typename S::T s = S::hsum(S::add(acc0, acc1));
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

// Range reduction x = k ln2 + r with a two-part ln2, degree-6 polynomial
// for e^r on |r| <= ln2 / 2, then 2^k through the exponent bits. Inputs
// below the float range flush to 0, above it saturate to +inf.
void exp_f32(std::size_t n, const float* x, float* out) {
  const __m256 log2e = _mm256_set1_ps(1.44269504088896341f);
  const __m256 ln2_hi = _mm256_set1_ps(0.693359375f);
  const __m256 ln2_lo = _mm256_set1_ps(-2.12194440e-4f);
  const __m256 lo = _mm256_set1_ps(-87.3365447505f);
  const __m256 hi = _mm256_set1_ps(88.3762626647949f);
  const __m256 one = _mm256_set1_ps(1.0f);
  const __m256 c2 = _mm256_set1_ps(5.0000001201e-1f);
  const __m256 c3 = _mm256_set1_ps(1.6666665459e-1f);
  const __m256 c4 = _mm256_set1_ps(4.1665795894e-2f);
  const __m256 c5 = _mm256_set1_ps(8.3334519073e-3f);
  const __m256 c6 = _mm256_set1_ps(1.3981999507e-3f);
  const __m256 c7 = _mm256_set1_ps(1.9875691500e-4f);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(x + i);
    const __m256 under = _mm256_cmp_ps(v, lo, _CMP_LT_OQ);
    const __m256 over = _mm256_cmp_ps(v, hi, _CMP_GT_OQ);
    const __m256 xc = _mm256_min_ps(_mm256_max_ps(v, lo), hi);
    const __m256 k = _mm256_round_ps(_mm256_mul_ps(xc, log2e), _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    __m256 r = _mm256_fnmadd_ps(k, ln2_hi, xc);
    r = _mm256_fnmadd_ps(k, ln2_lo, r);
    __m256 p = _mm256_fmadd_ps(c7, r, c6);
    p = _mm256_fmadd_ps(p, r, c5);
    p = _mm256_fmadd_ps(p, r, c4);
    p = _mm256_fmadd_ps(p, r, c3);
    p = _mm256_fmadd_ps(p, r, c2);
    p = _mm256_fmadd_ps(p, _mm256_mul_ps(r, r), _mm256_add_ps(r, one));
    // k can reach 128 at the top of the range; split 2^k into two factors
    // so the exponent field never overflows.
    const __m256i ki = _mm256_cvtps_epi32(k);
    const __m256i k1 = _mm256_srai_epi32(ki, 1);
    const __m256i k2 = _mm256_sub_epi32(ki, k1);
    const __m256 s1 = _mm256_castsi256_ps(_mm256_slli_epi32(_mm256_add_epi32(k1, _mm256_set1_epi32(127)), 23));
    const __m256 s2 = _mm256_castsi256_ps(_mm256_slli_epi32(_mm256_add_epi32(k2, _mm256_set1_epi32(127)), 23));
    __m256 y = _mm256_mul_ps(_mm256_mul_ps(p, s1), s2);
    y = _mm256_andnot_ps(under, y);
    y = _mm256_blendv_ps(y, _mm256_set1_ps(INFINITY), over);
    // NaN passes through unchanged.
    y = _mm256_blendv_ps(y, v, _mm256_cmp_ps(v, v, _CMP_UNORD_Q));
    _mm256_storeu_ps(out + i, y);
  }
  for (; i < n; ++i) out[i] = std::exp(x[i]);
}

void exp_f64(std::size_t n, const double* x, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(x[i]);
}

template <class S>
const KernelTable<typename S::T>* table() {
  if constexpr (std::is_same_v<typename S::T, float>) {
    static const KernelTable<float> t{&gemm<S>, &dot<S>, &axpy<S>, &mul<S>, &add<S>, &exp_f32};
    return &t;
  } else {
    static const KernelTable<double> t{&gemm<S>, &dot<S>, &axpy<S>, &mul<S>, &add<S>, &exp_f64};
    return &t;
  }
}

}  // namespace

template <>
const KernelTable<float>* avx2_table<float>() {
  return table<F32>();
}
template <>
const KernelTable<double>* avx2_table<double>() {
  return table<F64>();
}

}  // namespace imu2emg::simd::detail

#else

namespace imu2emg::simd::detail {
template <>
const KernelTable<float>* avx2_table<float>() {
  return nullptr;
}
template <>
const KernelTable<double>* avx2_table<double>() {
  return nullptr;
}
}  // namespace imu2emg::simd::detail

#endif
