#include "imu2emg/core/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "imu2emg/core/errors.hpp"
#include "imu2emg/simd/kernels.hpp"

namespace imu2emg::ops {
namespace {

template <typename T>
Tape<T>& tape_of(const Var<T>& v) {
  if (!v.valid()) throw ContractError("op applied to an empty Var");
  return *v.tape();
}

template <typename T>
void same_tape(const Var<T>& a, const Var<T>& b) {
  if (a.tape() != b.tape()) throw ContractError("op inputs live on different tapes");
}

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

template <typename T>
const T* ptr(const Var<T>& v) {
  return v.value().data().data();
}

// Splits a [C x T] or [B x C x T] shape into (batch, channels, time).
struct Bct {
  std::size_t batch, channels, time;
};

Bct as_bct(const Shape& s, const char* op) {
  if (s.size() == 2) return {1, s[0], s[1]};
  if (s.size() == 3) return {s[0], s[1], s[2]};
  throw DimensionError(std::string(op) + ": expected [C x T] or [B x C x T], got " + shape_str(s));
}

}  // namespace

double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_grad_scalar(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  same_tape(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sb.size() > sa.size() || !std::equal(sb.rbegin(), sb.rend(), sa.rbegin()))
    throw DimensionError("add: cannot broadcast " + shape_str(sb) + " onto " + shape_str(sa));
  const std::size_t inner = b.size();
  const std::size_t outer = a.size() / inner;
  Tensor<T> out = a.value();
  out.set_requires_grad(false);
  const auto& k = simd::kernels<T>();
  for (std::size_t o = 0; o < outer; ++o) k.add(inner, ptr(b), out.data().data() + o * inner);
  return tape_of(a).record(std::move(out), {a, b}, [a, b, outer, inner](Tape<T>& t, const Var<T>& y) {
    auto g = t.grad(y);
    const auto& k = simd::kernels<T>();
    if (t.needs_grad(a)) k.add(g.size(), g.data(), t.grad(a).data());
    if (t.needs_grad(b)) {
      auto gb = t.grad(b);
      for (std::size_t o = 0; o < outer; ++o) k.add(inner, g.data() + o * inner, gb.data());
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  same_tape(a, b);
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<T> out(a.shape());
  simd::kernels<T>().mul(out.size(), ptr(a), ptr(b), out.data().data());
  return tape_of(a).record(std::move(out), {a, b}, [a, b](Tape<T>& t, const Var<T>& y) {
    auto g = t.grad(y);
    const std::size_t n = g.size();
    if (t.needs_grad(a)) {
      auto ga = t.grad(a);
      const T* bv = ptr(b);
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * bv[i];
    }
    if (t.needs_grad(b)) {
      auto gb = t.grad(b);
      const T* av = ptr(a);
      for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> out(a.shape());
  const T* av = ptr(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
  return tape_of(a).record(std::move(out), {a}, [a, factor](Tape<T>& t, const Var<T>& y) {
    simd::kernels<T>().axpy(y.size(), factor, t.grad(y).data(), t.grad(a).data());
  });
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  if (shape_size(shape) != a.size())
    throw DimensionError("reshape: " + shape_str(a.shape()) + " has no view as " + shape_str(shape));
  return tape_of(a).record(a.value().reshaped(std::move(shape)), {a}, [a](Tape<T>& t, const Var<T>& y) {
    simd::kernels<T>().add(y.size(), t.grad(y).data(), t.grad(a).data());
  });
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  same_tape(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.empty() || sb.size() != 2 || sa.back() != sb[0])
    throw DimensionError("matmul: inner dimensions disagree for " + shape_str(sa) + " x " + shape_str(sb));
  const std::size_t k = sb[0];
  const std::size_t n = sb[1];
  const std::size_t m = a.size() / k;
  Shape so = sa;
  so.back() = n;
  Tensor<T> out(so);
  simd::gemm_nn(m, n, k, ptr(a), ptr(b), out.data().data());
  return tape_of(a).record(std::move(out), {a, b}, [a, b, m, n, k](Tape<T>& t, const Var<T>& y) {
    const T* g = t.grad(y).data();
    if (t.needs_grad(a)) simd::gemm_nt(m, k, n, g, ptr(b), t.grad(a).data());
    if (t.needs_grad(b)) simd::gemm_tn(k, n, m, ptr(a), g, t.grad(b).data());
  });
}

template <typename T>
Var<T> bmm(const Var<T>& a, const Var<T>& b, bool transpose_b) {
  same_tape(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 3 || sb.size() != 3 || sa[0] != sb[0])
    throw DimensionError("bmm: batch shapes disagree for " + shape_str(sa) + " x " + shape_str(sb));
  const std::size_t batch = sa[0], m = sa[1], k = sa[2];
  const std::size_t n = transpose_b ? sb[1] : sb[2];
  if ((transpose_b ? sb[2] : sb[1]) != k)
    throw DimensionError("bmm: inner dimensions disagree for " + shape_str(sa) + " x " + shape_str(sb));
  Tensor<T> out(Shape{batch, m, n});
  for (std::size_t i = 0; i < batch; ++i) {
    const T* ai = ptr(a) + i * m * k;
    const T* bi = ptr(b) + i * k * n;
    T* ci = out.data().data() + i * m * n;
    if (transpose_b)
      simd::gemm_nt(m, n, k, ai, bi, ci);
    else
      simd::gemm_nn(m, n, k, ai, bi, ci);
  }
  return tape_of(a).record(std::move(out), {a, b},
                           [a, b, batch, m, n, k, transpose_b](Tape<T>& t, const Var<T>& y) {
                             const T* g = t.grad(y).data();
                             T* ga = t.needs_grad(a) ? t.grad(a).data() : nullptr;
                             T* gb = t.needs_grad(b) ? t.grad(b).data() : nullptr;
                             for (std::size_t i = 0; i < batch; ++i) {
                               const T* gi = g + i * m * n;
                               const T* ai = ptr(a) + i * m * k;
                               const T* bi = ptr(b) + i * k * n;
                               if (transpose_b) {
                                 // C = A B^T, B is [n x k]
                                 if (ga) simd::gemm_nn(m, k, n, gi, bi, ga + i * m * k);
                                 if (gb) simd::gemm_tn(n, k, m, gi, ai, gb + i * k * n);
                               } else {
                                 if (ga) simd::gemm_nt(m, k, n, gi, bi, ga + i * m * k);
                                 if (gb) simd::gemm_tn(k, n, m, ai, gi, gb + i * k * n);
                               }
                             }
                           });
}

template <typename T>
Var<T> transpose_last2(const Var<T>& x) {
  const Shape& s = x.shape();
  if (s.size() < 2) throw DimensionError("transpose_last2: rank < 2 for " + shape_str(s));
  const std::size_t r = s[s.size() - 2], c = s.back();
  const std::size_t outer = x.size() / (r * c);
  Shape so = s;
  std::swap(so[so.size() - 2], so.back());
  Tensor<T> out(so);
  const T* xv = ptr(x);
  T* ov = out.data().data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ov[o * r * c + j * r + i] = xv[o * r * c + i * c + j];
  return tape_of(x).record(std::move(out), {x}, [x, outer, r, c](Tape<T>& t, const Var<T>& y) {
    auto g = t.grad(y);
    auto gx = t.grad(x);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gx[o * r * c + i * c + j] += g[o * r * c + j * r + i];
  });
}

template <typename T>
Var<T> split_heads(const Var<T>& x, std::size_t heads) {
  const Shape& s = x.shape();
  if (s.size() != 3 || heads == 0 || s[2] % heads != 0)
    throw DimensionError("split_heads: " + shape_str(s) + " not divisible into " + std::to_string(heads) + " heads");
  const std::size_t batch = s[0], len = s[1], width = s[2], dh = width / heads;
  Tensor<T> out(Shape{batch * heads, len, dh});
  const T* xv = ptr(x);
  T* ov = out.data().data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t t = 0; t < len; ++t)
        std::copy_n(xv + (b * len + t) * width + h * dh, dh, ov + ((b * heads + h) * len + t) * dh);
  return tape_of(x).record(std::move(out), {x}, [x, batch, heads, len, width, dh](Tape<T>& tp, const Var<T>& y) {
    auto g = tp.grad(y);
    auto gx = tp.grad(x);
    const auto& k = simd::kernels<T>();
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t t = 0; t < len; ++t)
          k.add(dh, g.data() + ((b * heads + h) * len + t) * dh, gx.data() + (b * len + t) * width + h * dh);
  });
}

template <typename T>
Var<T> merge_heads(const Var<T>& x, std::size_t heads) {
  const Shape& s = x.shape();
  if (s.size() != 3 || heads == 0 || s[0] % heads != 0)
    throw DimensionError("merge_heads: " + shape_str(s) + " not divisible into " + std::to_string(heads) + " heads");
  const std::size_t batch = s[0] / heads, len = s[1], dh = s[2], width = dh * heads;
  Tensor<T> out(Shape{batch, len, width});
  const T* xv = ptr(x);
  T* ov = out.data().data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t t = 0; t < len; ++t)
        std::copy_n(xv + ((b * heads + h) * len + t) * dh, dh, ov + (b * len + t) * width + h * dh);
  return tape_of(x).record(std::move(out), {x}, [x, batch, heads, len, width, dh](Tape<T>& tp, const Var<T>& y) {
    auto g = tp.grad(y);
    auto gx = tp.grad(x);
    const auto& k = simd::kernels<T>();
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t t = 0; t < len; ++t)
          k.add(dh, g.data() + (b * len + t) * width + h * dh, gx.data() + ((b * heads + h) * len + t) * dh);
  });
}

template <typename T>
Var<T> gelu(const Var<T>& x) {
  Tensor<T> out(x.shape());
  const T* xv = ptr(x);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(gelu_scalar(xv[i]));
  return tape_of(x).record(std::move(out), {x}, [x](Tape<T>& t, const Var<T>& y) {
    auto g = t.grad(y);
    auto gx = t.grad(x);
    const T* xv = ptr(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * static_cast<T>(gelu_grad_scalar(xv[i]));
  });
}

template <typename T>
Var<T> softmax(const Var<T>& x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) throw DimensionError("softmax: axis out of range for " + shape_str(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  Tensor<T> out(s);
  const T* xv = ptr(x);
  T* ov = out.data().data();
  if (inner == 1) {
    const auto exp_kernel = simd::kernels<T>().exp;
    for (std::size_t o = 0; o < outer; ++o) {
      const T* row = xv + o * n;
      T* orow = ov + o * n;
      const T mx = *std::max_element(row, row + n);
      for (std::size_t j = 0; j < n; ++j) orow[j] = row[j] - mx;
      exp_kernel(n, orow, orow);
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) total += orow[j];
      const T inv = static_cast<T>(1.0 / total);
      for (std::size_t j = 0; j < n; ++j) orow[j] *= inv;
    }
  } else {
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * n * inner + in;
        T mx = xv[base];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xv[base + j * inner]);
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const T e = std::exp(xv[base + j * inner] - mx);
          ov[base + j * inner] = e;
          total += e;
        }
        const double inv = 1.0 / total;
        for (std::size_t j = 0; j < n; ++j) ov[base + j * inner] = static_cast<T>(ov[base + j * inner] * inv);
      }
    }
  }
  return tape_of(x).record(std::move(out), {x}, [x, outer, inner, n](Tape<T>& t, const Var<T>& y) {
    auto g = t.grad(y);
    auto gx = t.grad(x);
    const T* yv = y.value().data().data();
    if (inner == 1) {
      for (std::size_t o = 0; o < outer; ++o) {
        const T* yr = yv + o * n;
        const T* gr = g.data() + o * n;
        T* gxr = gx.data() + o * n;
        double dotp = 0.0;
        for (std::size_t j = 0; j < n; ++j) dotp += static_cast<double>(gr[j]) * yr[j];
        const T d = static_cast<T>(dotp);
        for (std::size_t j = 0; j < n; ++j) gxr[j] += yr[j] * (gr[j] - d);
      }
      return;
    }
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * n * inner + in;
        double dotp = 0.0;
        for (std::size_t j = 0; j < n; ++j) dotp += static_cast<double>(g[base + j * inner]) * yv[base + j * inner];
        for (std::size_t j = 0; j < n; ++j) {
          const std::size_t idx = base + j * inner;
          gx[idx] += static_cast<T>(yv[idx] * (g[idx] - dotp));
        }
      }
    }
  });
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, double eps) {
  same_tape(x, gamma);
  same_tape(x, beta);
  const Shape& s = x.shape();
  const std::size_t d = s.back();
  if (gamma.size() != d || beta.size() != d)
    throw DimensionError("layer_norm: gamma/beta " + shape_str(gamma.shape()) + "/" + shape_str(beta.shape()) +
                         " do not match last axis of " + shape_str(s));
  const std::size_t rows = x.size() / d;
  Tensor<T> out(s);
  std::vector<T> xhat(x.size());
  std::vector<T> rstd(rows);
  const T* xv = ptr(x);
  const T* gv = ptr(gamma);
  const T* bv = ptr(beta);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double rs = 1.0 / std::sqrt(var + eps);
    rstd[r] = static_cast<T>(rs);
    for (std::size_t j = 0; j < d; ++j) {
      const T xh = static_cast<T>((row[j] - mu) * rs);
      xhat[r * d + j] = xh;
      out[r * d + j] = xh * gv[j] + bv[j];
    }
  }
  return tape_of(x).record(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, rows, d, xhat = std::move(xhat), rstd = std::move(rstd)](Tape<T>& t, const Var<T>& y) {
        auto g = t.grad(y);
        const T* gv = ptr(gamma);
        if (t.needs_grad(gamma) || t.needs_grad(beta)) {
          auto gg = t.grad(gamma);
          auto gb = t.grad(beta);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) {
              gg[j] += g[r * d + j] * xhat[r * d + j];
              gb[j] += g[r * d + j];
            }
        }
        if (!t.needs_grad(x)) return;
        auto gx = t.grad(x);
        for (std::size_t r = 0; r < rows; ++r) {
          double mean_dxh = 0.0, mean_dxh_xh = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double dxh = static_cast<double>(g[r * d + j]) * gv[j];
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xhat[r * d + j];
          }
          mean_dxh /= static_cast<double>(d);
          mean_dxh_xh /= static_cast<double>(d);
          for (std::size_t j = 0; j < d; ++j) {
            const double dxh = static_cast<double>(g[r * d + j]) * gv[j];
            gx[r * d + j] += static_cast<T>(rstd[r] * (dxh - mean_dxh - xhat[r * d + j] * mean_dxh_xh));
          }
        }
      });
}

template <typename T>
Var<T> group_norm(const Var<T>& x, std::size_t num_groups, const Var<T>& gamma, const Var<T>& beta, double eps) {
  same_tape(x, gamma);
  same_tape(x, beta);
  const Bct dims = as_bct(x.shape(), "group_norm");
  if (num_groups == 0 || dims.channels % num_groups != 0)
    throw ConfigError("group_norm: " + std::to_string(dims.channels) + " channels not divisible into " +
                      std::to_string(num_groups) + " groups");
  if (gamma.size() != dims.channels || beta.size() != dims.channels)
    throw DimensionError("group_norm: gamma/beta length must equal channel count " + std::to_string(dims.channels));
  const std::size_t cg = dims.channels / num_groups;
  const std::size_t block = cg * dims.time;
  const std::size_t n_blocks = dims.batch * num_groups;
  Tensor<T> out(x.shape());
  std::vector<T> xhat(x.size());
  std::vector<T> rstd(n_blocks);
  const T* xv = ptr(x);
  const T* gv = ptr(gamma);
  const T* bv = ptr(beta);
  for (std::size_t blk = 0; blk < n_blocks; ++blk) {
    const T* src = xv + blk * block;
    double mu = 0.0;
    for (std::size_t i = 0; i < block; ++i) mu += src[i];
    mu /= static_cast<double>(block);
    double var = 0.0;
    for (std::size_t i = 0; i < block; ++i) var += (src[i] - mu) * (src[i] - mu);
    var /= static_cast<double>(block);
    const double rs = 1.0 / std::sqrt(var + eps);
    rstd[blk] = static_cast<T>(rs);
    const std::size_t group = blk % num_groups;
    for (std::size_t i = 0; i < block; ++i) {
      const std::size_t ch = group * cg + i / dims.time;
      const T xh = static_cast<T>((src[i] - mu) * rs);
      xhat[blk * block + i] = xh;
      out[blk * block + i] = xh * gv[ch] + bv[ch];
    }
  }
  return tape_of(x).record(std::move(out), {x, gamma, beta},
                           [x, gamma, beta, num_groups, cg, block, n_blocks, time = dims.time,
                            xhat = std::move(xhat), rstd = std::move(rstd)](Tape<T>& t, const Var<T>& y) {
                             auto g = t.grad(y);
                             const T* gv = ptr(gamma);
                             if (t.needs_grad(gamma) || t.needs_grad(beta)) {
                               auto gg = t.grad(gamma);
                               auto gb = t.grad(beta);
                               for (std::size_t blk = 0; blk < n_blocks; ++blk) {
                                 const std::size_t group = blk % num_groups;
                                 for (std::size_t i = 0; i < block; ++i) {
                                   const std::size_t ch = group * cg + i / time;
                                   gg[ch] += g[blk * block + i] * xhat[blk * block + i];
                                   gb[ch] += g[blk * block + i];
                                 }
                               }
                             }
                             if (!t.needs_grad(x)) return;
                             auto gx = t.grad(x);
                             for (std::size_t blk = 0; blk < n_blocks; ++blk) {
                               const std::size_t group = blk % num_groups;
                               double m1 = 0.0, m2 = 0.0;
                               for (std::size_t i = 0; i < block; ++i) {
                                 const double dxh = static_cast<double>(g[blk * block + i]) * gv[group * cg + i / time];
                                 m1 += dxh;
                                 m2 += dxh * xhat[blk * block + i];
                               }
                               m1 /= static_cast<double>(block);
                               m2 /= static_cast<double>(block);
                               for (std::size_t i = 0; i < block; ++i) {
                                 const double dxh = static_cast<double>(g[blk * block + i]) * gv[group * cg + i / time];
                                 gx[blk * block + i] += static_cast<T>(rstd[blk] * (dxh - m1 - xhat[blk * block + i] * m2));
                               }
                             }
                           });
}

namespace {

// cols[(c*K + j) x T] = x[c, t + j - pad], zero outside.
template <typename T>
void im2col(const T* x, std::size_t cin, std::size_t len, std::size_t kw, T* cols) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(kw / 2);
  for (std::size_t c = 0; c < cin; ++c)
    for (std::size_t j = 0; j < kw; ++j) {
      T* dst = cols + (c * kw + j) * len;
      for (std::size_t t = 0; t < len; ++t) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - pad;
        dst[t] = (src >= 0 && src < static_cast<std::ptrdiff_t>(len)) ? x[c * len + src] : T{0};
      }
    }
}

template <typename T>
void col2im_add(const T* cols, std::size_t cin, std::size_t len, std::size_t kw, T* dx) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(kw / 2);
  for (std::size_t c = 0; c < cin; ++c)
    for (std::size_t j = 0; j < kw; ++j) {
      const T* src = cols + (c * kw + j) * len;
      for (std::size_t t = 0; t < len; ++t) {
        const std::ptrdiff_t dst = static_cast<std::ptrdiff_t>(t + j) - pad;
        if (dst >= 0 && dst < static_cast<std::ptrdiff_t>(len)) dx[c * len + dst] += src[t];
      }
    }
}

}  // namespace

template <typename T>
Var<T> conv1d(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  same_tape(x, w);
  same_tape(x, b);
  const Bct dims = as_bct(x.shape(), "conv1d");
  const Shape& sw = w.shape();
  if (sw.size() != 3) throw DimensionError("conv1d: weight must be [Cout x Cin x K], got " + shape_str(sw));
  const std::size_t cout = sw[0], kw = sw[2];
  if (kw % 2 == 0) throw ConfigError("conv1d: kernel size must be odd for same padding, got " + std::to_string(kw));
  if (sw[1] != dims.channels)
    throw DimensionError("conv1d: weight " + shape_str(sw) + " expects " + std::to_string(sw[1]) +
                         " input channels, input is " + shape_str(x.shape()));
  if (b.size() != cout) throw DimensionError("conv1d: bias length must be " + std::to_string(cout));
  const std::size_t cin = dims.channels, len = dims.time, ck = cin * kw;
  Shape so = x.shape();
  so[so.size() - 2] = cout;
  Tensor<T> out(so);
  std::vector<T> cols(ck * len);
  const T* bv = ptr(b);
  for (std::size_t bi = 0; bi < dims.batch; ++bi) {
    T* o = out.data().data() + bi * cout * len;
    for (std::size_t c = 0; c < cout; ++c) std::fill_n(o + c * len, len, bv[c]);
    im2col(ptr(x) + bi * cin * len, cin, len, kw, cols.data());
    simd::gemm_nn(cout, len, ck, ptr(w), cols.data(), o);
  }
  return tape_of(x).record(std::move(out), {x, w, b},
                           [x, w, b, batch = dims.batch, cin, cout, len, kw, ck](Tape<T>& t, const Var<T>& y) {
                             auto g = t.grad(y);
                             std::vector<T> cols(ck * len);
                             T* gw = t.needs_grad(w) ? t.grad(w).data() : nullptr;
                             T* gb = t.needs_grad(b) ? t.grad(b).data() : nullptr;
                             T* gx = t.needs_grad(x) ? t.grad(x).data() : nullptr;
                             for (std::size_t bi = 0; bi < batch; ++bi) {
                               const T* go = g.data() + bi * cout * len;
                               if (gb)
                                 for (std::size_t c = 0; c < cout; ++c)
                                   for (std::size_t tt = 0; tt < len; ++tt) gb[c] += go[c * len + tt];
                               if (gw) {
                                 im2col(ptr(x) + bi * cin * len, cin, len, kw, cols.data());
                                 simd::gemm_nt(cout, ck, len, go, cols.data(), gw);
                               }
                               if (gx) {
                                 std::fill(cols.begin(), cols.end(), T{0});
                                 simd::gemm_tn(ck, len, cout, ptr(w), go, cols.data());
                                 col2im_add(cols.data(), cin, len, kw, gx + bi * cin * len);
                               }
                             }
                           });
}

template <typename T>
Var<T> dropout(const Var<T>& x, double rate, bool training, RngState& rng) {
  if (!(rate >= 0.0) || rate >= 1.0) throw ConfigError("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> mask(x.size());
  for (auto& m : mask) m = rng.uniform() < rate ? T{0} : keep_scale;
  Tensor<T> out(x.shape());
  simd::kernels<T>().mul(out.size(), ptr(x), mask.data(), out.data().data());
  return tape_of(x).record(std::move(out), {x}, [x, mask = std::move(mask)](Tape<T>& t, const Var<T>& y) {
    auto g = t.grad(y);
    auto gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
  });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  double acc = 0.0;
  for (T v : x.value().data()) acc += v;
  return tape_of(x).record(Tensor<T>::scalar(static_cast<T>(acc)), {x}, [x](Tape<T>& t, const Var<T>& y) {
    const T g = t.grad(y)[0];
    for (auto& v : t.grad(x)) v += g;
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  return scale(sum(x), static_cast<T>(1.0 / static_cast<double>(x.size())));
}

template <typename T>
Var<T> mse_loss(const Var<T>& pred, const Tensor<T>& target) {
  require_same_shape(pred.shape(), target.shape(), "mse_loss");
  const T* pv = ptr(pred);
  double acc = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double d = static_cast<double>(pv[i]) - static_cast<double>(target[i]);
    acc += d * d;
  }
  const double n = static_cast<double>(target.size());
  return tape_of(pred).record(Tensor<T>::scalar(static_cast<T>(acc / n)), {pred},
                              [pred, target, n](Tape<T>& t, const Var<T>& y) {
                                const double g = t.grad(y)[0];
                                auto gp = t.grad(pred);
                                const T* pv = ptr(pred);
                                for (std::size_t i = 0; i < gp.size(); ++i)
                                  gp[i] += static_cast<T>(2.0 * g * (static_cast<double>(pv[i]) - target[i]) / n);
                              });
}

#define IMU2EMG_INSTANTIATE(T)                                                                      \
  template Var<T> add(const Var<T>&, const Var<T>&);                                                \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                                \
  template Var<T> scale(const Var<T>&, T);                                                          \
  template Var<T> reshape(const Var<T>&, Shape);                                                    \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                                             \
  template Var<T> bmm(const Var<T>&, const Var<T>&, bool);                                          \
  template Var<T> transpose_last2(const Var<T>&);                                                   \
  template Var<T> split_heads(const Var<T>&, std::size_t);                                          \
  template Var<T> merge_heads(const Var<T>&, std::size_t);                                          \
  template Var<T> gelu(const Var<T>&);                                                              \
  template Var<T> softmax(const Var<T>&, std::size_t);                                              \
  template Var<T> layer_norm(const Var<T>&, const Var<T>&, const Var<T>&, double);                  \
  template Var<T> group_norm(const Var<T>&, std::size_t, const Var<T>&, const Var<T>&, double);     \
  template Var<T> conv1d(const Var<T>&, const Var<T>&, const Var<T>&);                              \
  template Var<T> dropout(const Var<T>&, double, bool, RngState&);                                  \
  template Var<T> sum(const Var<T>&);                                                               \
  template Var<T> mean(const Var<T>&);                                                              \
  template Var<T> mse_loss(const Var<T>&, const Tensor<T>&);

IMU2EMG_INSTANTIATE(float)
IMU2EMG_INSTANTIATE(double)
#undef IMU2EMG_INSTANTIATE

}  // namespace imu2emg::ops
