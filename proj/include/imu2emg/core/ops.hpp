#pragma once

#include <cstddef>

#include "imu2emg/core/rng.hpp"
#include "imu2emg/core/tape.hpp"

// Differentiable operators: exactly the set the transformer needs. Each op
// computes its forward value eagerly and records a backward closure on the
// tape of its inputs.
namespace imu2emg::ops {

/// x * Phi(x) with the exact Gaussian CDF.
double gelu_scalar(double x);
double gelu_grad_scalar(double x);

/// a + b, where b's shape equals a trailing slice of a's shape (bias,
/// positional encoding) or a's full shape.
template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

/// Elementwise product of equal shapes.
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> scale(const Var<T>& a, T factor);

/// Same data under a new shape of equal size.
template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape);

/// a[... x k] * b[k x n] -> [... x n]. Leading dimensions of `a` are flattened.
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b);

/// Batched product: a[B x m x k] * b[B x k x n], or b[B x n x k] transposed.
template <typename T>
Var<T> bmm(const Var<T>& a, const Var<T>& b, bool transpose_b = false);

/// Swaps the last two axes.
template <typename T>
Var<T> transpose_last2(const Var<T>& x);

/// [B x T x H*dh] -> [B*H x T x dh]
template <typename T>
Var<T> split_heads(const Var<T>& x, std::size_t heads);

/// [B*H x T x dh] -> [B x T x H*dh]
template <typename T>
Var<T> merge_heads(const Var<T>& x, std::size_t heads);

template <typename T>
Var<T> gelu(const Var<T>& x);

/// Max-subtracted softmax along `axis`.
template <typename T>
Var<T> softmax(const Var<T>& x, std::size_t axis);

/// Normalizes over the last axis, then applies gamma/beta.
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, double eps);

/// x: [C x T] or [B x C x T]; statistics per group of C/num_groups channels
/// over all time steps, then per-channel affine.
template <typename T>
Var<T> group_norm(const Var<T>& x, std::size_t num_groups, const Var<T>& gamma, const Var<T>& beta,
                  double eps);

/// Stride-1 cross-correlation with zero same-padding.
/// x: [Cin x T] or [B x Cin x T], w: [Cout x Cin x K] (K odd), b: [Cout].
template <typename T>
Var<T> conv1d(const Var<T>& x, const Var<T>& w, const Var<T>& b);

/// Inverted dropout. Identity when !training or rate == 0.
template <typename T>
Var<T> dropout(const Var<T>& x, double rate, bool training, RngState& rng);

template <typename T>
Var<T> sum(const Var<T>& x);

template <typename T>
Var<T> mean(const Var<T>& x);

/// Mean squared difference against a fixed target; accumulates in double.
template <typename T>
Var<T> mse_loss(const Var<T>& pred, const Tensor<T>& target);

}  // namespace imu2emg::ops
