#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "imu2emg/core/rng.hpp"
#include "imu2emg/core/tape.hpp"
#include "imu2emg/core/tensor.hpp"
#include "imu2emg/model/config.hpp"

namespace imu2emg::model {

// Linear weights are stored [in x out] so a projection is x * W + b.
template <typename T>
struct LayerParams {
  Tensor<T> ln1_gamma, ln1_beta;
  Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor<T> ln2_gamma, ln2_beta;
  Tensor<T> w1, b1;
  Tensor<T> w2, b2;  // gate branch; empty for the plain GELU FFN
  Tensor<T> w_out, b_out;
};

template <typename T>
struct ModelParams {
  ModelConfig config;
  Tensor<T> conv_w, conv_b;  // [d x in x k], [d]
  Tensor<T> gn_gamma, gn_beta;
  std::vector<LayerParams<T>> layers;
  Tensor<T> lnf_gamma, lnf_beta;
  Tensor<T> head_w, head_b;  // [d x out], [out]

  /// Visits every trainable tensor in a fixed order with a stable name.
  void for_each(const std::function<void(const std::string&, Tensor<T>&)>& fn);
  void for_each_const(const std::function<void(const std::string&, const Tensor<T>&)>& fn) const;

  std::size_t count() const;
  void zero_grad();
  void set_requires_grad(bool on);

  template <typename U>
  ModelParams<U> cast() const;
};

/// Correct shapes, zero weights, unit norm gains.
template <typename T>
ModelParams<T> empty_params(const ModelConfig& cfg);

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); norm gains 1; biases 0.
template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg, RngState& rng);

/// Sinusoidal table [seq_len x d_model]; sin on even, cos on odd columns.
template <typename T>
Tensor<T> positional_encoding(std::size_t seq_len, std::size_t d_model);

/// Wo * (GELU(W1 x + b1) (.) (W2 x + b2)) + bo over the last axis.
template <typename T>
Var<T> geglu_ff(const Var<T>& x, const Var<T>& w1, const Var<T>& b1, const Var<T>& w2, const Var<T>& b2,
                const Var<T>& wo, const Var<T>& bo);

/// Wo * GELU(W1 x + b1) + bo.
template <typename T>
Var<T> gelu_ff(const Var<T>& x, const Var<T>& w1, const Var<T>& b1, const Var<T>& wo, const Var<T>& bo);

/// Bidirectional multi-head self-attention on x [B x T x d].
template <typename T>
Var<T> self_attention(const Var<T>& x, std::size_t heads, const Var<T>& wq, const Var<T>& bq, const Var<T>& wk,
                      const Var<T>& bk, const Var<T>& wv, const Var<T>& bv, const Var<T>& wo, const Var<T>& bo);

/// Conv1D -> GroupNorm -> GELU on x [B x T x in], returning [B x T x d].
template <typename T>
Var<T> embed(Tape<T>& tape, ModelParams<T>& params, const Var<T>& x);

/// Pre-norm block: x + drop(MHA(LN(x))), then + drop(FFN(LN(.))).
template <typename T>
Var<T> encoder_layer(Tape<T>& tape, const Var<T>& x, LayerParams<T>& p, const ModelConfig& cfg, bool training,
                     RngState& rng);

/// x: [T x in] or [B x T x in] with T == seq_len; returns [.. x T x out].
/// Uses whichever FFN the config names.
template <typename T>
Var<T> forward(Tape<T>& tape, ModelParams<T>& params, const Var<T>& x, bool training, RngState& rng);

/// forward() restricted to the plain GELU FFN variant.
template <typename T>
Var<T> forward_nongated(Tape<T>& tape, ModelParams<T>& params, const Var<T>& x, bool training, RngState& rng);

/// Eval-mode convenience: builds a private tape and returns the output.
template <typename T>
Tensor<T> predict(ModelParams<T>& params, const Tensor<T>& x);

}  // namespace imu2emg::model
