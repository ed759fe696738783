#include "imu2emg/model/transformer.hpp"

#include <cmath>

#include "imu2emg/core/errors.hpp"
#include "imu2emg/core/ops.hpp"

namespace imu2emg::model {

using namespace imu2emg::ops;

template <typename T>
void ModelParams<T>::for_each(const std::function<void(const std::string&, Tensor<T>&)>& fn) {
  fn("embed.conv.weight", conv_w);
  fn("embed.conv.bias", conv_b);
  fn("embed.norm.gamma", gn_gamma);
  fn("embed.norm.beta", gn_beta);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& l = layers[i];
    const std::string p = "layers." + std::to_string(i) + ".";
    fn(p + "norm1.gamma", l.ln1_gamma);
    fn(p + "norm1.beta", l.ln1_beta);
    fn(p + "attn.q.weight", l.wq);
    fn(p + "attn.q.bias", l.bq);
    fn(p + "attn.k.weight", l.wk);
    fn(p + "attn.k.bias", l.bk);
    fn(p + "attn.v.weight", l.wv);
    fn(p + "attn.v.bias", l.bv);
    fn(p + "attn.o.weight", l.wo);
    fn(p + "attn.o.bias", l.bo);
    fn(p + "norm2.gamma", l.ln2_gamma);
    fn(p + "norm2.beta", l.ln2_beta);
    fn(p + "ffn.w1.weight", l.w1);
    fn(p + "ffn.w1.bias", l.b1);
    if (config.ffn == FfnKind::geglu) {
      fn(p + "ffn.w2.weight", l.w2);
      fn(p + "ffn.w2.bias", l.b2);
    }
    fn(p + "ffn.wo.weight", l.w_out);
    fn(p + "ffn.wo.bias", l.b_out);
  }
  fn("final_norm.gamma", lnf_gamma);
  fn("final_norm.beta", lnf_beta);
  fn("head.weight", head_w);
  fn("head.bias", head_b);
}

template <typename T>
void ModelParams<T>::for_each_const(const std::function<void(const std::string&, const Tensor<T>&)>& fn) const {
  const_cast<ModelParams<T>*>(this)->for_each([&](const std::string& n, Tensor<T>& t) { fn(n, t); });
}

template <typename T>
std::size_t ModelParams<T>::count() const {
  std::size_t n = 0;
  for_each_const([&](const std::string&, const Tensor<T>& t) { n += t.size(); });
  return n;
}

template <typename T>
void ModelParams<T>::zero_grad() {
  for_each([](const std::string&, Tensor<T>& t) { t.zero_grad(); });
}

template <typename T>
void ModelParams<T>::set_requires_grad(bool on) {
  for_each([on](const std::string&, Tensor<T>& t) { t.set_requires_grad(on); });
}

template <typename T>
ModelParams<T> empty_params(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.d_model;
  const std::size_t h = cfg.effective_hidden();
  ModelParams<T> p;
  p.config = cfg;
  p.conv_w = Tensor<T>({d, cfg.input_dim, cfg.conv_kernel});
  p.conv_b = Tensor<T>({d});
  p.gn_gamma = Tensor<T>({d}, T(1));
  p.gn_beta = Tensor<T>({d});
  for (std::size_t i = 0; i < cfg.n_layers; ++i) {
    LayerParams<T> l;
    l.ln1_gamma = Tensor<T>({d}, T(1));
    l.ln1_beta = Tensor<T>({d});
    for (auto* w : {&l.wq, &l.wk, &l.wv, &l.wo}) *w = Tensor<T>({d, d});
    for (auto* b : {&l.bq, &l.bk, &l.bv, &l.bo}) *b = Tensor<T>({d});
    l.ln2_gamma = Tensor<T>({d}, T(1));
    l.ln2_beta = Tensor<T>({d});
    l.w1 = Tensor<T>({d, h});
    l.b1 = Tensor<T>({h});
    if (cfg.ffn == FfnKind::geglu) {
      l.w2 = Tensor<T>({d, h});
      l.b2 = Tensor<T>({h});
    }
    l.w_out = Tensor<T>({h, d});
    l.b_out = Tensor<T>({d});
    p.layers.push_back(std::move(l));
  }
  p.lnf_gamma = Tensor<T>({d}, T(1));
  p.lnf_beta = Tensor<T>({d});
  p.head_w = Tensor<T>({d, cfg.output_dim});
  p.head_b = Tensor<T>({cfg.output_dim});
  return p;
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

template <typename T>
template <typename U>
ModelParams<U> ModelParams<T>::cast() const {
  auto out = empty_params<U>(config);
  std::vector<const Tensor<T>*> src;
  for_each_const([&](const std::string&, const Tensor<T>& t) { src.push_back(&t); });
  std::size_t i = 0;
  out.for_each([&](const std::string&, Tensor<U>& t) {
    t = src[i]->template cast<U>();
    t.set_requires_grad(src[i]->requires_grad());
    ++i;
  });
  return out;
}

template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg, RngState& rng) {
  auto p = empty_params<T>(cfg);
  p.for_each([&](const std::string& name, Tensor<T>& t) {
    if (!ends_with(name, ".weight")) return;
    // conv weight is [out x in x k]; linear weights are [in x out].
    const std::size_t fan_in = t.rank() == 3 ? t.dim(1) * t.dim(2) : t.dim(0);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  });
  p.set_requires_grad(true);
  return p;
}

template <typename T>
Tensor<T> positional_encoding(std::size_t seq_len, std::size_t d_model) {
  Tensor<T> pe({seq_len, d_model});
  for (std::size_t t = 0; t < seq_len; ++t)
    for (std::size_t i = 0; i < d_model; ++i) {
      const double expo = static_cast<double>(i - i % 2) / static_cast<double>(d_model);
      const double angle = static_cast<double>(t) / std::pow(10000.0, expo);
      pe[t * d_model + i] = static_cast<T>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  return pe;
}

template <typename T>
Var<T> geglu_ff(const Var<T>& x, const Var<T>& w1, const Var<T>& b1, const Var<T>& w2, const Var<T>& b2,
                const Var<T>& wo, const Var<T>& bo) {
  auto a = gelu(add(matmul(x, w1), b1));
  auto g = add(matmul(x, w2), b2);
  return add(matmul(mul(a, g), wo), bo);
}

template <typename T>
Var<T> gelu_ff(const Var<T>& x, const Var<T>& w1, const Var<T>& b1, const Var<T>& wo, const Var<T>& bo) {
  return add(matmul(gelu(add(matmul(x, w1), b1)), wo), bo);
}

template <typename T>
Var<T> self_attention(const Var<T>& x, std::size_t heads, const Var<T>& wq, const Var<T>& bq, const Var<T>& wk,
                      const Var<T>& bk, const Var<T>& wv, const Var<T>& bv, const Var<T>& wo, const Var<T>& bo) {
  const Shape in_shape = x.shape();
  Var<T> x3 = in_shape.size() == 2 ? reshape(x, {1, in_shape[0], in_shape[1]}) : x;
  const std::size_t d = x3.shape()[2];
  if (heads == 0 || d % heads) throw ConfigError("attention width must be divisible by the head count");
  const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d / heads)));
  auto q = split_heads(add(matmul(x3, wq), bq), heads);
  auto k = split_heads(add(matmul(x3, wk), bk), heads);
  auto v = split_heads(add(matmul(x3, wv), bv), heads);
  auto att = softmax(scale(bmm(q, k, true), inv_sqrt), 2);
  auto ctx = merge_heads(bmm(att, v), heads);
  auto out = add(matmul(ctx, wo), bo);
  return in_shape.size() == 2 ? reshape(out, in_shape) : out;
}

template <typename T>
Var<T> embed(Tape<T>& tape, ModelParams<T>& params, const Var<T>& x) {
  const auto& cfg = params.config;
  auto h = conv1d(transpose_last2(x), tape.leaf(params.conv_w), tape.leaf(params.conv_b));
  h = group_norm(h, cfg.groupnorm_groups, tape.leaf(params.gn_gamma), tape.leaf(params.gn_beta), cfg.norm_eps);
  return transpose_last2(gelu(h));
}

template <typename T>
Var<T> encoder_layer(Tape<T>& tape, const Var<T>& x, LayerParams<T>& p, const ModelConfig& cfg, bool training,
                     RngState& rng) {
  auto h = layer_norm(x, tape.leaf(p.ln1_gamma), tape.leaf(p.ln1_beta), cfg.norm_eps);
  h = self_attention(h, cfg.n_heads, tape.leaf(p.wq), tape.leaf(p.bq), tape.leaf(p.wk), tape.leaf(p.bk),
                     tape.leaf(p.wv), tape.leaf(p.bv), tape.leaf(p.wo), tape.leaf(p.bo));
  auto y = add(x, dropout(h, cfg.dropout_rate, training, rng));
  h = layer_norm(y, tape.leaf(p.ln2_gamma), tape.leaf(p.ln2_beta), cfg.norm_eps);
  if (cfg.ffn == FfnKind::geglu)
    h = geglu_ff(h, tape.leaf(p.w1), tape.leaf(p.b1), tape.leaf(p.w2), tape.leaf(p.b2), tape.leaf(p.w_out),
                 tape.leaf(p.b_out));
  else
    h = gelu_ff(h, tape.leaf(p.w1), tape.leaf(p.b1), tape.leaf(p.w_out), tape.leaf(p.b_out));
  return add(y, dropout(h, cfg.dropout_rate, training, rng));
}

template <typename T>
Var<T> forward(Tape<T>& tape, ModelParams<T>& params, const Var<T>& x, bool training, RngState& rng) {
  const auto& cfg = params.config;
  const Shape s = x.shape();
  const bool batched = s.size() == 3;
  if ((s.size() != 2 && !batched) || s[s.size() - 2] != cfg.seq_len || s.back() != cfg.input_dim)
    throw DimensionError("model input must be [" + std::to_string(cfg.seq_len) + "x" + std::to_string(cfg.input_dim) +
                         "] or batched, got " + shape_str(s));
  auto xb = batched ? x : reshape(x, {1, s[0], s[1]});
  auto h = embed(tape, params, xb);
  h = add(h, tape.constant(positional_encoding<T>(cfg.seq_len, cfg.d_model)));
  for (auto& layer : params.layers) h = encoder_layer(tape, h, layer, cfg, training, rng);
  h = layer_norm(h, tape.leaf(params.lnf_gamma), tape.leaf(params.lnf_beta), cfg.norm_eps);
  auto y = add(matmul(h, tape.leaf(params.head_w)), tape.leaf(params.head_b));
  return batched ? y : reshape(y, {s[0], cfg.output_dim});
}

template <typename T>
Var<T> forward_nongated(Tape<T>& tape, ModelParams<T>& params, const Var<T>& x, bool training, RngState& rng) {
  if (params.config.ffn != FfnKind::gelu) throw ConfigError("forward_nongated needs a config with ffn = gelu");
  return forward(tape, params, x, training, rng);
}

template <typename T>
Tensor<T> predict(ModelParams<T>& params, const Tensor<T>& x) {
  Tape<T> tape;
  RngState unused(0);
  return forward(tape, params, tape.constant(x), false, unused).value();
}

#define IMU2EMG_INSTANTIATE(T)                                                                                   \
  template struct ModelParams<T>;                                                                                \
  template ModelParams<T> empty_params(const ModelConfig&);                                                      \
  template ModelParams<T> init_params(const ModelConfig&, RngState&);                                            \
  template Tensor<T> positional_encoding(std::size_t, std::size_t);                                              \
  template Var<T> geglu_ff(const Var<T>&, const Var<T>&, const Var<T>&, const Var<T>&, const Var<T>&,            \
                           const Var<T>&, const Var<T>&);                                                        \
  template Var<T> gelu_ff(const Var<T>&, const Var<T>&, const Var<T>&, const Var<T>&, const Var<T>&);            \
  template Var<T> self_attention(const Var<T>&, std::size_t, const Var<T>&, const Var<T>&, const Var<T>&,        \
                                 const Var<T>&, const Var<T>&, const Var<T>&, const Var<T>&, const Var<T>&);     \
  template Var<T> embed(Tape<T>&, ModelParams<T>&, const Var<T>&);                                               \
  template Var<T> encoder_layer(Tape<T>&, const Var<T>&, LayerParams<T>&, const ModelConfig&, bool, RngState&); \
  template Var<T> forward(Tape<T>&, ModelParams<T>&, const Var<T>&, bool, RngState&);                            \
  template Var<T> forward_nongated(Tape<T>&, ModelParams<T>&, const Var<T>&, bool, RngState&);                   \
  template Tensor<T> predict(ModelParams<T>&, const Tensor<T>&);

IMU2EMG_INSTANTIATE(float)
IMU2EMG_INSTANTIATE(double)
#undef IMU2EMG_INSTANTIATE

template ModelParams<double> ModelParams<float>::cast<double>() const;
template ModelParams<float> ModelParams<double>::cast<float>() const;
template ModelParams<float> ModelParams<float>::cast<float>() const;
template ModelParams<double> ModelParams<double>::cast<double>() const;

}  // namespace imu2emg::model
