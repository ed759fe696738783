#include "imu2emg/train/optim.hpp"

#include <cmath>
#include <limits>

#include "imu2emg/core/errors.hpp"

namespace imu2emg::train {

std::string optimizer_name(OptimizerKind k) { return k == OptimizerKind::adamw ? "adamw" : "adam"; }

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "adamw") return OptimizerKind::adamw;
  if (name == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + name + "' (expected adamw or adam)");
}

template <typename T>
std::vector<ParamRef<T>> param_refs(model::ModelParams<T>& params) {
  std::vector<ParamRef<T>> out;
  params.for_each([&](const std::string& name, Tensor<T>& t) {
    const bool decay = name.size() >= 7 && name.compare(name.size() - 7, 7, ".weight") == 0;
    out.push_back({name, &t, decay});
  });
  return out;
}

template <typename T>
void Adam<T>::step(std::span<const ParamRef<T>> params) {
  if (state_.m.empty()) {
    for (const auto& p : params) {
      state_.m.emplace_back(p.tensor->size(), T(0));
      state_.v.emplace_back(p.tensor->size(), T(0));
    }
  }
  if (state_.m.size() != params.size()) throw ContractError("optimizer state does not match the parameter list");
  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const T b1 = static_cast<T>(cfg_.beta1);
  const T b2 = static_cast<T>(cfg_.beta2);
  const T c1 = static_cast<T>(1.0 / (1.0 - std::pow(cfg_.beta1, t)));
  const T c2 = static_cast<T>(1.0 / (1.0 - std::pow(cfg_.beta2, t)));
  const T lr = static_cast<T>(cfg_.lr);
  const T eps = static_cast<T>(cfg_.eps);
  const bool coupled = cfg_.kind == OptimizerKind::adam;

  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor<T>& p = *params[k].tensor;
    if (!p.has_grad()) continue;
    if (state_.m[k].size() != p.size()) throw ContractError("optimizer moment shape mismatch for " + params[k].name);
    const T wd = params[k].decay ? static_cast<T>(cfg_.weight_decay) : T(0);
    auto theta = p.data();
    auto grad = p.grad();
    auto& m = state_.m[k];
    auto& v = state_.v[k];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      T g = grad[i];
      if (coupled && wd != T(0)) g += wd * theta[i];
      m[i] = b1 * m[i] + (T(1) - b1) * g;
      v[i] = b2 * v[i] + (T(1) - b2) * g * g;
      const T mhat = m[i] * c1;
      const T vhat = v[i] * c2;
      if (!coupled && wd != T(0)) theta[i] -= lr * wd * theta[i];
      theta[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

template <typename T>
double global_grad_norm(std::span<const ParamRef<T>> params) {
  double sq = 0.0;
  for (const auto& p : params)
    if (p.tensor->has_grad())
      for (T g : p.tensor->grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  return std::sqrt(sq);
}

template <typename T>
ClipResult grad_clip_norm(std::span<const ParamRef<T>> params, double threshold) {
  if (!(threshold > 0.0)) throw ConfigError("clip threshold must be positive");
  ClipResult r;
  r.pre_norm = global_grad_norm(params);
  r.post_norm = r.pre_norm;
  if (r.pre_norm > threshold) {
    // Shrink by a few ulps extra so rounding in T cannot push the
    // recomputed norm above the threshold.
    const double margin = 1.0 - 4.0 * static_cast<double>(std::numeric_limits<T>::epsilon());
    const T factor = static_cast<T>(threshold / r.pre_norm * margin);
    for (const auto& p : params)
      if (p.tensor->has_grad())
        for (T& g : p.tensor->grad()) g *= factor;
    r.applied = true;
    r.post_norm = global_grad_norm(params);
  }
  return r;
}

#define IMU2EMG_INSTANTIATE(T)                                                         \
  template std::vector<ParamRef<T>> param_refs(model::ModelParams<T>&);                \
  template class Adam<T>;                                                              \
  template ClipResult grad_clip_norm(std::span<const ParamRef<T>>, double);            \
  template double global_grad_norm(std::span<const ParamRef<T>>);

IMU2EMG_INSTANTIATE(float)
IMU2EMG_INSTANTIATE(double)
#undef IMU2EMG_INSTANTIATE

}  // namespace imu2emg::train
