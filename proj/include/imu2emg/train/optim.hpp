#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "imu2emg/core/tensor.hpp"
#include "imu2emg/model/transformer.hpp"

namespace imu2emg::train {

enum class OptimizerKind { adamw, adam };

std::string optimizer_name(OptimizerKind k);
OptimizerKind parse_optimizer(const std::string& name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adamw;
  double lr = 3e-4;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* tensor = nullptr;
  bool decay = false;
};

/// Every model tensor; only `.weight` tensors take weight decay, so norm
/// gains and all biases are excluded.
template <typename T>
std::vector<ParamRef<T>> param_refs(model::ModelParams<T>& params);

template <typename T>
struct OptimizerState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::uint64_t step = 0;
};

// Adam and AdamW share one update. Adam folds the decay into the gradient
// (L2); AdamW shrinks the weights separately. With weight_decay == 0 both
// execute the same arithmetic.
template <typename T>
class Adam {
 public:
  explicit Adam(OptimizerConfig cfg) : cfg_(cfg) {}

  /// Reads each tensor's grad slot; tensors without a grad are skipped.
  void step(std::span<const ParamRef<T>> params);

  const OptimizerState<T>& state() const { return state_; }
  const OptimizerConfig& config() const { return cfg_; }
  void reset() { state_ = {}; }

 private:
  OptimizerConfig cfg_;
  OptimizerState<T> state_;
};

struct ClipResult {
  double pre_norm = 0.0;
  double post_norm = 0.0;
  bool applied = false;
};

/// Global L2 norm over all grads; rescales every grad by threshold / norm
/// when the norm exceeds the threshold.
template <typename T>
ClipResult grad_clip_norm(std::span<const ParamRef<T>> params, double threshold);

template <typename T>
double global_grad_norm(std::span<const ParamRef<T>> params);

}  // namespace imu2emg::train
