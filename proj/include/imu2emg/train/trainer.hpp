#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "imu2emg/core/rng.hpp"
#include "imu2emg/core/tensor.hpp"
#include "imu2emg/data/protocol.hpp"
#include "imu2emg/model/transformer.hpp"
#include "imu2emg/train/optim.hpp"

namespace imu2emg::train {

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::adamw;
  double lr = 3e-4;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch_size = 128;
  std::size_t max_epochs = 1000;
  std::size_t patience = 50;
  std::uint64_t seed = 0;
  /// Fills the seconds column of the log; off keeps logs byte-stable.
  bool record_wall_time = false;

  OptimizerConfig optimizer_config() const;
  std::vector<std::string> problems() const;
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;  // NaN when there is no validation set
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_loss = std::numeric_limits<double>::infinity();
  bool stopped_early = false;
  std::size_t steps = 0;
  /// FNV-1a over the ids of every training segment in the order the
  /// batches consumed them; equal digests mean identical data order.
  std::uint64_t order_digest = 0xcbf29ce484222325ULL;

  /// epoch,train_loss,val_loss,seconds
  std::string to_csv(bool with_seconds) const;
};

/// Patience rule on a monitored loss: stop once `patience` epochs have
/// passed without a strict improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}
  /// Returns true when `loss` is a new best.
  bool update(std::size_t epoch, double loss);
  bool should_stop(std::size_t epoch) const { return epoch >= best_epoch_ + patience_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_; }

 private:
  std::size_t patience_;
  std::size_t best_epoch_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

template <typename T>
struct Batch {
  Tensor<T> inputs;   // [B x 101 x 24]
  Tensor<T> targets;  // [B x 101 x 10]
};

template <typename T>
Batch<T> make_batch(const std::vector<const data::MovementSegment*>& segments);

/// Eval-mode MSE over all segments, accumulated in double.
template <typename T>
double evaluate_loss(model::ModelParams<T>& params, const std::vector<const data::MovementSegment*>& segments,
                     std::size_t batch_size = 128);

/// Eval-mode predictions, one [101 x out] matrix per segment.
template <typename T>
std::vector<Matrix> predict_segments(model::ModelParams<T>& params,
                                     const std::vector<const data::MovementSegment*>& segments,
                                     std::size_t batch_size = 128);

template <typename T>
struct FitResult {
  model::ModelParams<T> params;  // from the best epoch
  TrainLog log;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Seeded epoch loop with shuffling, AdamW steps and early stopping on the
/// validation loss (training loss when the validation set is empty).
/// Every batch is checked against the fold for leakage.
template <typename T>
FitResult<T> fit(const data::LosoFold& fold, const data::TrainValSplit& split, const model::ModelConfig& model_cfg,
                 const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Same loop starting from given parameters.
template <typename T>
FitResult<T> fit_from(model::ModelParams<T> init, const data::LosoFold& fold, const data::TrainValSplit& split,
                      const TrainConfig& cfg, const EpochCallback& on_epoch = {});

}  // namespace imu2emg::train
