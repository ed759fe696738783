#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "imu2emg/data/protocol.hpp"
#include "imu2emg/metrics/metrics.hpp"
#include "imu2emg/model/transformer.hpp"
#include "imu2emg/train/optim.hpp"

namespace imu2emg::adapt {

struct AdaptConfig {
  double lr = 5e-5;
  std::size_t steps = 40;
  double clip_threshold = 1.0;
  train::OptimizerKind optimizer = train::OptimizerKind::adamw;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Calibration sets up to this size go in whole every step; larger ones
  /// are drawn as seeded shuffled mini-batches.
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;

  std::vector<std::string> problems() const;
  void validate() const;
};

template <typename T>
struct AdaptResult {
  model::ModelParams<T> params;
  double pre_loss = 0.0;   // eval-mode MSE on the calibration set
  double post_loss = 0.0;
  std::vector<double> trace;      // batch loss before each step
  std::vector<double> clip_norms; // global grad norm after clipping, per step
  bool aborted = false;
  std::string diagnostic;
};

/// Fine-tunes every parameter of a copy of theta0 for `steps` clipped
/// optimizer steps with fresh moments. A non-finite loss stops the run and
/// hands back theta0 unchanged with aborted set.
template <typename T>
AdaptResult<T> few_shot_adapt(const model::ModelParams<T>& theta0,
                              const std::vector<const data::MovementSegment*>& calibration, const AdaptConfig& cfg);

struct SweepConfig {
  std::vector<double> ratios{std::begin(data::kCalibrationRatios), std::end(data::kCalibrationRatios)};
  data::CalibrationPolicy policy = data::CalibrationPolicy::first;
  std::vector<std::uint64_t> seeds{0};
  AdaptConfig adapt;
  std::size_t eval_batch_size = 128;
};

struct SweepRow {
  double ratio = 0.0;  // 0 is the zero-shot row
  std::uint64_t seed = 0;
  std::size_t n_calibration = 0;
  std::size_t n_eval = 0;
  double zero_shot_mse = 0.0;  // theta0 on this row's evaluation cycles
  double mse = 0.0;            // model of this row on the same cycles
  double calib_pre_loss = 0.0;
  double calib_post_loss = 0.0;
  bool aborted = false;
  std::vector<metrics::CycleMetrics> cycles;
  metrics::MetricsReport report;
};

/// For each seed: a zero-shot row over all cycles, then one row per
/// non-zero ratio (select -> adapt -> evaluate on the remaining cycles).
/// A ratio of 0 in the list is the zero-shot row and is not repeated.
template <typename T>
std::vector<SweepRow> calibration_sweep(const model::ModelParams<T>& theta0, const data::SubjectDataset& test,
                                        const SweepConfig& cfg);

/// Throws ContractError when an evaluation cycle was also used for calibration.
void assert_disjoint(const std::vector<const data::MovementSegment*>& calibration,
                     const std::vector<const data::MovementSegment*>& evaluation);

/// fold,ratio,seed,n_calibration,n_eval,zero_shot_mse,mse,<overall metric means>
std::string sweep_csv_header();
std::string sweep_rows_to_csv(const std::string& fold, const std::vector<SweepRow>& rows, bool with_header);
/// Per-cycle metrics of every row: fold,ratio,seed followed by the
/// cycles_to_csv columns.
std::string sweep_cycles_to_csv(const std::string& fold, const std::vector<SweepRow>& rows, bool with_header,
                                const std::vector<std::string>& muscle_names);

}  // namespace imu2emg::adapt
