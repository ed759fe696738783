#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "imu2emg/core/rng.hpp"
#include "imu2emg/data/dataset.hpp"

namespace imu2emg::data {

struct LosoFold {
  std::string test_subject;
  std::vector<std::string> train_subjects;
  double val_fraction = 0.20;

  bool trains_on(const std::string& subject_id) const;
};

/// One fold per subject, in input order. Needs at least 2 distinct ids.
std::vector<LosoFold> make_loso_folds(const std::vector<std::string>& subject_ids, double val_fraction = 0.20);

struct TrainValSplit {
  std::vector<const MovementSegment*> train;
  std::vector<const MovementSegment*> val;
};

/// Seeded segment-level partition. Validation gets round(val_fraction * n)
/// segments, kept within [1, n - 1] when n >= 2.
TrainValSplit train_val_split(const LosoFold& fold, const std::vector<const MovementSegment*>& segments,
                              RngState& rng);

/// Throws ContractError if any segment belongs to the fold's test subject
/// or to a subject outside the training pool.
void assert_no_leakage(const LosoFold& fold, const std::vector<const MovementSegment*>& batch);

enum class CalibrationPolicy { first, seeded_random };

inline constexpr double kCalibrationRatios[] = {0.005, 0.01, 0.02, 0.05, 0.10};

bool is_allowed_ratio(double ratio);
/// max(1, round-half-up(ratio * total)).
std::size_t calibration_count(double ratio, std::size_t total);

/// Indices into the test segment list, both ascending.
struct CalibrationSelection {
  double ratio = 0.0;
  std::vector<std::size_t> selected;
  std::vector<std::size_t> remaining;
};

CalibrationSelection select_calibration(std::size_t total, double ratio, CalibrationPolicy policy, RngState& rng);

template <class Seg>
CalibrationSelection select_calibration(const std::vector<Seg>& test_segments, double ratio, CalibrationPolicy policy,
                                        RngState& rng) {
  return select_calibration(test_segments.size(), ratio, policy, rng);
}

CalibrationPolicy parse_policy(const std::string& name);
std::string policy_name(CalibrationPolicy p);

}  // namespace imu2emg::data
