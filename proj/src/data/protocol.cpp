#include "imu2emg/data/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "imu2emg/core/errors.hpp"

namespace imu2emg::data {

bool LosoFold::trains_on(const std::string& subject_id) const {
  return std::find(train_subjects.begin(), train_subjects.end(), subject_id) != train_subjects.end();
}

std::vector<LosoFold> make_loso_folds(const std::vector<std::string>& subject_ids, double val_fraction) {
  if (subject_ids.size() < 2)
    throw ConfigError("LOSO needs at least 2 subjects, got " + std::to_string(subject_ids.size()));
  if (std::set<std::string>(subject_ids.begin(), subject_ids.end()).size() != subject_ids.size())
    throw ConfigError("duplicate subject ids");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in [0, 1)");
  std::vector<LosoFold> folds;
  for (const auto& test : subject_ids) {
    LosoFold f;
    f.test_subject = test;
    f.val_fraction = val_fraction;
    for (const auto& s : subject_ids)
      if (s != test) f.train_subjects.push_back(s);
    folds.push_back(std::move(f));
  }
  return folds;
}

void assert_no_leakage(const LosoFold& fold, const std::vector<const MovementSegment*>& batch) {
  for (const auto* s : batch) {
    if (s->subject_id == fold.test_subject)
      throw ContractError("leakage: test-subject segment " + s->id() + " in a training batch");
    if (!fold.trains_on(s->subject_id))
      throw ContractError("segment " + s->id() + " is outside the training pool of fold " + fold.test_subject);
  }
}

TrainValSplit train_val_split(const LosoFold& fold, const std::vector<const MovementSegment*>& segments,
                              RngState& rng) {
  assert_no_leakage(fold, segments);
  const std::size_t n = segments.size();
  std::size_t n_val = static_cast<std::size_t>(std::floor(fold.val_fraction * static_cast<double>(n) + 0.5));
  if (n >= 2 && fold.val_fraction > 0.0) n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  // Keep the original order inside each side for reproducible batching.
  std::sort(val_idx.begin(), val_idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  TrainValSplit out;
  for (auto i : train_idx) out.train.push_back(segments[i]);
  for (auto i : val_idx) out.val.push_back(segments[i]);
  return out;
}

bool is_allowed_ratio(double ratio) {
  for (double r : kCalibrationRatios)
    if (std::abs(r - ratio) < 1e-12) return true;
  return false;
}

std::size_t calibration_count(double ratio, std::size_t total) {
  const double raw = std::floor(ratio * static_cast<double>(total) + 0.5 + 1e-9);
  return std::min(total, std::max<std::size_t>(1, static_cast<std::size_t>(raw)));
}

CalibrationSelection select_calibration(std::size_t total, double ratio, CalibrationPolicy policy, RngState& rng) {
  if (total == 0) throw DataError("calibration needs at least one test cycle");
  if (!is_allowed_ratio(ratio))
    throw ConfigError("calibration ratio " + std::to_string(ratio) + " not in {0.005, 0.01, 0.02, 0.05, 0.10}");
  const std::size_t k = calibration_count(ratio, total);
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), 0);
  if (policy == CalibrationPolicy::seeded_random) rng.shuffle(order);
  CalibrationSelection sel;
  sel.ratio = ratio;
  sel.selected.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(sel.selected.begin(), sel.selected.end());
  std::vector<bool> taken(total, false);
  for (auto i : sel.selected) taken[i] = true;
  for (std::size_t i = 0; i < total; ++i)
    if (!taken[i]) sel.remaining.push_back(i);
  return sel;
}

CalibrationPolicy parse_policy(const std::string& name) {
  if (name == "first") return CalibrationPolicy::first;
  if (name == "seeded_random") return CalibrationPolicy::seeded_random;
  throw ConfigError("unknown calibration policy '" + name + "' (expected first or seeded_random)");
}

std::string policy_name(CalibrationPolicy p) { return p == CalibrationPolicy::first ? "first" : "seeded_random"; }

}  // namespace imu2emg::data
