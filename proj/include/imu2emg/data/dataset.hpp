#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "imu2emg/core/matrix.hpp"
#include "imu2emg/dsp/signal.hpp"

namespace imu2emg::data {

enum class Mode { treadmill, levelground, stair_ascent, stair_descent, ramp_ascent, ramp_descent };

inline constexpr std::array<Mode, 6> kAllModes{Mode::treadmill,    Mode::levelground, Mode::stair_ascent,
                                               Mode::stair_descent, Mode::ramp_ascent, Mode::ramp_descent};

std::string_view mode_name(Mode m);
std::optional<Mode> parse_mode(std::string_view name);

inline constexpr std::size_t kImuChannels = 24;
inline constexpr std::size_t kMuscles = 10;

/// `<segment>_<accel|gyro>_<x|y|z>` for trunk, thigh, shank, foot.
const std::vector<std::string>& imu_channel_names();
const std::vector<std::string>& muscle_names();

/// One time-normalized gait cycle.
struct MovementSegment {
  std::string subject_id;
  Mode mode = Mode::levelground;
  std::size_t cycle_index = 0;  // chronological within the subject
  std::string trial;
  Matrix inputs;   // [101 x 24]
  Matrix targets;  // [101 x 10]

  /// Globally unique: "<subject>#<cycle_index>".
  std::string id() const;
};

struct SubjectDataset {
  std::string subject_id;
  std::vector<MovementSegment> segments;
  std::size_t discarded_short = 0;

  /// Throws DataError if empty or if any segment has a foreign subject id
  /// or the wrong shape.
  void validate() const;
};

/// Per-channel min/max over a pool of segments, inputs and targets kept
/// separately.
struct NormalizationStats {
  dsp::MinMaxStats inputs;
  dsp::MinMaxStats targets;
};

NormalizationStats compute_stats(const std::vector<const MovementSegment*>& pool);
NormalizationStats compute_stats(const std::vector<MovementSegment>& pool);
void apply_normalization(std::vector<MovementSegment>& segments, const NormalizationStats& stats);
MovementSegment normalized(const MovementSegment& s, const NormalizationStats& stats);

std::string stats_to_json(const NormalizationStats& stats);
NormalizationStats stats_from_json(const std::string& text);

/// Flat views used by the protocol layer.
std::vector<const MovementSegment*> pointers(const std::vector<MovementSegment>& segments);
std::vector<const MovementSegment*> pooled(const std::vector<SubjectDataset>& subjects,
                                           const std::vector<std::string>& subject_ids);

}  // namespace imu2emg::data
