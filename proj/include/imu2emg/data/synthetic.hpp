#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "imu2emg/core/rng.hpp"
#include "imu2emg/data/dataset.hpp"
#include "imu2emg/data/io.hpp"

namespace imu2emg::data {

/// Modes the generator emits, cycled in blocks of kSyntheticBlock cycles.
inline constexpr std::array<Mode, 4> kSyntheticModes{Mode::levelground, Mode::treadmill, Mode::stair_ascent,
                                                     Mode::ramp_ascent};
inline constexpr std::size_t kSyntheticBlock = 5;

/// Latent per-subject warp of the shared IMU-to-EMG mapping.
struct SubjectStyle {
  std::array<double, kMuscles> amplitude{};  // [0.6, 1.4]
  double phase_shift = 0.0;                  // fraction of a cycle, [-0.1, 0.1]
  double noise = 0.0;                        // target noise sd

  static SubjectStyle draw(RngState& rng);
  static SubjectStyle neutral();
};

/// Noise-free IMU features at gait phase in [0, 1]; raw units, bounded by
/// synthetic_imu_bound().
std::array<double, kImuChannels> synthetic_imu(Mode mode, double phase, double intensity);
double synthetic_imu_bound();

/// Noise-free envelope targets in [0, 1], the exact oracle for a subject.
std::array<double, kMuscles> synthetic_targets(const SubjectStyle& style, Mode mode, double phase, double intensity);

struct SyntheticSubject {
  SubjectDataset dataset;
  SubjectStyle style;
};

/// Normalized segments drawn directly on the 101-point grid. Subject ids
/// are "S01", "S02", ...
std::vector<SyntheticSubject> generate_synthetic_subjects(std::size_t n_subjects, std::size_t cycles_per_subject,
                                                          RngState& rng);
std::vector<SubjectDataset> generate_synthetic_population(std::size_t n_subjects, std::size_t cycles_per_subject,
                                                          RngState& rng);

/// Continuous-time trial for the CSV path: IMU at imu_rate, EMG as a noise
/// carrier modulated by the target envelope at emg_rate, heel strikes at
/// cycle starts. Cycle durations are drawn from [1.0, 1.2] s.
Trial synthesize_trial(const SubjectStyle& style, Mode mode, std::size_t cycles, RngState& rng,
                       const LoadOptions& opts = {});

}  // namespace imu2emg::data
