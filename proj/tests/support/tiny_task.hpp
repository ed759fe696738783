#pragma once

// Small synthetic problem matched to model::tiny_config(): 3 IMU channels,
// 2 muscles and 7 phase points picked out of normal synthetic segments.

#include <cmath>
#include <vector>

#include "imu2emg/core/rng.hpp"
#include "imu2emg/data/synthetic.hpp"

namespace imu2emg::testing {

inline data::MovementSegment shrink_segment(const data::MovementSegment& s) {
  constexpr std::size_t kRows = 7;
  constexpr std::size_t kIn[] = {0, 8, 16};
  constexpr std::size_t kOut[] = {0, 5};
  data::MovementSegment out = s;
  out.inputs = Matrix(kRows, 3);
  out.targets = Matrix(kRows, 2);
  for (std::size_t r = 0; r < kRows; ++r) {
    const auto src = static_cast<std::size_t>(std::lround(100.0 * static_cast<double>(r) / (kRows - 1)));
    for (std::size_t c = 0; c < 3; ++c) out.inputs(r, c) = s.inputs(src, kIn[c]);
    for (std::size_t c = 0; c < 2; ++c) out.targets(r, c) = s.targets(src, kOut[c]);
  }
  return out;
}

// Subjects S01..Sn with `cycles` shrunk segments each.
inline std::vector<data::SubjectDataset> tiny_population(std::size_t n_subjects, std::size_t cycles,
                                                         std::uint64_t seed) {
  RngState rng(seed);
  auto subjects = data::generate_synthetic_population(n_subjects, cycles, rng);
  for (auto& s : subjects)
    for (auto& seg : s.segments) seg = shrink_segment(seg);
  return subjects;
}

}  // namespace imu2emg::testing
