#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "imu2emg/core/matrix.hpp"

namespace imu2emg::dsp {

inline constexpr double kImuRateHz = 200.0;
inline constexpr double kEmgRateHz = 1000.0;
inline constexpr std::size_t kCycleSamples = 101;

/// Uniformly sampled multi-channel recording; samples is [N x channels].
struct RawStream {
  std::vector<std::string> channel_names;
  double sample_rate_hz = 0.0;
  Matrix samples;
  double start_time_s = 0.0;

  std::size_t length() const { return samples.rows; }
  std::size_t channels() const { return samples.cols; }
  double time_at(std::size_t i) const { return start_time_s + static_cast<double>(i) / sample_rate_hz; }
  double end_time_s() const { return time_at(length() - 1); }
};

/// Band-pass 20-450 Hz, full-wave rectification, low-pass 8 Hz; all
/// 4th-order Butterworth, zero-phase. Small negative ripple can survive
/// the final low-pass.
RawStream emg_envelope(const RawStream& raw);

/// Linear interpolation of every channel at arbitrary times inside the
/// stream span (times outside are clamped to the end samples).
Matrix interpolate_at(const RawStream& x, std::span<const double> times_s);

/// Uniform grid at `target_hz` over the same time interval.
RawStream resample_linear(const RawStream& x, double target_hz);

/// Interpolates `x` onto the sample clock of `reference`.
RawStream align_to(const RawStream& x, const RawStream& reference);

struct RawSegment {
  Matrix inputs;   // [L x imu channels]
  Matrix targets;  // [L x emg channels]
  double start_time_s = 0.0;
  double end_time_s = 0.0;
};

struct SegmentationResult {
  std::vector<RawSegment> segments;
  std::size_t discarded_short = 0;
};

/// One segment per consecutive heel-strike pair [hs_i, hs_{i+1}). Both
/// streams must share a sample clock. Segments with fewer than
/// `min_samples` samples are dropped and counted.
SegmentationResult segment_cycles(const RawStream& imu, const RawStream& emg_env,
                                  std::span<const double> heel_strikes_s, std::size_t min_samples);

/// Per-channel linear interpolation of [L x C] onto `points` uniformly
/// spaced positions over [0, L-1]; first and last rows are copied exactly.
Matrix time_normalize(const Matrix& samples, std::size_t points = kCycleSamples);

/// Per-channel sliding median, odd window, edge-replication padding.
Matrix median_filter(const Matrix& x, std::size_t window);

struct MinMaxStats {
  std::vector<double> min;
  std::vector<double> max;

  std::size_t channels() const { return min.size(); }
  /// Widens the running range with every row of `x`.
  void update(const Matrix& x);
  static MinMaxStats empty(std::size_t channels);
};

/// (x - min) / (max - min) per channel, clipped to [0, 1]; channels with
/// max <= min map to 0.
Matrix minmax_normalize(const Matrix& x, const MinMaxStats& stats);

}  // namespace imu2emg::dsp
