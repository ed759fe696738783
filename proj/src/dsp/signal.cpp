#include "imu2emg/dsp/signal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "imu2emg/core/errors.hpp"
#include "imu2emg/dsp/butterworth.hpp"

namespace imu2emg::dsp {

RawStream emg_envelope(const RawStream& raw) {
  if (raw.length() < 2) throw LengthError("EMG stream needs at least 2 samples");
  const auto band = butter_bandpass(4, 20.0, 450.0, raw.sample_rate_hz);
  const auto smooth = butter_lowpass(4, 8.0, raw.sample_rate_hz);
  RawStream out = raw;
  for (std::size_t c = 0; c < raw.channels(); ++c) {
    auto col = raw.samples.column(c);
    // A flat channel has no band-pass content; skip the filters so the
    // result is exactly zero rather than rounding residue.
    if (std::all_of(col.begin(), col.end(), [&](double v) { return v == col.front(); })) {
      out.samples.set_column(c, std::vector<double>(col.size(), 0.0));
      continue;
    }
    auto x = filtfilt(band, col);
    for (auto& v : x) v = std::abs(v);
    out.samples.set_column(c, filtfilt(smooth, x));
  }
  return out;
}

Matrix interpolate_at(const RawStream& x, std::span<const double> times_s) {
  if (x.length() < 1) throw LengthError("cannot interpolate an empty stream");
  Matrix out(times_s.size(), x.channels());
  const std::size_t last = x.length() - 1;
  for (std::size_t i = 0; i < times_s.size(); ++i) {
    const double pos = (times_s[i] - x.start_time_s) * x.sample_rate_hz;
    std::size_t i0;
    double frac;
    if (!(pos > 0.0)) {
      i0 = 0;
      frac = 0.0;
    } else if (pos >= static_cast<double>(last) - 1e-9) {
      i0 = last;
      frac = 0.0;
    } else {
      i0 = static_cast<std::size_t>(std::floor(pos));
      frac = pos - static_cast<double>(i0);
      // Snap to exact samples so grid-aligned reads reproduce data bit for bit.
      if (frac < 1e-9) frac = 0.0;
      if (frac > 1.0 - 1e-9) {
        ++i0;
        frac = 0.0;
      }
    }
    for (std::size_t c = 0; c < x.channels(); ++c) {
      const double a = x.samples(i0, c);
      out(i, c) = frac == 0.0 ? a : a + frac * (x.samples(i0 + 1, c) - a);
    }
  }
  return out;
}

RawStream resample_linear(const RawStream& x, double target_hz) {
  if (!(target_hz > 0.0)) throw ConfigError("target rate must be positive");
  if (x.length() < 2) throw LengthError("resampling needs at least 2 samples");
  const double duration = static_cast<double>(x.length() - 1) / x.sample_rate_hz;
  const auto n = static_cast<std::size_t>(std::floor(duration * target_hz + 1e-9)) + 1;
  std::vector<double> times(n);
  for (std::size_t i = 0; i < n; ++i) times[i] = x.start_time_s + static_cast<double>(i) / target_hz;
  RawStream out;
  out.channel_names = x.channel_names;
  out.sample_rate_hz = target_hz;
  out.start_time_s = x.start_time_s;
  out.samples = interpolate_at(x, times);
  return out;
}

RawStream align_to(const RawStream& x, const RawStream& reference) {
  std::vector<double> times(reference.length());
  for (std::size_t i = 0; i < times.size(); ++i) times[i] = reference.time_at(i);
  RawStream out;
  out.channel_names = x.channel_names;
  out.sample_rate_hz = reference.sample_rate_hz;
  out.start_time_s = reference.start_time_s;
  out.samples = interpolate_at(x, times);
  return out;
}

SegmentationResult segment_cycles(const RawStream& imu, const RawStream& emg_env, std::span<const double> hs,
                                  std::size_t min_samples) {
  if (imu.length() != emg_env.length() || imu.sample_rate_hz != emg_env.sample_rate_hz ||
      std::abs(imu.start_time_s - emg_env.start_time_s) > 1e-9)
    throw ContractError("segment_cycles: IMU and EMG streams must share one sample clock");
  for (std::size_t i = 1; i < hs.size(); ++i)
    if (!(hs[i] > hs[i - 1])) throw ContractError("heel strikes must be sorted and strictly increasing");
  const double half = 0.5 / imu.sample_rate_hz;
  for (double t : hs)
    if (t < imu.start_time_s - half || t > imu.end_time_s() + half)
      throw ContractError("heel strike at " + std::to_string(t) + " s lies outside the stream span [" +
                          std::to_string(imu.start_time_s) + ", " + std::to_string(imu.end_time_s()) + "] s");

  auto first_index_at_or_after = [&](double t) {
    const double pos = (t - imu.start_time_s) * imu.sample_rate_hz;
    return static_cast<std::size_t>(std::max(0.0, std::ceil(pos - 1e-9)));
  };

  SegmentationResult out;
  for (std::size_t i = 0; i + 1 < hs.size(); ++i) {
    const std::size_t begin = first_index_at_or_after(hs[i]);
    const std::size_t end = std::min(first_index_at_or_after(hs[i + 1]), imu.length());
    const std::size_t len = end > begin ? end - begin : 0;
    if (len < std::max<std::size_t>(min_samples, 2)) {
      ++out.discarded_short;
      continue;
    }
    RawSegment seg;
    seg.inputs = Matrix(len, imu.channels());
    seg.targets = Matrix(len, emg_env.channels());
    for (std::size_t r = 0; r < len; ++r) {
      std::copy_n(imu.samples.row(begin + r).begin(), imu.channels(), seg.inputs.row(r).begin());
      std::copy_n(emg_env.samples.row(begin + r).begin(), emg_env.channels(), seg.targets.row(r).begin());
    }
    seg.start_time_s = hs[i];
    seg.end_time_s = hs[i + 1];
    out.segments.push_back(std::move(seg));
  }
  return out;
}

Matrix time_normalize(const Matrix& samples, std::size_t points) {
  if (samples.rows < 2) throw LengthError("time normalization needs at least 2 samples, got " + std::to_string(samples.rows));
  if (points < 2) throw ConfigError("time normalization needs at least 2 output points");
  Matrix out(points, samples.cols);
  const std::size_t last = samples.rows - 1;
  for (std::size_t i = 0; i < points; ++i) {
    std::size_t i0;
    double frac;
    if (i == points - 1) {
      i0 = last;
      frac = 0.0;
    } else {
      // Exact rational position i*(L-1)/(points-1).
      const std::size_t num = i * last;
      i0 = num / (points - 1);
      frac = static_cast<double>(num % (points - 1)) / static_cast<double>(points - 1);
    }
    for (std::size_t c = 0; c < samples.cols; ++c) {
      const double a = samples(i0, c);
      out(i, c) = frac == 0.0 ? a : a + frac * (samples(i0 + 1, c) - a);
    }
  }
  return out;
}

Matrix median_filter(const Matrix& x, std::size_t window) {
  if (window == 0 || window % 2 == 0)
    throw ConfigError("median window must be odd and >= 1, got " + std::to_string(window));
  if (window == 1 || x.rows == 0) return x;
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(window / 2);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.rows);
  Matrix out(x.rows, x.cols);
  std::vector<double> buf(window);
  for (std::size_t c = 0; c < x.cols; ++c)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      for (std::ptrdiff_t k = -half; k <= half; ++k) {
        const std::ptrdiff_t j = std::clamp<std::ptrdiff_t>(i + k, 0, n - 1);
        buf[static_cast<std::size_t>(k + half)] = x(static_cast<std::size_t>(j), c);
      }
      std::nth_element(buf.begin(), buf.begin() + half, buf.end());
      out(static_cast<std::size_t>(i), c) = buf[static_cast<std::size_t>(half)];
    }
  return out;
}

MinMaxStats MinMaxStats::empty(std::size_t channels) {
  MinMaxStats s;
  s.min.assign(channels, std::numeric_limits<double>::infinity());
  s.max.assign(channels, -std::numeric_limits<double>::infinity());
  return s;
}

void MinMaxStats::update(const Matrix& x) {
  if (x.cols != channels()) throw DimensionError("min-max stats channel count mismatch");
  for (std::size_t r = 0; r < x.rows; ++r)
    for (std::size_t c = 0; c < x.cols; ++c) {
      min[c] = std::min(min[c], x(r, c));
      max[c] = std::max(max[c], x(r, c));
    }
}

Matrix minmax_normalize(const Matrix& x, const MinMaxStats& stats) {
  if (x.cols != stats.channels()) throw DimensionError("min-max stats channel count mismatch");
  Matrix out(x.rows, x.cols);
  for (std::size_t c = 0; c < x.cols; ++c) {
    const double lo = stats.min[c], hi = stats.max[c];
    const bool degenerate = !(hi > lo);
    for (std::size_t r = 0; r < x.rows; ++r)
      out(r, c) = degenerate ? 0.0 : std::clamp((x(r, c) - lo) / (hi - lo), 0.0, 1.0);
  }
  return out;
}

}  // namespace imu2emg::dsp
