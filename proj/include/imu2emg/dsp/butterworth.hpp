#pragma once

#include <complex>
#include <span>
#include <vector>

namespace imu2emg::dsp {

/// One second-order section, a0 normalized to 1. First-order sections have
/// b2 == a2 == 0.
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0;
  double a1 = 0, a2 = 0;
};

struct BiquadCascade {
  std::vector<Biquad> sections;

  /// Total filter order (number of poles).
  std::size_t order() const;
  /// H(e^{jw}) at frequency `hz` for sampling rate `sample_rate_hz`.
  std::complex<double> response(double hz, double sample_rate_hz) const;
  double magnitude(double hz, double sample_rate_hz) const { return std::abs(response(hz, sample_rate_hz)); }
  double magnitude_db(double hz, double sample_rate_hz) const;
  std::vector<std::complex<double>> poles() const;
  /// All poles strictly inside the unit circle.
  bool is_stable() const;
};

enum class FilterKind { lowpass, bandpass };

/// Digital Butterworth design: analog prototype, frequency pre-warping,
/// bilinear transform, then pairing into biquads.
///
/// `order` is the prototype order. A lowpass of order N has N poles; a
/// bandpass of order N has 2N poles (N sections). `cutoff_hz` holds one
/// edge for lowpass and the two band edges for bandpass.
BiquadCascade design_butterworth(int order, FilterKind kind, std::span<const double> cutoff_hz,
                                 double sample_rate_hz);

BiquadCascade butter_lowpass(int order, double cutoff_hz, double sample_rate_hz);
BiquadCascade butter_bandpass(int order, double low_hz, double high_hz, double sample_rate_hz);

/// Direct-form II transposed, zero initial state.
std::vector<double> lfilter(const BiquadCascade& filter, std::span<const double> x);

/// Zero-phase forward-backward filtering with odd-reflection padding of
/// 3 x order samples and steady-state initial conditions on both passes.
/// Requires x.size() > 3 x order.
std::vector<double> filtfilt(const BiquadCascade& filter, std::span<const double> x);

}  // namespace imu2emg::dsp
