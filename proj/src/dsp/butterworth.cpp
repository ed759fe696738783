#include "imu2emg/dsp/butterworth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "imu2emg/core/errors.hpp"

namespace imu2emg::dsp {
namespace {

using cd = std::complex<double>;

cd bilinear(cd s, double fs) { return (2.0 * fs + s) / (2.0 * fs - s); }

double prewarp(double hz, double fs) { return 2.0 * fs * std::tan(std::numbers::pi * hz / fs); }

// Normalized analog Butterworth poles (left half plane, unit cutoff).
std::vector<cd> prototype_poles(int order) {
  std::vector<cd> poles;
  for (int k = 1; k <= order; ++k) {
    const double theta = std::numbers::pi * (2.0 * k + order - 1) / (2.0 * order);
    poles.emplace_back(std::cos(theta), std::sin(theta));
  }
  return poles;
}

cd section_response(const Biquad& s, cd z1) {
  // z1 = e^{-jw}
  const cd num = s.b0 + s.b1 * z1 + s.b2 * z1 * z1;
  const cd den = 1.0 + s.a1 * z1 + s.a2 * z1 * z1;
  return num / den;
}

// Groups digital poles into sections: each upper-half-plane complex pole
// with its conjugate, then real poles two at a time.
std::vector<std::vector<cd>> pair_poles(std::vector<cd> poles) {
  constexpr double kImagTol = 1e-10;
  std::vector<std::vector<cd>> groups;
  std::vector<double> reals;
  for (const cd& p : poles) {
    if (std::abs(p.imag()) <= kImagTol * std::max(1.0, std::abs(p)))
      reals.push_back(p.real());
    else if (p.imag() > 0)
      groups.push_back({p, std::conj(p)});
  }
  std::sort(reals.begin(), reals.end());
  for (std::size_t i = 0; i < reals.size(); i += 2) {
    if (i + 1 < reals.size())
      groups.push_back({cd(reals[i]), cd(reals[i + 1])});
    else
      groups.push_back({cd(reals[i])});
  }
  return groups;
}

void check_cutoff(double hz, double fs) {
  if (!(hz > 0.0) || !(hz < fs / 2.0))
    throw DesignError("cutoff " + std::to_string(hz) + " Hz must lie strictly inside (0, " + std::to_string(fs / 2.0) +
                      ") Hz for a sampling rate of " + std::to_string(fs) + " Hz");
}

}  // namespace

std::size_t BiquadCascade::order() const {
  std::size_t n = 0;
  for (const auto& s : sections) n += (s.a2 != 0.0 || s.b2 != 0.0) ? 2 : 1;
  return n;
}

std::complex<double> BiquadCascade::response(double hz, double sample_rate_hz) const {
  const double w = 2.0 * std::numbers::pi * hz / sample_rate_hz;
  const cd z1 = std::polar(1.0, -w);
  cd h = 1.0;
  for (const auto& s : sections) h *= section_response(s, z1);
  return h;
}

double BiquadCascade::magnitude_db(double hz, double sample_rate_hz) const {
  return 20.0 * std::log10(magnitude(hz, sample_rate_hz));
}

std::vector<std::complex<double>> BiquadCascade::poles() const {
  std::vector<cd> out;
  for (const auto& s : sections) {
    if (s.a2 == 0.0) {
      out.emplace_back(-s.a1);
      continue;
    }
    const cd disc = std::sqrt(cd(s.a1 * s.a1 - 4.0 * s.a2));
    out.push_back((-s.a1 + disc) / 2.0);
    out.push_back((-s.a1 - disc) / 2.0);
  }
  return out;
}

bool BiquadCascade::is_stable() const {
  return std::all_of(sections.begin(), sections.end(), [](const Biquad& s) {
    // Jury conditions for 1 + a1 z^-1 + a2 z^-2.
    return std::abs(s.a2) < 1.0 && std::abs(s.a1) < 1.0 + s.a2;
  });
}

BiquadCascade design_butterworth(int order, FilterKind kind, std::span<const double> cutoff_hz, double fs) {
  if (order < 1) throw DesignError("filter order must be >= 1, got " + std::to_string(order));
  if (!(fs > 0.0)) throw DesignError("sampling rate must be positive");
  BiquadCascade out;
  const auto proto = prototype_poles(order);

  if (kind == FilterKind::lowpass) {
    if (cutoff_hz.size() != 1) throw DesignError("lowpass design takes exactly one cutoff");
    check_cutoff(cutoff_hz[0], fs);
    const double wc = prewarp(cutoff_hz[0], fs);
    std::vector<cd> zpoles;
    for (const cd& p : proto) zpoles.push_back(bilinear(wc * p, fs));
    for (const auto& grp : pair_poles(zpoles)) {
      Biquad s;
      if (grp.size() == 2) {
        s.a1 = -(grp[0] + grp[1]).real();
        s.a2 = (grp[0] * grp[1]).real();
        // Zeros at z = -1 (double); unit gain at DC.
        const double g = (1.0 + s.a1 + s.a2) / 4.0;
        s.b0 = g;
        s.b1 = 2.0 * g;
        s.b2 = g;
      } else {
        s.a1 = -grp[0].real();
        const double g = (1.0 + s.a1) / 2.0;
        s.b0 = g;
        s.b1 = g;
      }
      out.sections.push_back(s);
    }
    return out;
  }

  if (cutoff_hz.size() != 2) throw DesignError("bandpass design takes exactly two band edges");
  const double lo = cutoff_hz[0], hi = cutoff_hz[1];
  check_cutoff(lo, fs);
  check_cutoff(hi, fs);
  if (!(lo < hi)) throw DesignError("bandpass edges must satisfy low < high");
  const double w1 = prewarp(lo, fs), w2 = prewarp(hi, fs);
  const double bw = w2 - w1;
  const double w0sq = w1 * w2;
  std::vector<cd> zpoles;
  for (const cd& p : proto) {
    // Lowpass-to-bandpass: s^2 - p*bw*s + w0^2 = 0.
    const cd pb = p * bw;
    const cd disc = std::sqrt(pb * pb - 4.0 * w0sq);
    zpoles.push_back(bilinear((pb + disc) / 2.0, fs));
    zpoles.push_back(bilinear((pb - disc) / 2.0, fs));
  }
  // Unit gain at the digital image of the analog centre frequency.
  const double f0 = fs / std::numbers::pi * std::atan(std::sqrt(w0sq) / (2.0 * fs));
  const cd z1 = std::polar(1.0, -2.0 * std::numbers::pi * f0 / fs);
  for (const auto& grp : pair_poles(zpoles)) {
    if (grp.size() != 2) throw DesignError("bandpass design produced an unpaired pole");
    Biquad s;
    s.a1 = -(grp[0] + grp[1]).real();
    s.a2 = (grp[0] * grp[1]).real();
    // Zeros at z = +1 and z = -1.
    s.b0 = 1.0;
    s.b1 = 0.0;
    s.b2 = -1.0;
    const double g = 1.0 / std::abs(section_response(s, z1));
    s.b0 = g;
    s.b2 = -g;
    out.sections.push_back(s);
  }
  return out;
}

BiquadCascade butter_lowpass(int order, double cutoff_hz, double fs) {
  const double c[1] = {cutoff_hz};
  return design_butterworth(order, FilterKind::lowpass, c, fs);
}

BiquadCascade butter_bandpass(int order, double low_hz, double high_hz, double fs) {
  const double c[2] = {low_hz, high_hz};
  return design_butterworth(order, FilterKind::bandpass, c, fs);
}

namespace {

struct SectionState {
  double s1 = 0, s2 = 0;
};

double step(const Biquad& b, SectionState& st, double x) {
  const double y = b.b0 * x + st.s1;
  st.s1 = b.b1 * x - b.a1 * y + st.s2;
  st.s2 = b.b2 * x - b.a2 * y;
  return y;
}

// State that a constant input `c` settles into, per section.
std::vector<SectionState> steady_state(const BiquadCascade& f, double c) {
  std::vector<SectionState> states;
  double in = c;
  for (const auto& b : f.sections) {
    const double den = 1.0 + b.a1 + b.a2;
    const double gain = den != 0.0 ? (b.b0 + b.b1 + b.b2) / den : 0.0;
    const double y = gain * in;
    SectionState st;
    st.s2 = b.b2 * in - b.a2 * y;
    st.s1 = b.b1 * in - b.a1 * y + st.s2;
    states.push_back(st);
    in = y;
  }
  return states;
}

void run(const BiquadCascade& f, std::vector<SectionState>& states, std::vector<double>& x) {
  for (auto& v : x) {
    double s = v;
    for (std::size_t i = 0; i < f.sections.size(); ++i) s = step(f.sections[i], states[i], s);
    v = s;
  }
}

}  // namespace

std::vector<double> lfilter(const BiquadCascade& filter, std::span<const double> x) {
  std::vector<double> out(x.begin(), x.end());
  std::vector<SectionState> states(filter.sections.size());
  run(filter, states, out);
  return out;
}

std::vector<double> filtfilt(const BiquadCascade& filter, std::span<const double> x) {
  const std::size_t pad = 3 * filter.order();
  const std::size_t n = x.size();
  if (n <= pad)
    throw LengthError("filtfilt needs more than " + std::to_string(pad) + " samples, got " + std::to_string(n));
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  auto states = steady_state(filter, ext.front());
  run(filter, states, ext);
  std::reverse(ext.begin(), ext.end());
  states = steady_state(filter, ext.front());
  run(filter, states, ext);
  std::reverse(ext.begin(), ext.end());
  return {ext.begin() + static_cast<std::ptrdiff_t>(pad), ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

}  // namespace imu2emg::dsp
