#include "imu2emg/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "imu2emg/core/errors.hpp"

namespace imu2emg::data {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr int kHarmonics = 3;
constexpr double kImuNoise = 0.02;
constexpr double kMaxIntensity = 1.2;
constexpr std::uint64_t kStructureSeed = 0x1D5E7A11C0FFEEULL;

std::size_t mode_index(Mode m) {
  for (std::size_t i = 0; i < kAllModes.size(); ++i)
    if (kAllModes[i] == m) return i;
  return 0;
}

// Population-level mapping shared by every subject. Drawn once from a
// fixed stream so it never depends on the caller's seed.
struct Structure {
  double amp[kImuChannels][kHarmonics];
  double phase[kImuChannels][kHarmonics];
  double mode_weight[kAllModes.size()][kHarmonics];
  double center[kMuscles];
  double width[kMuscles];
  double second_width[kMuscles];
  double mode_gain[kAllModes.size()][kMuscles];
  double bound;

  Structure() {
    RngState rng(kStructureSeed);
    for (std::size_t j = 0; j < kImuChannels; ++j)
      for (int h = 0; h < kHarmonics; ++h) {
        amp[j][h] = rng.uniform(0.5, 1.5) / (h + 1);
        phase[j][h] = rng.uniform(0.0, kTwoPi);
      }
    for (std::size_t m = 0; m < kAllModes.size(); ++m)
      for (int h = 0; h < kHarmonics; ++h) mode_weight[m][h] = rng.uniform(0.3, 1.2);
    for (std::size_t k = 0; k < kMuscles; ++k) {
      center[k] = rng.uniform(0.0, 1.0);
      width[k] = rng.uniform(0.2, 0.4);
      second_width[k] = rng.uniform(0.15, 0.3);
    }
    for (std::size_t m = 0; m < kAllModes.size(); ++m)
      for (std::size_t k = 0; k < kMuscles; ++k) mode_gain[m][k] = rng.uniform(0.7, 1.0);
    bound = 0.0;
    for (std::size_t m = 0; m < kAllModes.size(); ++m)
      for (std::size_t j = 0; j < kImuChannels; ++j) {
        double s = 0;
        for (int h = 0; h < kHarmonics; ++h) s += amp[j][h] * mode_weight[m][h];
        bound = std::max(bound, s * kMaxIntensity + 4 * kImuNoise);
      }
  }
};

const Structure& structure() {
  static const Structure s;
  return s;
}

// Raised-cosine burst on the circular phase axis.
double bump(double phase, double center, double width) {
  double d = phase - center;
  d -= std::round(d);
  if (std::abs(d) >= width / 2) return 0.0;
  const double c = std::cos(std::numbers::pi * d / width);
  return c * c;
}

}  // namespace

SubjectStyle SubjectStyle::draw(RngState& rng) {
  SubjectStyle s;
  for (auto& a : s.amplitude) a = rng.uniform(0.6, 1.4);
  s.phase_shift = rng.uniform(-0.1, 0.1);
  s.noise = rng.uniform(0.005, 0.02);
  return s;
}

SubjectStyle SubjectStyle::neutral() {
  SubjectStyle s;
  s.amplitude.fill(1.0);
  return s;
}

std::array<double, kImuChannels> synthetic_imu(Mode mode, double phase, double intensity) {
  const auto& st = structure();
  const auto mi = mode_index(mode);
  std::array<double, kImuChannels> x{};
  for (std::size_t j = 0; j < kImuChannels; ++j) {
    double s = 0;
    for (int h = 0; h < kHarmonics; ++h)
      s += st.amp[j][h] * st.mode_weight[mi][h] * std::sin(kTwoPi * (h + 1) * phase + st.phase[j][h]);
    x[j] = intensity * s;
  }
  return x;
}

double synthetic_imu_bound() { return structure().bound; }

std::array<double, kMuscles> synthetic_targets(const SubjectStyle& style, Mode mode, double phase, double intensity) {
  const auto& st = structure();
  const auto mi = mode_index(mode);
  const double p = phase - style.phase_shift;
  std::array<double, kMuscles> y{};
  for (std::size_t k = 0; k < kMuscles; ++k) {
    const double shape = bump(p, st.center[k], st.width[k]) + 0.4 * bump(p, st.center[k] + 0.5, st.second_width[k]);
    y[k] = std::clamp(0.6 * style.amplitude[k] * st.mode_gain[mi][k] * intensity * shape, 0.0, 1.0);
  }
  return y;
}

std::vector<SyntheticSubject> generate_synthetic_subjects(std::size_t n_subjects, std::size_t cycles_per_subject,
                                                          RngState& rng) {
  if (n_subjects < 2) throw ConfigError("synthetic population needs at least 2 subjects");
  if (cycles_per_subject < 1) throw ConfigError("synthetic population needs at least 1 cycle per subject");
  const double bound = synthetic_imu_bound();
  const std::size_t L = dsp::kCycleSamples;
  std::vector<SyntheticSubject> out;
  for (std::size_t s = 0; s < n_subjects; ++s) {
    RngState srng = rng.fork(s + 1);
    SyntheticSubject subj;
    subj.style = SubjectStyle::draw(srng);
    auto& ds = subj.dataset;
    char id[32];
    std::snprintf(id, sizeof(id), "S%02zu", s + 1);
    ds.subject_id = id;
    for (std::size_t c = 0; c < cycles_per_subject; ++c) {
      MovementSegment seg;
      seg.subject_id = ds.subject_id;
      seg.mode = kSyntheticModes[(c / kSyntheticBlock) % kSyntheticModes.size()];
      seg.cycle_index = c;
      seg.trial = std::string(mode_name(seg.mode));
      seg.inputs = Matrix(L, kImuChannels);
      seg.targets = Matrix(L, kMuscles);
      const double intensity = srng.uniform(0.8, kMaxIntensity);
      for (std::size_t i = 0; i < L; ++i) {
        const double phase = static_cast<double>(i) / static_cast<double>(L - 1);
        const auto x = synthetic_imu(seg.mode, phase, intensity);
        const auto y = synthetic_targets(subj.style, seg.mode, phase, intensity);
        for (std::size_t j = 0; j < kImuChannels; ++j)
          seg.inputs(i, j) = std::clamp(0.5 + (x[j] + kImuNoise * srng.normal()) / (2 * bound), 0.0, 1.0);
        for (std::size_t k = 0; k < kMuscles; ++k)
          seg.targets(i, k) = std::clamp(y[k] + subj.style.noise * srng.normal(), 0.0, 1.0);
      }
      ds.segments.push_back(std::move(seg));
    }
    out.push_back(std::move(subj));
  }
  rng = rng.fork(n_subjects + 1);
  return out;
}

std::vector<SubjectDataset> generate_synthetic_population(std::size_t n_subjects, std::size_t cycles_per_subject,
                                                          RngState& rng) {
  auto subjects = generate_synthetic_subjects(n_subjects, cycles_per_subject, rng);
  std::vector<SubjectDataset> out;
  for (auto& s : subjects) out.push_back(std::move(s.dataset));
  return out;
}

Trial synthesize_trial(const SubjectStyle& style, Mode mode, std::size_t cycles, RngState& rng,
                       const LoadOptions& opts) {
  if (cycles < 1) throw ConfigError("a synthetic trial needs at least 1 cycle");
  const double imu_fs = opts.imu_rate_hz;
  const double emg_fs = opts.emg_rate_hz;
  const auto step = static_cast<std::size_t>(std::lround(emg_fs / imu_fs));

  // Cycle boundaries on the IMU grid.
  std::vector<std::size_t> bounds{0};
  std::vector<double> intensity;
  for (std::size_t c = 0; c < cycles; ++c) {
    const auto len = static_cast<std::size_t>(std::lround(rng.uniform(1.0, 1.2) * imu_fs));
    bounds.push_back(bounds.back() + len);
    intensity.push_back(rng.uniform(0.8, kMaxIntensity));
  }
  const std::size_t n_imu = bounds.back() + 1;
  const std::size_t n_emg = (n_imu - 1) * step + 1;

  // Cycle and phase for a position measured in IMU samples.
  auto locate = [&](double pos) {
    std::size_t c = static_cast<std::size_t>(std::upper_bound(bounds.begin(), bounds.end(), pos) - bounds.begin());
    c = std::clamp<std::size_t>(c, 1, cycles) - 1;
    const double phase = (pos - bounds[c]) / static_cast<double>(bounds[c + 1] - bounds[c]);
    return std::pair{c, phase};
  };

  Trial t;
  t.imu.channel_names = imu_channel_names();
  t.imu.sample_rate_hz = imu_fs;
  t.imu.samples = Matrix(n_imu, kImuChannels);
  for (std::size_t i = 0; i < n_imu; ++i) {
    auto [c, phase] = locate(static_cast<double>(i));
    const auto x = synthetic_imu(mode, phase, intensity[c]);
    for (std::size_t j = 0; j < kImuChannels; ++j) t.imu.samples(i, j) = x[j] + kImuNoise * rng.normal();
  }
  t.emg.channel_names = muscle_names();
  t.emg.sample_rate_hz = emg_fs;
  t.emg.samples = Matrix(n_emg, kMuscles);
  for (std::size_t r = 0; r < n_emg; ++r) {
    auto [c, phase] = locate(static_cast<double>(r) / static_cast<double>(step));
    const auto y = synthetic_targets(style, mode, phase, intensity[c]);
    for (std::size_t k = 0; k < kMuscles; ++k) t.emg.samples(r, k) = y[k] * rng.normal() + 0.002 * rng.normal();
  }
  for (auto b : bounds) t.heel_strikes_s.push_back(static_cast<double>(b) / imu_fs);
  return t;
}

}  // namespace imu2emg::data
