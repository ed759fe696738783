#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "imu2emg/data/dataset.hpp"
#include "imu2emg/dsp/signal.hpp"

namespace imu2emg::data {

struct LoadOptions {
  double imu_rate_hz = dsp::kImuRateHz;
  double emg_rate_hz = dsp::kEmgRateHz;
  std::size_t median_window = 5;
  double min_cycle_s = 0.4;
};

/// One parsed trial file. IMU rows are the CSV rows whose IMU cells are
/// filled; EMG is read from every row.
struct Trial {
  dsp::RawStream imu;
  dsp::RawStream emg;
  std::vector<double> heel_strikes_s;
};

/// Trial CSV: header row with `time_s`, the 24 IMU columns, the 10 muscle
/// columns and `heel_strike`. Rows are at the EMG rate; IMU cells are
/// filled every (emg_rate / imu_rate) rows starting at the first row and
/// left empty otherwise. Unknown columns are ignored.
Trial read_trial_csv(const std::filesystem::path& path, const LoadOptions& opts = {});
void write_trial_csv(const std::filesystem::path& path, const Trial& trial);

/// Envelope, alignment onto the IMU clock, segmentation, time
/// normalization and median filtering. Segments are not min-max scaled.
dsp::SegmentationResult preprocess_trial(const Trial& trial, const LoadOptions& opts = {});

/// All `<mode>_<NN>.csv` files in `dir`, sorted by name; subject id is the
/// directory name. Segments are un-normalized.
SubjectDataset load_subject_raw(const std::filesystem::path& dir, const LoadOptions& opts = {});

/// load_subject_raw followed by min-max scaling with the subject's own
/// statistics.
SubjectDataset load_subject(const std::filesystem::path& dir, const LoadOptions& opts = {});

struct ManifestTrial {
  std::string path;  // relative to the manifest directory
  Mode mode = Mode::levelground;
};

struct ManifestSubject {
  std::string id;
  std::vector<ManifestTrial> trials;
};

struct Manifest {
  int schema_version = 1;
  double imu_rate_hz = dsp::kImuRateHz;
  double emg_rate_hz = dsp::kEmgRateHz;
  std::vector<ManifestSubject> subjects;
};

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

/// Loads every subject of a manifest, un-normalized.
std::vector<SubjectDataset> load_manifest_raw(const std::filesystem::path& path, LoadOptions opts = {});

}  // namespace imu2emg::data
