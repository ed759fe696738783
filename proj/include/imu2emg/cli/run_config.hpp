#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "imu2emg/adapt/adapt.hpp"
#include "imu2emg/data/io.hpp"
#include "imu2emg/model/config.hpp"
#include "imu2emg/train/trainer.hpp"

namespace imu2emg::cli {

enum class Precision { float32, float64 };

std::string precision_name(Precision p);
Precision parse_precision(const std::string& name);

inline constexpr int kRunConfigSchemaVersion = 1;

/// Everything a run depends on besides the input data. Serialized with a
/// fixed key order; relative paths resolve against the working directory.
struct RunConfig {
  std::string manifest;
  std::string out_dir = "runs/default";
  std::uint64_t seed = 0;
  Precision precision = Precision::float32;
  model::ModelConfig model;
  train::TrainConfig train;
  adapt::AdaptConfig adapt;
  std::vector<double> ratios{std::begin(data::kCalibrationRatios), std::end(data::kCalibrationRatios)};
  data::CalibrationPolicy policy = data::CalibrationPolicy::first;
  std::vector<std::uint64_t> sweep_seeds{0, 1, 2, 3, 4};
  std::size_t median_window = 5;
  double min_cycle_s = 0.4;
  double val_fraction = 0.20;

  /// Every violated invariant across all sections.
  std::vector<std::string> problems() const;
  /// Throws ConfigError listing all problems at once.
  void validate() const;

  std::string to_json() const;
  /// Unknown keys, wrong types and invalid values are all reported
  /// together in one ConfigError.
  static RunConfig from_json(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);

  /// Train config with the run seed applied.
  train::TrainConfig train_config() const;
  adapt::SweepConfig sweep_config() const;
  data::LoadOptions load_options() const;
};

}  // namespace imu2emg::cli
