#pragma once

#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "imu2emg/cli/run_config.hpp"
#include "imu2emg/data/dataset.hpp"

namespace imu2emg::cli {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitRuntime = 4;

/// Maps an in-flight exception to its exit code.
int exit_code_for(const std::exception& e);

inline constexpr std::size_t kSynthCyclesPerTrial = 10;

struct SynthResult {
  std::filesystem::path manifest;
  std::size_t trials = 0;
};

/// Synthetic population in the trial CSV schema plus manifest.json.
/// Subjects are S01, S02, ...; trials hold kSynthCyclesPerTrial cycles
/// and rotate through the synthetic modes.
SynthResult cmd_synth(std::size_t n_subjects, std::size_t cycles, std::uint64_t seed,
                      const std::filesystem::path& out_dir);

struct RunOptions {
  std::string fold = "all";  // "all" or a subject id
  std::size_t jobs = 1;
  std::ostream* log = nullptr;
};

// Run directory layout under config.out_dir:
//   run_config.json
//   folds/<subject>/{checkpoint.bin, train_log.csv, norm_stats.json, run_config.json}
//   folds/<subject>/{eval_cycles.csv, eval_report.json}
//   sweep.csv, sweep_cycles.csv, sweep_config.json
//   ablation.csv
//   report/{report.json, ratio_curve.tsv, ratio_curve_overall.tsv, muscle_bars.tsv}

std::filesystem::path fold_dir(const RunConfig& cfg, const std::string& subject);

/// LOSO training; returns the trained fold ids.
std::vector<std::string> cmd_train(const RunConfig& cfg, const RunOptions& opts);

/// Calibration sweep over trained folds; returns the number of CSV rows.
std::size_t cmd_sweep(const RunConfig& cfg, const RunOptions& opts);

struct AblationRow {
  std::string fold;
  std::uint64_t seed = 0;
  std::uint64_t digest_gated = 0, digest_nongated = 0;
  std::size_t params_gated = 0, params_nongated = 0;
  double r_gated = 0, r_nongated = 0;
  double r2_gated = 0, r2_nongated = 0;
  double nrmse_gated = 0, nrmse_nongated = 0;
  std::size_t best_epoch_gated = 0, best_epoch_nongated = 0;
};

std::string ablation_csv_header();
std::string ablation_to_csv(const std::vector<AblationRow>& rows);
/// Mean relative deltas and their direction, one line per metric.
std::string ablation_summary(const std::vector<AblationRow>& rows);

/// Gated vs width-matched plain GELU FFN, same seed and split per fold.
std::vector<AblationRow> cmd_ablate(const RunConfig& cfg, const RunOptions& opts);

/// Zero-shot evaluation of trained folds, optionally restricted to a mode.
void cmd_eval(const RunConfig& cfg, const RunOptions& opts, std::optional<data::Mode> mode = {});

/// Aggregates sweep_cycles.csv of a run directory into report/.
void cmd_report(const std::filesystem::path& run_dir);

}  // namespace imu2emg::cli
