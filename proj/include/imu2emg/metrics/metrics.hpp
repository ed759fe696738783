#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "imu2emg/core/matrix.hpp"
#include "imu2emg/data/dataset.hpp"

namespace imu2emg::metrics {

/// A metric whose definition breaks down on the input (zero variance, zero
/// range, non-positive peak) is flagged instead of reported as 0 or NaN.
struct MetricValue {
  double value = 0.0;
  bool degenerate = false;
};

MetricValue pearson_r(std::span<const double> x, std::span<const double> y);
MetricValue r_squared(std::span<const double> truth, std::span<const double> pred);
/// RMSE over the truth range of the cycle.
MetricValue nrmse(std::span<const double> truth, std::span<const double> pred);
/// |argmax(truth) - argmax(pred)| / length, earliest index wins ties.
MetricValue delta_tp(std::span<const double> truth, std::span<const double> pred);
/// |max(truth) - max(pred)| / max(truth).
MetricValue delta_ep(std::span<const double> truth, std::span<const double> pred);

enum class Metric { nrmse, pearson_r, r_squared, delta_tp, delta_ep };
inline constexpr std::size_t kMetricCount = 5;
inline constexpr std::array<Metric, kMetricCount> kAllMetrics{Metric::nrmse, Metric::pearson_r, Metric::r_squared,
                                                              Metric::delta_tp, Metric::delta_ep};
std::string_view metric_name(Metric m);

using MetricSet = std::array<MetricValue, kMetricCount>;

MetricValue compute(Metric m, std::span<const double> truth, std::span<const double> pred);

/// Clamps every value to [0, 1]; applying it twice changes nothing.
void clip_unit(Matrix& m);

struct CycleMetrics {
  std::string subject_id;
  data::Mode mode = data::Mode::levelground;
  std::size_t cycle_index = 0;
  std::vector<MetricSet> per_muscle;
};

/// Per-muscle metrics of one cycle, columns of [101 x muscles] matrices.
/// `pred` is clipped to [0, 1] first.
CycleMetrics cycle_metrics(const data::MovementSegment& truth, Matrix pred);

std::vector<CycleMetrics> evaluate(const std::vector<const data::MovementSegment*>& segments,
                                   const std::vector<Matrix>& predictions);

struct Summary {
  double mean = 0.0;
  double sd = 0.0;  // sample sd; 0 when n == 1
  std::size_t n = 0;
};
using SummarySet = std::array<Summary, kMetricCount>;

struct SubjectSummary {
  std::string subject_id;
  /// Mean over modes of the per-mode cycle means; NaN when every cycle was
  /// degenerate for that muscle and metric.
  std::vector<std::array<double, kMetricCount>> per_muscle;
  /// Mean over muscles of per_muscle.
  std::array<double, kMetricCount> mean{};
};

// Aggregation order: cycles -> (subject, muscle, mode) means -> mean over
// modes -> per subject. Per-muscle and overall rows are mean +- sd across
// subjects, and the overall subject value is the mean over muscles.
struct MetricsReport {
  std::optional<data::Mode> mode_filter;
  std::size_t n_muscles = 0;
  std::size_t cycles = 0;
  std::array<std::size_t, kMetricCount> excluded{};  // degenerate muscle-cycles
  std::vector<SubjectSummary> subjects;               // sorted by id
  std::vector<SummarySet> per_muscle;
  SummarySet overall{};
  /// Filled only without a mode filter: one report row per mode present.
  std::vector<std::pair<data::Mode, SummarySet>> per_mode;
};

/// Throws ContractError for empty input or inconsistent muscle counts.
MetricsReport aggregate(const std::vector<CycleMetrics>& cycles, std::optional<data::Mode> mode = {});

Summary summarize(const std::vector<double>& values);

/// subject,mode,cycle,muscle,<metrics>; degenerate cells are empty.
std::string cycles_to_csv(const std::vector<CycleMetrics>& cycles, const std::vector<std::string>& muscle_names);
std::string report_to_json(const MetricsReport& report, const std::vector<std::string>& muscle_names);

inline constexpr int kReportSchemaVersion = 1;

}  // namespace imu2emg::metrics
