#include "imu2emg/metrics/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>

#include <json.hpp>

#include "imu2emg/core/errors.hpp"

namespace imu2emg::metrics {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_lengths(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw DimensionError("metric inputs differ in length: " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  if (a.empty()) throw DimensionError("metric inputs are empty");
}

double mean_of(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

std::size_t argmax(std::span<const double> x) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < x.size(); ++i)
    if (x[i] > x[best]) best = i;
  return best;
}

double mean_finite(const std::vector<double>& v) {
  double s = 0.0;
  std::size_t n = 0;
  for (double x : v)
    if (!std::isnan(x)) {
      s += x;
      ++n;
    }
  return n ? s / static_cast<double>(n) : kNaN;
}

void append_number(std::string& out, double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, end);
}

std::string muscle_label(const std::vector<std::string>& names, std::size_t j) {
  return j < names.size() ? names[j] : "muscle_" + std::to_string(j);
}

nlohmann::ordered_json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

nlohmann::ordered_json summary_json(const SummarySet& s) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (std::size_t k = 0; k < kMetricCount; ++k)
    j[std::string(metric_name(kAllMetrics[k]))] = {
        {"mean", number_or_null(s[k].mean)}, {"sd", number_or_null(s[k].sd)}, {"n", s[k].n}};
  return j;
}

}  // namespace

MetricValue pearson_r(std::span<const double> x, std::span<const double> y) {
  check_lengths(x, y);
  const double mx = mean_of(x), my = mean_of(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return {0.0, true};
  return {std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0), false};
}

MetricValue r_squared(std::span<const double> truth, std::span<const double> pred) {
  check_lengths(truth, pred);
  const double m = mean_of(truth);
  double sse = 0.0, sst = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    sse += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    sst += (truth[i] - m) * (truth[i] - m);
  }
  if (sst == 0.0) return {0.0, true};
  return {1.0 - sse / sst, false};
}

MetricValue nrmse(std::span<const double> truth, std::span<const double> pred) {
  check_lengths(truth, pred);
  const auto [lo, hi] = std::minmax_element(truth.begin(), truth.end());
  const double range = *hi - *lo;
  if (range == 0.0) return {0.0, true};
  double sse = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) sse += (truth[i] - pred[i]) * (truth[i] - pred[i]);
  return {std::sqrt(sse / static_cast<double>(truth.size())) / range, false};
}

MetricValue delta_tp(std::span<const double> truth, std::span<const double> pred) {
  check_lengths(truth, pred);
  const auto a = static_cast<double>(argmax(truth)), b = static_cast<double>(argmax(pred));
  return {std::abs(a - b) / static_cast<double>(truth.size()), false};
}

MetricValue delta_ep(std::span<const double> truth, std::span<const double> pred) {
  check_lengths(truth, pred);
  const double pt = *std::max_element(truth.begin(), truth.end());
  const double pp = *std::max_element(pred.begin(), pred.end());
  if (!(pt > 0.0)) return {0.0, true};
  return {std::abs(pt - pp) / pt, false};
}

std::string_view metric_name(Metric m) {
  switch (m) {
    case Metric::nrmse: return "nrmse";
    case Metric::pearson_r: return "pearson_r";
    case Metric::r_squared: return "r_squared";
    case Metric::delta_tp: return "delta_tp";
    case Metric::delta_ep: return "delta_ep";
  }
  return "?";
}

MetricValue compute(Metric m, std::span<const double> truth, std::span<const double> pred) {
  switch (m) {
    case Metric::nrmse: return nrmse(truth, pred);
    case Metric::pearson_r: return pearson_r(truth, pred);
    case Metric::r_squared: return r_squared(truth, pred);
    case Metric::delta_tp: return delta_tp(truth, pred);
    case Metric::delta_ep: return delta_ep(truth, pred);
  }
  throw ContractError("unknown metric");
}

void clip_unit(Matrix& m) {
  for (double& v : m.data) v = std::clamp(v, 0.0, 1.0);
}

CycleMetrics cycle_metrics(const data::MovementSegment& truth, Matrix pred) {
  if (pred.rows != truth.targets.rows || pred.cols != truth.targets.cols)
    throw DimensionError("prediction shape does not match targets for " + truth.id());
  clip_unit(pred);
  CycleMetrics out{truth.subject_id, truth.mode, truth.cycle_index, {}};
  const std::size_t L = pred.rows;
  std::vector<double> t(L), p(L);
  for (std::size_t j = 0; j < pred.cols; ++j) {
    for (std::size_t i = 0; i < L; ++i) {
      t[i] = truth.targets(i, j);
      p[i] = pred(i, j);
    }
    MetricSet set;
    for (std::size_t k = 0; k < kMetricCount; ++k) set[k] = compute(kAllMetrics[k], t, p);
    out.per_muscle.push_back(set);
  }
  return out;
}

std::vector<CycleMetrics> evaluate(const std::vector<const data::MovementSegment*>& segments,
                                   const std::vector<Matrix>& predictions) {
  if (segments.size() != predictions.size())
    throw DimensionError("got " + std::to_string(predictions.size()) + " predictions for " +
                         std::to_string(segments.size()) + " segments");
  std::vector<CycleMetrics> out;
  out.reserve(segments.size());
  for (std::size_t i = 0; i < segments.size(); ++i) out.push_back(cycle_metrics(*segments[i], predictions[i]));
  return out;
}

Summary summarize(const std::vector<double>& values) {
  Summary s;
  std::vector<double> v;
  for (double x : values)
    if (!std::isnan(x)) v.push_back(x);
  s.n = v.size();
  if (v.empty()) return {kNaN, kNaN, 0};
  s.mean = mean_of(v);
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

MetricsReport aggregate(const std::vector<CycleMetrics>& cycles, std::optional<data::Mode> mode) {
  if (cycles.empty()) throw ContractError("cannot aggregate an empty set of cycles");
  MetricsReport r;
  r.mode_filter = mode;
  r.n_muscles = cycles.front().per_muscle.size();

  // subject -> mode -> muscle -> metric -> values
  using Cell = std::array<std::vector<double>, kMetricCount>;
  std::map<std::string, std::map<data::Mode, std::vector<Cell>>> groups;
  for (const auto& c : cycles) {
    if (c.per_muscle.size() != r.n_muscles) throw ContractError("cycles disagree on the number of muscles");
    if (mode && c.mode != *mode) continue;
    ++r.cycles;
    auto& cells = groups[c.subject_id][c.mode];
    cells.resize(r.n_muscles);
    for (std::size_t j = 0; j < r.n_muscles; ++j)
      for (std::size_t k = 0; k < kMetricCount; ++k) {
        const auto& mv = c.per_muscle[j][k];
        if (mv.degenerate)
          ++r.excluded[k];
        else
          cells[j][k].push_back(mv.value);
      }
  }
  if (r.cycles == 0) throw ContractError("no cycles match the mode filter");

  for (const auto& [subject, modes] : groups) {
    SubjectSummary s{subject, std::vector<std::array<double, kMetricCount>>(r.n_muscles), {}};
    for (std::size_t j = 0; j < r.n_muscles; ++j)
      for (std::size_t k = 0; k < kMetricCount; ++k) {
        std::vector<double> mode_means;
        for (const auto& [m, cells] : modes) mode_means.push_back(mean_finite(cells[j][k]));
        s.per_muscle[j][k] = mean_finite(mode_means);
      }
    for (std::size_t k = 0; k < kMetricCount; ++k) {
      std::vector<double> col;
      for (std::size_t j = 0; j < r.n_muscles; ++j) col.push_back(s.per_muscle[j][k]);
      s.mean[k] = mean_finite(col);
    }
    r.subjects.push_back(std::move(s));
  }

  r.per_muscle.resize(r.n_muscles);
  for (std::size_t j = 0; j < r.n_muscles; ++j)
    for (std::size_t k = 0; k < kMetricCount; ++k) {
      std::vector<double> col;
      for (const auto& s : r.subjects) col.push_back(s.per_muscle[j][k]);
      r.per_muscle[j][k] = summarize(col);
    }
  for (std::size_t k = 0; k < kMetricCount; ++k) {
    std::vector<double> col;
    for (const auto& s : r.subjects) col.push_back(s.mean[k]);
    r.overall[k] = summarize(col);
  }

  if (!mode)
    for (data::Mode m : data::kAllModes)
      if (std::any_of(cycles.begin(), cycles.end(), [&](const CycleMetrics& c) { return c.mode == m; }))
        r.per_mode.emplace_back(m, aggregate(cycles, m).overall);
  return r;
}

std::string cycles_to_csv(const std::vector<CycleMetrics>& cycles, const std::vector<std::string>& muscle_names) {
  std::string out = "subject,mode,cycle,muscle";
  for (Metric m : kAllMetrics) {
    out += ',';
    out += metric_name(m);
  }
  out += '\n';
  for (const auto& c : cycles)
    for (std::size_t j = 0; j < c.per_muscle.size(); ++j) {
      out += c.subject_id + ',' + std::string(data::mode_name(c.mode)) + ',' + std::to_string(c.cycle_index) + ',' +
             muscle_label(muscle_names, j);
      for (const auto& mv : c.per_muscle[j]) {
        out += ',';
        if (!mv.degenerate) append_number(out, mv.value);
      }
      out += '\n';
    }
  return out;
}

std::string report_to_json(const MetricsReport& r, const std::vector<std::string>& muscle_names) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["schema_version"] = kReportSchemaVersion;
  j["mode_filter"] = r.mode_filter ? ordered_json(std::string(data::mode_name(*r.mode_filter))) : ordered_json(nullptr);
  j["aggregation"] = "cycle mean per (subject, muscle, mode); mean over modes; mean over muscles per subject; "
                     "mean and sample sd across subjects";
  j["cycles"] = r.cycles;
  ordered_json excluded = ordered_json::object();
  for (std::size_t k = 0; k < kMetricCount; ++k) excluded[std::string(metric_name(kAllMetrics[k]))] = r.excluded[k];
  j["excluded_degenerate"] = excluded;
  j["overall"] = summary_json(r.overall);
  ordered_json muscles = ordered_json::object();
  for (std::size_t m = 0; m < r.per_muscle.size(); ++m)
    muscles[muscle_label(muscle_names, m)] = summary_json(r.per_muscle[m]);
  j["per_muscle"] = muscles;
  ordered_json modes = ordered_json::object();
  for (const auto& [m, s] : r.per_mode) modes[std::string(data::mode_name(m))] = summary_json(s);
  j["per_mode"] = modes;
  ordered_json subjects = ordered_json::object();
  for (const auto& s : r.subjects) {
    ordered_json e = ordered_json::object();
    for (std::size_t k = 0; k < kMetricCount; ++k) e[std::string(metric_name(kAllMetrics[k]))] = number_or_null(s.mean[k]);
    subjects[s.subject_id] = e;
  }
  j["per_subject"] = subjects;
  return j.dump(2) + "\n";
}

}  // namespace imu2emg::metrics
