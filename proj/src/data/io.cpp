#include "imu2emg/data/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "imu2emg/core/errors.hpp"
#include "imu2emg/core/files.hpp"

namespace fs = std::filesystem;

namespace imu2emg::data {
namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

void append_number(std::string& out, double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, end);
}

std::size_t rate_step(const LoadOptions& opts) {
  if (!(opts.imu_rate_hz > 0) || !(opts.emg_rate_hz > 0)) throw ConfigError("sample rates must be positive");
  const double ratio = opts.emg_rate_hz / opts.imu_rate_hz;
  const double step = std::round(ratio);
  if (step < 1 || std::abs(ratio - step) > 1e-9)
    throw ConfigError("EMG rate must be an integer multiple of the IMU rate");
  return static_cast<std::size_t>(step);
}

}  // namespace

Trial read_trial_csv(const fs::path& path, const LoadOptions& opts) {
  const std::string where = path.string();
  const std::size_t step = rate_step(opts);
  const std::string text = read_file(path);

  std::vector<std::string_view> lines;
  for (auto l : split(text, '\n'))
    if (!trim(l).empty()) lines.push_back(l);
  if (lines.empty()) throw DataError(where + ": empty file");

  auto header = split(lines[0], ',');
  std::unordered_map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col.emplace(std::string(trim(header[i])), i);
  auto need = [&](const std::string& name) {
    auto it = col.find(name);
    if (it == col.end()) throw DataError(where + ":1: missing channel '" + name + "'");
    return it->second;
  };
  const std::size_t time_col = need("time_s");
  const std::size_t hs_col = need("heel_strike");
  std::vector<std::size_t> imu_cols, emg_cols;
  for (const auto& n : imu_channel_names()) imu_cols.push_back(need(n));
  for (const auto& n : muscle_names()) emg_cols.push_back(need(n));

  const std::size_t n = lines.size() - 1;
  if (n < 2) throw DataError(where + ": need at least 2 data rows");
  std::vector<double> time(n);
  Matrix emg(n, kMuscles);
  std::vector<std::vector<double>> imu_rows;
  std::vector<double> strikes;

  auto parse = [&](std::string_view cell, std::size_t line_no, const std::string& name) {
    cell = trim(cell);
    double v = 0;
    auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc() || p != cell.data() + cell.size() || !std::isfinite(v))
      throw DataError(where + ":" + std::to_string(line_no) + ": malformed value '" + std::string(cell) +
                      "' in column '" + name + "'");
    return v;
  };

  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t line_no = r + 2;
    auto cells = split(lines[r + 1], ',');
    if (cells.size() != header.size())
      throw DataError(where + ":" + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                      " fields, got " + std::to_string(cells.size()));
    time[r] = parse(cells[time_col], line_no, "time_s");
    for (std::size_t m = 0; m < kMuscles; ++m) emg(r, m) = parse(cells[emg_cols[m]], line_no, muscle_names()[m]);

    std::size_t filled = 0;
    for (auto c : imu_cols) filled += trim(cells[c]).empty() ? 0 : 1;
    const bool on_grid = r % step == 0;
    if (filled != 0 && filled != kImuChannels)
      throw DataError(where + ":" + std::to_string(line_no) + ": partially filled IMU row");
    if (filled == kImuChannels && !on_grid)
      throw DataError(where + ":" + std::to_string(line_no) + ": rate mismatch, IMU sample off the declared " +
                      std::to_string(opts.imu_rate_hz) + " Hz grid");
    if (filled == 0 && on_grid)
      throw DataError(where + ":" + std::to_string(line_no) + ": rate mismatch, missing IMU sample for the declared " +
                      std::to_string(opts.imu_rate_hz) + " Hz grid");
    if (filled) {
      std::vector<double> row(kImuChannels);
      for (std::size_t c = 0; c < kImuChannels; ++c) row[c] = parse(cells[imu_cols[c]], line_no, imu_channel_names()[c]);
      imu_rows.push_back(std::move(row));
    }

    const double hs = parse(cells[hs_col], line_no, "heel_strike");
    if (hs != 0.0 && hs != 1.0)
      throw DataError(where + ":" + std::to_string(line_no) + ": heel_strike must be 0 or 1");
    if (hs == 1.0) strikes.push_back(time[r]);

    const double expected = time[0] + static_cast<double>(r) / opts.emg_rate_hz;
    if (std::abs(time[r] - expected) > 0.25 / opts.emg_rate_hz)
      throw DataError(where + ":" + std::to_string(line_no) + ": rate mismatch, time_s " + std::to_string(time[r]) +
                      " inconsistent with the declared " + std::to_string(opts.emg_rate_hz) + " Hz");
  }
  if (imu_rows.size() < 2) throw DataError(where + ": fewer than 2 IMU samples");

  Trial t;
  t.emg.channel_names = muscle_names();
  t.emg.sample_rate_hz = opts.emg_rate_hz;
  t.emg.start_time_s = time[0];
  t.emg.samples = std::move(emg);
  t.imu.channel_names = imu_channel_names();
  t.imu.sample_rate_hz = opts.imu_rate_hz;
  t.imu.start_time_s = time[0];
  t.imu.samples = Matrix(imu_rows.size(), kImuChannels);
  for (std::size_t r = 0; r < imu_rows.size(); ++r)
    std::copy(imu_rows[r].begin(), imu_rows[r].end(), t.imu.samples.row(r).begin());
  t.heel_strikes_s = std::move(strikes);
  return t;
}

void write_trial_csv(const fs::path& path, const Trial& trial) {
  LoadOptions rates;
  rates.imu_rate_hz = trial.imu.sample_rate_hz;
  rates.emg_rate_hz = trial.emg.sample_rate_hz;
  const std::size_t step = rate_step(rates);
  const std::size_t n = trial.emg.length();
  if ((trial.imu.length() - 1) * step >= n) throw ContractError("IMU stream extends past the EMG stream");

  std::vector<char> strike(n, 0);
  for (double t : trial.heel_strikes_s) {
    const double pos = std::round((t - trial.emg.start_time_s) * trial.emg.sample_rate_hz);
    if (pos < 0 || pos >= static_cast<double>(n)) throw ContractError("heel strike outside the trial");
    strike[static_cast<std::size_t>(pos)] = 1;
  }

  std::string out = "time_s";
  for (const auto& c : imu_channel_names()) out += "," + c;
  for (const auto& c : muscle_names()) out += "," + c;
  out += ",heel_strike\n";
  for (std::size_t r = 0; r < n; ++r) {
    append_number(out, trial.emg.time_at(r));
    const bool has_imu = r % step == 0 && r / step < trial.imu.length();
    for (std::size_t c = 0; c < kImuChannels; ++c) {
      out += ',';
      if (has_imu) append_number(out, trial.imu.samples(r / step, c));
    }
    for (std::size_t m = 0; m < kMuscles; ++m) {
      out += ',';
      append_number(out, trial.emg.samples(r, m));
    }
    out += strike[r] ? ",1\n" : ",0\n";
  }
  write_file_atomic(path, out);
}

dsp::SegmentationResult preprocess_trial(const Trial& trial, const LoadOptions& opts) {
  const auto env = dsp::emg_envelope(trial.emg);
  const auto aligned = dsp::align_to(env, trial.imu);
  const auto min_samples = static_cast<std::size_t>(std::lround(opts.min_cycle_s * trial.imu.sample_rate_hz));
  auto res = dsp::segment_cycles(trial.imu, aligned, trial.heel_strikes_s, min_samples);
  for (auto& s : res.segments) {
    s.inputs = dsp::median_filter(dsp::time_normalize(s.inputs), opts.median_window);
    s.targets = dsp::median_filter(dsp::time_normalize(s.targets), opts.median_window);
  }
  return res;
}

namespace {

Mode mode_from_filename(const fs::path& file) {
  std::string stem = file.stem().string();
  const auto us = stem.rfind('_');
  if (us != std::string::npos && us + 1 < stem.size() &&
      std::all_of(stem.begin() + static_cast<std::ptrdiff_t>(us) + 1, stem.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
    stem.resize(us);
  auto m = parse_mode(stem);
  if (!m) throw DataError(file.string() + ": cannot infer locomotion mode from file name");
  return *m;
}

void append_trial(SubjectDataset& sub, const fs::path& file, Mode mode, const LoadOptions& opts) {
  auto res = preprocess_trial(read_trial_csv(file, opts), opts);
  sub.discarded_short += res.discarded_short;
  for (auto& s : res.segments) {
    MovementSegment seg;
    seg.subject_id = sub.subject_id;
    seg.mode = mode;
    seg.cycle_index = sub.segments.size();
    seg.trial = file.stem().string();
    seg.inputs = std::move(s.inputs);
    seg.targets = std::move(s.targets);
    sub.segments.push_back(std::move(seg));
  }
}

}  // namespace

SubjectDataset load_subject_raw(const fs::path& dir, const LoadOptions& opts) {
  if (!fs::is_directory(dir)) throw DataError(dir.string() + ": not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  if (files.empty()) throw DataError("no trials found in " + dir.string());
  std::sort(files.begin(), files.end());

  SubjectDataset sub;
  sub.subject_id = fs::path(dir).lexically_normal().filename().string();
  if (sub.subject_id.empty()) sub.subject_id = fs::path(dir).lexically_normal().parent_path().filename().string();
  for (const auto& f : files) append_trial(sub, f, mode_from_filename(f), opts);
  sub.validate();
  return sub;
}

SubjectDataset load_subject(const fs::path& dir, const LoadOptions& opts) {
  auto sub = load_subject_raw(dir, opts);
  apply_normalization(sub.segments, compute_stats(sub.segments));
  return sub;
}

Manifest read_manifest(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    const auto j = nlohmann::json::parse(text);
    Manifest m;
    m.schema_version = j.value("schema_version", 1);
    if (m.schema_version != 1) throw DataError(path.string() + ": unsupported manifest schema_version");
    m.imu_rate_hz = j.value("imu_rate_hz", dsp::kImuRateHz);
    m.emg_rate_hz = j.value("emg_rate_hz", dsp::kEmgRateHz);
    for (const auto& s : j.at("subjects")) {
      ManifestSubject sub;
      sub.id = s.at("id").get<std::string>();
      for (const auto& t : s.at("trials")) {
        ManifestTrial tr;
        tr.path = t.at("path").get<std::string>();
        const auto mode = t.at("mode").get<std::string>();
        auto parsed = parse_mode(mode);
        if (!parsed) throw DataError(path.string() + ": unknown mode '" + mode + "'");
        tr.mode = *parsed;
        sub.trials.push_back(std::move(tr));
      }
      if (sub.trials.empty()) throw DataError(path.string() + ": subject " + sub.id + " lists no trials");
      m.subjects.push_back(std::move(sub));
    }
    if (m.subjects.empty()) throw DataError(path.string() + ": manifest lists no subjects");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": malformed manifest: " + e.what());
  }
}

void write_manifest(const fs::path& path, const Manifest& manifest) {
  nlohmann::ordered_json j;
  j["schema_version"] = manifest.schema_version;
  j["imu_rate_hz"] = manifest.imu_rate_hz;
  j["emg_rate_hz"] = manifest.emg_rate_hz;
  j["subjects"] = nlohmann::ordered_json::array();
  for (const auto& s : manifest.subjects) {
    nlohmann::ordered_json js;
    js["id"] = s.id;
    js["trials"] = nlohmann::ordered_json::array();
    for (const auto& t : s.trials) js["trials"].push_back({{"path", t.path}, {"mode", std::string(mode_name(t.mode))}});
    j["subjects"].push_back(js);
  }
  write_file_atomic(path, j.dump(2) + "\n");
}

std::vector<SubjectDataset> load_manifest_raw(const fs::path& path, LoadOptions opts) {
  const auto m = read_manifest(path);
  opts.imu_rate_hz = m.imu_rate_hz;
  opts.emg_rate_hz = m.emg_rate_hz;
  const fs::path base = path.parent_path();
  std::vector<SubjectDataset> out;
  for (const auto& s : m.subjects) {
    SubjectDataset sub;
    sub.subject_id = s.id;
    for (const auto& t : s.trials) append_trial(sub, base / t.path, t.mode, opts);
    sub.validate();
    out.push_back(std::move(sub));
  }
  return out;
}

}  // namespace imu2emg::data
