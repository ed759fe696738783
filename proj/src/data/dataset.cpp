#include "imu2emg/data/dataset.hpp"

#include <algorithm>
#include <unordered_set>

#include <json.hpp>

#include "imu2emg/core/errors.hpp"

namespace imu2emg::data {

std::string_view mode_name(Mode m) {
  switch (m) {
    case Mode::treadmill: return "treadmill";
    case Mode::levelground: return "levelground";
    case Mode::stair_ascent: return "stair_ascent";
    case Mode::stair_descent: return "stair_descent";
    case Mode::ramp_ascent: return "ramp_ascent";
    case Mode::ramp_descent: return "ramp_descent";
  }
  return "unknown";
}

std::optional<Mode> parse_mode(std::string_view name) {
  for (Mode m : kAllModes)
    if (mode_name(m) == name) return m;
  return std::nullopt;
}

const std::vector<std::string>& imu_channel_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const char* seg : {"trunk", "thigh", "shank", "foot"})
      for (const char* kind : {"accel", "gyro"})
        for (const char* axis : {"x", "y", "z"}) out.push_back(std::string(seg) + "_" + kind + "_" + axis);
    return out;
  }();
  return names;
}

const std::vector<std::string>& muscle_names() {
  static const std::vector<std::string> names{
      "gastrocnemius_medialis", "tibialis_anterior", "soleus",         "vastus_medialis", "vastus_lateralis",
      "rectus_femoris",         "biceps_femoris",    "semitendinosus", "gracilis",        "gluteus_medius"};
  return names;
}

std::string MovementSegment::id() const { return subject_id + "#" + std::to_string(cycle_index); }

void SubjectDataset::validate() const {
  if (segments.empty()) throw DataError("subject " + subject_id + " has no segments");
  for (const auto& s : segments) {
    if (s.subject_id != subject_id)
      throw DataError("segment " + s.id() + " does not belong to subject " + subject_id);
    if (s.inputs.rows != dsp::kCycleSamples || s.inputs.cols != kImuChannels || s.targets.rows != dsp::kCycleSamples ||
        s.targets.cols != kMuscles)
      throw DataError("segment " + s.id() + " has the wrong shape");
  }
}

NormalizationStats compute_stats(const std::vector<const MovementSegment*>& pool) {
  NormalizationStats st{dsp::MinMaxStats::empty(kImuChannels), dsp::MinMaxStats::empty(kMuscles)};
  for (const auto* s : pool) {
    st.inputs.update(s->inputs);
    st.targets.update(s->targets);
  }
  return st;
}

NormalizationStats compute_stats(const std::vector<MovementSegment>& pool) { return compute_stats(pointers(pool)); }

MovementSegment normalized(const MovementSegment& s, const NormalizationStats& stats) {
  MovementSegment out = s;
  out.inputs = dsp::minmax_normalize(s.inputs, stats.inputs);
  out.targets = dsp::minmax_normalize(s.targets, stats.targets);
  return out;
}

void apply_normalization(std::vector<MovementSegment>& segments, const NormalizationStats& stats) {
  for (auto& s : segments) {
    s.inputs = dsp::minmax_normalize(s.inputs, stats.inputs);
    s.targets = dsp::minmax_normalize(s.targets, stats.targets);
  }
}

std::string stats_to_json(const NormalizationStats& stats) {
  nlohmann::ordered_json j;
  j["inputs"] = {{"channels", imu_channel_names()}, {"min", stats.inputs.min}, {"max", stats.inputs.max}};
  j["targets"] = {{"channels", muscle_names()}, {"min", stats.targets.min}, {"max", stats.targets.max}};
  return j.dump(2) + "\n";
}

NormalizationStats stats_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    NormalizationStats st;
    st.inputs.min = j.at("inputs").at("min").get<std::vector<double>>();
    st.inputs.max = j.at("inputs").at("max").get<std::vector<double>>();
    st.targets.min = j.at("targets").at("min").get<std::vector<double>>();
    st.targets.max = j.at("targets").at("max").get<std::vector<double>>();
    if (st.inputs.min.size() != kImuChannels || st.inputs.max.size() != kImuChannels ||
        st.targets.min.size() != kMuscles || st.targets.max.size() != kMuscles)
      throw DataError("normalization stats have the wrong channel count");
    return st;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed normalization stats: ") + e.what());
  }
}

std::vector<const MovementSegment*> pointers(const std::vector<MovementSegment>& segments) {
  std::vector<const MovementSegment*> out;
  out.reserve(segments.size());
  for (const auto& s : segments) out.push_back(&s);
  return out;
}

std::vector<const MovementSegment*> pooled(const std::vector<SubjectDataset>& subjects,
                                           const std::vector<std::string>& subject_ids) {
  std::unordered_set<std::string> wanted(subject_ids.begin(), subject_ids.end());
  std::vector<const MovementSegment*> out;
  for (const auto& sub : subjects)
    if (wanted.count(sub.subject_id))
      for (const auto& s : sub.segments) out.push_back(&s);
  return out;
}

}  // namespace imu2emg::data
