#include "imu2emg/cli/run_config.hpp"

#include <set>

#include <json.hpp>

#include "imu2emg/core/errors.hpp"
#include "imu2emg/core/files.hpp"

namespace imu2emg::cli {

using nlohmann::json;
using nlohmann::ordered_json;

std::string precision_name(Precision p) { return p == Precision::float32 ? "float32" : "float64"; }

Precision parse_precision(const std::string& name) {
  if (name == "float32") return Precision::float32;
  if (name == "float64") return Precision::float64;
  throw ConfigError("unknown precision '" + name + "' (expected float32 or float64)");
}

namespace {

// Reads typed fields out of one JSON object, collecting problems instead of
// stopping at the first.
class Reader {
 public:
  Reader(const json& j, std::string prefix, std::vector<std::string>& problems)
      : j_(j), prefix_(std::move(prefix)), problems_(problems) {
    if (!j_.is_object()) problems_.push_back(where("") + "must be an object");
  }

  void size(const char* key, std::size_t& out) {
    const json* v = find(key);
    if (!v) return;
    if (v->is_number_unsigned())
      out = v->get<std::size_t>();
    else
      problems_.push_back(where(key) + "expected a non-negative integer");
  }
  void u64(const char* key, std::uint64_t& out) {
    const json* v = find(key);
    if (!v) return;
    if (v->is_number_unsigned())
      out = v->get<std::uint64_t>();
    else
      problems_.push_back(where(key) + "expected a non-negative integer");
  }
  void real(const char* key, double& out) {
    const json* v = find(key);
    if (!v) return;
    if (v->is_number())
      out = v->get<double>();
    else
      problems_.push_back(where(key) + "expected a number");
  }
  void text(const char* key, std::string& out) {
    const json* v = find(key);
    if (!v) return;
    if (v->is_string())
      out = v->get<std::string>();
    else
      problems_.push_back(where(key) + "expected a string");
  }
  template <class F>
  void parsed(const char* key, F&& parse) {
    std::string s;
    const json* v = find(key);
    if (!v) return;
    if (!v->is_string()) {
      problems_.push_back(where(key) + "expected a string");
      return;
    }
    try {
      parse(v->get<std::string>());
    } catch (const ConfigError& e) {
      problems_.push_back(where(key) + e.what());
    }
  }
  const json* object(const char* key) {
    const json* v = find(key);
    if (v && !v->is_object()) {
      problems_.push_back(where(key) + "must be an object");
      return nullptr;
    }
    return v;
  }
  const json* array(const char* key) {
    const json* v = find(key);
    if (v && !v->is_array()) {
      problems_.push_back(where(key) + "must be an array");
      return nullptr;
    }
    return v;
  }
  void only(std::initializer_list<const char*> known) {
    if (!j_.is_object()) return;
    std::set<std::string> k(known.begin(), known.end());
    for (const auto& [key, _] : j_.items())
      if (!k.count(key)) problems_.push_back(where(key.c_str()) + "unknown key");
  }
  std::string where(const char* key) const {
    std::string w = prefix_;
    if (*key) w += (w.empty() ? "" : ".") + std::string(key);
    return w.empty() ? "" : w + ": ";
  }

 private:
  const json* find(const char* key) const {
    if (!j_.is_object()) return nullptr;
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  const json& j_;
  std::string prefix_;
  std::vector<std::string>& problems_;
};

}  // namespace

std::vector<std::string> RunConfig::problems() const {
  std::vector<std::string> out;
  auto prefixed = [&](const std::vector<std::string>& p, const std::string& pre) {
    for (const auto& s : p) out.push_back(pre + s);
  };
  prefixed(model.problems(), "model.");
  prefixed(train.problems(), "");
  prefixed(adapt.problems(), "");
  if (model.input_dim != data::kImuChannels)
    out.push_back("model.input_dim must be " + std::to_string(data::kImuChannels) + " to match the IMU channels");
  if (model.output_dim != data::kMuscles)
    out.push_back("model.output_dim must be " + std::to_string(data::kMuscles) + " to match the muscles");
  if (model.seq_len != dsp::kCycleSamples)
    out.push_back("model.seq_len must be " + std::to_string(dsp::kCycleSamples) + " (normalized cycle length)");
  for (double r : ratios)
    if (r != 0.0 && !data::is_allowed_ratio(r))
      out.push_back("sweep.ratios: " + std::to_string(r) + " not in {0, 0.005, 0.01, 0.02, 0.05, 0.10}");
  if (ratios.empty()) out.push_back("sweep.ratios must not be empty");
  if (sweep_seeds.empty()) out.push_back("sweep.seeds must not be empty");
  if (median_window == 0 || median_window % 2 == 0) out.push_back("data.median_window must be odd and positive");
  if (!(min_cycle_s > 0.0)) out.push_back("data.min_cycle_s must be positive");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) out.push_back("data.val_fraction must lie in [0, 1)");
  if (out_dir.empty()) out.push_back("out_dir must not be empty");
  return out;
}

void RunConfig::validate() const {
  const auto p = problems();
  if (p.empty()) return;
  std::string msg = "invalid run config (" + std::to_string(p.size()) + " problem" + (p.size() > 1 ? "s" : "") + "):";
  for (const auto& s : p) msg += "\n  - " + s;
  throw ConfigError(msg);
}

std::string RunConfig::to_json() const {
  ordered_json j;
  j["schema_version"] = kRunConfigSchemaVersion;
  j["manifest"] = manifest;
  j["out_dir"] = out_dir;
  j["seed"] = seed;
  j["precision"] = precision_name(precision);
  j["model"] = ordered_json::parse(model.to_json());
  ordered_json t;
  t["optimizer"] = train::optimizer_name(train.optimizer);
  t["lr"] = train.lr;
  t["weight_decay"] = train.weight_decay;
  t["beta1"] = train.beta1;
  t["beta2"] = train.beta2;
  t["eps"] = train.eps;
  t["batch_size"] = train.batch_size;
  t["max_epochs"] = train.max_epochs;
  t["patience"] = train.patience;
  j["train"] = t;
  ordered_json a;
  a["optimizer"] = train::optimizer_name(adapt.optimizer);
  a["lr"] = adapt.lr;
  a["steps"] = adapt.steps;
  a["clip_threshold"] = adapt.clip_threshold;
  a["weight_decay"] = adapt.weight_decay;
  a["batch_size"] = adapt.batch_size;
  j["adapt"] = a;
  ordered_json s;
  s["ratios"] = ratios;
  s["policy"] = data::policy_name(policy);
  s["seeds"] = sweep_seeds;
  j["sweep"] = s;
  ordered_json d;
  d["median_window"] = median_window;
  d["min_cycle_s"] = min_cycle_s;
  d["val_fraction"] = val_fraction;
  j["data"] = d;
  return j.dump(2) + "\n";
}

RunConfig RunConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  std::vector<std::string> problems;
  Reader root(j, "", problems);
  root.only({"schema_version", "manifest", "out_dir", "seed", "precision", "model", "train", "adapt", "sweep", "data"});
  std::size_t version = kRunConfigSchemaVersion;
  root.size("schema_version", version);
  if (version != kRunConfigSchemaVersion)
    problems.push_back("schema_version: expected " + std::to_string(kRunConfigSchemaVersion) + ", got " +
                       std::to_string(version));
  root.text("manifest", c.manifest);
  root.text("out_dir", c.out_dir);
  root.u64("seed", c.seed);
  root.parsed("precision", [&](const std::string& s) { c.precision = parse_precision(s); });

  if (const json* m = root.object("model")) {
    Reader r(*m, "model", problems);
    r.only({"input_dim", "d_model", "n_layers", "n_heads", "conv_kernel", "ffn_hidden", "output_dim", "dropout_rate",
            "groupnorm_groups", "seq_len", "ffn", "norm_eps"});
    r.size("input_dim", c.model.input_dim);
    r.size("d_model", c.model.d_model);
    r.size("n_layers", c.model.n_layers);
    r.size("n_heads", c.model.n_heads);
    r.size("conv_kernel", c.model.conv_kernel);
    r.size("ffn_hidden", c.model.ffn_hidden);
    r.size("output_dim", c.model.output_dim);
    r.real("dropout_rate", c.model.dropout_rate);
    r.size("groupnorm_groups", c.model.groupnorm_groups);
    r.size("seq_len", c.model.seq_len);
    r.parsed("ffn", [&](const std::string& s) { c.model.ffn = model::parse_ffn(s); });
    r.real("norm_eps", c.model.norm_eps);
  }
  if (const json* t = root.object("train")) {
    Reader r(*t, "train", problems);
    r.only({"optimizer", "lr", "weight_decay", "beta1", "beta2", "eps", "batch_size", "max_epochs", "patience"});
    r.parsed("optimizer", [&](const std::string& s) { c.train.optimizer = train::parse_optimizer(s); });
    r.real("lr", c.train.lr);
    r.real("weight_decay", c.train.weight_decay);
    r.real("beta1", c.train.beta1);
    r.real("beta2", c.train.beta2);
    r.real("eps", c.train.eps);
    r.size("batch_size", c.train.batch_size);
    r.size("max_epochs", c.train.max_epochs);
    r.size("patience", c.train.patience);
  }
  if (const json* a = root.object("adapt")) {
    Reader r(*a, "adapt", problems);
    r.only({"optimizer", "lr", "steps", "clip_threshold", "weight_decay", "batch_size"});
    r.parsed("optimizer", [&](const std::string& s) { c.adapt.optimizer = train::parse_optimizer(s); });
    r.real("lr", c.adapt.lr);
    r.size("steps", c.adapt.steps);
    r.real("clip_threshold", c.adapt.clip_threshold);
    r.real("weight_decay", c.adapt.weight_decay);
    r.size("batch_size", c.adapt.batch_size);
  }
  if (const json* s = root.object("sweep")) {
    Reader r(*s, "sweep", problems);
    r.only({"ratios", "policy", "seeds"});
    if (const json* ratios = r.array("ratios")) {
      c.ratios.clear();
      for (const auto& v : *ratios) {
        if (v.is_number())
          c.ratios.push_back(v.get<double>());
        else
          problems.push_back("sweep.ratios: expected numbers");
      }
    }
    r.parsed("policy", [&](const std::string& p) { c.policy = data::parse_policy(p); });
    if (const json* seeds = r.array("seeds")) {
      c.sweep_seeds.clear();
      for (const auto& v : *seeds) {
        if (v.is_number_unsigned())
          c.sweep_seeds.push_back(v.get<std::uint64_t>());
        else
          problems.push_back("sweep.seeds: expected non-negative integers");
      }
    }
  }
  if (const json* d = root.object("data")) {
    Reader r(*d, "data", problems);
    r.only({"median_window", "min_cycle_s", "val_fraction"});
    r.size("median_window", c.median_window);
    r.real("min_cycle_s", c.min_cycle_s);
    r.real("val_fraction", c.val_fraction);
  }
  for (const auto& p : c.problems()) problems.push_back(p);
  if (!problems.empty()) {
    std::string msg = "invalid run config (" + std::to_string(problems.size()) + " problem" +
                      (problems.size() > 1 ? "s" : "") + "):";
    for (const auto& s : problems) msg += "\n  - " + s;
    throw ConfigError(msg);
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const DataError&) {
    throw ConfigError("cannot read config file " + path.string());
  }
  try {
    return from_json(text);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

train::TrainConfig RunConfig::train_config() const {
  auto t = train;
  t.seed = seed;
  return t;
}

adapt::SweepConfig RunConfig::sweep_config() const {
  adapt::SweepConfig s;
  s.ratios = ratios;
  s.policy = policy;
  s.seeds = sweep_seeds;
  s.adapt = adapt;
  return s;
}

data::LoadOptions RunConfig::load_options() const {
  data::LoadOptions o;
  o.median_window = median_window;
  o.min_cycle_s = min_cycle_s;
  return o;
}

}  // namespace imu2emg::cli
