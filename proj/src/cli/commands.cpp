#include "imu2emg/cli/commands.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "imu2emg/adapt/adapt.hpp"
#include "imu2emg/core/errors.hpp"
#include "imu2emg/core/files.hpp"
#include "imu2emg/data/io.hpp"
#include "imu2emg/data/protocol.hpp"
#include "imu2emg/data/synthetic.hpp"
#include "imu2emg/metrics/metrics.hpp"
#include "imu2emg/model/checkpoint.hpp"
#include "imu2emg/train/trainer.hpp"

namespace imu2emg::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const LoadError*>(&e)) return kExitData;
  return kExitRuntime;
}

namespace {

std::uint64_t fnv64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string number(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void say(const RunOptions& opts, const std::string& line) {
  static std::mutex mu;
  if (!opts.log) return;
  std::lock_guard<std::mutex> lock(mu);
  *opts.log << line << '\n' << std::flush;
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads. The first failure in
// index order is rethrown once every job has finished.
template <class F>
void parallel_for(std::size_t n, std::size_t jobs, F&& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(jobs, n));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// Everything a fold needs, loaded once per command.
struct Workspace {
  std::vector<data::SubjectDataset> raw;
  std::vector<data::LosoFold> folds;  // the selected ones

  const data::SubjectDataset& subject(const std::string& id) const {
    for (const auto& s : raw)
      if (s.subject_id == id) return s;
    throw ContractError("unknown subject " + id);
  }
};

void require_manifest(const RunConfig& cfg) {
  if (cfg.manifest.empty()) throw ConfigError("no manifest given (set \"manifest\" in the run config)");
  if (!fs::exists(cfg.manifest)) throw DataError("manifest not found: " + cfg.manifest);
}

std::vector<data::LosoFold> select_folds(const std::vector<std::string>& ids, const RunConfig& cfg,
                                         const std::string& selector) {
  auto folds = data::make_loso_folds(ids, cfg.val_fraction);
  if (selector == "all") return folds;
  for (auto& f : folds)
    if (f.test_subject == selector) return {f};
  std::string valid;
  for (const auto& id : ids) valid += (valid.empty() ? "" : ", ") + id;
  throw ConfigError("unknown fold '" + selector + "' (expected all or one of: " + valid + ")");
}

Workspace load_workspace(const RunConfig& cfg, const RunOptions& opts) {
  require_manifest(cfg);
  // Fold ids come from the manifest alone so a bad selector fails before
  // any trial is parsed.
  const auto manifest = data::read_manifest(cfg.manifest);
  std::vector<std::string> ids;
  for (const auto& s : manifest.subjects) ids.push_back(s.id);
  Workspace w;
  w.folds = select_folds(ids, cfg, opts.fold);
  w.raw = data::load_manifest_raw(cfg.manifest, cfg.load_options());
  return w;
}

std::vector<data::SubjectDataset> normalize_all(const std::vector<data::SubjectDataset>& raw,
                                                const data::NormalizationStats& stats) {
  auto out = raw;
  for (auto& s : out) data::apply_normalization(s.segments, stats);
  return out;
}

data::SubjectDataset normalized_subject(const data::SubjectDataset& raw, const data::NormalizationStats& stats) {
  auto out = raw;
  data::apply_normalization(out.segments, stats);
  return out;
}

data::TrainValSplit split_for(const RunConfig& cfg, const data::LosoFold& fold,
                              const std::vector<data::SubjectDataset>& subjects) {
  RngState rng = RngState(cfg.seed).fork(fnv64(fold.test_subject));
  return data::train_val_split(fold, data::pooled(subjects, fold.train_subjects), rng);
}

// A fitted fold, always stored as float32.
struct FoldFit {
  model::ModelParams<float> params;
  train::TrainLog log;
};

template <typename T>
FoldFit fit_as(const data::LosoFold& fold, const data::TrainValSplit& split, const model::ModelConfig& model_cfg,
               const train::TrainConfig& tc, const RunOptions& opts) {
  auto cb = [&](const train::EpochRecord& e) {
    if (e.epoch % 10 == 0 || e.epoch == 1)
      say(opts, "  [" + fold.test_subject + "] epoch " + std::to_string(e.epoch) + " train " + number(e.train_loss) +
                    " val " + number(e.val_loss));
  };
  auto r = train::fit<T>(fold, split, model_cfg, tc, cb);
  if constexpr (std::is_same_v<T, float>)
    return {std::move(r.params), std::move(r.log)};
  else
    return {r.params.template cast<float>(), std::move(r.log)};
}

FoldFit fit_fold(const RunConfig& cfg, const model::ModelConfig& model_cfg, const data::LosoFold& fold,
                 const data::TrainValSplit& split, const RunOptions& opts) {
  const auto tc = cfg.train_config();
  return cfg.precision == Precision::float32 ? fit_as<float>(fold, split, model_cfg, tc, opts)
                                             : fit_as<double>(fold, split, model_cfg, tc, opts);
}

data::NormalizationStats fold_stats(const Workspace& w, const data::LosoFold& fold) {
  return data::compute_stats(data::pooled(w.raw, fold.train_subjects));
}

std::vector<Matrix> predict_with(const RunConfig& cfg, const model::ModelParams<float>& params,
                                 const std::vector<const data::MovementSegment*>& segs) {
  if (cfg.precision == Precision::float32) {
    auto p = params;
    return train::predict_segments(p, segs);
  }
  auto p = params.cast<double>();
  return train::predict_segments(p, segs);
}

void write_run_config(const RunConfig& cfg, const fs::path& path, bool refuse_different) {
  const std::string text = cfg.to_json();
  if (refuse_different && fs::exists(path) && read_file(path) != text)
    throw ConfigError(path.string() +
                      " was written by a different config; use a fresh --out directory or the original config");
  write_file_atomic(path, text);
}

struct TrainedFold {
  model::ModelParams<float> params;
  data::NormalizationStats stats;
};

TrainedFold load_trained(const RunConfig& cfg, const std::string& subject) {
  const fs::path dir = fold_dir(cfg, subject);
  const fs::path ckpt = dir / "checkpoint.bin";
  if (!fs::exists(ckpt))
    throw DataError("fold " + subject + ": missing checkpoint " + ckpt.string() + " (run `imu2emg train --fold " +
                    subject + "` first)");
  TrainedFold t{model::load_checkpoint(ckpt), {}};
  if (!(t.params.config == cfg.model))
    throw ConfigError("fold " + subject + ": checkpoint model config differs from the run config");
  const fs::path stats = dir / "norm_stats.json";
  if (!fs::exists(stats)) throw DataError("fold " + subject + ": missing " + stats.string());
  t.stats = data::stats_from_json(read_file(stats));
  return t;
}

}  // namespace

fs::path fold_dir(const RunConfig& cfg, const std::string& subject) {
  return fs::path(cfg.out_dir) / "folds" / subject;
}

SynthResult cmd_synth(std::size_t n_subjects, std::size_t cycles, std::uint64_t seed, const fs::path& out_dir) {
  if (n_subjects < 2) throw ConfigError("synth needs at least 2 subjects, got " + std::to_string(n_subjects));
  if (cycles < 1) throw ConfigError("synth needs at least 1 cycle per subject");
  const RngState root(seed);
  data::Manifest manifest;
  SynthResult result;
  for (std::size_t i = 0; i < n_subjects; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "S%02zu", i + 1);
    const RngState subject_rng = root.fork(i + 1);
    RngState style_rng = subject_rng.fork(0);
    const auto style = data::SubjectStyle::draw(style_rng);
    data::ManifestSubject ms;
    ms.id = id;
    std::size_t remaining = cycles;
    for (std::size_t t = 0; remaining > 0; ++t) {
      const std::size_t n = std::min(remaining, kSynthCyclesPerTrial);
      remaining -= n;
      const data::Mode mode = data::kSyntheticModes[t % data::kSyntheticModes.size()];
      RngState trial_rng = subject_rng.fork(t + 1);
      const auto trial = data::synthesize_trial(style, mode, n, trial_rng);
      char name[64];
      std::snprintf(name, sizeof(name), "%s_%02zu.csv", std::string(data::mode_name(mode)).c_str(), t + 1);
      const std::string rel = ms.id + "/" + name;
      data::write_trial_csv(out_dir / rel, trial);
      ms.trials.push_back({rel, mode});
      ++result.trials;
    }
    manifest.subjects.push_back(std::move(ms));
  }
  result.manifest = out_dir / "manifest.json";
  data::write_manifest(result.manifest, manifest);
  return result;
}

std::vector<std::string> cmd_train(const RunConfig& cfg, const RunOptions& opts) {
  cfg.validate();
  const auto w = load_workspace(cfg, opts);
  const fs::path out(cfg.out_dir);
  write_run_config(cfg, out / "run_config.json", true);
  std::vector<std::string> done(w.folds.size());
  parallel_for(w.folds.size(), opts.jobs, [&](std::size_t i) {
    const auto& fold = w.folds[i];
    say(opts, "train fold " + fold.test_subject);
    const auto stats = fold_stats(w, fold);
    const auto subjects = normalize_all(w.raw, stats);
    const auto split = split_for(cfg, fold, subjects);
    const auto fit = fit_fold(cfg, cfg.model, fold, split, opts);
    const fs::path dir = fold_dir(cfg, fold.test_subject);
    model::save_checkpoint(fit.params, dir / "checkpoint.bin");
    write_file_atomic(dir / "train_log.csv", fit.log.to_csv(false));
    write_file_atomic(dir / "norm_stats.json", data::stats_to_json(stats));
    write_file_atomic(dir / "run_config.json", cfg.to_json());
    say(opts, "  [" + fold.test_subject + "] best epoch " + std::to_string(fit.log.best_epoch) + " loss " +
                  number(fit.log.best_loss));
    done[i] = fold.test_subject;
  });
  return done;
}

std::size_t cmd_sweep(const RunConfig& cfg, const RunOptions& opts) {
  cfg.validate();
  const auto w = load_workspace(cfg, opts);
  // Fail on any missing fold before adapting anything.
  std::vector<TrainedFold> trained;
  for (const auto& fold : w.folds) trained.push_back(load_trained(cfg, fold.test_subject));

  std::vector<std::vector<adapt::SweepRow>> rows(w.folds.size());
  const auto sc = cfg.sweep_config();
  parallel_for(w.folds.size(), opts.jobs, [&](std::size_t i) {
    const auto& fold = w.folds[i];
    say(opts, "sweep fold " + fold.test_subject);
    const auto test = normalized_subject(w.subject(fold.test_subject), trained[i].stats);
    if (cfg.precision == Precision::float32)
      rows[i] = adapt::calibration_sweep(trained[i].params, test, sc);
    else
      rows[i] = adapt::calibration_sweep(trained[i].params.cast<double>(), test, sc);
  });

  std::string csv, cycles;
  std::size_t n = 0;
  for (std::size_t i = 0; i < w.folds.size(); ++i) {
    csv += adapt::sweep_rows_to_csv(w.folds[i].test_subject, rows[i], i == 0);
    cycles += adapt::sweep_cycles_to_csv(w.folds[i].test_subject, rows[i], i == 0, data::muscle_names());
    n += rows[i].size();
  }
  const fs::path out(cfg.out_dir);
  write_file_atomic(out / "sweep.csv", csv);
  write_file_atomic(out / "sweep_cycles.csv", cycles);
  write_file_atomic(out / "sweep_config.json", cfg.to_json());
  return n;
}

std::string ablation_csv_header() {
  return "fold,seed,order_digest_gated,order_digest_nongated,params_gated,params_nongated,param_diff_pct,"
         "r_gated,r_nongated,r_delta_pct,r2_gated,r2_nongated,r2_delta_pct,"
         "nrmse_gated,nrmse_nongated,nrmse_delta_pct,best_epoch_gated,best_epoch_nongated\n";
}

namespace {

double delta_pct(double gated, double nongated) { return (gated - nongated) / std::abs(nongated) * 100.0; }

}  // namespace

std::string ablation_to_csv(const std::vector<AblationRow>& rows) {
  std::string out = ablation_csv_header();
  for (const auto& r : rows) {
    const double pdiff = (static_cast<double>(r.params_gated) - static_cast<double>(r.params_nongated)) /
                         static_cast<double>(r.params_nongated) * 100.0;
    out += r.fold + ',' + std::to_string(r.seed) + ',' + hex(r.digest_gated) + ',' + hex(r.digest_nongated) + ',' +
           std::to_string(r.params_gated) + ',' + std::to_string(r.params_nongated) + ',' + number(pdiff) + ',' +
           number(r.r_gated) + ',' + number(r.r_nongated) + ',' + number(delta_pct(r.r_gated, r.r_nongated)) + ',' +
           number(r.r2_gated) + ',' + number(r.r2_nongated) + ',' + number(delta_pct(r.r2_gated, r.r2_nongated)) +
           ',' + number(r.nrmse_gated) + ',' + number(r.nrmse_nongated) + ',' +
           number(delta_pct(r.nrmse_gated, r.nrmse_nongated)) + ',' + std::to_string(r.best_epoch_gated) + ',' +
           std::to_string(r.best_epoch_nongated) + '\n';
  }
  return out;
}

std::string ablation_summary(const std::vector<AblationRow>& rows) {
  if (rows.empty()) return "no folds\n";
  struct Item {
    const char* name;
    double AblationRow::*gated;
    double AblationRow::*nongated;
    bool higher_better;
  };
  const Item items[] = {{"r", &AblationRow::r_gated, &AblationRow::r_nongated, true},
                        {"r2", &AblationRow::r2_gated, &AblationRow::r2_nongated, true},
                        {"nrmse", &AblationRow::nrmse_gated, &AblationRow::nrmse_nongated, false}};
  std::ostringstream os;
  os.precision(4);
  for (const auto& it : items) {
    double sum = 0.0;
    for (const auto& r : rows) sum += delta_pct(r.*it.gated, r.*it.nongated);
    const double mean = sum / static_cast<double>(rows.size());
    const bool better = it.higher_better ? mean > 0 : mean < 0;
    os << it.name << ": mean relative change gated vs non-gated " << std::showpos << mean << std::noshowpos
       << "% over " << rows.size() << " fold(s); gating " << (mean == 0 ? "made no difference" : better ? "helped" : "hurt")
       << '\n';
  }
  return os.str();
}

std::vector<AblationRow> cmd_ablate(const RunConfig& cfg, const RunOptions& opts) {
  cfg.validate();
  auto nongated_cfg = cfg.model;
  nongated_cfg.ffn = model::FfnKind::gelu;
  nongated_cfg.validate();
  const auto w = load_workspace(cfg, opts);

  std::vector<AblationRow> rows(w.folds.size());
  parallel_for(w.folds.size(), opts.jobs, [&](std::size_t i) {
    const auto& fold = w.folds[i];
    say(opts, "ablate fold " + fold.test_subject);
    const auto stats = fold_stats(w, fold);
    const auto subjects = normalize_all(w.raw, stats);
    const auto split = split_for(cfg, fold, subjects);
    const data::SubjectDataset* test = nullptr;
    for (const auto& s : subjects)
      if (s.subject_id == fold.test_subject) test = &s;
    const auto segs = data::pointers(test->segments);

    auto score = [&](const model::ModelConfig& mc, std::uint64_t& digest, std::size_t& best_epoch) {
      const auto fit = fit_fold(cfg, mc, fold, split, opts);
      digest = fit.log.order_digest;
      best_epoch = fit.log.best_epoch;
      const auto preds = predict_with(cfg, fit.params, segs);
      return metrics::aggregate(metrics::evaluate(segs, preds)).overall;
    };
    AblationRow& r = rows[i];
    r.fold = fold.test_subject;
    r.seed = cfg.seed;
    r.params_gated = model::parameter_count(cfg.model);
    r.params_nongated = model::parameter_count(nongated_cfg);
    const auto g = score(cfg.model, r.digest_gated, r.best_epoch_gated);
    const auto n = score(nongated_cfg, r.digest_nongated, r.best_epoch_nongated);
    auto at = [](const metrics::SummarySet& s, metrics::Metric m) { return s[static_cast<std::size_t>(m)].mean; };
    r.r_gated = at(g, metrics::Metric::pearson_r);
    r.r_nongated = at(n, metrics::Metric::pearson_r);
    r.r2_gated = at(g, metrics::Metric::r_squared);
    r.r2_nongated = at(n, metrics::Metric::r_squared);
    r.nrmse_gated = at(g, metrics::Metric::nrmse);
    r.nrmse_nongated = at(n, metrics::Metric::nrmse);
  });
  const fs::path out(cfg.out_dir);
  write_file_atomic(out / "ablation.csv", ablation_to_csv(rows));
  write_file_atomic(out / "ablation_config.json", cfg.to_json());
  return rows;
}

void cmd_eval(const RunConfig& cfg, const RunOptions& opts, std::optional<data::Mode> mode) {
  cfg.validate();
  const auto w = load_workspace(cfg, opts);
  std::vector<TrainedFold> trained;
  for (const auto& fold : w.folds) trained.push_back(load_trained(cfg, fold.test_subject));
  parallel_for(w.folds.size(), opts.jobs, [&](std::size_t i) {
    const auto& fold = w.folds[i];
    const auto test = normalized_subject(w.subject(fold.test_subject), trained[i].stats);
    const auto segs = data::pointers(test.segments);
    const auto preds = predict_with(cfg, trained[i].params, segs);
    const auto cycles = metrics::evaluate(segs, preds);
    const auto report = metrics::aggregate(cycles, mode);
    const fs::path dir = fold_dir(cfg, fold.test_subject);
    write_file_atomic(dir / "eval_cycles.csv", metrics::cycles_to_csv(cycles, data::muscle_names()));
    write_file_atomic(dir / "eval_report.json", metrics::report_to_json(report, data::muscle_names()));
    const auto& r = report.overall[static_cast<std::size_t>(metrics::Metric::pearson_r)];
    say(opts, "eval fold " + fold.test_subject + ": r " + number(r.mean) + " over " + std::to_string(report.cycles) +
                  " cycles");
  });
}

// Report ---------------------------------------------------------------

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell += c;
    }
  }
  out.push_back(cell);
  return out;
}

double parse_double(const std::string& s, std::size_t line) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw DataError("sweep_cycles.csv line " + std::to_string(line) + ": bad number '" + s + "'");
  return v;
}

std::int64_t ratio_key(double r) { return std::llround(r * 1e6); }

struct SweepCycles {
  // ratio key -> seed -> cycles
  std::map<std::int64_t, std::map<std::uint64_t, std::vector<metrics::CycleMetrics>>> groups;
  std::map<std::int64_t, double> ratios;
};

SweepCycles parse_sweep_cycles(const std::string& text) {
  const auto& muscles = data::muscle_names();
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("sweep_cycles.csv is empty");
  const std::string expected =
      "fold,ratio,seed,subject,mode,cycle,muscle,nrmse,pearson_r,r_squared,delta_tp,delta_ep";
  if (line != expected) throw DataError("sweep_cycles.csv: unexpected header '" + line + "'");
  SweepCycles out;
  // (ratio, seed, subject, cycle) -> position in its group
  std::map<std::tuple<std::int64_t, std::uint64_t, std::string, std::size_t>, std::size_t> where;
  for (std::size_t ln = 2; std::getline(in, line); ++ln) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 7 + metrics::kMetricCount)
      throw DataError("sweep_cycles.csv line " + std::to_string(ln) + ": expected 12 columns");
    const double ratio = parse_double(cells[1], ln);
    const auto seed = static_cast<std::uint64_t>(parse_double(cells[2], ln));
    const auto mode = data::parse_mode(cells[4]);
    if (!mode) throw DataError("sweep_cycles.csv line " + std::to_string(ln) + ": unknown mode '" + cells[4] + "'");
    const auto cycle = static_cast<std::size_t>(parse_double(cells[5], ln));
    std::size_t muscle = muscles.size();
    for (std::size_t k = 0; k < muscles.size(); ++k)
      if (muscles[k] == cells[6]) muscle = k;
    if (muscle == muscles.size())
      throw DataError("sweep_cycles.csv line " + std::to_string(ln) + ": unknown muscle '" + cells[6] + "'");

    const auto key = ratio_key(ratio);
    out.ratios[key] = ratio;
    auto& group = out.groups[key][seed];
    const auto id = std::make_tuple(key, seed, cells[3], cycle);
    auto it = where.find(id);
    if (it == where.end()) {
      metrics::CycleMetrics cm;
      cm.subject_id = cells[3];
      cm.mode = *mode;
      cm.cycle_index = cycle;
      cm.per_muscle.resize(muscles.size());
      for (auto& set : cm.per_muscle)
        for (auto& v : set) v.degenerate = true;
      group.push_back(std::move(cm));
      it = where.emplace(id, group.size() - 1).first;
    }
    auto& set = group[it->second].per_muscle[muscle];
    for (std::size_t m = 0; m < metrics::kMetricCount; ++m) {
      const auto& c = cells[7 + m];
      set[m] = c.empty() ? metrics::MetricValue{0.0, true} : metrics::MetricValue{parse_double(c, ln), false};
    }
  }
  if (out.groups.empty()) throw DataError("sweep_cycles.csv has no rows");
  return out;
}

// Per-subject values averaged over seeds, then mean and sd across subjects.
using SubjectValues = std::map<std::string, std::array<std::pair<double, std::size_t>, metrics::kMetricCount>>;

void add_subject(SubjectValues& acc, const std::string& subject, const std::array<double, metrics::kMetricCount>& v) {
  auto& slot = acc[subject];
  for (std::size_t m = 0; m < metrics::kMetricCount; ++m)
    if (!std::isnan(v[m])) {
      slot[m].first += v[m];
      ++slot[m].second;
    }
}

metrics::SummarySet across_subjects(const SubjectValues& acc) {
  metrics::SummarySet out{};
  for (std::size_t m = 0; m < metrics::kMetricCount; ++m) {
    std::vector<double> values;
    for (const auto& [_, slot] : acc)
      values.push_back(slot[m].second ? slot[m].first / static_cast<double>(slot[m].second)
                                      : std::numeric_limits<double>::quiet_NaN());
    out[m] = metrics::summarize(values);
  }
  return out;
}

ordered_json summary_json(const metrics::SummarySet& s) {
  ordered_json j;
  for (auto m : metrics::kAllMetrics) {
    const auto& v = s[static_cast<std::size_t>(m)];
    ordered_json e;
    e["mean"] = std::isnan(v.mean) ? ordered_json() : ordered_json(v.mean);
    e["sd"] = std::isnan(v.sd) ? ordered_json() : ordered_json(v.sd);
    e["n"] = v.n;
    j[std::string(metrics::metric_name(m))] = e;
  }
  return j;
}

std::string tsv_header(const std::string& lead) {
  std::string h = lead;
  for (auto m : metrics::kAllMetrics) {
    const std::string n(metrics::metric_name(m));
    h += '\t' + n + "_mean\t" + n + "_sd";
  }
  return h + "\tn_subjects\n";
}

std::string tsv_values(const metrics::SummarySet& s) {
  std::string out;
  for (const auto& v : s) out += '\t' + number(v.mean) + '\t' + number(v.sd);
  return out + '\t' + std::to_string(s[0].n) + '\n';
}

}  // namespace

void cmd_report(const fs::path& run_dir) {
  const fs::path cycles_path = run_dir / "sweep_cycles.csv";
  const fs::path config_path = run_dir / "sweep_config.json";
  std::vector<std::string> missing;
  for (const auto& p : {config_path, cycles_path})
    if (!fs::exists(p)) missing.push_back(p.string());
  if (!missing.empty()) {
    std::string msg = "cannot build a report from " + run_dir.string() + "; missing:";
    for (const auto& m : missing) msg += "\n  - " + m;
    msg += "\n(run `imu2emg train` then `imu2emg sweep` with --out " + run_dir.string() + ")";
    throw DataError(msg);
  }
  const auto parsed = parse_sweep_cycles(read_file(cycles_path));
  const auto& muscles = data::muscle_names();

  ordered_json report;
  report["schema_version"] = metrics::kReportSchemaVersion;
  report["source"] = "sweep_cycles.csv";
  report["aggregation"] =
      "cycle -> subject/muscle/mode mean -> mean over modes -> mean over muscles; per subject averaged over seeds; "
      "mean and sample sd across subjects";
  ordered_json by_ratio = ordered_json::array();
  std::string curve = tsv_header("mode\tratio");
  std::string curve_overall = tsv_header("ratio");
  std::string bars = tsv_header("ratio\tmuscle");
  std::map<data::Mode, std::string> curve_rows;

  for (const auto& [key, seeds] : parsed.groups) {
    const double ratio = parsed.ratios.at(key);
    SubjectValues overall;
    std::vector<SubjectValues> per_muscle(muscles.size());
    std::map<data::Mode, SubjectValues> per_mode;
    std::size_t cycles = 0;
    std::array<std::size_t, metrics::kMetricCount> excluded{};
    for (const auto& [seed, cms] : seeds) {
      const auto rep = metrics::aggregate(cms);
      cycles += rep.cycles;
      for (std::size_t m = 0; m < metrics::kMetricCount; ++m) excluded[m] += rep.excluded[m];
      for (const auto& s : rep.subjects) {
        add_subject(overall, s.subject_id, s.mean);
        for (std::size_t k = 0; k < s.per_muscle.size(); ++k) add_subject(per_muscle[k], s.subject_id, s.per_muscle[k]);
      }
      std::set<data::Mode> modes;
      for (const auto& c : cms) modes.insert(c.mode);
      for (auto mode : modes) {
        const auto mrep = metrics::aggregate(cms, mode);
        for (const auto& s : mrep.subjects) add_subject(per_mode[mode], s.subject_id, s.mean);
      }
    }
    ordered_json entry;
    entry["ratio"] = ratio;
    entry["seeds"] = seeds.size();
    entry["cycles"] = cycles;
    ordered_json ex;
    for (auto m : metrics::kAllMetrics) ex[std::string(metrics::metric_name(m))] = excluded[static_cast<std::size_t>(m)];
    entry["excluded_degenerate"] = ex;
    const auto overall_set = across_subjects(overall);
    entry["overall"] = summary_json(overall_set);
    curve_overall += number(ratio) + tsv_values(overall_set);
    ordered_json pm;
    for (std::size_t k = 0; k < muscles.size(); ++k) {
      const auto s = across_subjects(per_muscle[k]);
      pm[muscles[k]] = summary_json(s);
      bars += number(ratio) + '\t' + muscles[k] + tsv_values(s);
    }
    entry["per_muscle"] = pm;
    ordered_json pmode;
    for (const auto& [mode, acc] : per_mode) {
      const auto s = across_subjects(acc);
      pmode[std::string(data::mode_name(mode))] = summary_json(s);
      curve_rows[mode] += std::string(data::mode_name(mode)) + '\t' + number(ratio) + tsv_values(s);
    }
    entry["per_mode"] = pmode;
    by_ratio.push_back(entry);
  }
  report["ratios"] = by_ratio;
  // Mode-major so each mode's curve is contiguous.
  for (const auto& [_, rows] : curve_rows) curve += rows;

  const fs::path out = run_dir / "report";
  write_file_atomic(out / "report.json", report.dump(2) + "\n");
  write_file_atomic(out / "ratio_curve.tsv", curve);
  write_file_atomic(out / "ratio_curve_overall.tsv", curve_overall);
  write_file_atomic(out / "muscle_bars.tsv", bars);
}

}  // namespace imu2emg::cli
