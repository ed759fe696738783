#include "imu2emg/adapt/adapt.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <set>

#include "imu2emg/core/errors.hpp"
#include "imu2emg/core/ops.hpp"
#include "imu2emg/train/trainer.hpp"

namespace imu2emg::adapt {

std::vector<std::string> AdaptConfig::problems() const {
  std::vector<std::string> out;
  if (!(lr >= 0.0)) out.push_back("adapt.lr must be >= 0");
  if (steps == 0) out.push_back("adapt.steps must be >= 1");
  if (!(clip_threshold > 0.0)) out.push_back("adapt.clip_threshold must be positive");
  if (!(weight_decay >= 0.0)) out.push_back("adapt.weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) out.push_back("adapt.beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) out.push_back("adapt.beta2 must lie in [0, 1)");
  if (!(eps > 0.0)) out.push_back("adapt.eps must be positive");
  if (batch_size == 0) out.push_back("adapt.batch_size must be positive");
  return out;
}

void AdaptConfig::validate() const {
  const auto p = problems();
  if (p.empty()) return;
  std::string msg = "invalid adapt config:";
  for (const auto& s : p) msg += "\n  - " + s;
  throw ConfigError(msg);
}

template <typename T>
AdaptResult<T> few_shot_adapt(const model::ModelParams<T>& theta0,
                              const std::vector<const data::MovementSegment*>& calibration, const AdaptConfig& cfg) {
  cfg.validate();
  if (calibration.empty()) throw DataError("few-shot adaptation needs at least one calibration cycle");

  AdaptResult<T> r;
  r.params = theta0;
  auto& p = r.params;
  p.set_requires_grad(true);
  p.zero_grad();
  auto refs = train::param_refs(p);
  train::Adam<T> opt({cfg.optimizer, cfg.lr, cfg.weight_decay, cfg.beta1, cfg.beta2, cfg.eps});

  const RngState base(cfg.seed);
  RngState dropout_rng = base.fork(1);
  RngState shuffle_rng = base.fork(2);

  r.pre_loss = train::evaluate_loss(p, calibration);
  const bool full_batch = calibration.size() <= cfg.batch_size;
  std::vector<std::size_t> order(calibration.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    std::vector<const data::MovementSegment*> batch;
    if (full_batch) {
      batch = calibration;
    } else {
      for (std::size_t i = 0; i < cfg.batch_size; ++i) {
        if (cursor == order.size()) {
          shuffle_rng.shuffle(order);
          cursor = 0;
        }
        batch.push_back(calibration[order[cursor++]]);
      }
    }
    const auto b = train::make_batch<T>(batch);
    p.zero_grad();
    Tape<T> tape;
    auto loss = ops::mse_loss(model::forward(tape, p, tape.constant(b.inputs), true, dropout_rng), b.targets);
    const double lv = static_cast<double>(loss.value().item());
    if (!std::isfinite(lv)) {
      AdaptResult<T> failed;
      failed.params = theta0;
      failed.pre_loss = failed.post_loss = r.pre_loss;
      failed.trace = std::move(r.trace);
      failed.clip_norms = std::move(r.clip_norms);
      failed.aborted = true;
      failed.diagnostic = "non-finite calibration loss at step " + std::to_string(step + 1) + "; returning theta0";
      return failed;
    }
    r.trace.push_back(lv);
    tape.backward(loss);
    r.clip_norms.push_back(train::grad_clip_norm<T>(refs, cfg.clip_threshold).post_norm);
    opt.step(refs);
  }
  p.zero_grad();
  p.for_each([](const std::string&, Tensor<T>& t) { t.clear_grad(); });
  r.post_loss = train::evaluate_loss(p, calibration);
  return r;
}

void assert_disjoint(const std::vector<const data::MovementSegment*>& calibration,
                     const std::vector<const data::MovementSegment*>& evaluation) {
  std::set<std::string> ids;
  for (const auto* s : calibration) ids.insert(s->id());
  for (const auto* s : evaluation)
    if (ids.count(s->id())) throw ContractError("cycle " + s->id() + " is used for both calibration and evaluation");
}

namespace {

double mse_of(const std::vector<const data::MovementSegment*>& segs, const std::vector<Matrix>& preds) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < segs.size(); ++i)
    for (std::size_t k = 0; k < preds[i].data.size(); ++k) {
      const double d = preds[i].data[k] - segs[i]->targets.data[k];
      sum += d * d;
      ++n;
    }
  return sum / static_cast<double>(n);
}

std::uint64_t ratio_key(double ratio) { return static_cast<std::uint64_t>(std::llround(ratio * 1e6)); }

void append_number(std::string& out, double v) {
  if (std::isnan(v)) return;
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, end);
}

}  // namespace

template <typename T>
std::vector<SweepRow> calibration_sweep(const model::ModelParams<T>& theta0, const data::SubjectDataset& test,
                                        const SweepConfig& cfg) {
  cfg.adapt.validate();
  if (test.segments.empty()) throw DataError("test subject " + test.subject_id + " has no cycles");
  for (double r : cfg.ratios)
    if (r != 0.0 && !data::is_allowed_ratio(r))
      throw ConfigError("calibration ratio " + std::to_string(r) + " not in {0, 0.005, 0.01, 0.02, 0.05, 0.10}");
  if (cfg.seeds.empty()) throw ConfigError("sweep needs at least one seed");

  auto base = theta0;
  base.set_requires_grad(false);
  const auto all = data::pointers(test.segments);
  const auto zero_preds = train::predict_segments(base, all, cfg.eval_batch_size);

  std::vector<SweepRow> rows;
  for (std::uint64_t seed : cfg.seeds) {
    SweepRow z;
    z.seed = seed;
    z.n_eval = all.size();
    z.zero_shot_mse = z.mse = mse_of(all, zero_preds);
    z.cycles = metrics::evaluate(all, zero_preds);
    z.report = metrics::aggregate(z.cycles);
    rows.push_back(std::move(z));

    for (double ratio : cfg.ratios) {
      if (ratio == 0.0) continue;
      RngState sel_rng = RngState(seed).fork(ratio_key(ratio));
      const auto sel = data::select_calibration(test.segments, ratio, cfg.policy, sel_rng);
      std::vector<const data::MovementSegment*> calib, eval;
      std::vector<Matrix> zero_eval;
      for (auto i : sel.selected) calib.push_back(all[i]);
      for (auto i : sel.remaining) {
        eval.push_back(all[i]);
        zero_eval.push_back(zero_preds[i]);
      }
      assert_disjoint(calib, eval);
      if (eval.empty()) throw DataError("ratio " + std::to_string(ratio) + " leaves no evaluation cycles");

      AdaptConfig ac = cfg.adapt;
      ac.seed = splitmix64(seed ^ splitmix64(ratio_key(ratio)));
      auto res = few_shot_adapt(theta0, calib, ac);
      res.params.set_requires_grad(false);
      const auto preds = train::predict_segments(res.params, eval, cfg.eval_batch_size);

      SweepRow row;
      row.ratio = ratio;
      row.seed = seed;
      row.n_calibration = calib.size();
      row.n_eval = eval.size();
      row.zero_shot_mse = mse_of(eval, zero_eval);
      row.mse = mse_of(eval, preds);
      row.calib_pre_loss = res.pre_loss;
      row.calib_post_loss = res.post_loss;
      row.aborted = res.aborted;
      row.cycles = metrics::evaluate(eval, preds);
      row.report = metrics::aggregate(row.cycles);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string sweep_csv_header() {
  std::string h = "fold,ratio,seed,n_calibration,n_eval,zero_shot_mse,mse,calib_pre_loss,calib_post_loss,aborted";
  for (auto m : metrics::kAllMetrics) {
    const std::string name(metrics::metric_name(m));
    h += "," + name + "_mean," + name + "_sd";
  }
  return h;
}

std::string sweep_rows_to_csv(const std::string& fold, const std::vector<SweepRow>& rows, bool with_header) {
  std::string out;
  if (with_header) out += sweep_csv_header() + "\n";
  for (const auto& r : rows) {
    out += fold + ',';
    append_number(out, r.ratio);
    out += ',' + std::to_string(r.seed) + ',' + std::to_string(r.n_calibration) + ',' + std::to_string(r.n_eval) + ',';
    append_number(out, r.zero_shot_mse);
    out += ',';
    append_number(out, r.mse);
    out += ',';
    if (r.ratio != 0.0) append_number(out, r.calib_pre_loss);
    out += ',';
    if (r.ratio != 0.0) append_number(out, r.calib_post_loss);
    out += r.aborted ? ",1" : ",0";
    for (const auto& s : r.report.overall) {
      out += ',';
      append_number(out, s.mean);
      out += ',';
      append_number(out, s.sd);
    }
    out += '\n';
  }
  return out;
}

std::string sweep_cycles_to_csv(const std::string& fold, const std::vector<SweepRow>& rows, bool with_header,
                                const std::vector<std::string>& muscle_names) {
  std::string out;
  bool header = with_header;
  for (const auto& r : rows) {
    const std::string body = metrics::cycles_to_csv(r.cycles, muscle_names);
    const auto nl = body.find('\n');
    if (header) {
      out += "fold,ratio,seed," + body.substr(0, nl + 1);
      header = false;
    }
    std::string prefix = fold + ',';
    append_number(prefix, r.ratio);
    prefix += ',' + std::to_string(r.seed) + ',';
    std::size_t pos = nl + 1;
    while (pos < body.size()) {
      const auto end = body.find('\n', pos);
      out += prefix;
      out.append(body, pos, end - pos + 1);
      pos = end + 1;
    }
  }
  return out;
}

#define IMU2EMG_INSTANTIATE(T)                                                                                \
  template AdaptResult<T> few_shot_adapt(const model::ModelParams<T>&,                                        \
                                         const std::vector<const data::MovementSegment*>&, const AdaptConfig&); \
  template std::vector<SweepRow> calibration_sweep(const model::ModelParams<T>&, const data::SubjectDataset&, \
                                                   const SweepConfig&);

IMU2EMG_INSTANTIATE(float)
IMU2EMG_INSTANTIATE(double)
#undef IMU2EMG_INSTANTIATE

}  // namespace imu2emg::adapt
