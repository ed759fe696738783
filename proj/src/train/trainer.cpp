#include "imu2emg/train/trainer.hpp"

#include <chrono>
#include <charconv>
#include <cmath>
#include <numeric>

#include "imu2emg/core/errors.hpp"
#include "imu2emg/core/ops.hpp"

namespace imu2emg::train {

OptimizerConfig TrainConfig::optimizer_config() const {
  return {optimizer, lr, weight_decay, beta1, beta2, eps};
}

std::vector<std::string> TrainConfig::problems() const {
  std::vector<std::string> out;
  if (!(lr > 0.0)) out.push_back("train.lr must be positive");
  if (!(weight_decay >= 0.0)) out.push_back("train.weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) out.push_back("train.beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) out.push_back("train.beta2 must lie in [0, 1)");
  if (!(eps > 0.0)) out.push_back("train.eps must be positive");
  if (batch_size == 0) out.push_back("train.batch_size must be positive");
  if (max_epochs == 0) out.push_back("train.max_epochs must be positive");
  if (patience == 0) out.push_back("train.patience must be >= 1");
  return out;
}

void TrainConfig::validate() const {
  const auto p = problems();
  if (p.empty()) return;
  std::string msg = "invalid train config:";
  for (const auto& s : p) msg += "\n  - " + s;
  throw ConfigError(msg);
}

namespace {

void append_number(std::string& out, double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, end);
}

void fnv1a(std::uint64_t& h, const std::string& s) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  h ^= 0xff;
  h *= 0x100000001b3ULL;
}

template <typename T>
model::ModelParams<T> snapshot(const model::ModelParams<T>& p) {
  auto copy = p;
  copy.for_each([](const std::string&, Tensor<T>& t) { t.clear_grad(); });
  return copy;
}

}  // namespace

std::string TrainLog::to_csv(bool with_seconds) const {
  std::string out = "epoch,train_loss,val_loss,seconds\n";
  for (const auto& e : epochs) {
    out += std::to_string(e.epoch);
    out += ',';
    append_number(out, e.train_loss);
    out += ',';
    if (!std::isnan(e.val_loss)) append_number(out, e.val_loss);
    out += ',';
    if (with_seconds) append_number(out, e.seconds);
    out += '\n';
  }
  return out;
}

bool EarlyStopping::update(std::size_t epoch, double loss) {
  if (loss < best_) {
    best_ = loss;
    best_epoch_ = epoch;
    return true;
  }
  return false;
}

template <typename T>
Batch<T> make_batch(const std::vector<const data::MovementSegment*>& segments) {
  if (segments.empty()) throw ContractError("empty batch");
  const auto& first = *segments.front();
  const std::size_t L = first.inputs.rows, ci = first.inputs.cols, co = first.targets.cols;
  Batch<T> b{Tensor<T>({segments.size(), L, ci}), Tensor<T>({segments.size(), L, co})};
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const auto& seg = *segments[s];
    if (seg.inputs.rows != L || seg.inputs.cols != ci || seg.targets.rows != L || seg.targets.cols != co)
      throw DimensionError("segments in one batch must share a shape");
    for (std::size_t i = 0; i < L * ci; ++i) b.inputs[s * L * ci + i] = static_cast<T>(seg.inputs.data[i]);
    for (std::size_t i = 0; i < L * co; ++i) b.targets[s * L * co + i] = static_cast<T>(seg.targets.data[i]);
  }
  return b;
}

template <typename T>
std::vector<Matrix> predict_segments(model::ModelParams<T>& params,
                                     const std::vector<const data::MovementSegment*>& segments,
                                     std::size_t batch_size) {
  std::vector<Matrix> out;
  for (std::size_t start = 0; start < segments.size(); start += batch_size) {
    const std::size_t end = std::min(segments.size(), start + batch_size);
    std::vector<const data::MovementSegment*> chunk(segments.begin() + static_cast<std::ptrdiff_t>(start),
                                                    segments.begin() + static_cast<std::ptrdiff_t>(end));
    const auto b = make_batch<T>(chunk);
    const auto y = model::predict(params, b.inputs);
    const std::size_t L = y.dim(1), co = y.dim(2);
    for (std::size_t s = 0; s < chunk.size(); ++s) {
      Matrix m(L, co);
      for (std::size_t i = 0; i < L * co; ++i) m.data[i] = static_cast<double>(y[s * L * co + i]);
      out.push_back(std::move(m));
    }
  }
  return out;
}

template <typename T>
double evaluate_loss(model::ModelParams<T>& params, const std::vector<const data::MovementSegment*>& segments,
                     std::size_t batch_size) {
  if (segments.empty()) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t start = 0; start < segments.size(); start += batch_size) {
    const std::size_t end = std::min(segments.size(), start + batch_size);
    std::vector<const data::MovementSegment*> chunk(segments.begin() + static_cast<std::ptrdiff_t>(start),
                                                    segments.begin() + static_cast<std::ptrdiff_t>(end));
    const auto b = make_batch<T>(chunk);
    const auto y = model::predict(params, b.inputs);
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double d = static_cast<double>(y[i]) - static_cast<double>(b.targets[i]);
      sum += d * d;
    }
    count += y.size();
  }
  return sum / static_cast<double>(count);
}

template <typename T>
FitResult<T> fit_from(model::ModelParams<T> params, const data::LosoFold& fold, const data::TrainValSplit& split,
                      const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (split.train.empty()) throw ConfigError("training set is empty");
  data::assert_no_leakage(fold, split.train);
  data::assert_no_leakage(fold, split.val);

  const RngState base(cfg.seed);
  RngState shuffle_rng = base.fork(2);
  RngState dropout_rng = base.fork(3);

  params.set_requires_grad(true);
  auto refs = param_refs(params);
  Adam<T> opt(cfg.optimizer_config());
  EarlyStopping stopper(cfg.patience);
  FitResult<T> result{snapshot(params), {}};

  std::vector<std::size_t> order(split.train.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<const data::MovementSegment*> batch;
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(split.train[order[i]]);
        fnv1a(result.log.order_digest, batch.back()->id());
      }
      data::assert_no_leakage(fold, batch);
      const auto b = make_batch<T>(batch);

      params.zero_grad();
      Tape<T> tape;
      auto y = model::forward(tape, params, tape.constant(b.inputs), true, dropout_rng);
      auto loss = ops::mse_loss(y, b.targets);
      const double lv = static_cast<double>(loss.value().item());
      if (!std::isfinite(lv)) throw Error("training loss became non-finite at epoch " + std::to_string(epoch));
      tape.backward(loss);
      opt.step(refs);
      ++result.log.steps;
      loss_sum += lv * static_cast<double>(b.targets.size());
      loss_count += b.targets.size();
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(loss_count);
    rec.val_loss = evaluate_loss(params, split.val, cfg.batch_size);
    const double monitored = split.val.empty() ? rec.train_loss : rec.val_loss;
    if (stopper.update(epoch, monitored)) result.params = snapshot(params);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (stopper.should_stop(epoch) && epoch < cfg.max_epochs) {
      result.log.stopped_early = true;
      break;
    }
  }
  result.log.best_epoch = stopper.best_epoch();
  result.log.best_loss = stopper.best_loss();
  return result;
}

template <typename T>
FitResult<T> fit(const data::LosoFold& fold, const data::TrainValSplit& split, const model::ModelConfig& model_cfg,
                 const TrainConfig& cfg, const EpochCallback& on_epoch) {
  model_cfg.validate();
  RngState init_rng = RngState(cfg.seed).fork(1);
  return fit_from(model::init_params<T>(model_cfg, init_rng), fold, split, cfg, on_epoch);
}

#define IMU2EMG_INSTANTIATE(T)                                                                                     \
  template Batch<T> make_batch(const std::vector<const data::MovementSegment*>&);                                  \
  template double evaluate_loss(model::ModelParams<T>&, const std::vector<const data::MovementSegment*>&,          \
                                std::size_t);                                                                      \
  template std::vector<Matrix> predict_segments(model::ModelParams<T>&,                                            \
                                                const std::vector<const data::MovementSegment*>&, std::size_t);    \
  template FitResult<T> fit(const data::LosoFold&, const data::TrainValSplit&, const model::ModelConfig&,          \
                            const TrainConfig&, const EpochCallback&);                                             \
  template FitResult<T> fit_from(model::ModelParams<T>, const data::LosoFold&, const data::TrainValSplit&,         \
                                 const TrainConfig&, const EpochCallback&);

IMU2EMG_INSTANTIATE(float)
IMU2EMG_INSTANTIATE(double)
#undef IMU2EMG_INSTANTIATE

}  // namespace imu2emg::train
