#include "tinyattn/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>

namespace tinyattn {

ScheduleKind schedule_from_string(const std::string& s) {
  if (s == "linear") return ScheduleKind::linear;
  if (s == "cosine") return ScheduleKind::cosine;
  if (s == "constant") return ScheduleKind::constant;
  throw std::invalid_argument("unknown schedule '" + s + "' (linear|cosine|constant)");
}

std::string to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::linear: return "linear";
    case ScheduleKind::cosine: return "cosine";
    case ScheduleKind::constant: return "constant";
  }
  return "linear";
}

TrainMode mode_from_string(const std::string& s) {
  if (s == "adapter_tune") return TrainMode::adapter_tune;
  if (s == "full_finetune") return TrainMode::full_finetune;
  throw std::invalid_argument("unknown mode '" + s + "' (adapter_tune|full_finetune)");
}

std::string to_string(TrainMode m) {
  return m == TrainMode::adapter_tune ? "adapter_tune" : "full_finetune";
}

double lr_at(const LrSchedule& schedule, int64_t step) {
  if (schedule.warmup_steps < 0 || schedule.warmup_steps > schedule.total_steps)
    throw std::invalid_argument("lr_at: warmup_steps outside [0, total_steps]");
  if (step < 0) throw std::invalid_argument("lr_at: negative step");
  if (step > schedule.total_steps) step = schedule.total_steps;
  if (step < schedule.warmup_steps)
    return schedule.base_lr * static_cast<double>(step) /
           static_cast<double>(schedule.warmup_steps);
  const int64_t decay_span = schedule.total_steps - schedule.warmup_steps;
  if (decay_span == 0) return schedule.base_lr;
  const double frac =
      static_cast<double>(step - schedule.warmup_steps) / static_cast<double>(decay_span);
  switch (schedule.kind) {
    case ScheduleKind::linear: return schedule.base_lr * (1.0 - frac);
    case ScheduleKind::cosine:
      return schedule.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
    case ScheduleKind::constant: return schedule.base_lr;
  }
  return schedule.base_lr;
}

void AdamWState::reset(size_t num_params) {
  step = 0;
  m.assign(num_params, {});
  v.assign(num_params, {});
}

void adamw_step(AdamWState& state, std::vector<NamedParam>& params, double lr) {
  if (state.m.size() != params.size()) state.reset(params.size());
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (size_t p = 0; p < params.size(); ++p) {
    Tensor& t = *params[p].tensor;
    if (!t.trainable) continue;
    if (!t.grad || t.grad->size() != t.values.size())
      throw std::invalid_argument("adamw_step: missing gradient for '" + params[p].name + "'");
    auto& m = state.m[p];
    auto& v = state.v[p];
    if (m.size() != t.values.size()) {
      m.assign(t.values.size(), 0.0);
      v.assign(t.values.size(), 0.0);
    }
    const auto& g = *t.grad;
    for (size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i]))
        throw NumericError("adamw_step: non-finite gradient in '" + params[p].name + "'");
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      t.values[i] -= lr * mhat / (std::sqrt(vhat) + state.eps) +
                     lr * state.weight_decay * t.values[i];
    }
  }
}

namespace {

double grad_l2_norm(const std::vector<NamedParam>& params) {
  double s = 0.0;
  for (const auto& p : params)
    if (p.tensor->trainable && p.tensor->grad)
      for (double g : *p.tensor->grad) s += g * g;
  return std::sqrt(s);
}

void clip_grads(std::vector<NamedParam>& params, double max_norm) {
  const double norm = grad_l2_norm(params);
  if (norm <= max_norm || norm == 0.0) return;
  const double scale = max_norm / norm;
  for (auto& p : params)
    if (p.tensor->trainable && p.tensor->grad)
      for (double& g : *p.tensor->grad) g *= scale;
}

}  // namespace

TrainReport train(Model& model, const TaskSpec& task, const TrainerConfig& config) {
  if (config.epochs < 1 || config.batch_size < 1)
    throw std::invalid_argument("train: epochs and batch_size must be >= 1");
  if (config.mode == TrainMode::adapter_tune && !is_frozen(model.backbone))
    throw std::invalid_argument("train: adapter_tune requires a frozen backbone");
  if (model.decoder.w.shape.empty() || model.decoder.w.shape[1] != task.classes)
    throw std::invalid_argument("train: decoder class count does not match the task");

  const auto t0 = std::chrono::steady_clock::now();

  ExamplePool train_pool = generate_pool(task, "train", config.train_examples);
  ExamplePool val_pool = generate_pool(task, "val", config.val_examples);
  Batch val_batch = val_pool.all();

  auto params = model.trainable_params();
  AdamWState opt;
  opt.weight_decay = config.weight_decay;
  opt.reset(params.size());

  const int64_t steps_per_epoch =
      (config.train_examples + config.batch_size - 1) / config.batch_size;
  LrSchedule schedule;
  schedule.kind = config.schedule;
  schedule.base_lr = config.lr;
  schedule.total_steps = config.epochs * steps_per_epoch;
  schedule.warmup_steps =
      static_cast<int64_t>(std::llround(config.warmup_frac * static_cast<double>(schedule.total_steps)));

  TrainReport report;
  report.trainable_params = model.trainable_param_count();
  report.total_params = model.total_param_count();

  Rng shuffle_rng(derive_seed(config.seed, "shuffle"));
  std::vector<int64_t> order(static_cast<size_t>(config.train_examples));
  std::iota(order.begin(), order.end(), 0);

  const int64_t mid_eval_step = (steps_per_epoch + 1) / 2;  // twice per epoch
  int64_t global_step = 0;
  double loss_accum = 0.0;
  int64_t loss_count = 0;

  auto evaluate = [&](int64_t epoch) {
    EvalRecord rec;
    rec.step = global_step;
    rec.epoch = epoch;
    rec.lr = lr_at(schedule, global_step);
    rec.train_loss = loss_count ? loss_accum / static_cast<double>(loss_count) : 0.0;
    rec.val_accuracy = accuracy(model, val_batch);
    report.records.push_back(rec);
    if (rec.val_accuracy > report.best_val_accuracy) {
      report.best_val_accuracy = rec.val_accuracy;
      report.best_step = global_step;
    }
    loss_accum = 0.0;
    loss_count = 0;
  };

  for (int64_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (int64_t s = 0; s < steps_per_epoch; ++s) {
      const int64_t lo = s * config.batch_size;
      const int64_t hi = std::min(lo + config.batch_size, config.train_examples);
      Batch batch = train_pool.batch_of(
          std::span<const int64_t>(order.data() + lo, static_cast<size_t>(hi - lo)));

      ModelForward f;
      model_forward(model, batch, f, true);
      const double loss = f.tape.val(f.loss).values[0];
      if (!std::isfinite(loss))
        throw NumericError("train: loss diverged at step " + std::to_string(global_step) +
                           " (task '" + task.name + "')");
      f.tape.backward(f.loss);
      f.tape.pull_grads();
      if (config.clip_norm > 0.0) clip_grads(params, config.clip_norm);

      const double lr = lr_at(schedule, global_step);
      adamw_step(opt, params, lr);
      ++global_step;
      loss_accum += loss;
      ++loss_count;

      if (s + 1 == mid_eval_step && mid_eval_step < steps_per_epoch) evaluate(epoch);
    }
    evaluate(epoch);
  }

  report.final_train_loss =
      report.records.empty() ? 0.0 : report.records.back().train_loss;
  report.wall_clock_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace tinyattn
