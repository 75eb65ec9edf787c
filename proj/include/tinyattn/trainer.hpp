#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tinyattn/model.hpp"
#include "tinyattn/tasks.hpp"

namespace tinyattn {

// Training diverged (NaN loss or gradient). Maps to exit code 2 in the CLI.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ScheduleKind { linear, cosine, constant };

ScheduleKind schedule_from_string(const std::string& s);
std::string to_string(ScheduleKind k);

struct LrSchedule {
  ScheduleKind kind = ScheduleKind::linear;
  int64_t warmup_steps = 0;
  int64_t total_steps = 1;
  double base_lr = 1e-3;
};

// Warmup ramps linearly from 0 to base_lr over warmup_steps, then the decay
// kind takes over; steps past total_steps clamp to the final value.
double lr_at(const LrSchedule& schedule, int64_t step);

struct AdamWState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  int64_t step = 0;
  std::vector<std::vector<double>> m;  // one slot per parameter, lazily sized
  std::vector<std::vector<double>> v;

  void reset(size_t num_params);
};

// One decoupled-weight-decay Adam update over the trainable parameters.
// Gradients are read from each tensor's grad slot; non-trainable parameters
// are untouched. Throws NumericError naming the parameter on a NaN gradient.
void adamw_step(AdamWState& state, std::vector<NamedParam>& params, double lr);

enum class TrainMode { adapter_tune, full_finetune };

TrainMode mode_from_string(const std::string& s);
std::string to_string(TrainMode m);

struct TrainerConfig {
  int64_t epochs = 20;
  int64_t batch_size = 16;
  double lr = 1e-3;
  double weight_decay = 0.01;
  ScheduleKind schedule = ScheduleKind::linear;
  double warmup_frac = 0.1;
  uint64_t seed = 1;
  TrainMode mode = TrainMode::adapter_tune;
  int64_t train_examples = 2048;
  int64_t val_examples = 512;
  double clip_norm = 0.0;  // 0 disables clipping
};

struct EvalRecord {
  int64_t step = 0;
  int64_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainReport {
  std::vector<EvalRecord> records;
  double best_val_accuracy = 0.0;
  int64_t best_step = 0;
  double final_train_loss = 0.0;
  double wall_clock_sec = 0.0;
  int64_t trainable_params = 0;
  int64_t total_params = 0;
};

// Optimizes the model's trainable set on the task with AdamW and the
// configured schedule; evaluates on the held-out pool twice per epoch and
// reports the best validation accuracy. Deterministic given the seed.
TrainReport train(Model& model, const TaskSpec& task, const TrainerConfig& config);

}  // namespace tinyattn
