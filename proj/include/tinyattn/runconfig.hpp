#pragma once

#include <string>
#include <vector>

#include "tinyattn/backbone.hpp"
#include "tinyattn/trainer.hpp"

namespace tinyattn {

enum class Command {
  pretrain,
  adapt,
  finetune,
  merge,
  eval,
  count_params,
  export_task,
};

Command command_from_string(const std::string& s);
std::string to_string(Command c);

struct TaskSettings {
  std::string name = "majority";
  uint64_t seed = 7;
  int64_t vocab = 0;    // 0 inherits the backbone vocabulary
  int64_t seq_len = 0;  // 0 inherits the backbone max_seq
};

struct AdapterSettings {
  int64_t heads = 1;
  int64_t dim = 1;
  Placement placement = Placement::sequential;
  bool with_biases = true;
  double expand_eps = 1e-3;   // perturbation when widening from one head
  double init_scale = 0.01;   // output-projection init bound
};

struct PathSettings {
  std::string checkpoint_in;
  std::string checkpoint_out;
  std::string metrics_out;
};

struct RunConfig {
  Command command = Command::count_params;
  TaskSettings task;
  BackboneConfig backbone;
  AdapterSettings adapter;
  TrainerConfig trainer;
  PathSettings paths;
  int64_t export_count = 1000;
  bool verbose = true;
};

// Reads the JSON config file, applies "key.path=value" overrides (flags win
// over the file), then lets TINYATTN_SEED override the trainer seed.
// Unknown keys and malformed values raise ConfigError.
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides);

// Same, starting from built-in defaults without a file.
RunConfig default_run_config(const std::vector<std::string>& overrides);

}  // namespace tinyattn
