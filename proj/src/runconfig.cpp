#include "tinyattn/runconfig.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include <json.hpp>

#include "tinyattn/errors.hpp"

namespace tinyattn {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError("unknown config key '" + where + it.key() + "'");
}

template <typename T>
void read_to(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type");
  }
}

RunConfig from_json(const json& j) {
  RunConfig cfg;
  check_keys(j, "", {"command", "task", "backbone", "adapter", "trainer", "paths", "export",
                     "verbose"});
  if (j.contains("command")) cfg.command = command_from_string(j.at("command").get<std::string>());
  read_to(j, "verbose", cfg.verbose);
  if (j.contains("task")) {
    const json& t = j.at("task");
    check_keys(t, "task.", {"name", "seed", "vocab", "seq_len"});
    read_to(t, "name", cfg.task.name);
    read_to(t, "seed", cfg.task.seed);
    read_to(t, "vocab", cfg.task.vocab);
    read_to(t, "seq_len", cfg.task.seq_len);
  }
  if (j.contains("backbone")) {
    const json& b = j.at("backbone");
    check_keys(b, "backbone.", {"layers", "hidden", "attn_heads", "ffn", "vocab", "max_seq"});
    read_to(b, "layers", cfg.backbone.layers);
    read_to(b, "hidden", cfg.backbone.hidden);
    read_to(b, "attn_heads", cfg.backbone.attn_heads);
    read_to(b, "ffn", cfg.backbone.ffn);
    read_to(b, "vocab", cfg.backbone.vocab);
    read_to(b, "max_seq", cfg.backbone.max_seq);
  }
  if (j.contains("adapter")) {
    const json& a = j.at("adapter");
    check_keys(a, "adapter.",
               {"heads", "dim", "placement", "with_biases", "expand_eps", "init_scale"});
    read_to(a, "heads", cfg.adapter.heads);
    read_to(a, "dim", cfg.adapter.dim);
    if (a.contains("placement"))
      cfg.adapter.placement = placement_from_string(a.at("placement").get<std::string>());
    read_to(a, "with_biases", cfg.adapter.with_biases);
    read_to(a, "expand_eps", cfg.adapter.expand_eps);
    read_to(a, "init_scale", cfg.adapter.init_scale);
  }
  if (j.contains("trainer")) {
    const json& t = j.at("trainer");
    check_keys(t, "trainer.",
               {"epochs", "batch_size", "lr", "weight_decay", "schedule", "warmup_frac", "seed",
                "mode", "train_examples", "val_examples", "clip_norm"});
    read_to(t, "epochs", cfg.trainer.epochs);
    read_to(t, "batch_size", cfg.trainer.batch_size);
    read_to(t, "lr", cfg.trainer.lr);
    read_to(t, "weight_decay", cfg.trainer.weight_decay);
    if (t.contains("schedule"))
      cfg.trainer.schedule = schedule_from_string(t.at("schedule").get<std::string>());
    read_to(t, "warmup_frac", cfg.trainer.warmup_frac);
    read_to(t, "seed", cfg.trainer.seed);
    if (t.contains("mode")) cfg.trainer.mode = mode_from_string(t.at("mode").get<std::string>());
    read_to(t, "train_examples", cfg.trainer.train_examples);
    read_to(t, "val_examples", cfg.trainer.val_examples);
    read_to(t, "clip_norm", cfg.trainer.clip_norm);
  }
  if (j.contains("paths")) {
    const json& p = j.at("paths");
    check_keys(p, "paths.", {"checkpoint_in", "checkpoint_out", "metrics_out"});
    read_to(p, "checkpoint_in", cfg.paths.checkpoint_in);
    read_to(p, "checkpoint_out", cfg.paths.checkpoint_out);
    read_to(p, "metrics_out", cfg.paths.metrics_out);
  }
  if (j.contains("export")) {
    const json& e = j.at("export");
    check_keys(e, "export.", {"count"});
    read_to(e, "count", cfg.export_count);
  }
  return cfg;
}

json parse_override_value(const std::string& raw) {
  json v = json::parse(raw, nullptr, false);
  if (v.is_discarded()) return json(raw);  // bare strings stay strings
  return v;
}

void apply_override(json& root, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + kv + "' is not of the form key.path=value");
  std::string path = kv.substr(0, eq);
  json* node = &root;
  size_t pos = 0;
  while (true) {
    const size_t dot = path.find('.', pos);
    const std::string key = path.substr(pos, dot == std::string::npos ? dot : dot - pos);
    if (key.empty()) throw ConfigError("override '" + kv + "' has an empty path segment");
    if (dot == std::string::npos) {
      (*node)[key] = parse_override_value(kv.substr(eq + 1));
      break;
    }
    node = &(*node)[key];
    pos = dot + 1;
  }
}

void validate(RunConfig& cfg) {
  cfg.backbone.validate();
  if (cfg.trainer.warmup_frac < 0.0 || cfg.trainer.warmup_frac > 1.0)
    throw ConfigError("trainer.warmup_frac must lie in [0, 1]");
  if (cfg.adapter.heads < 1 || cfg.adapter.dim < 1)
    throw ConfigError("adapter.heads and adapter.dim must be >= 1");
  if (cfg.trainer.train_examples < 1 || cfg.trainer.val_examples < 1)
    throw ConfigError("trainer.{train,val}_examples must be >= 1");
}

RunConfig finalize(json merged) {
  if (const char* env = std::getenv("TINYATTN_SEED")) {
    try {
      merged["trainer"]["seed"] = static_cast<uint64_t>(std::stoull(env));
    } catch (const std::exception&) {
      throw ConfigError("TINYATTN_SEED is not an unsigned integer");
    }
  }
  RunConfig cfg;
  try {
    cfg = from_json(merged);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config: ") + e.what());
  }
  validate(cfg);
  return cfg;
}

}  // namespace

Command command_from_string(const std::string& s) {
  if (s == "pretrain") return Command::pretrain;
  if (s == "adapt") return Command::adapt;
  if (s == "finetune") return Command::finetune;
  if (s == "merge") return Command::merge;
  if (s == "eval") return Command::eval;
  if (s == "count-params") return Command::count_params;
  if (s == "export-task") return Command::export_task;
  throw ConfigError("unknown command '" + s + "'");
}

std::string to_string(Command c) {
  switch (c) {
    case Command::pretrain: return "pretrain";
    case Command::adapt: return "adapt";
    case Command::finetune: return "finetune";
    case Command::merge: return "merge";
    case Command::eval: return "eval";
    case Command::count_params: return "count-params";
    case Command::export_task: return "export-task";
  }
  return "?";
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config '" + path + "' must be a JSON object");
  for (const auto& kv : overrides) apply_override(j, kv);
  return finalize(std::move(j));
}

RunConfig default_run_config(const std::vector<std::string>& overrides) {
  json j = json::object();
  for (const auto& kv : overrides) apply_override(j, kv);
  return finalize(std::move(j));
}

}  // namespace tinyattn
