#include "tinyattn/run.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>

#include <json.hpp>

#include "tinyattn/adapter.hpp"
#include "tinyattn/checkpoint.hpp"
#include "tinyattn/errors.hpp"

namespace tinyattn {

namespace {

using nlohmann::json;

TaskSpec task_of(const RunConfig& cfg) {
  const int64_t vocab = cfg.task.vocab > 0 ? cfg.task.vocab : cfg.backbone.vocab;
  const int64_t seq_len = cfg.task.seq_len > 0 ? cfg.task.seq_len : cfg.backbone.max_seq;
  if (vocab > cfg.backbone.vocab)
    throw ConfigError("task.vocab exceeds the backbone vocabulary");
  if (seq_len > cfg.backbone.max_seq)
    throw ConfigError("task.seq_len exceeds the backbone max_seq");
  return make_task(cfg.task.name, vocab, seq_len, cfg.task.seed);
}

void require_path(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string("paths.") + what + " is required");
}

void require_input_checkpoint(const std::string& path) {
  require_path(path, "checkpoint_in");
  if (!std::filesystem::exists(path))
    throw ConfigError("input checkpoint '" + path + "' does not exist");
}

ParamBreakdown breakdown_for(Model& model) {
  ParamBreakdown b;
  b.backbone = model.backbone.param_count();
  for (const auto& a : model.adapters) b.adapter += a.param_count();
  if (!model.decoder.w.shape.empty())
    b.decoder = model.decoder.w.numel() + model.decoder.b.numel();
  b.trainable = model.trainable_param_count();
  b.total = model.total_param_count();
  b.adapter_fraction = static_cast<double>(b.adapter) / static_cast<double>(b.backbone);
  b.trainable_fraction = static_cast<double>(b.trainable) / static_cast<double>(b.total);
  return b;
}

void print_report(const RunConfig& cfg, const TaskSpec& task, const TrainReport& report,
                  std::ostream& out) {
  if (cfg.verbose) {
    for (const auto& r : report.records) {
      out << "[" << task.name << "] epoch " << r.epoch << " step " << r.step << " lr " << r.lr
          << " train_loss " << r.train_loss << " val_acc " << r.val_accuracy << "\n";
    }
  }
  out << "[" << task.name << "] best_val_acc " << report.best_val_accuracy << " at step "
      << report.best_step << " (" << report.trainable_params << "/" << report.total_params
      << " trainable params, " << report.wall_clock_sec << "s)\n";
}

void maybe_emit(const RunConfig& cfg, const TrainReport& report, Model& model) {
  if (cfg.paths.metrics_out.empty()) return;
  emit_metrics(report, breakdown_for(model), cfg.paths.metrics_out);
}

std::vector<TinyAttnAdapter> fresh_adapters(const RunConfig& cfg, uint64_t seed) {
  std::vector<TinyAttnAdapter> out;
  out.reserve(static_cast<size_t>(cfg.backbone.layers));
  for (int64_t l = 0; l < cfg.backbone.layers; ++l) {
    Rng rng(derive_seed(seed, "adapter.layer" + std::to_string(l)));
    TinyAttnAdapter single =
        TinyAttnAdapter::zeros(cfg.backbone.hidden, 1, cfg.adapter.dim, cfg.adapter.with_biases);
    init_single_head(single, rng, cfg.adapter.init_scale);
    if (cfg.adapter.heads == 1) {
      out.push_back(std::move(single));
    } else {
      out.push_back(init_from_single(single, cfg.adapter.heads, rng, cfg.adapter.expand_eps));
    }
  }
  return out;
}

int cmd_pretrain(const RunConfig& cfg, std::ostream& out) {
  require_path(cfg.paths.checkpoint_out, "checkpoint_out");
  TaskSpec task = task_of(cfg);
  Model model;
  {
    Rng rng(derive_seed(cfg.trainer.seed, "backbone"));
    model.backbone = Backbone::init(cfg.backbone, rng);
  }
  {
    Rng rng(derive_seed(cfg.trainer.seed, "decoder"));
    model.decoder = Decoder::init(cfg.backbone.hidden, task.classes, rng);
  }
  model.placement = Placement::none;
  TrainerConfig tc = cfg.trainer;
  tc.mode = TrainMode::full_finetune;
  TrainReport report = train(model, task, tc);
  save_checkpoint(cfg.paths.checkpoint_out, model, cfg.trainer.seed);
  print_report(cfg, task, report, out);
  maybe_emit(cfg, report, model);
  return 0;
}

int cmd_adapt(const RunConfig& cfg, std::ostream& out) {
  require_input_checkpoint(cfg.paths.checkpoint_in);
  if (cfg.adapter.placement == Placement::none)
    throw ConfigError("adapt: adapter.placement must be sequential or parallel");
  TaskSpec task = task_of(cfg);
  LoadedCheckpoint ck = load_checkpoint(cfg.paths.checkpoint_in);
  Model model = std::move(ck.model);
  if (model.backbone.config.hidden != cfg.backbone.hidden ||
      model.backbone.config.layers != cfg.backbone.layers)
    throw ConfigError("adapt: checkpoint geometry does not match backbone config");
  set_frozen(model.backbone);

  if (model.adapters.empty()) {
    model.adapters = fresh_adapters(cfg, cfg.trainer.seed);
  } else if (cfg.adapter.heads > model.adapters.front().num_heads() &&
             model.adapters.front().num_heads() == 1) {
    // Widen a trained single head into perturbed copies.
    std::vector<TinyAttnAdapter> widened;
    widened.reserve(model.adapters.size());
    for (size_t l = 0; l < model.adapters.size(); ++l) {
      Rng rng(derive_seed(cfg.trainer.seed, "expand.layer" + std::to_string(l)));
      widened.push_back(
          init_from_single(model.adapters[l], cfg.adapter.heads, rng, cfg.adapter.expand_eps));
    }
    model.adapters = std::move(widened);
  } else if (cfg.adapter.heads != model.adapters.front().num_heads()) {
    throw ConfigError("adapt: cannot go from " +
                      std::to_string(model.adapters.front().num_heads()) + " heads to " +
                      std::to_string(cfg.adapter.heads));
  }
  model.placement = cfg.adapter.placement;
  {
    Rng rng(derive_seed(cfg.trainer.seed, "decoder"));
    model.decoder = Decoder::init(cfg.backbone.hidden, task.classes, rng);
  }

  TrainerConfig tc = cfg.trainer;
  tc.mode = TrainMode::adapter_tune;
  TrainReport report = train(model, task, tc);
  if (!cfg.paths.checkpoint_out.empty())
    save_checkpoint(cfg.paths.checkpoint_out, model, cfg.trainer.seed);
  print_report(cfg, task, report, out);
  maybe_emit(cfg, report, model);
  return 0;
}

int cmd_finetune(const RunConfig& cfg, std::ostream& out) {
  require_input_checkpoint(cfg.paths.checkpoint_in);
  TaskSpec task = task_of(cfg);
  LoadedCheckpoint ck = load_checkpoint(cfg.paths.checkpoint_in);
  Model model = std::move(ck.model);
  set_trainable(model.backbone);
  model.adapters.clear();
  model.placement = Placement::none;
  {
    Rng rng(derive_seed(cfg.trainer.seed, "decoder"));
    model.decoder = Decoder::init(cfg.backbone.hidden, task.classes, rng);
  }
  TrainerConfig tc = cfg.trainer;
  tc.mode = TrainMode::full_finetune;
  TrainReport report = train(model, task, tc);
  if (!cfg.paths.checkpoint_out.empty())
    save_checkpoint(cfg.paths.checkpoint_out, model, cfg.trainer.seed);
  print_report(cfg, task, report, out);
  maybe_emit(cfg, report, model);
  return 0;
}

int cmd_merge(const RunConfig& cfg, std::ostream& out) {
  require_input_checkpoint(cfg.paths.checkpoint_in);
  require_path(cfg.paths.checkpoint_out, "checkpoint_out");
  LoadedCheckpoint ck = load_checkpoint(cfg.paths.checkpoint_in);
  if (ck.model.adapters.empty())
    throw ConfigError("merge: checkpoint '" + cfg.paths.checkpoint_in + "' has no adapters");
  for (auto& a : ck.model.adapters) a = merge_heads(a);
  save_checkpoint(cfg.paths.checkpoint_out, ck.model, ck.seed);
  out << "merged " << cfg.paths.checkpoint_in << " -> " << cfg.paths.checkpoint_out
      << " (merged_scale " << ck.model.adapters.front().merged_scale << ")\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg, std::ostream& out) {
  require_input_checkpoint(cfg.paths.checkpoint_in);
  TaskSpec task = task_of(cfg);
  LoadedCheckpoint ck = load_checkpoint(cfg.paths.checkpoint_in);
  if (ck.model.decoder.w.shape.empty())
    throw ConfigError("eval: checkpoint has no decoder");
  if (ck.model.decoder.w.shape[1] != task.classes)
    throw ConfigError("eval: checkpoint decoder classes do not match task '" + task.name + "'");
  ExamplePool val = generate_pool(task, "val", cfg.trainer.val_examples);
  const double acc = accuracy(ck.model, val.all());
  json line = {{"type", "eval"}, {"task", task.name}, {"val_accuracy", acc},
               {"examples", cfg.trainer.val_examples}};
  out << line.dump() << "\n";
  if (!cfg.paths.metrics_out.empty()) {
    std::ofstream f(cfg.paths.metrics_out, std::ios::trunc);
    if (!f) throw IoError("cannot write metrics to '" + cfg.paths.metrics_out + "'");
    f << line.dump() << "\n";
  }
  return 0;
}

int cmd_count_params(const RunConfig& cfg, std::ostream& out) {
  ParamBreakdown b = count_params(cfg);
  out << "adapter_params " << b.adapter << "\n"
      << "decoder_params " << b.decoder << "\n"
      << "trainable_params " << b.trainable << "\n"
      << "backbone_params " << b.backbone << "\n"
      << "total_params " << b.total << "\n";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f%%", b.adapter_fraction * 100.0);
  out << "adapter_fraction " << buf << "\n";
  std::snprintf(buf, sizeof(buf), "%.6f%%", b.trainable_fraction * 100.0);
  out << "trainable_fraction " << buf << "\n";
  return 0;
}

int cmd_export_task(const RunConfig& cfg, std::ostream& out) {
  TaskSpec task = task_of(cfg);
  if (cfg.export_count < 1) throw ConfigError("export.count must be >= 1");
  if (cfg.paths.metrics_out.empty()) {
    export_corpus(task, cfg.export_count, out);
  } else {
    std::ofstream f(cfg.paths.metrics_out, std::ios::trunc);
    if (!f) throw IoError("cannot write corpus to '" + cfg.paths.metrics_out + "'");
    export_corpus(task, cfg.export_count, f);
  }
  return 0;
}

}  // namespace

ParamBreakdown count_params(const RunConfig& cfg) {
  TaskSpec task = task_of(cfg);
  ParamBreakdown b;
  b.adapter = count_adapter_params(cfg.backbone.layers, cfg.backbone.hidden, cfg.adapter.heads,
                                   cfg.adapter.dim, cfg.adapter.with_biases);
  b.decoder = cfg.backbone.hidden * task.classes + task.classes;
  b.trainable = b.adapter + b.decoder;
  b.backbone = cfg.backbone.param_count();
  b.total = b.backbone + b.trainable;
  b.adapter_fraction = static_cast<double>(b.adapter) / static_cast<double>(b.backbone);
  b.trainable_fraction = static_cast<double>(b.trainable) / static_cast<double>(b.total);
  return b;
}

void emit_metrics(const TrainReport& report, const ParamBreakdown& counts,
                  const std::string& path) {
  if (report.records.empty()) throw ConfigError("emit_metrics: empty report");
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError("cannot write metrics to '" + path + "'");
    for (const auto& r : report.records) {
      json line = {{"type", "eval"},       {"step", r.step},
                   {"epoch", r.epoch},     {"lr", r.lr},
                   {"train_loss", r.train_loss}, {"val_accuracy", r.val_accuracy}};
      out << line.dump() << "\n";
    }
    json summary = {{"type", "summary"},
                    {"best_val_accuracy", report.best_val_accuracy},
                    {"best_step", report.best_step},
                    {"final_train_loss", report.final_train_loss},
                    {"trainable_params", report.trainable_params},
                    {"total_params", report.total_params},
                    {"adapter_params", counts.adapter},
                    {"decoder_params", counts.decoder},
                    {"backbone_params", counts.backbone},
                    {"trainable_fraction", counts.trainable_fraction},
                    {"wall_clock_sec", report.wall_clock_sec}};
    out << summary.dump() << "\n";
    if (!out) throw IoError("short write to '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw IoError("cannot rename '" + tmp + "' to '" + path + "'");
}

int run(const RunConfig& config, std::ostream& out) {
  switch (config.command) {
    case Command::pretrain: return cmd_pretrain(config, out);
    case Command::adapt: return cmd_adapt(config, out);
    case Command::finetune: return cmd_finetune(config, out);
    case Command::merge: return cmd_merge(config, out);
    case Command::eval: return cmd_eval(config, out);
    case Command::count_params: return cmd_count_params(config, out);
    case Command::export_task: return cmd_export_task(config, out);
  }
  throw ConfigError("run: unknown command");
}

}  // namespace tinyattn
