#pragma once

#include <vector>

#include "tinyattn/adapter.hpp"
#include "tinyattn/backbone.hpp"

namespace tinyattn {

// Backbone + optional per-layer adapters + task decoder, assembled for a run.
struct Model {
  Backbone backbone;
  std::vector<TinyAttnAdapter> adapters;  // empty when tuning without adapters
  Decoder decoder;
  Placement placement = Placement::none;

  bool has_adapters() const { return !adapters.empty() && placement != Placement::none; }

  std::vector<NamedParam> named_params();
  std::vector<NamedParam> trainable_params();
  int64_t total_param_count();
  int64_t trainable_param_count();
};

struct ModelForward {
  Tape tape;
  Var cls;
  Var logits;
  Var loss;  // only set when labels were supplied
};

// Full forward: embeddings -> layers (+adapters) -> CLS -> decoder logits,
// plus cross-entropy against batch labels when with_loss is set.
void model_forward(Model& model, const Batch& batch, ModelForward& out, bool with_loss);

// Fraction of correctly classified examples under argmax decoding.
double accuracy(Model& model, const Batch& batch);

}  // namespace tinyattn
