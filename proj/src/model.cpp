#include "tinyattn/model.hpp"

#include <algorithm>

namespace tinyattn {

std::vector<NamedParam> Model::named_params() {
  std::vector<NamedParam> out = backbone.named_params();
  for (size_t l = 0; l < adapters.size(); ++l) {
    auto a = adapters[l].named_params(static_cast<int64_t>(l));
    out.insert(out.end(), a.begin(), a.end());
  }
  if (!decoder.w.shape.empty()) {
    auto d = decoder.named_params();
    out.insert(out.end(), d.begin(), d.end());
  }
  return out;
}

std::vector<NamedParam> Model::trainable_params() {
  std::vector<NamedParam> out;
  for (auto& p : named_params())
    if (p.tensor->trainable) out.push_back(p);
  return out;
}

int64_t Model::total_param_count() {
  int64_t n = 0;
  for (auto& p : named_params()) n += p.tensor->numel();
  return n;
}

int64_t Model::trainable_param_count() {
  int64_t n = 0;
  for (auto& p : trainable_params()) n += p.tensor->numel();
  return n;
}

void model_forward(Model& model, const Batch& batch, ModelForward& out, bool with_loss) {
  auto* adapters = model.has_adapters() ? &model.adapters : nullptr;
  Placement placement = model.has_adapters() ? model.placement : Placement::none;
  out.cls = backbone_forward(out.tape, model.backbone, batch, adapters, placement);
  out.logits = decode(out.tape, model.decoder, out.cls);
  if (with_loss) out.loss = out.tape.cross_entropy(out.logits, batch.labels);
}

double accuracy(Model& model, const Batch& batch) {
  ModelForward f;
  model_forward(model, batch, f, false);
  const Tensor& logits = f.tape.val(f.logits);
  const int64_t b = logits.shape[0], c = logits.shape[1];
  int64_t correct = 0;
  for (int64_t i = 0; i < b; ++i) {
    const double* row = logits.values.data() + i * c;
    int64_t arg = 0;
    for (int64_t j = 1; j < c; ++j)
      if (row[j] > row[arg]) arg = j;
    if (arg == batch.labels[static_cast<size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(b);
}

}  // namespace tinyattn
