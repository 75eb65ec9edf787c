#include "tinyattn/backbone.hpp"

#include <cmath>

#include "tinyattn/adapter.hpp"

namespace tinyattn {

namespace {

constexpr double kLnEps = 1e-5;

Tensor uniform_tensor(std::vector<int64_t> shape, double bound, Rng& rng, bool train) {
  Tensor t = Tensor::zeros(std::move(shape), train);
  for (double& v : t.values) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

void BackboneConfig::validate() const {
  if (layers <= 0 || hidden <= 0 || attn_heads <= 0 || ffn <= 0 || vocab <= 0 || max_seq <= 0)
    throw std::invalid_argument("BackboneConfig: all dimensions must be positive");
  if (hidden % attn_heads != 0)
    throw std::invalid_argument("BackboneConfig: hidden size must be divisible by attn_heads");
}

int64_t BackboneConfig::param_count() const {
  const int64_t emb = vocab * hidden + (max_seq + 1) * hidden;
  const int64_t attn = 4 * hidden * hidden + 4 * hidden;
  const int64_t ff = hidden * ffn + ffn + ffn * hidden + hidden;
  const int64_t ln = 4 * hidden;  // two (gamma, beta) pairs
  return emb + layers * (attn + ff + ln);
}

void Batch::validate(int64_t vocab) const {
  if (batch <= 0 || seq_len <= 0) throw std::invalid_argument("Batch: empty");
  if (static_cast<int64_t>(ids.size()) != batch * seq_len)
    throw std::invalid_argument("Batch: ids size does not match batch x seq_len");
  if (static_cast<int64_t>(labels.size()) != batch)
    throw std::invalid_argument("Batch: label count does not match batch size");
  if (!mask.empty() && static_cast<int64_t>(mask.size()) != batch * seq_len)
    throw std::invalid_argument("Batch: mask shape mismatch");
  for (int id : ids)
    if (id < 0 || id >= vocab) throw std::invalid_argument("Batch: token id out of vocabulary");
  for (int64_t b = 0; b < batch; ++b) {
    if (!mask.empty() && !mask[b * seq_len])
      throw std::invalid_argument("Batch: CLS position must not be masked");
  }
}

Placement placement_from_string(const std::string& s) {
  if (s == "none") return Placement::none;
  if (s == "sequential") return Placement::sequential;
  if (s == "parallel") return Placement::parallel;
  throw std::invalid_argument("unknown placement '" + s + "' (none|sequential|parallel)");
}

std::string to_string(Placement p) {
  switch (p) {
    case Placement::none: return "none";
    case Placement::sequential: return "sequential";
    case Placement::parallel: return "parallel";
  }
  return "none";
}

Backbone Backbone::init(const BackboneConfig& cfg, Rng& rng) {
  cfg.validate();
  Backbone bb;
  bb.config = cfg;
  const double wb = 1.0 / std::sqrt(static_cast<double>(cfg.hidden));
  bb.tok_emb = uniform_tensor({cfg.vocab, cfg.hidden}, 1.0, rng, true);
  bb.pos_emb = uniform_tensor({cfg.max_seq + 1, cfg.hidden}, 1.0, rng, true);
  bb.layers.resize(static_cast<size_t>(cfg.layers));
  for (auto& layer : bb.layers) {
    auto wmat = [&] { return uniform_tensor({cfg.hidden, cfg.hidden}, wb, rng, true); };
    layer.attn.wq = wmat();
    layer.attn.wk = wmat();
    layer.attn.wv = wmat();
    layer.attn.wo = wmat();
    layer.attn.bq = Tensor::zeros({cfg.hidden}, true);
    layer.attn.bk = Tensor::zeros({cfg.hidden}, true);
    layer.attn.bv = Tensor::zeros({cfg.hidden}, true);
    layer.attn.bo = Tensor::zeros({cfg.hidden}, true);
    layer.ffn.w1 = uniform_tensor({cfg.hidden, cfg.ffn}, wb, rng, true);
    layer.ffn.b1 = Tensor::zeros({cfg.ffn}, true);
    layer.ffn.w2 = uniform_tensor({cfg.ffn, cfg.hidden}, 1.0 / std::sqrt(static_cast<double>(cfg.ffn)), rng, true);
    layer.ffn.b2 = Tensor::zeros({cfg.hidden}, true);
    layer.ln1.gamma = Tensor::full({cfg.hidden}, 1.0, true);
    layer.ln1.beta = Tensor::zeros({cfg.hidden}, true);
    layer.ln2.gamma = Tensor::full({cfg.hidden}, 1.0, true);
    layer.ln2.beta = Tensor::zeros({cfg.hidden}, true);
  }
  return bb;
}

std::vector<NamedParam> Backbone::named_params() {
  std::vector<NamedParam> out;
  out.push_back({"backbone.tok_emb", &tok_emb});
  out.push_back({"backbone.pos_emb", &pos_emb});
  for (size_t l = 0; l < layers.size(); ++l) {
    const std::string p = "backbone.layer" + std::to_string(l) + ".";
    TransformerLayer& L = layers[l];
    out.push_back({p + "attn.wq", &L.attn.wq});
    out.push_back({p + "attn.wk", &L.attn.wk});
    out.push_back({p + "attn.wv", &L.attn.wv});
    out.push_back({p + "attn.wo", &L.attn.wo});
    out.push_back({p + "attn.bq", &L.attn.bq});
    out.push_back({p + "attn.bk", &L.attn.bk});
    out.push_back({p + "attn.bv", &L.attn.bv});
    out.push_back({p + "attn.bo", &L.attn.bo});
    out.push_back({p + "ffn.w1", &L.ffn.w1});
    out.push_back({p + "ffn.b1", &L.ffn.b1});
    out.push_back({p + "ffn.w2", &L.ffn.w2});
    out.push_back({p + "ffn.b2", &L.ffn.b2});
    out.push_back({p + "ln1.gamma", &L.ln1.gamma});
    out.push_back({p + "ln1.beta", &L.ln1.beta});
    out.push_back({p + "ln2.gamma", &L.ln2.gamma});
    out.push_back({p + "ln2.beta", &L.ln2.beta});
  }
  return out;
}

void set_frozen(Backbone& backbone) {
  for (auto& p : backbone.named_params()) {
    p.tensor->trainable = false;
    p.tensor->grad.reset();
  }
}

void set_trainable(Backbone& backbone) {
  for (auto& p : backbone.named_params()) p.tensor->trainable = true;
}

bool is_frozen(const Backbone& backbone) {
  for (auto& p : const_cast<Backbone&>(backbone).named_params())
    if (p.tensor->trainable) return false;
  return true;
}

namespace {

// Multi-head self-attention over the flattened stream, sequences handled as
// contiguous row blocks. Returns [N x H] before the residual add.
Var multi_head_attention(Tape& tape, AttentionParams& attn, Var x, int64_t batch, int64_t seq_len,
                         int64_t heads, const std::vector<uint8_t>& mask) {
  const int64_t hidden = tape.val(x).shape[1];
  const int64_t dh = hidden / heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  Var wq = tape.param(attn.wq), wk = tape.param(attn.wk), wv = tape.param(attn.wv);
  Var q = tape.add_rowvec(tape.matmul(x, wq), tape.param(attn.bq));
  Var k = tape.add_rowvec(tape.matmul(x, wk), tape.param(attn.bk));
  Var v = tape.add_rowvec(tape.matmul(x, wv), tape.param(attn.bv));

  std::vector<Var> per_seq;
  per_seq.reserve(static_cast<size_t>(batch));
  for (int64_t b = 0; b < batch; ++b) {
    Var qb = tape.slice_rows(q, b * seq_len, seq_len);
    Var kb = tape.slice_rows(k, b * seq_len, seq_len);
    Var vb = tape.slice_rows(v, b * seq_len, seq_len);
    std::vector<uint8_t> key_valid;
    if (!mask.empty())
      key_valid.assign(mask.begin() + b * seq_len, mask.begin() + (b + 1) * seq_len);
    std::vector<Var> head_ctx;
    head_ctx.reserve(static_cast<size_t>(heads));
    for (int64_t a = 0; a < heads; ++a) {
      Var qh = tape.slice_cols(qb, a * dh, dh);
      Var kh = tape.slice_cols(kb, a * dh, dh);
      Var vh = tape.slice_cols(vb, a * dh, dh);
      Var scores = tape.scale(tape.matmul(qh, tape.transpose(kh)), inv_sqrt_dh);
      Var alpha = key_valid.empty() ? tape.softmax_rows(scores)
                                    : tape.softmax_rows_masked(scores, key_valid);
      head_ctx.push_back(tape.matmul(alpha, vh));
    }
    per_seq.push_back(tape.concat_cols(head_ctx));
  }
  Var ctx = batch == 1 ? per_seq[0] : tape.concat_rows(per_seq);
  return tape.add_rowvec(tape.matmul(ctx, tape.param(attn.wo)), tape.param(attn.bo));
}

}  // namespace

Var backbone_forward(Tape& tape, Backbone& backbone, const Batch& batch,
                     std::vector<TinyAttnAdapter>* adapters, Placement placement) {
  const BackboneConfig& cfg = backbone.config;
  batch.validate(cfg.vocab);
  if (batch.seq_len > cfg.max_seq + 1)
    throw std::invalid_argument("backbone_forward: sequence longer than max_seq allows");
  if (adapters && placement != Placement::none) {
    if (static_cast<int64_t>(adapters->size()) != cfg.layers)
      throw std::invalid_argument("backbone_forward: expected one adapter per layer");
    for (const auto& a : *adapters)
      if (a.hidden != cfg.hidden)
        throw std::invalid_argument("backbone_forward: adapter hidden size " +
                                    std::to_string(a.hidden) + " does not match backbone " +
                                    std::to_string(cfg.hidden));
  }

  const int64_t B = batch.batch, S = batch.seq_len;

  // Token + learned absolute position embeddings.
  std::vector<int64_t> tok_idx(batch.ids.begin(), batch.ids.end());
  std::vector<int64_t> pos_idx(static_cast<size_t>(B * S));
  for (int64_t b = 0; b < B; ++b)
    for (int64_t t = 0; t < S; ++t) pos_idx[b * S + t] = t;
  Var x = tape.add(tape.select_rows(tape.param(backbone.tok_emb), tok_idx),
                   tape.select_rows(tape.param(backbone.pos_emb), pos_idx));

  for (size_t l = 0; l < backbone.layers.size(); ++l) {
    TransformerLayer& layer = backbone.layers[l];
    Var attn = multi_head_attention(tape, layer.attn, x, B, S, cfg.attn_heads, batch.mask);
    Var ln1_g = tape.param(layer.ln1.gamma), ln1_b = tape.param(layer.ln1.beta);
    Var ln2_g = tape.param(layer.ln2.gamma), ln2_b = tape.param(layer.ln2.beta);

    Var z;  // post-LN1 stream feeding the FFN
    if (adapters && placement == Placement::parallel) {
      Var adapt = adapter_forward(tape, (*adapters)[l], x, B, S, batch.mask);
      z = tape.layer_norm(tape.add(tape.add(x, attn), adapt), ln1_g, ln1_b, kLnEps);
    } else {
      z = tape.layer_norm(tape.add(x, attn), ln1_g, ln1_b, kLnEps);
      if (adapters && placement == Placement::sequential) {
        Var adapt = adapter_forward(tape, (*adapters)[l], z, B, S, batch.mask);
        z = tape.add(z, adapt);
      }
    }

    Var h1 = tape.gelu(tape.add_rowvec(tape.matmul(z, tape.param(layer.ffn.w1)),
                                       tape.param(layer.ffn.b1)));
    Var ff = tape.add_rowvec(tape.matmul(h1, tape.param(layer.ffn.w2)),
                             tape.param(layer.ffn.b2));
    x = tape.layer_norm(tape.add(z, ff), ln2_g, ln2_b, kLnEps);
  }

  std::vector<int64_t> cls_idx(static_cast<size_t>(B));
  for (int64_t b = 0; b < B; ++b) cls_idx[b] = b * S;
  return tape.select_rows(x, cls_idx);
}

Decoder Decoder::init(int64_t hidden, int64_t classes, Rng& rng) {
  Decoder d;
  d.w = uniform_tensor({hidden, classes}, 1.0 / std::sqrt(static_cast<double>(hidden)), rng, true);
  d.b = Tensor::zeros({classes}, true);
  return d;
}

std::vector<NamedParam> Decoder::named_params() {
  return {{"decoder.w", &w}, {"decoder.b", &b}};
}

Var decode(Tape& tape, Decoder& decoder, Var cls_embedding) {
  return tape.add_rowvec(tape.matmul(cls_embedding, tape.param(decoder.w)),
                         tape.param(decoder.b));
}

}  // namespace tinyattn
