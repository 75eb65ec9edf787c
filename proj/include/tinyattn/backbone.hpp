#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tinyattn/rng.hpp"
#include "tinyattn/tape.hpp"
#include "tinyattn/tensor.hpp"

namespace tinyattn {

struct BackboneConfig {
  int64_t layers = 2;        // L
  int64_t hidden = 32;       // H
  int64_t attn_heads = 4;    // A, H % A == 0
  int64_t ffn = 64;          // F
  int64_t vocab = 64;        // V, token id 0 is reserved for CLS
  int64_t max_seq = 16;      // T_max, payload length excluding CLS

  void validate() const;
  // Total parameter count of a backbone with this geometry.
  int64_t param_count() const;
};

struct LayerNormParams {
  Tensor gamma;  // [H]
  Tensor beta;   // [H]
};

struct AttentionParams {
  Tensor wq, wk, wv, wo;  // [H x H]
  Tensor bq, bk, bv, bo;  // [H]
};

struct FeedForwardParams {
  Tensor w1;  // [H x F]
  Tensor b1;  // [F]
  Tensor w2;  // [F x H]
  Tensor b2;  // [H]
};

struct TransformerLayer {
  AttentionParams attn;
  FeedForwardParams ffn;
  LayerNormParams ln1, ln2;
};

// Token-classification batch. ids are row-major [B x (T+1)] with position 0
// holding the CLS token; mask (optional, same layout) flags valid positions.
struct Batch {
  int64_t batch = 0;
  int64_t seq_len = 0;  // T+1, including CLS
  std::vector<int> ids;
  std::vector<int> labels;
  std::vector<uint8_t> mask;  // empty = all valid

  void validate(int64_t vocab) const;
};

enum class Placement { none, sequential, parallel };

Placement placement_from_string(const std::string& s);
std::string to_string(Placement p);

struct TinyAttnAdapter;  // adapter.hpp

// Toy post-layer-norm transformer standing in for the pretrained model.
struct Backbone {
  BackboneConfig config;
  Tensor tok_emb;  // [V x H]
  Tensor pos_emb;  // [(T_max+1) x H]
  std::vector<TransformerLayer> layers;

  static Backbone init(const BackboneConfig& cfg, Rng& rng);

  std::vector<NamedParam> named_params();
  int64_t param_count() const { return config.param_count(); }
};

// Marks every backbone tensor (embeddings included) non-trainable. Idempotent.
void set_frozen(Backbone& backbone);
void set_trainable(Backbone& backbone);
bool is_frozen(const Backbone& backbone);

// Runs the full stack over a batch and returns the top-layer embedding of
// the CLS position, shape [B x H]. Per layer, with x the layer input:
//   attn       = MultiHeadAttn(x)
//   sequential: z = LN1(x + attn); z' = z + Adapter(z); h = LN2(z' + FFN(z'))
//   parallel:   z = LN1(x + attn + Adapter(x)); h = LN2(z + FFN(z))
//   none:       z = LN1(x + attn); h = LN2(z + FFN(z))
// `adapters`, when given, holds one adapter per layer with matching H.
Var backbone_forward(Tape& tape, Backbone& backbone, const Batch& batch,
                     std::vector<TinyAttnAdapter>* adapters, Placement placement);

// Task decoder: affine map from the CLS embedding to class logits.
struct Decoder {
  Tensor w;  // [H x C]
  Tensor b;  // [C]

  static Decoder init(int64_t hidden, int64_t classes, Rng& rng);
  std::vector<NamedParam> named_params();
};

Var decode(Tape& tape, Decoder& decoder, Var cls_embedding);

}  // namespace tinyattn
