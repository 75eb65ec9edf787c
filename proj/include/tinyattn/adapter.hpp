#pragma once

#include <cstdint>
#include <vector>

#include "tinyattn/rng.hpp"
#include "tinyattn/tape.hpp"
#include "tinyattn/tensor.hpp"

namespace tinyattn {

struct AdapterHead {
  Tensor wq, wk, wv;  // [H x D]
  Tensor out;         // [H x D], maps the D-dim head vector back to hidden
  Tensor bq, bk, bv;  // [D]
  Tensor bout;        // [H]
};

// Per-layer tiny-attention adapter: M heads of per-head dimension D.
// merged_scale is 1 while the heads are distinct; merging the heads folds
// their average into a single head and carries the head count here so the
// forward stays the M * averaged-head computation.
struct TinyAttnAdapter {
  int64_t hidden = 0;        // H of the host backbone
  int64_t dim = 1;           // D
  bool with_biases = true;
  double merged_scale = 1.0;
  std::vector<AdapterHead> heads;

  int64_t num_heads() const { return static_cast<int64_t>(heads.size()); }
  int64_t param_count() const;
  std::vector<NamedParam> named_params(int64_t layer_index);

  static TinyAttnAdapter zeros(int64_t hidden, int64_t heads, int64_t dim, bool with_biases);
};

// Attention over all (unmasked) positions of each sequence, for each head,
// then the per-head output projections summed and scaled by merged_scale.
// z is the flattened stream [B*S x H]; sequences are contiguous blocks of S
// rows. mask (optional) is [B*S] validity flags.
Var adapter_forward(Tape& tape, TinyAttnAdapter& adapter, Var z, int64_t batch, int64_t seq_len,
                    const std::vector<uint8_t>& mask);

// Convenience forward on plain values (fresh tape, no gradients).
Tensor adapter_apply(TinyAttnAdapter& adapter, const Tensor& z, int64_t batch, int64_t seq_len,
                     const std::vector<uint8_t>& mask = {});

// Attention weights of one head over one sequence, for inspection/tests:
// returns [S x S], rows summing to 1 over unmasked positions.
Tensor adapter_attention_weights(const TinyAttnAdapter& adapter, int64_t head, const Tensor& z_seq,
                                 const std::vector<uint8_t>& mask = {});

// Averages every per-head parameter into a single head and multiplies
// merged_scale by M. Identical heads make the merged forward exact; the
// carried scale keeps sum-over-heads semantics after averaging.
TinyAttnAdapter merge_heads(const TinyAttnAdapter& adapter);

// Output projections ~ U(-scale/sqrt(D), +scale/sqrt(D)), q/k/v projections
// ~ U(-1/sqrt(H), +1/sqrt(H)), biases zero. Requires M == 1.
void init_single_head(TinyAttnAdapter& adapter, Rng& rng, double scale = 0.01);

// Expands a single-head adapter to m_new perturbed copies. Output
// projections are rescaled by 1/m_new (after folding in the source's
// merged_scale) so the expanded forward matches the source up to O(eps).
TinyAttnAdapter init_from_single(const TinyAttnAdapter& single, int64_t m_new, Rng& rng,
                                 double eps = 1e-3);

// Closed-form trainable-parameter count: 4*L*M*H*D, plus L*M*(3*D + H) when
// biases are enabled.
int64_t count_adapter_params(int64_t layers, int64_t hidden, int64_t heads, int64_t dim,
                             bool with_biases);

}  // namespace tinyattn
