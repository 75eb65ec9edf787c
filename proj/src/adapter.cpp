#include "tinyattn/adapter.hpp"

#include <cmath>

namespace tinyattn {

namespace {

void add_noise(Tensor& t, Rng& rng, double eps) {
  for (double& v : t.values) v += rng.uniform(-eps, eps);
}

void scale_values(Tensor& t, double c) {
  for (double& v : t.values) v *= c;
}

Tensor average(const std::vector<AdapterHead>& heads, Tensor AdapterHead::* field) {
  Tensor avg = heads[0].*field;
  const double inv = 1.0 / static_cast<double>(heads.size());
  for (size_t m = 1; m < heads.size(); ++m) {
    const Tensor& t = heads[m].*field;
    for (size_t i = 0; i < avg.values.size(); ++i) avg.values[i] += t.values[i];
  }
  for (double& v : avg.values) v *= inv;
  return avg;
}

}  // namespace

TinyAttnAdapter TinyAttnAdapter::zeros(int64_t hidden, int64_t heads, int64_t dim,
                                       bool with_biases) {
  if (hidden <= 0 || heads <= 0 || dim <= 0)
    throw std::invalid_argument("TinyAttnAdapter: dimensions must be positive");
  TinyAttnAdapter a;
  a.hidden = hidden;
  a.dim = dim;
  a.with_biases = with_biases;
  a.merged_scale = 1.0;
  a.heads.resize(static_cast<size_t>(heads));
  for (auto& h : a.heads) {
    h.wq = Tensor::zeros({hidden, dim}, true);
    h.wk = Tensor::zeros({hidden, dim}, true);
    h.wv = Tensor::zeros({hidden, dim}, true);
    h.out = Tensor::zeros({hidden, dim}, true);
    if (with_biases) {
      h.bq = Tensor::zeros({dim}, true);
      h.bk = Tensor::zeros({dim}, true);
      h.bv = Tensor::zeros({dim}, true);
      h.bout = Tensor::zeros({hidden}, true);
    }
  }
  return a;
}

int64_t TinyAttnAdapter::param_count() const {
  int64_t per_head = 4 * hidden * dim;
  if (with_biases) per_head += 3 * dim + hidden;
  return num_heads() * per_head;
}

std::vector<NamedParam> TinyAttnAdapter::named_params(int64_t layer_index) {
  std::vector<NamedParam> out;
  const std::string base = "adapter.layer" + std::to_string(layer_index) + ".";
  for (size_t m = 0; m < heads.size(); ++m) {
    const std::string p = base + "head" + std::to_string(m) + ".";
    AdapterHead& h = heads[m];
    out.push_back({p + "wq", &h.wq});
    out.push_back({p + "wk", &h.wk});
    out.push_back({p + "wv", &h.wv});
    out.push_back({p + "out", &h.out});
    if (with_biases) {
      out.push_back({p + "bq", &h.bq});
      out.push_back({p + "bk", &h.bk});
      out.push_back({p + "bv", &h.bv});
      out.push_back({p + "bout", &h.bout});
    }
  }
  return out;
}

Var adapter_forward(Tape& tape, TinyAttnAdapter& adapter, Var z, int64_t batch, int64_t seq_len,
                    const std::vector<uint8_t>& mask) {
  const Tensor& tz = tape.val(z);
  if (tz.ndim() != 2 || tz.shape[1] != adapter.hidden)
    throw std::invalid_argument("adapter_forward: input hidden size does not match adapter");
  if (tz.shape[0] != batch * seq_len)
    throw std::invalid_argument("adapter_forward: rows != batch * seq_len");
  if (!mask.empty() && static_cast<int64_t>(mask.size()) != batch * seq_len)
    throw std::invalid_argument("adapter_forward: mask shape mismatch");

  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(adapter.dim));

  Var total;
  for (auto& head : adapter.heads) {
    Var q = tape.matmul(z, tape.param(head.wq));
    Var k = tape.matmul(z, tape.param(head.wk));
    Var v = tape.matmul(z, tape.param(head.wv));
    if (adapter.with_biases) {
      q = tape.add_rowvec(q, tape.param(head.bq));
      k = tape.add_rowvec(k, tape.param(head.bk));
      v = tape.add_rowvec(v, tape.param(head.bv));
    }
    std::vector<Var> per_seq;
    per_seq.reserve(static_cast<size_t>(batch));
    for (int64_t b = 0; b < batch; ++b) {
      Var qb = tape.slice_rows(q, b * seq_len, seq_len);
      Var kb = tape.slice_rows(k, b * seq_len, seq_len);
      Var vb = tape.slice_rows(v, b * seq_len, seq_len);
      Var scores = tape.scale(tape.matmul(qb, tape.transpose(kb)), inv_sqrt_d);
      Var alpha;
      if (mask.empty()) {
        alpha = tape.softmax_rows(scores);
      } else {
        std::vector<uint8_t> key_valid(mask.begin() + b * seq_len, mask.begin() + (b + 1) * seq_len);
        alpha = tape.softmax_rows_masked(scores, key_valid);
      }
      per_seq.push_back(tape.matmul(alpha, vb));
    }
    Var ctx = batch == 1 ? per_seq[0] : tape.concat_rows(per_seq);
    Var head_out = tape.matmul(ctx, tape.transpose(tape.param(head.out)));
    if (adapter.with_biases) head_out = tape.add_rowvec(head_out, tape.param(head.bout));
    total = total.valid() ? tape.add(total, head_out) : head_out;
  }
  return adapter.merged_scale == 1.0 ? total : tape.scale(total, adapter.merged_scale);
}

Tensor adapter_apply(TinyAttnAdapter& adapter, const Tensor& z, int64_t batch, int64_t seq_len,
                     const std::vector<uint8_t>& mask) {
  Tape tape;
  Var zv = tape.leaf(z);
  Var out = adapter_forward(tape, adapter, zv, batch, seq_len, mask);
  return tape.val(out);
}

Tensor adapter_attention_weights(const TinyAttnAdapter& adapter, int64_t head, const Tensor& z_seq,
                                 const std::vector<uint8_t>& mask) {
  if (head < 0 || head >= adapter.num_heads())
    throw std::invalid_argument("adapter_attention_weights: head index out of range");
  TinyAttnAdapter& a = const_cast<TinyAttnAdapter&>(adapter);
  Tape tape;
  Var z = tape.leaf(z_seq);
  AdapterHead& h = a.heads[static_cast<size_t>(head)];
  Var q = tape.matmul(z, tape.leaf(h.wq));
  Var k = tape.matmul(z, tape.leaf(h.wk));
  if (a.with_biases) {
    q = tape.add_rowvec(q, tape.leaf(h.bq));
    k = tape.add_rowvec(k, tape.leaf(h.bk));
  }
  Var scores = tape.scale(tape.matmul(q, tape.transpose(k)),
                          1.0 / std::sqrt(static_cast<double>(a.dim)));
  Var alpha = mask.empty() ? tape.softmax_rows(scores) : tape.softmax_rows_masked(scores, mask);
  return tape.val(alpha);
}

TinyAttnAdapter merge_heads(const TinyAttnAdapter& adapter) {
  if (adapter.heads.empty()) throw std::invalid_argument("merge_heads: adapter has no heads");
  TinyAttnAdapter merged;
  merged.hidden = adapter.hidden;
  merged.dim = adapter.dim;
  merged.with_biases = adapter.with_biases;
  merged.merged_scale = adapter.merged_scale * static_cast<double>(adapter.num_heads());
  AdapterHead h;
  h.wq = average(adapter.heads, &AdapterHead::wq);
  h.wk = average(adapter.heads, &AdapterHead::wk);
  h.wv = average(adapter.heads, &AdapterHead::wv);
  h.out = average(adapter.heads, &AdapterHead::out);
  if (adapter.with_biases) {
    h.bq = average(adapter.heads, &AdapterHead::bq);
    h.bk = average(adapter.heads, &AdapterHead::bk);
    h.bv = average(adapter.heads, &AdapterHead::bv);
    h.bout = average(adapter.heads, &AdapterHead::bout);
  }
  merged.heads = {std::move(h)};
  return merged;
}

void init_single_head(TinyAttnAdapter& adapter, Rng& rng, double scale) {
  if (adapter.num_heads() != 1)
    throw std::invalid_argument("init_single_head: adapter must have exactly one head");
  AdapterHead& h = adapter.heads[0];
  const double wb = 1.0 / std::sqrt(static_cast<double>(adapter.hidden));
  const double ob = scale / std::sqrt(static_cast<double>(adapter.dim));
  for (double& v : h.wq.values) v = rng.uniform(-wb, wb);
  for (double& v : h.wk.values) v = rng.uniform(-wb, wb);
  for (double& v : h.wv.values) v = rng.uniform(-wb, wb);
  for (double& v : h.out.values) v = rng.uniform(-ob, ob);
  if (adapter.with_biases) {
    std::fill(h.bq.values.begin(), h.bq.values.end(), 0.0);
    std::fill(h.bk.values.begin(), h.bk.values.end(), 0.0);
    std::fill(h.bv.values.begin(), h.bv.values.end(), 0.0);
    std::fill(h.bout.values.begin(), h.bout.values.end(), 0.0);
  }
  adapter.merged_scale = 1.0;
}

TinyAttnAdapter init_from_single(const TinyAttnAdapter& single, int64_t m_new, Rng& rng,
                                 double eps) {
  if (single.num_heads() != 1)
    throw std::invalid_argument("init_from_single: source adapter must have exactly one head");
  if (m_new < 1) throw std::invalid_argument("init_from_single: m_new must be >= 1");
  TinyAttnAdapter out;
  out.hidden = single.hidden;
  out.dim = single.dim;
  out.with_biases = single.with_biases;
  out.merged_scale = 1.0;
  // Any carried scale is folded into the copied output projections so the
  // expansion starts from the exact same function.
  const double out_scale = single.merged_scale / static_cast<double>(m_new);
  out.heads.resize(static_cast<size_t>(m_new));
  for (auto& h : out.heads) {
    h = single.heads[0];
    add_noise(h.wq, rng, eps);
    add_noise(h.wk, rng, eps);
    add_noise(h.wv, rng, eps);
    add_noise(h.out, rng, eps);
    scale_values(h.out, out_scale);
    if (out.with_biases) {
      add_noise(h.bq, rng, eps);
      add_noise(h.bk, rng, eps);
      add_noise(h.bv, rng, eps);
      add_noise(h.bout, rng, eps);
      scale_values(h.bout, out_scale);
    }
  }
  return out;
}

int64_t count_adapter_params(int64_t layers, int64_t hidden, int64_t heads, int64_t dim,
                             bool with_biases) {
  if (layers <= 0 || hidden <= 0 || heads <= 0 || dim <= 0)
    throw std::invalid_argument("count_adapter_params: dimensions must be positive");
  int64_t count = 4 * layers * heads * hidden * dim;
  if (with_biases) count += layers * heads * (3 * dim + hidden);
  return count;
}

}  // namespace tinyattn
