#include "tinyattn/tape.hpp"

#include <algorithm>
#include <cmath>

namespace tinyattn {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

void require_matrix(const Tensor& t, const char* op) {
  require(t.ndim() == 2, std::string(op) + ": expected a 2-D tensor, got " + t.shape_str());
}

// C[m x n] += A[m x k] * B[k x n], plain ikj loop.
void gemm_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (int64_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m x n] += A[k x m]^T * B[k x n]
void gemm_at_b_acc(const double* a, const double* b, double* c, int64_t k, int64_t m, int64_t n) {
  for (int64_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (int64_t i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = c + i * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m x k] += A[m x n] * B[k x n]^T
void gemm_a_bt_acc(const double* a, const double* b, double* c, int64_t m, int64_t n, int64_t k) {
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * n;
    double* crow = c + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double acc = 0.0;
      for (int64_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      crow[p] += acc;
    }
  }
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

Var Tape::push(Tensor t, bool needs) {
  slots_.push_back(std::move(t));
  needs_.push_back(needs ? 1 : 0);
  grads_.emplace_back();
  return Var{static_cast<int>(slots_.size()) - 1};
}

Var Tape::leaf(Tensor t) {
  bool needs = t.trainable;
  return push(std::move(t), needs);
}

Var Tape::param(Tensor& t) {
  Var v = push(t, t.trainable);
  bindings_.emplace_back(&t, v.id);
  return v;
}

const std::vector<double>* Tape::grad(Var v) const {
  const auto& g = grads_[check(v)];
  return g ? &*g : nullptr;
}

std::vector<double>& Tape::grad_buf(int id) {
  if (!grads_[id]) grads_[id].emplace(slots_[id].values.size(), 0.0);
  return *grads_[id];
}

void Tape::add_grad(int id, const std::vector<double>& g) {
  auto& buf = grad_buf(id);
  for (size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

void Tape::backward(Var loss) {
  int id = check(loss);
  require(slots_[id].numel() == 1, "backward: loss must be a scalar tensor");
  grad_buf(id)[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!grads_[it->out]) continue;  // nothing flowed into this node
    it->back(*this);
  }
}

void Tape::pull_grads() {
  for (auto& [ptr, id] : bindings_) {
    if (!ptr->trainable) continue;
    if (grads_[id]) {
      ptr->grad = *grads_[id];
    } else {
      ptr->grad.emplace(ptr->values.size(), 0.0);
    }
  }
}

// --- operations --------------------------------------------------------

Var Tape::matmul(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  require_matrix(ta, "matmul");
  require_matrix(tb, "matmul");
  require(ta.shape[1] == tb.shape[0],
          "matmul: inner dimensions disagree " + ta.shape_str() + " x " + tb.shape_str());
  const int64_t m = ta.shape[0], k = ta.shape[1], n = tb.shape[1];
  Tensor out = Tensor::zeros({m, n});
  gemm_acc(ta.values.data(), tb.values.data(), out.values.data(), m, k, n);
  bool needs = needs_[a.id] || needs_[b.id];
  Var o = push(std::move(out), needs);
  if (needs) {
    nodes_.push_back({"matmul", o.id, [a = a.id, b = b.id, o = o.id, m, k, n](Tape& t) {
                        const auto& go = *t.grads_[o];
                        if (t.needs_[a])
                          gemm_a_bt_acc(go.data(), t.slots_[b].values.data(),
                                        t.grad_buf(a).data(), m, n, k);
                        if (t.needs_[b])
                          gemm_at_b_acc(t.slots_[a].values.data(), go.data(),
                                        t.grad_buf(b).data(), m, k, n);
                      }});
  }
  return o;
}

Var Tape::transpose(Var a) {
  const Tensor& ta = val(a);
  require_matrix(ta, "transpose");
  const int64_t m = ta.shape[0], n = ta.shape[1];
  Tensor out = Tensor::zeros({n, m});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) out.values[j * m + i] = ta.values[i * n + j];
  bool needs = needs_[a.id];
  Var o = push(std::move(out), needs);
  if (needs) {
    nodes_.push_back({"transpose", o.id, [a = a.id, o = o.id, m, n](Tape& t) {
                        const auto& go = *t.grads_[o];
                        auto& ga = t.grad_buf(a);
                        for (int64_t i = 0; i < m; ++i)
                          for (int64_t j = 0; j < n; ++j) ga[i * n + j] += go[j * m + i];
                      }});
  }
  return o;
}

Var Tape::add(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  require(same_shape(ta, tb), "add: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  Tensor out = ta;
  out.trainable = false;
  out.grad.reset();
  for (size_t i = 0; i < out.values.size(); ++i) out.values[i] += tb.values[i];
  bool needs = needs_[a.id] || needs_[b.id];
  Var o = push(std::move(out), needs);
  if (needs) {
    nodes_.push_back({"add", o.id, [a = a.id, b = b.id, o = o.id](Tape& t) {
                        const auto& go = *t.grads_[o];
                        if (t.needs_[a]) t.add_grad(a, go);
                        if (t.needs_[b]) t.add_grad(b, go);
                      }});
  }
  return o;
}

Var Tape::add_rowvec(Var a, Var bias) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(bias);
  require_matrix(ta, "add_rowvec");
  require(tb.ndim() == 1 && tb.shape[0] == ta.shape[1],
          "add_rowvec: bias shape " + tb.shape_str() + " does not match " + ta.shape_str());
  const int64_t m = ta.shape[0], n = ta.shape[1];
  Tensor out = ta;
  out.trainable = false;
  out.grad.reset();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) out.values[i * n + j] += tb.values[j];
  bool needs = needs_[a.id] || needs_[bias.id];
  Var o = push(std::move(out), needs);
  if (needs) {
    nodes_.push_back({"add_rowvec", o.id, [a = a.id, b = bias.id, o = o.id, m, n](Tape& t) {
                        const auto& go = *t.grads_[o];
                        if (t.needs_[a]) t.add_grad(a, go);
                        if (t.needs_[b]) {
                          auto& gb = t.grad_buf(b);
                          for (int64_t i = 0; i < m; ++i)
                            for (int64_t j = 0; j < n; ++j) gb[j] += go[i * n + j];
                        }
                      }});
  }
  return o;
}

Var Tape::scale(Var a, double c) {
  const Tensor& ta = val(a);
  Tensor out = ta;
  out.trainable = false;
  out.grad.reset();
  for (double& v : out.values) v *= c;
  bool needs = needs_[a.id];
  Var o = push(std::move(out), needs);
  if (needs) {
    nodes_.push_back({"scale", o.id, [a = a.id, o = o.id, c](Tape& t) {
                        const auto& go = *t.grads_[o];
                        auto& ga = t.grad_buf(a);
                        for (size_t i = 0; i < go.size(); ++i) ga[i] += c * go[i];
                      }});
  }
  return o;
}

Var Tape::slice_rows(Var a, int64_t row0, int64_t nrows) {
  const Tensor& ta = val(a);
  require_matrix(ta, "slice_rows");
  require(row0 >= 0 && nrows > 0 && row0 + nrows <= ta.shape[0], "slice_rows: out of range");
  const int64_t n = ta.shape[1];
  Tensor out = Tensor::zeros({nrows, n});
  std::copy_n(ta.values.begin() + row0 * n, nrows * n, out.values.begin());
  bool needs = needs_[a.id];
  Var o = push(std::move(out), needs);
  if (needs) {
    nodes_.push_back({"slice_rows", o.id, [a = a.id, o = o.id, row0, nrows, n](Tape& t) {
                        const auto& go = *t.grads_[o];
                        auto& ga = t.grad_buf(a);
                        for (int64_t i = 0; i < nrows * n; ++i) ga[row0 * n + i] += go[i];
                      }});
  }
  return o;
}

Var Tape::slice_cols(Var a, int64_t col0, int64_t ncols) {
  const Tensor& ta = val(a);
  require_matrix(ta, "slice_cols");
  require(col0 >= 0 && ncols > 0 && col0 + ncols <= ta.shape[1], "slice_cols: out of range");
  const int64_t m = ta.shape[0], n = ta.shape[1];
  Tensor out = Tensor::zeros({m, ncols});
  for (int64_t i = 0; i < m; ++i)
    std::copy_n(ta.values.begin() + i * n + col0, ncols, out.values.begin() + i * ncols);
  bool needs = needs_[a.id];
  Var o = push(std::move(out), needs);
  if (needs) {
    nodes_.push_back({"slice_cols", o.id, [a = a.id, o = o.id, col0, ncols, m, n](Tape& t) {
                        const auto& go = *t.grads_[o];
                        auto& ga = t.grad_buf(a);
                        for (int64_t i = 0; i < m; ++i)
                          for (int64_t j = 0; j < ncols; ++j)
                            ga[i * n + col0 + j] += go[i * ncols + j];
                      }});
  }
  return o;
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const int64_t m = val(parts[0]).shape[0];
  int64_t total = 0;
  bool needs = false;
  for (Var p : parts) {
    const Tensor& tp = val(p);
    require_matrix(tp, "concat_cols");
    require(tp.shape[0] == m, "concat_cols: row count mismatch");
    total += tp.shape[1];
    needs = needs || needs_[p.id];
  }
  Tensor out = Tensor::zeros({m, total});
  std::vector<int64_t> widths;
  int64_t off = 0;
  for (Var p : parts) {
    const Tensor& tp = val(p);
    const int64_t w = tp.shape[1];
    for (int64_t i = 0; i < m; ++i)
      std::copy_n(tp.values.begin() + i * w, w, out.values.begin() + i * total + off);
    widths.push_back(w);
    off += w;
  }
  Var o = push(std::move(out), needs);
  if (needs) {
    std::vector<int> ids;
    for (Var p : parts) ids.push_back(p.id);
    nodes_.push_back({"concat_cols", o.id, [ids, widths, o = o.id, m, total](Tape& t) {
                        const auto& go = *t.grads_[o];
                        int64_t off2 = 0;
                        for (size_t p = 0; p < ids.size(); ++p) {
                          const int64_t w = widths[p];
                          if (t.needs_[ids[p]]) {
                            auto& gp = t.grad_buf(ids[p]);
                            for (int64_t i = 0; i < m; ++i)
                              for (int64_t j = 0; j < w; ++j)
                                gp[i * w + j] += go[i * total + off2 + j];
                          }
                          off2 += w;
                        }
                      }});
  }
  return o;
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  const int64_t n = val(parts[0]).shape[1];
  int64_t total = 0;
  bool needs = false;
  for (Var p : parts) {
    const Tensor& tp = val(p);
    require_matrix(tp, "concat_rows");
    require(tp.shape[1] == n, "concat_rows: column count mismatch");
    total += tp.shape[0];
    needs = needs || needs_[p.id];
  }
  Tensor out = Tensor::zeros({total, n});
  std::vector<int64_t> heights;
  int64_t off = 0;
  for (Var p : parts) {
    const Tensor& tp = val(p);
    std::copy(tp.values.begin(), tp.values.end(), out.values.begin() + off * n);
    heights.push_back(tp.shape[0]);
    off += tp.shape[0];
  }
  Var o = push(std::move(out), needs);
  if (needs) {
    std::vector<int> ids;
    for (Var p : parts) ids.push_back(p.id);
    nodes_.push_back({"concat_rows", o.id, [ids, heights, o = o.id, n](Tape& t) {
                        const auto& go = *t.grads_[o];
                        int64_t off2 = 0;
                        for (size_t p = 0; p < ids.size(); ++p) {
                          const int64_t rows = heights[p];
                          if (t.needs_[ids[p]]) {
                            auto& gp = t.grad_buf(ids[p]);
                            for (int64_t i = 0; i < rows * n; ++i) gp[i] += go[off2 * n + i];
                          }
                          off2 += rows;
                        }
                      }});
  }
  return o;
}

Var Tape::select_rows(Var table, std::vector<int64_t> idx) {
  const Tensor& tt = val(table);
  require_matrix(tt, "select_rows");
  const int64_t rows = tt.shape[0], n = tt.shape[1];
  for (int64_t i : idx)
    require(i >= 0 && i < rows, "select_rows: index out of range");
  Tensor out = Tensor::zeros({static_cast<int64_t>(idx.size()), n});
  for (size_t r = 0; r < idx.size(); ++r)
    std::copy_n(tt.values.begin() + idx[r] * n, n, out.values.begin() + static_cast<int64_t>(r) * n);
  bool needs = needs_[table.id];
  Var o = push(std::move(out), needs);
  if (needs) {
    nodes_.push_back({"select_rows", o.id, [tab = table.id, o = o.id, idx = std::move(idx), n](Tape& t) {
                        const auto& go = *t.grads_[o];
                        auto& gt = t.grad_buf(tab);
                        for (size_t r = 0; r < idx.size(); ++r)
                          for (int64_t j = 0; j < n; ++j)
                            gt[idx[r] * n + j] += go[static_cast<int64_t>(r) * n + j];
                      }});
  }
  return o;
}

Var Tape::softmax_rows(Var a) {
  const Tensor& ta = val(a);
  require_matrix(ta, "softmax_rows");
  const int64_t m = ta.shape[0], n = ta.shape[1];
  Tensor out = Tensor::zeros({m, n});
  for (int64_t i = 0; i < m; ++i) {
    const double* x = ta.values.data() + i * n;
    double* y = out.values.data() + i * n;
    double mx = x[0];
    for (int64_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      y[j] = std::exp(x[j] - mx);
      z += y[j];
    }
    for (int64_t j = 0; j < n; ++j) y[j] /= z;
  }
  bool needs = needs_[a.id];
  Var o = push(std::move(out), needs);
  if (needs) {
    // dX = Y .* (dY - <dY, Y> per row)
    nodes_.push_back({"softmax_rows", o.id, [a = a.id, o = o.id, m, n](Tape& t) {
                        const auto& go = *t.grads_[o];
                        const auto& y = t.slots_[o].values;
                        auto& ga = t.grad_buf(a);
                        for (int64_t i = 0; i < m; ++i) {
                          double dot = 0.0;
                          for (int64_t j = 0; j < n; ++j) dot += go[i * n + j] * y[i * n + j];
                          for (int64_t j = 0; j < n; ++j)
                            ga[i * n + j] += y[i * n + j] * (go[i * n + j] - dot);
                        }
                      }});
  }
  return o;
}

Var Tape::softmax_rows_masked(Var a, std::vector<uint8_t> col_valid) {
  const Tensor& ta = val(a);
  require_matrix(ta, "softmax_rows_masked");
  const int64_t m = ta.shape[0], n = ta.shape[1];
  require(static_cast<int64_t>(col_valid.size()) == n,
          "softmax_rows_masked: mask length does not match column count");
  bool any = false;
  for (uint8_t v : col_valid) any = any || v;
  require(any, "softmax_rows_masked: all columns masked");
  Tensor out = Tensor::zeros({m, n});
  for (int64_t i = 0; i < m; ++i) {
    const double* x = ta.values.data() + i * n;
    double* y = out.values.data() + i * n;
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t j = 0; j < n; ++j)
      if (col_valid[j]) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      if (col_valid[j]) {
        y[j] = std::exp(x[j] - mx);
        z += y[j];
      }
    }
    for (int64_t j = 0; j < n; ++j)
      if (col_valid[j]) y[j] /= z;
  }
  bool needs = needs_[a.id];
  Var o = push(std::move(out), needs);
  if (needs) {
    nodes_.push_back(
        {"softmax_rows_masked", o.id,
         [a = a.id, o = o.id, m, n, mask = std::move(col_valid)](Tape& t) {
           const auto& go = *t.grads_[o];
           const auto& y = t.slots_[o].values;
           auto& ga = t.grad_buf(a);
           for (int64_t i = 0; i < m; ++i) {
             double dot = 0.0;
             for (int64_t j = 0; j < n; ++j)
               if (mask[j]) dot += go[i * n + j] * y[i * n + j];
             for (int64_t j = 0; j < n; ++j)
               if (mask[j]) ga[i * n + j] += y[i * n + j] * (go[i * n + j] - dot);
           }
         }});
  }
  return o;
}

Var Tape::layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Tensor& tx = val(x);
  const Tensor& tg = val(gamma);
  const Tensor& tb = val(beta);
  require_matrix(tx, "layer_norm");
  const int64_t m = tx.shape[0], h = tx.shape[1];
  require(tg.ndim() == 1 && tg.shape[0] == h, "layer_norm: gamma shape mismatch");
  require(tb.ndim() == 1 && tb.shape[0] == h, "layer_norm: beta shape mismatch");
  Tensor out = Tensor::zeros({m, h});
  std::vector<double> xhat(static_cast<size_t>(m * h));
  std::vector<double> inv_sigma(static_cast<size_t>(m));
  for (int64_t i = 0; i < m; ++i) {
    const double* row = tx.values.data() + i * h;
    double mean = 0.0;
    for (int64_t j = 0; j < h; ++j) mean += row[j];
    mean /= static_cast<double>(h);
    double var = 0.0;
    for (int64_t j = 0; j < h; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(h);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_sigma[i] = is;
    for (int64_t j = 0; j < h; ++j) {
      const double xh = (row[j] - mean) * is;
      xhat[i * h + j] = xh;
      out.values[i * h + j] = tg.values[j] * xh + tb.values[j];
    }
  }
  bool needs = needs_[x.id] || needs_[gamma.id] || needs_[beta.id];
  Var o = push(std::move(out), needs);
  if (needs) {
    nodes_.push_back(
        {"layer_norm", o.id,
         [x = x.id, g = gamma.id, b = beta.id, o = o.id, m, h, xhat = std::move(xhat),
          inv_sigma = std::move(inv_sigma)](Tape& t) {
           const auto& go = *t.grads_[o];
           const auto& gv = t.slots_[g].values;
           if (t.needs_[g]) {
             auto& gg = t.grad_buf(g);
             for (int64_t i = 0; i < m; ++i)
               for (int64_t j = 0; j < h; ++j) gg[j] += go[i * h + j] * xhat[i * h + j];
           }
           if (t.needs_[b]) {
             auto& gb = t.grad_buf(b);
             for (int64_t i = 0; i < m; ++i)
               for (int64_t j = 0; j < h; ++j) gb[j] += go[i * h + j];
           }
           if (t.needs_[x]) {
             auto& gx = t.grad_buf(x);
             const double invh = 1.0 / static_cast<double>(h);
             for (int64_t i = 0; i < m; ++i) {
               double s1 = 0.0, s2 = 0.0;  // mean(g*gamma), mean(g*gamma*xhat)
               for (int64_t j = 0; j < h; ++j) {
                 const double gg = go[i * h + j] * gv[j];
                 s1 += gg;
                 s2 += gg * xhat[i * h + j];
               }
               s1 *= invh;
               s2 *= invh;
               for (int64_t j = 0; j < h; ++j) {
                 const double gg = go[i * h + j] * gv[j];
                 gx[i * h + j] += (gg - s1 - xhat[i * h + j] * s2) * inv_sigma[i];
               }
             }
           }
         }});
  }
  return o;
}

Var Tape::gelu(Var a) {
  const Tensor& ta = val(a);
  Tensor out = ta;
  out.trainable = false;
  out.grad.reset();
  for (double& v : out.values) {
    const double u = kGeluC * (v + kGeluA * v * v * v);
    v = 0.5 * v * (1.0 + std::tanh(u));
  }
  bool needs = needs_[a.id];
  Var o = push(std::move(out), needs);
  if (needs) {
    nodes_.push_back({"gelu", o.id, [a = a.id, o = o.id](Tape& t) {
                        const auto& go = *t.grads_[o];
                        const auto& x = t.slots_[a].values;
                        auto& ga = t.grad_buf(a);
                        for (size_t i = 0; i < go.size(); ++i) {
                          const double v = x[i];
                          const double u = kGeluC * (v + kGeluA * v * v * v);
                          const double th = std::tanh(u);
                          const double du = kGeluC * (1.0 + 3.0 * kGeluA * v * v);
                          const double d = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du;
                          ga[i] += go[i] * d;
                        }
                      }});
  }
  return o;
}

Var Tape::sum(Var a) {
  const Tensor& ta = val(a);
  double s = 0.0;
  for (double v : ta.values) s += v;
  bool needs = needs_[a.id];
  Var o = push(Tensor({1}, {s}), needs);
  if (needs) {
    nodes_.push_back({"sum", o.id, [a = a.id, o = o.id](Tape& t) {
                        const double g = (*t.grads_[o])[0];
                        auto& ga = t.grad_buf(a);
                        for (double& v : ga) v += g;
                      }});
  }
  return o;
}

Var Tape::cross_entropy(Var logits, const std::vector<int>& labels) {
  const Tensor& tl = val(logits);
  require_matrix(tl, "cross_entropy");
  const int64_t b = tl.shape[0], c = tl.shape[1];
  require(static_cast<int64_t>(labels.size()) == b,
          "cross_entropy: label count does not match batch size");
  for (int y : labels)
    require(y >= 0 && y < c, "cross_entropy: label out of range [0," + std::to_string(c) + ")");
  // Saved softmax probabilities drive the backward rule.
  std::vector<double> probs(static_cast<size_t>(b * c));
  double loss = 0.0;
  for (int64_t i = 0; i < b; ++i) {
    const double* x = tl.values.data() + i * c;
    double mx = x[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (int64_t j = 0; j < c; ++j) {
      probs[i * c + j] = std::exp(x[j] - mx);
      z += probs[i * c + j];
    }
    for (int64_t j = 0; j < c; ++j) probs[i * c + j] /= z;
    loss += (mx + std::log(z)) - x[labels[static_cast<size_t>(i)]];
  }
  loss /= static_cast<double>(b);
  bool needs = needs_[logits.id];
  Var o = push(Tensor({1}, {loss}), needs);
  if (needs) {
    nodes_.push_back({"cross_entropy", o.id,
                      [l = logits.id, o = o.id, b, c, labels, probs = std::move(probs)](Tape& t) {
                        const double g = (*t.grads_[o])[0] / static_cast<double>(b);
                        auto& gl = t.grad_buf(l);
                        for (int64_t i = 0; i < b; ++i) {
                          for (int64_t j = 0; j < c; ++j) gl[i * c + j] += g * probs[i * c + j];
                          gl[i * c + labels[static_cast<size_t>(i)]] -= g;
                        }
                      }});
  }
  return o;
}

}  // namespace tinyattn
