#pragma once

#include <deque>
#include <functional>
#include <vector>

#include "tinyattn/tensor.hpp"

namespace tinyattn {

// Handle to a tensor registered on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Records one node per operation in execution order;
// backward() replays the nodes in reverse and accumulates adjoints for
// every tensor that lies on a path from a trainable leaf to the loss.
//
// Tensors registered through param() stay bound to their persistent
// storage so pull_grads() can hand gradients back to the optimizer.
// Single-threaded per training run.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  // Constant input (no gradient unless t.trainable is set).
  Var leaf(Tensor t);
  // Trainable-or-frozen model parameter; remembered for pull_grads().
  Var param(Tensor& t);

  const Tensor& val(Var v) const { return slots_[check(v)]; }
  // Adjoint of v after backward(); nullptr when none was stored.
  const std::vector<double>* grad(Var v) const;

  // Populates adjoints of everything reachable from `loss` that needs one.
  // `loss` must be scalar.
  void backward(Var loss);

  // Copies adjoints into the grad slot of every bound trainable parameter
  // (zeros when the loss did not depend on it).
  void pull_grads();

  size_t num_nodes() const { return nodes_.size(); }

  // --- differentiable operations -------------------------------------
  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var add(Var a, Var b);
  // Broadcast-add a 1-D bias over every row of a.
  Var add_rowvec(Var a, Var bias);
  Var scale(Var a, double c);
  Var slice_rows(Var a, int64_t row0, int64_t nrows);
  Var slice_cols(Var a, int64_t col0, int64_t ncols);
  Var concat_cols(const std::vector<Var>& parts);
  Var concat_rows(const std::vector<Var>& parts);
  // Gathers rows of `table` by index; used for embedding lookup and for
  // pulling the CLS positions out of a flattened sequence stream.
  Var select_rows(Var table, std::vector<int64_t> idx);
  Var softmax_rows(Var a);
  // Softmax over the columns flagged valid; masked columns produce 0.
  Var softmax_rows_masked(Var a, std::vector<uint8_t> col_valid);
  Var layer_norm(Var x, Var gamma, Var beta, double eps);
  Var gelu(Var a);
  Var sum(Var a);
  // Mean negative log-softmax probability of the true class per row.
  Var cross_entropy(Var logits, const std::vector<int>& labels);

 private:
  struct Node {
    const char* op;
    int out;
    std::function<void(Tape&)> back;
  };

  int check(Var v) const {
    if (!v.valid() || v.id >= static_cast<int>(slots_.size()))
      throw std::logic_error("Tape: invalid Var");
    return v.id;
  }

  Var push(Tensor t, bool needs);
  std::vector<double>& grad_buf(int id);
  void add_grad(int id, const std::vector<double>& g);

  // Deques keep val()/grad() references stable while later ops append.
  std::deque<Tensor> slots_;
  std::vector<uint8_t> needs_;                       // on a path from a trainable leaf
  std::deque<std::optional<std::vector<double>>> grads_;
  std::vector<Node> nodes_;
  std::vector<std::pair<Tensor*, int>> bindings_;    // persistent param -> slot
};

}  // namespace tinyattn
