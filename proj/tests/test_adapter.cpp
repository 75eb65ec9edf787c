#include <doctest.h>

#include <cmath>

#include "fd_check.hpp"
#include "tinyattn/adapter.hpp"
#include "tinyattn/backbone.hpp"

using namespace tinyattn;

namespace {

TinyAttnAdapter random_adapter(int64_t hidden, int64_t heads, int64_t dim, bool biases,
                               Rng& rng) {
  TinyAttnAdapter a = TinyAttnAdapter::zeros(hidden, heads, dim, biases);
  for (auto& h : a.heads) {
    for (double& v : h.wq.values) v = rng.uniform(-1, 1);
    for (double& v : h.wk.values) v = rng.uniform(-1, 1);
    for (double& v : h.wv.values) v = rng.uniform(-1, 1);
    for (double& v : h.out.values) v = rng.uniform(-1, 1);
    if (biases) {
      for (double& v : h.bq.values) v = rng.uniform(-0.5, 0.5);
      for (double& v : h.bk.values) v = rng.uniform(-0.5, 0.5);
      for (double& v : h.bv.values) v = rng.uniform(-0.5, 0.5);
      for (double& v : h.bout.values) v = rng.uniform(-0.5, 0.5);
    }
  }
  return a;
}

// Oracle for the merge theorem: overwrite every head with the parameter
// averages but keep all M heads.
TinyAttnAdapter head_averaged(const TinyAttnAdapter& a) {
  TinyAttnAdapter avg = a;
  TinyAttnAdapter one = merge_heads(a);
  for (auto& h : avg.heads) h = one.heads[0];
  avg.merged_scale = a.merged_scale;
  return avg;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double m = 0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("hand-computed single-head forward") {
  // Zero q/k gives uniform attention; W_V = [1,0] reads the first feature;
  // O = [0.5,0.5] spreads the pooled value over both hidden dims.
  TinyAttnAdapter a = TinyAttnAdapter::zeros(2, 1, 1, false);
  a.heads[0].wv.values = {1, 0};
  a.heads[0].out.values = {0.5, 0.5};
  Tensor z = Tensor::matrix(2, 2, {1, 2, 3, 4});
  Tensor out = adapter_apply(a, z, 1, 2);
  // values are [1,3], uniform pool = 2, output = O * 2 = [1,1] at both rows
  CHECK(out.values == std::vector<double>{1, 1, 1, 1});
}

TEST_CASE("zero output projections give zero output") {
  Rng rng(1);
  TinyAttnAdapter a = random_adapter(8, 3, 2, true, rng);
  for (auto& h : a.heads) {
    std::fill(h.out.values.begin(), h.out.values.end(), 0.0);
    std::fill(h.bout.values.begin(), h.bout.values.end(), 0.0);
  }
  Tensor z = fd::random_tensor({6, 8}, rng);
  Tensor out = adapter_apply(a, z, 2, 3);
  for (double v : out.values) CHECK(v == 0.0);
}

TEST_CASE("single-position sequence degenerates to a per-token map") {
  Rng rng(2);
  TinyAttnAdapter a = random_adapter(4, 2, 1, true, rng);
  Tensor z = fd::random_tensor({1, 4}, rng);
  Tensor out = adapter_apply(a, z, 1, 1);
  // softmax over one element is 1: output = sum_m O^m (W_V^m' z + b_v) + b_o
  for (int64_t j = 0; j < 4; ++j) {
    double expect = 0;
    for (auto& h : a.heads) {
      double v = h.bv.values[0];
      for (int64_t i = 0; i < 4; ++i) v += h.wv.values[i] * z.values[i];
      expect += h.out.values[j] * v + h.bout.values[j];
    }
    CHECK(out.values[j] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("attention weights sum to 1 over unmasked positions") {
  Rng rng(3);
  TinyAttnAdapter a = random_adapter(8, 2, 1, true, rng);
  Tensor z = fd::random_tensor({5, 8}, rng);
  SUBCASE("unmasked") {
    Tensor w = adapter_attention_weights(a, 1, z);
    for (int64_t i = 0; i < 5; ++i) {
      double s = 0;
      for (int64_t j = 0; j < 5; ++j) s += w.at(i, j);
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  }
  SUBCASE("masked positions excluded") {
    std::vector<uint8_t> mask = {1, 0, 1, 1, 0};
    Tensor w = adapter_attention_weights(a, 0, z, mask);
    for (int64_t i = 0; i < 5; ++i) {
      double s = 0;
      for (int64_t j = 0; j < 5; ++j) s += w.at(i, j);
      CHECK(std::abs(s - 1.0) <= 1e-12);
      CHECK(w.at(i, 1) == 0.0);
      CHECK(w.at(i, 4) == 0.0);
    }
  }
}

TEST_CASE("contextuality: changing another position changes the output at t") {
  Rng rng(4);
  TinyAttnAdapter a = random_adapter(8, 1, 1, true, rng);
  Tensor z = fd::random_tensor({4, 8}, rng);
  Tensor out0 = adapter_apply(a, z, 1, 4);
  Tensor z2 = z;
  for (int64_t j = 0; j < 8; ++j) z2.at(2, j) += 0.5;  // perturb position 2 only
  Tensor out1 = adapter_apply(a, z2, 1, 4);
  // position 0's modification must move: the adapter is not a per-token map
  double diff0 = 0;
  for (int64_t j = 0; j < 8; ++j) diff0 += std::abs(out1.at(0, j) - out0.at(0, j));
  CHECK(diff0 > 1e-6);
}

TEST_CASE("sqrt(D) scaling is exactly 1 at D=1") {
  // With D=1 the scores feed softmax unscaled: forward must match a manual
  // computation that never divides by sqrt(D).
  Rng rng(12);
  TinyAttnAdapter a = random_adapter(3, 1, 1, false, rng);
  Tensor z = fd::random_tensor({3, 3}, rng);
  Tensor out = adapter_apply(a, z, 1, 3);

  const AdapterHead& h = a.heads[0];
  auto dot = [&](const Tensor& w, int64_t row) {
    double s = 0;
    for (int64_t i = 0; i < 3; ++i) s += w.values[i] * z.at(row, i);
    return s;
  };
  for (int64_t t = 0; t < 3; ++t) {
    double zsum = 0, pooled = 0;
    std::vector<double> e(3);
    for (int64_t s = 0; s < 3; ++s) {
      e[s] = std::exp(dot(h.wq, t) * dot(h.wk, s));
      zsum += e[s];
    }
    for (int64_t s = 0; s < 3; ++s) pooled += e[s] / zsum * dot(h.wv, s);
    for (int64_t j = 0; j < 3; ++j)
      CHECK(out.at(t, j) == doctest::Approx(h.out.values[j] * pooled).epsilon(1e-12));
  }
}

TEST_CASE("merge_heads") {
  Rng rng(5);
  SUBCASE("M=1 merge is the identity") {
    TinyAttnAdapter a = random_adapter(8, 1, 1, true, rng);
    a.merged_scale = 1.0;
    TinyAttnAdapter m = merge_heads(a);
    CHECK(m.num_heads() == 1);
    CHECK(m.merged_scale == 1.0);
    CHECK(m.heads[0].wq.values == a.heads[0].wq.values);
    Tensor z = fd::random_tensor({3, 8}, rng);
    CHECK(max_abs_diff(adapter_apply(m, z, 1, 3).values, adapter_apply(a, z, 1, 3).values) == 0.0);
  }
  SUBCASE("identical heads merge bit-exactly") {
    TinyAttnAdapter a = random_adapter(8, 1, 1, true, rng);
    TinyAttnAdapter two = init_from_single(a, 2, rng, 0.0);  // two identical heads
    TinyAttnAdapter merged = merge_heads(two);
    Tensor z = fd::random_tensor({4, 8}, rng);
    CHECK(max_abs_diff(adapter_apply(merged, z, 1, 4).values,
                       adapter_apply(two, z, 1, 4).values) <= 1e-12);
  }
  SUBCASE("merged forward equals head-averaged forward, M=4") {
    for (int trial = 0; trial < 5; ++trial) {
      TinyAttnAdapter a = random_adapter(8, 4, 1, true, rng);
      TinyAttnAdapter merged = merge_heads(a);
      TinyAttnAdapter averaged = head_averaged(a);
      Tensor z = fd::random_tensor({6, 8}, rng);
      CHECK(max_abs_diff(adapter_apply(merged, z, 2, 3).values,
                         adapter_apply(averaged, z, 2, 3).values) <= 1e-12);
    }
  }
  SUBCASE("merging is permutation invariant") {
    TinyAttnAdapter a = random_adapter(8, 3, 2, true, rng);
    TinyAttnAdapter shuffled = a;
    std::swap(shuffled.heads[0], shuffled.heads[2]);
    TinyAttnAdapter m1 = merge_heads(a);
    TinyAttnAdapter m2 = merge_heads(shuffled);
    CHECK(max_abs_diff(m1.heads[0].wq.values, m2.heads[0].wq.values) <= 1e-15);
    CHECK(max_abs_diff(m1.heads[0].out.values, m2.heads[0].out.values) <= 1e-15);
  }
  SUBCASE("merge of a merged adapter is a no-op") {
    TinyAttnAdapter a = random_adapter(8, 4, 1, true, rng);
    TinyAttnAdapter once = merge_heads(a);
    TinyAttnAdapter twice = merge_heads(once);
    CHECK(once.merged_scale == twice.merged_scale);
    CHECK(once.heads[0].out.values == twice.heads[0].out.values);
  }
}

TEST_CASE("init_single_head") {
  SUBCASE("output projections land inside the scaled bound") {
    TinyAttnAdapter a = TinyAttnAdapter::zeros(32, 1, 1, true);
    Rng rng(6);
    init_single_head(a, rng, 0.01);
    for (double v : a.heads[0].out.values) {
      CHECK(v > -0.01);
      CHECK(v < 0.01);
    }
    for (double v : a.heads[0].bout.values) CHECK(v == 0.0);
    const double wb = 1.0 / std::sqrt(32.0);
    for (double v : a.heads[0].wq.values) CHECK(std::abs(v) < wb);
  }
  SUBCASE("scale bound respects D") {
    TinyAttnAdapter a = TinyAttnAdapter::zeros(32, 1, 4, true);
    Rng rng(7);
    init_single_head(a, rng, 0.01);
    const double bound = 0.01 / std::sqrt(4.0);
    for (double v : a.heads[0].out.values) CHECK(std::abs(v) < bound);
  }
  SUBCASE("same seed gives a bit-identical init") {
    TinyAttnAdapter a = TinyAttnAdapter::zeros(16, 1, 1, true);
    TinyAttnAdapter b = TinyAttnAdapter::zeros(16, 1, 1, true);
    Rng r1(8), r2(8);
    init_single_head(a, r1);
    init_single_head(b, r2);
    CHECK(a.heads[0].wq.values == b.heads[0].wq.values);
    CHECK(a.heads[0].out.values == b.heads[0].out.values);
  }
  SUBCASE("requires a single head") {
    TinyAttnAdapter a = TinyAttnAdapter::zeros(16, 2, 1, true);
    Rng rng(9);
    CHECK_THROWS_AS(init_single_head(a, rng), std::invalid_argument);
  }
}

TEST_CASE("init_from_single") {
  Rng rng(10);
  TinyAttnAdapter single = TinyAttnAdapter::zeros(8, 1, 1, true);
  init_single_head(single, rng, 0.5);  // larger init so diffs are visible

  SUBCASE("eps=0 reproduces the single-head forward exactly") {
    TinyAttnAdapter four = init_from_single(single, 4, rng, 0.0);
    CHECK(four.num_heads() == 4);
    Tensor z = fd::random_tensor({5, 8}, rng);
    CHECK(max_abs_diff(adapter_apply(four, z, 1, 5).values,
                       adapter_apply(single, z, 1, 5).values) <= 1e-12);
  }
  SUBCASE("eps=0 also folds in a carried merged_scale") {
    TinyAttnAdapter merged = single;
    merged.merged_scale = 3.0;
    TinyAttnAdapter four = init_from_single(merged, 4, rng, 0.0);
    Tensor z = fd::random_tensor({4, 8}, rng);
    CHECK(max_abs_diff(adapter_apply(four, z, 1, 4).values,
                       adapter_apply(merged, z, 1, 4).values) <= 1e-12);
  }
  SUBCASE("small eps keeps the forward close") {
    TinyAttnAdapter four = init_from_single(single, 4, rng, 1e-3);
    Tensor z = fd::random_tensor({5, 8}, rng);
    const auto a = adapter_apply(four, z, 1, 5).values;
    const auto b = adapter_apply(single, z, 1, 5).values;
    double num = 0, den = 0;
    for (size_t i = 0; i < a.size(); ++i) {
      num += (a[i] - b[i]) * (a[i] - b[i]);
      den += b[i] * b[i];
    }
    CHECK(std::sqrt(num) <= 1e-2 * std::max(1.0, std::sqrt(den)));
  }
  SUBCASE("heads are pairwise distinct when eps > 0") {
    TinyAttnAdapter four = init_from_single(single, 4, rng, 1e-3);
    for (size_t i = 0; i < four.heads.size(); ++i)
      for (size_t j = i + 1; j < four.heads.size(); ++j)
        CHECK(four.heads[i].wq.values != four.heads[j].wq.values);
  }
}

TEST_CASE("count_adapter_params") {
  CHECK(count_adapter_params(24, 1024, 1, 1, false) == 98304);
  CHECK(count_adapter_params(2, 32, 1, 1, false) == 256);
  SUBCASE("linear in the head count") {
    for (int64_t m : {2, 4, 8})
      CHECK(count_adapter_params(2, 32, m, 1, false) ==
            m * count_adapter_params(2, 32, 1, 1, false));
  }
  SUBCASE("bias accounting") {
    CHECK(count_adapter_params(2, 32, 1, 1, true) == 256 + 2 * (3 + 32));
  }
  SUBCASE("matches the live parameter enumeration") {
    for (bool biases : {false, true}) {
      TinyAttnAdapter a = TinyAttnAdapter::zeros(32, 4, 2, biases);
      int64_t live = 0;
      for (auto& p : a.named_params(0)) live += p.tensor->numel();
      CHECK(live == count_adapter_params(1, 32, 4, 2, biases));
      CHECK(a.param_count() == live);
    }
  }
}

TEST_CASE("adapter parameter gradients agree with finite differences") {
  Rng rng(11);
  TinyAttnAdapter a = random_adapter(4, 2, 2, true, rng);
  Tensor z = fd::random_tensor({6, 4}, rng);
  const double h = 1e-5;

  auto loss_of = [&](TinyAttnAdapter& probe) {
    Tape tape;
    Var out = adapter_forward(tape, probe, tape.leaf(z), 2, 3, {});
    return tape.val(tape.sum(out)).values[0];
  };

  // Analytic pass with parameters bound to the tape.
  Tape tape;
  Var out = adapter_forward(tape, a, tape.leaf(z), 2, 3, {});
  tape.backward(tape.sum(out));
  tape.pull_grads();

  double worst = 0;
  for (auto& p : a.named_params(0)) {
    REQUIRE(p.tensor->grad.has_value());
    for (size_t i = 0; i < p.tensor->values.size(); ++i) {
      const double keep = p.tensor->values[i];
      p.tensor->values[i] = keep + h;
      const double up = loss_of(a);
      p.tensor->values[i] = keep - h;
      const double down = loss_of(a);
      p.tensor->values[i] = keep;
      worst = std::max(worst, fd::rel_err((*p.tensor->grad)[i], (up - down) / (2 * h)));
    }
  }
  CHECK(worst <= 1e-4);
}
