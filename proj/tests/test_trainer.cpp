#include <doctest.h>

#include <cmath>

#include "tinyattn/trainer.hpp"

using namespace tinyattn;

namespace {

BackboneConfig tiny_config() {
  BackboneConfig cfg;
  cfg.layers = 2;
  cfg.hidden = 16;
  cfg.attn_heads = 2;
  cfg.ffn = 32;
  cfg.vocab = 32;
  cfg.max_seq = 8;
  return cfg;
}

Model adapter_model(const BackboneConfig& cfg, int64_t classes, uint64_t seed) {
  Model m;
  Rng rng(seed);
  m.backbone = Backbone::init(cfg, rng);
  set_frozen(m.backbone);
  for (int64_t l = 0; l < cfg.layers; ++l) {
    TinyAttnAdapter a = TinyAttnAdapter::zeros(cfg.hidden, 1, 1, true);
    Rng arng(derive_seed(seed, "adapter" + std::to_string(l)));
    init_single_head(a, arng);
    m.adapters.push_back(std::move(a));
  }
  m.placement = Placement::sequential;
  Rng drng(derive_seed(seed, "decoder"));
  m.decoder = Decoder::init(cfg.hidden, classes, drng);
  return m;
}

}  // namespace

TEST_CASE("lr_at anchors") {
  LrSchedule s;
  s.base_lr = 2e-3;
  s.warmup_steps = 10;
  s.total_steps = 110;

  SUBCASE("step 0 with warmup is 0") {
    for (ScheduleKind k : {ScheduleKind::linear, ScheduleKind::cosine, ScheduleKind::constant}) {
      s.kind = k;
      CHECK(lr_at(s, 0) == 0.0);
    }
  }
  SUBCASE("warmup end hits base_lr") {
    for (ScheduleKind k : {ScheduleKind::linear, ScheduleKind::cosine, ScheduleKind::constant}) {
      s.kind = k;
      CHECK(std::abs(lr_at(s, 10) - 2e-3) <= 1e-12);
    }
  }
  SUBCASE("cosine midpoint of decay is base_lr/2") {
    s.kind = ScheduleKind::cosine;
    CHECK(std::abs(lr_at(s, 60) - 1e-3) <= 1e-12);
  }
  SUBCASE("linear decays to zero, constant stays") {
    s.kind = ScheduleKind::linear;
    CHECK(lr_at(s, 110) == 0.0);
    CHECK(std::abs(lr_at(s, 60) - 1e-3) <= 1e-12);
    s.kind = ScheduleKind::constant;
    CHECK(lr_at(s, 110) == 2e-3);
  }
  SUBCASE("steps past total clamp to the final value") {
    s.kind = ScheduleKind::linear;
    CHECK(lr_at(s, 200) == lr_at(s, 110));
    s.kind = ScheduleKind::cosine;
    CHECK(lr_at(s, 200) == lr_at(s, 110));
  }
  SUBCASE("continuity at the warmup boundary") {
    for (ScheduleKind k : {ScheduleKind::linear, ScheduleKind::cosine, ScheduleKind::constant}) {
      s.kind = k;
      const double before = lr_at(s, 9);
      const double at = lr_at(s, 10);
      const double after = lr_at(s, 11);
      CHECK(std::abs(at - before) < 0.11 * s.base_lr);
      CHECK(std::abs(after - at) < 0.11 * s.base_lr);
    }
  }
  SUBCASE("invalid warmup rejected") {
    s.warmup_steps = 200;
    CHECK_THROWS_AS(lr_at(s, 0), std::invalid_argument);
  }
}

TEST_CASE("adamw_step hand-computed examples") {
  auto one_param = [](double value, double g) {
    Tensor t({1}, {value}, true);
    t.grad = std::vector<double>{g};
    return t;
  };

  SUBCASE("p=1, g=1, lr=0.1, wd=0") {
    Tensor p = one_param(1.0, 1.0);
    std::vector<NamedParam> params{{"p", &p}};
    AdamWState st;
    adamw_step(st, params, 0.1);
    // m-hat = v-hat = 1 exactly after one step; p' = 1 - 0.1/(1 + 1e-8)
    const double expected = 1.0 - 0.1 * 1.0 / (std::sqrt(1.0) + 1e-8);
    CHECK(std::abs(p.values[0] - expected) <= 1e-12);
    CHECK(std::abs(p.values[0] - 0.9) <= 1e-8);
  }
  SUBCASE("same with wd=0.01 subtracts lr*wd*p") {
    Tensor p = one_param(1.0, 1.0);
    std::vector<NamedParam> params{{"p", &p}};
    AdamWState st;
    st.weight_decay = 0.01;
    adamw_step(st, params, 0.1);
    const double expected = 1.0 - 0.1 * 1.0 / (std::sqrt(1.0) + 1e-8) - 0.1 * 0.01 * 1.0;
    CHECK(std::abs(p.values[0] - expected) <= 1e-12);
    CHECK(std::abs(p.values[0] - 0.899) <= 1e-8);
  }
  SUBCASE("zero gradient and zero decay leave p unchanged") {
    Tensor p = one_param(0.7, 0.0);
    std::vector<NamedParam> params{{"p", &p}};
    AdamWState st;
    adamw_step(st, params, 0.1);
    CHECK(p.values[0] == 0.7);
  }
  SUBCASE("non-trainable parameters are untouched") {
    Tensor p = one_param(1.0, 1.0);
    p.trainable = false;
    std::vector<NamedParam> params{{"p", &p}};
    AdamWState st;
    adamw_step(st, params, 0.1);
    CHECK(p.values[0] == 1.0);
  }
  SUBCASE("NaN gradient aborts naming the parameter") {
    Tensor p = one_param(1.0, std::nan(""));
    std::vector<NamedParam> params{{"adapter.layer0.head0.wq", &p}};
    AdamWState st;
    CHECK_THROWS_WITH_AS(adamw_step(st, params, 0.1),
                         doctest::Contains("adapter.layer0.head0.wq"), NumericError);
  }
  SUBCASE("two steps follow the recurrence") {
    Tensor p = one_param(1.0, 0.5);
    std::vector<NamedParam> params{{"p", &p}};
    AdamWState st;
    adamw_step(st, params, 0.1);
    p.grad = std::vector<double>{-0.25};
    adamw_step(st, params, 0.1);
    // recompute by hand
    double m = 0.1 * 0.5;
    double v = 0.001 * 0.25;
    double x = 1.0 - 0.1 * (m / 0.1) / (std::sqrt(v / 0.001) + 1e-8);
    m = 0.9 * m + 0.1 * -0.25;
    v = 0.999 * v + 0.001 * 0.0625;
    const double bc1 = 1.0 - 0.9 * 0.9, bc2 = 1.0 - 0.999 * 0.999;
    x -= 0.1 * (m / bc1) / (std::sqrt(v / bc2) + 1e-8);
    CHECK(std::abs(p.values[0] - x) <= 1e-12);
  }
}

TEST_CASE("loss decreases over the first 10 steps on a fixed batch") {
  BackboneConfig cfg = tiny_config();
  TaskSpec task = make_task("majority", cfg.vocab, cfg.max_seq, 3);
  bool any_passed = false;
  for (uint64_t seed : {1ull, 2ull, 3ull}) {
    Model m = adapter_model(cfg, task.classes, seed);
    Rng rng(derive_seed(seed, "fixed-batch"));
    Batch batch = generate_batch(task, rng, 16);

    auto params = m.trainable_params();
    AdamWState opt;
    double first = 0, last = 0;
    for (int step = 0; step < 10; ++step) {
      ModelForward f;
      model_forward(m, batch, f, true);
      const double loss = f.tape.val(f.loss).values[0];
      if (step == 0) first = loss;
      last = loss;
      f.tape.backward(f.loss);
      f.tape.pull_grads();
      adamw_step(opt, params, 1e-3);
    }
    if (last < first) {
      any_passed = true;
      break;
    }
  }
  CHECK(any_passed);
}

TEST_CASE("train: report layout, determinism, freezing") {
  BackboneConfig cfg = tiny_config();
  TaskSpec task = make_task("majority", cfg.vocab, cfg.max_seq, 5);
  TrainerConfig tc;
  tc.epochs = 3;
  tc.batch_size = 16;
  tc.train_examples = 64;
  tc.val_examples = 64;
  tc.lr = 1e-3;
  tc.seed = 9;
  tc.mode = TrainMode::adapter_tune;

  SUBCASE("two evaluations per epoch, strictly increasing steps") {
    Model m = adapter_model(cfg, task.classes, 1);
    TrainReport r = train(m, task, tc);
    CHECK(static_cast<int64_t>(r.records.size()) == 2 * tc.epochs);
    for (size_t i = 1; i < r.records.size(); ++i)
      CHECK(r.records[i].step > r.records[i - 1].step);
    CHECK(r.best_val_accuracy >= 0.0);
    CHECK(r.trainable_params ==
          count_adapter_params(cfg.layers, cfg.hidden, 1, 1, true) + cfg.hidden * 2 + 2);
  }
  SUBCASE("same seed reproduces the metric trace exactly") {
    Model m1 = adapter_model(cfg, task.classes, 1);
    Model m2 = adapter_model(cfg, task.classes, 1);
    TrainReport r1 = train(m1, task, tc);
    TrainReport r2 = train(m2, task, tc);
    REQUIRE(r1.records.size() == r2.records.size());
    for (size_t i = 0; i < r1.records.size(); ++i) {
      CHECK(r1.records[i].train_loss == r2.records[i].train_loss);
      CHECK(r1.records[i].val_accuracy == r2.records[i].val_accuracy);
      CHECK(r1.records[i].lr == r2.records[i].lr);
    }
  }
  SUBCASE("adapter_tune leaves the backbone bit-identical") {
    Model m = adapter_model(cfg, task.classes, 2);
    std::vector<std::vector<double>> snapshot;
    for (auto& p : m.backbone.named_params()) snapshot.push_back(p.tensor->values);
    (void)train(m, task, tc);
    size_t i = 0;
    for (auto& p : m.backbone.named_params()) CHECK(p.tensor->values == snapshot[i++]);
  }
  SUBCASE("optimizer touches exactly the trainable set") {
    Model m = adapter_model(cfg, task.classes, 4);
    std::vector<std::vector<double>> before;
    for (auto& p : m.named_params()) before.push_back(p.tensor->values);
    (void)train(m, task, tc);
    size_t i = 0;
    for (auto& p : m.named_params()) {
      if (p.tensor->trainable)
        CHECK(p.tensor->values != before[i]);
      else
        CHECK(p.tensor->values == before[i]);
      ++i;
    }
  }
  SUBCASE("adapter_tune on an unfrozen backbone is rejected") {
    Model m = adapter_model(cfg, task.classes, 1);
    set_trainable(m.backbone);
    CHECK_THROWS_AS(train(m, task, tc), std::invalid_argument);
  }
  SUBCASE("decoder/task class mismatch is rejected") {
    Model m = adapter_model(cfg, 3, 1);
    CHECK_THROWS_AS(train(m, task, tc), std::invalid_argument);
  }
}
