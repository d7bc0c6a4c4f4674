#include <gtest/gtest.h>

#include <cmath>
#include <utility>

#include "moc/random.hpp"
#include "moc/trainer.hpp"

namespace moc {
namespace {

FfnGradients zero_grads(const FfnWeights& w) {
  FfnGradients g;
  g.gate = Matrix(w.d(), w.d_ffn());
  g.up = Matrix(w.d(), w.d_ffn());
  g.down = Matrix(w.d_ffn(), w.d());
  return g;
}

TEST(AdamW, ZeroGradientsLeaveWeights) {
  Rng rng(1);
  FfnWeights w = FfnWeights::random(3, 5, rng);
  const FfnWeights before = w;
  auto state = OptimizerState::zeros_like(w);
  TrainConfig cfg;
  for (int i = 0; i < 5; ++i) adamw_step(w, zero_grads(w), state, cfg, 1e-2);
  EXPECT_EQ(w, before);
  EXPECT_EQ(state.step, 5u);
}

TEST(AdamW, FirstStepMovesAgainstGradient) {
  FfnWeights w = FfnWeights::zeros(1, 1);
  auto state = OptimizerState::zeros_like(w);
  FfnGradients g = zero_grads(w);
  g.gate(0, 0) = 1.0;
  g.up(0, 0) = -3.0;
  g.down(0, 0) = 1e-4;
  TrainConfig cfg;
  const double lr = 1e-3;
  adamw_step(w, g, state, cfg, lr);
  // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
  EXPECT_NEAR(w.gate(0, 0), -lr / (1.0 + cfg.eps), 1e-18);
  EXPECT_NEAR(w.up(0, 0), lr * 3.0 / (3.0 + cfg.eps), 1e-18);
  EXPECT_LT(w.down(0, 0), 0.0);
  EXPECT_NEAR(w.down(0, 0), -lr * 1e-4 / (1e-4 + cfg.eps), 1e-18);
}

TEST(AdamW, WeightDecayShrinks) {
  FfnWeights w = FfnWeights::zeros(1, 1);
  w.gate(0, 0) = 2.0;
  auto state = OptimizerState::zeros_like(w);
  TrainConfig cfg;
  cfg.weight_decay = 0.1;
  adamw_step(w, zero_grads(w), state, cfg, 0.5);
  EXPECT_DOUBLE_EQ(w.gate(0, 0), 2.0 - 0.5 * 0.1 * 2.0);
}

TEST(AdamW, QuadraticLossDecreasesMonotonically) {
  // L = 0.5 * sum (w - t)^2, gradient w - t.
  Rng rng(2);
  FfnWeights w = FfnWeights::random(3, 4, rng);
  const FfnWeights target = FfnWeights::random(3, 4, rng);
  auto state = OptimizerState::zeros_like(w);
  TrainConfig cfg;
  auto loss = [&] {
    double acc = 0.0;
    for (auto [p, q] : {std::pair{&w.gate, &target.gate}, std::pair{&w.up, &target.up},
                        std::pair{&w.down, &target.down}}) {
      for (std::size_t i = 0; i < p->size(); ++i) {
        const double e = p->data()[i] - q->data()[i];
        acc += 0.5 * e * e;
      }
    }
    return acc;
  };
  double prev = loss();
  for (int i = 0; i < 10; ++i) {
    FfnGradients g;
    g.gate = subtract(w.gate, target.gate);
    g.up = subtract(w.up, target.up);
    g.down = subtract(w.down, target.down);
    adamw_step(w, g, state, cfg, 1e-3);
    const double now = loss();
    EXPECT_LT(now, prev);
    prev = now;
  }
}

TEST(AdamW, ShapeMismatchRejected) {
  Rng rng(3);
  FfnWeights w = FfnWeights::random(3, 4, rng);
  auto state = OptimizerState::zeros_like(w);
  FfnGradients g = zero_grads(w);
  g.up = Matrix(4, 3);
  EXPECT_THROW(adamw_step(w, g, state, TrainConfig{}, 1e-3), ShapeError);
}

TEST(Schedule, Endpoints) {
  TrainConfig cfg;
  cfg.total_steps = 2000;
  EXPECT_EQ(cfg.warmup_steps(), 200u);
  EXPECT_EQ(lr_at(0, cfg), 0.0);
  EXPECT_DOUBLE_EQ(lr_at(100, cfg), 0.5 * cfg.peak_lr);
  EXPECT_DOUBLE_EQ(lr_at(200, cfg), cfg.peak_lr);
  EXPECT_NEAR(lr_at(2000, cfg), 0.0, 1e-20);
  EXPECT_NEAR(lr_at(1100, cfg), 0.5 * cfg.peak_lr, 1e-15);
  EXPECT_THROW(lr_at(2001, cfg), std::out_of_range);
}

TEST(Schedule, ContinuousAtJunctionAndMinLr) {
  TrainConfig cfg;
  cfg.total_steps = 1000;
  cfg.min_lr = 1e-5;
  const double before = lr_at(99, cfg);
  const double at = lr_at(100, cfg);
  const double after = lr_at(101, cfg);
  EXPECT_DOUBLE_EQ(at, cfg.peak_lr);
  EXPECT_NEAR(before, cfg.peak_lr, cfg.peak_lr / 100 + 1e-15);
  EXPECT_NEAR(after, cfg.peak_lr, 1e-6);
  EXPECT_DOUBLE_EQ(lr_at(1000, cfg), cfg.min_lr);
  for (std::size_t s = 100; s < 1000; ++s) EXPECT_GE(lr_at(s, cfg), lr_at(s + 1, cfg));
}

TEST(Schedule, ConfigValidation) {
  TrainConfig cfg;
  cfg.warmup_frac = 0.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.min_lr = 1.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.total_steps = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TrainConfig short_run() {
  TrainConfig cfg;
  cfg.total_steps = 60;
  cfg.batch = 16;
  cfg.seed = 5;
  return cfg;
}

TEST(TrainCompare, FullMaskCurveIsBitwiseDense) {
  TaskSpec task;
  task.d = 6;
  task.d_ffn = 10;
  task.eval_samples = 64;
  const auto r = train_compare(task, short_run(), MocConfig::top_k(10), 3);
  ASSERT_EQ(r.curve.size(), 60u);
  for (const auto& p : r.curve) EXPECT_EQ(p.dense_loss, p.moc_loss) << "step " << p.step;
  EXPECT_EQ(r.dense_student, r.moc_student);
  EXPECT_EQ(r.dense_final_eval, r.moc_final_eval);
}

TEST(TrainCompare, Deterministic) {
  TaskSpec task;
  task.d = 6;
  task.d_ffn = 10;
  task.eval_samples = 64;
  const auto a = train_compare(task, short_run(), MocConfig::top_k(3), 3);
  const auto b = train_compare(task, short_run(), MocConfig::top_k(3), 3);
  ASSERT_EQ(a.curve.size(), b.curve.size());
  for (std::size_t i = 0; i < a.curve.size(); ++i) {
    EXPECT_EQ(a.curve[i].dense_loss, b.curve[i].dense_loss);
    EXPECT_EQ(a.curve[i].moc_loss, b.curve[i].moc_loss);
    EXPECT_EQ(a.curve[i].lr, b.curve[i].lr);
  }
  EXPECT_EQ(a.moc_student, b.moc_student);
}

TEST(TrainCompare, LearnsSomething) {
  TaskSpec task;
  task.d = 6;
  task.d_ffn = 10;
  task.eval_samples = 128;
  TrainConfig cfg = short_run();
  cfg.total_steps = 300;
  cfg.peak_lr = 3e-3;
  const auto r = train_compare(task, cfg, MocConfig::top_k(3), 3);
  EXPECT_LT(r.dense_final_eval, r.dense_initial_eval);
  EXPECT_LT(r.moc_final_eval, r.moc_initial_eval);
}

TEST(TrainCompare, RejectsBadK) {
  TaskSpec task;
  task.d = 4;
  task.d_ffn = 8;
  EXPECT_THROW(train_compare(task, short_run(), MocConfig::top_k(9), 0), std::invalid_argument);
}

TEST(Mse, Value) {
  EXPECT_DOUBLE_EQ(mse(Matrix{{1.0, 2.0}}, Matrix{{0.0, 4.0}}), 2.5);
  EXPECT_THROW(mse(Matrix(1, 2), Matrix(2, 1)), ShapeError);
}

TEST(Stats, SmallExample) {
  const auto st = activation_stats(Matrix{{-1.0, -2.0, 3.0, 4.0}}, 4);
  EXPECT_DOUBLE_EQ(st.frac_negative, 0.5);
  EXPECT_EQ(st.elements, 4u);
  // top ceil(1.2) = 2 entries are 3 and 4
  EXPECT_DOUBLE_EQ(st.top30_threshold, 3.0);
  EXPECT_EQ(st.bin_edges.front(), -2.0);
  EXPECT_EQ(st.bin_edges.back(), 4.0);
  EXPECT_EQ(st.counts, (std::vector<std::uint64_t>{2, 0, 0, 2}));
  EXPECT_EQ(st.cumulative.back(), 1.0);
}

TEST(Stats, AllPositive) {
  Matrix g(1, 10);
  for (std::size_t i = 0; i < 10; ++i) g(0, i) = static_cast<double>(i + 1);
  const auto st = activation_stats(g, 5);
  EXPECT_EQ(st.frac_negative, 0.0);
  EXPECT_EQ(st.top30_threshold, 8.0);  // 8, 9, 10 are the top 30%
}

TEST(Stats, ConstantMatrix) {
  const auto st = activation_stats(Matrix(3, 3, 1.5), 4);
  EXPECT_EQ(st.counts[0], 9u);
  EXPECT_EQ(st.cumulative.back(), 1.0);
}

TEST(Stats, Rejections) {
  EXPECT_THROW(activation_stats(Matrix(0, 0), 4), std::invalid_argument);
  EXPECT_THROW(activation_stats(Matrix(1, 1), 1), std::invalid_argument);
}

TEST(Stats, StandardNormalMillion) {
  Rng rng(11);
  const Matrix g = random_normal(1000, 1000, rng);
  const auto st = activation_stats(g, 100);
  EXPECT_NEAR(st.frac_negative, 0.5, 0.01);
  // 70th percentile of N(0,1) is about 0.5244
  EXPECT_NEAR(st.top30_threshold, 0.5244, 0.01);
  std::uint64_t total = 0;
  for (auto c : st.counts) total += c;
  EXPECT_EQ(total, 1'000'000u);
  for (std::size_t i = 1; i < st.cumulative.size(); ++i)
    EXPECT_GE(st.cumulative[i], st.cumulative[i - 1]);
  EXPECT_EQ(st.cumulative.back(), 1.0);
  // Mass at or above the threshold is 30% up to one bin.
  double above = 0.0;
  for (std::size_t b = 0; b < st.counts.size(); ++b)
    if (st.bin_edges[b + 1] > st.top30_threshold) above += static_cast<double>(st.counts[b]);
  EXPECT_GE(above / 1e6, 0.3);
}

}  // namespace
}  // namespace moc
