#include "moc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "moc/random.hpp"

namespace moc {

void TrainConfig::validate() const {
  if (!(peak_lr > 0.0)) throw std::invalid_argument("train.peak_lr must be positive");
  if (min_lr < 0.0 || min_lr > peak_lr) {
    throw std::invalid_argument("train.min_lr must lie in [0, peak_lr]");
  }
  if (total_steps == 0) throw std::invalid_argument("train.total_steps must be positive");
  if (!(warmup_frac > 0.0 && warmup_frac < 1.0)) {
    throw std::invalid_argument("train.warmup_frac must lie in (0, 1)");
  }
  if (batch == 0) throw std::invalid_argument("train.batch must be positive");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw std::invalid_argument("train.beta1/beta2 must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw std::invalid_argument("train.eps must be positive");
  if (weight_decay < 0.0) throw std::invalid_argument("train.weight_decay must be >= 0");
}

OptimizerState OptimizerState::zeros_like(const FfnWeights& w) {
  w.validate();
  return {FfnWeights::zeros(w.d(), w.d_ffn()), FfnWeights::zeros(w.d(), w.d_ffn()), 0};
}

namespace {

void adamw_matrix(Matrix& w, const Matrix& g, Matrix& m, Matrix& v, const TrainConfig& cfg,
                  double lr, double bc1, double bc2) {
  require_same_shape(w, g, "adamw_step");
  require_same_shape(w, m, "adamw_step");
  require_same_shape(w, v, "adamw_step");
  auto wd = w.data();
  auto gd = g.data();
  auto md = m.data();
  auto vd = v.data();
  for (std::size_t i = 0; i < wd.size(); ++i) {
    md[i] = cfg.beta1 * md[i] + (1.0 - cfg.beta1) * gd[i];
    vd[i] = cfg.beta2 * vd[i] + (1.0 - cfg.beta2) * gd[i] * gd[i];
    const double m_hat = md[i] / bc1;
    const double v_hat = vd[i] / bc2;
    wd[i] -= lr * (m_hat / (std::sqrt(v_hat) + cfg.eps) + cfg.weight_decay * wd[i]);
  }
}

}  // namespace

void adamw_step(FfnWeights& w, const FfnGradients& grads, OptimizerState& state,
                const TrainConfig& cfg, double lr) {
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  adamw_matrix(w.gate, grads.gate, state.m.gate, state.v.gate, cfg, lr, bc1, bc2);
  adamw_matrix(w.up, grads.up, state.m.up, state.v.up, cfg, lr, bc1, bc2);
  adamw_matrix(w.down, grads.down, state.m.down, state.v.down, cfg, lr, bc1, bc2);
}

double lr_at(std::size_t step, const TrainConfig& cfg) {
  if (step > cfg.total_steps) {
    throw std::out_of_range("lr_at: step " + std::to_string(step) + " beyond total_steps " +
                            std::to_string(cfg.total_steps));
  }
  const std::size_t warmup = cfg.warmup_steps();
  if (step < warmup) {
    return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(warmup);
  }
  const std::size_t decay_steps = cfg.total_steps - warmup;
  if (decay_steps == 0) return cfg.peak_lr;
  const double progress = static_cast<double>(step - warmup) / static_cast<double>(decay_steps);
  return cfg.min_lr +
         (cfg.peak_lr - cfg.min_lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

double mse(const Matrix& pred, const Matrix& target) {
  require_same_shape(pred, target, "mse");
  double acc = 0.0;
  auto p = pred.data();
  auto t = target.data();
  for (std::size_t i = 0; i < p.size(); ++i) acc += (p[i] - t[i]) * (p[i] - t[i]);
  return acc / static_cast<double>(p.size());
}

namespace {

// d mse / d pred
Matrix mse_grad(const Matrix& pred, const Matrix& target) {
  return scale(subtract(pred, target), 2.0 / static_cast<double>(pred.size()));
}

double eval_moc(const Matrix& x, const Matrix& y, const FfnWeights& w, const MocConfig& cfg) {
  return mse(moc_forward(x, w, cfg).out, y);
}

double eval_dense(const Matrix& x, const Matrix& y, const FfnWeights& w) {
  return mse(ffn_forward(x, w).out, y);
}

}  // namespace

TrainResult train_compare(const TaskSpec& task, const TrainConfig& cfg, const MocConfig& moc_cfg,
                          std::uint64_t task_seed) {
  cfg.validate();
  moc_cfg.validate(task.d_ffn);
  if (task.d == 0 || task.eval_samples == 0) {
    throw std::invalid_argument("train_compare: d and eval_samples must be positive");
  }

  TrainResult res;
  Rng task_rng(task_seed);
  res.teacher = FfnWeights::random(task.d, task.d_ffn, task_rng);
  for (Matrix* m : {&res.teacher.gate, &res.teacher.up, &res.teacher.down})
    *m = scale(*m, task.teacher_init_scale);
  res.eval_inputs = random_normal(task.eval_samples, task.d, task_rng);
  const Matrix eval_targets = ffn_forward(res.eval_inputs, res.teacher).out;

  Rng rng(cfg.seed);
  res.dense_student = FfnWeights::random(task.d, task.d_ffn, rng);
  for (Matrix* m : {&res.dense_student.gate, &res.dense_student.up, &res.dense_student.down})
    *m = scale(*m, task.student_init_scale);
  res.moc_student = res.dense_student;
  OptimizerState dense_state = OptimizerState::zeros_like(res.dense_student);
  OptimizerState moc_state = OptimizerState::zeros_like(res.moc_student);

  res.dense_initial_eval = eval_dense(res.eval_inputs, eval_targets, res.dense_student);
  res.moc_initial_eval = eval_moc(res.eval_inputs, eval_targets, res.moc_student, moc_cfg);

  res.curve.reserve(cfg.total_steps);
  for (std::size_t step = 0; step < cfg.total_steps; ++step) {
    // One batch feeds both students.
    const Matrix x = random_normal(cfg.batch, task.d, rng);
    const Matrix y = ffn_forward(x, res.teacher).out;
    const double lr = lr_at(step, cfg);

    auto dense = ffn_forward(x, res.dense_student);
    const FfnGradients dense_grads =
        ffn_backward(dense.tape, mse_grad(dense.out, y), res.dense_student);

    auto sparse = moc_forward(x, res.moc_student, moc_cfg);
    const FfnGradients moc_grads =
        moc_backward(sparse.tape, mse_grad(sparse.out, y), res.moc_student, moc_cfg);

    res.curve.push_back({step, lr, mse(dense.out, y), mse(sparse.out, y)});
    adamw_step(res.dense_student, dense_grads, dense_state, cfg, lr);
    adamw_step(res.moc_student, moc_grads, moc_state, cfg, lr);
  }

  res.dense_final_eval = eval_dense(res.eval_inputs, eval_targets, res.dense_student);
  res.moc_final_eval = eval_moc(res.eval_inputs, eval_targets, res.moc_student, moc_cfg);
  return res;
}

ActivationStats activation_stats(const Matrix& g, std::size_t bins) {
  if (g.empty()) throw std::invalid_argument("activation_stats: empty matrix");
  if (bins < 2) throw std::invalid_argument("activation_stats: need at least 2 bins");
  if (!g.all_finite()) throw std::invalid_argument("activation_stats: non-finite entries");

  ActivationStats st;
  const auto values = g.data();
  const std::size_t n = values.size();
  st.elements = n;
  st.frac_negative =
      static_cast<double>(std::count_if(values.begin(), values.end(), [](double v) { return v < 0.0; })) /
      static_cast<double>(n);

  std::vector<double> sorted(values.begin(), values.end());
  // The top ceil(0.3 n) entries are >= the threshold.
  const std::size_t top = (3 * n + 9) / 10;
  const std::size_t idx = n - std::max<std::size_t>(top, 1);
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(idx), sorted.end());
  st.top30_threshold = sorted[idx];

  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  const double width = (hi - lo) / static_cast<double>(bins);
  st.bin_edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) st.bin_edges[b] = lo + width * static_cast<double>(b);
  st.bin_edges.back() = hi;
  st.counts.assign(bins, 0);
  for (double v : values) {
    std::size_t b = width > 0.0 ? static_cast<std::size_t>((v - lo) / width) : 0;
    st.counts[std::min(b, bins - 1)] += 1;
  }
  st.cumulative.resize(bins);
  std::uint64_t running = 0;
  for (std::size_t b = 0; b < bins; ++b) {
    running += st.counts[b];
    st.cumulative[b] = static_cast<double>(running) / static_cast<double>(n);
  }
  return st;
}

}  // namespace moc
