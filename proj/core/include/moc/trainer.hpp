#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "moc/ffn.hpp"
#include "moc/moc_layer.hpp"

namespace moc {

struct TrainConfig {
  double peak_lr = 1e-3;
  double min_lr = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  std::size_t total_steps = 2000;
  double warmup_frac = 0.1;
  std::size_t batch = 64;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t warmup_steps() const noexcept {
    return static_cast<std::size_t>(warmup_frac * static_cast<double>(total_steps));
  }
};

/// AdamW moments for the three weight matrices.
struct OptimizerState {
  FfnWeights m;
  FfnWeights v;
  std::size_t step = 0;

  static OptimizerState zeros_like(const FfnWeights& w);
};

/// One decoupled-weight-decay Adam step with bias correction.
void adamw_step(FfnWeights& w, const FfnGradients& grads, OptimizerState& state,
                const TrainConfig& cfg, double lr);

/// Linear warm-up from 0 over the first floor(warmup_frac * total) steps, then
/// cosine decay to min_lr at total_steps.
double lr_at(std::size_t step, const TrainConfig& cfg);

struct CurvePoint {
  std::size_t step = 0;
  double lr = 0.0;
  double dense_loss = 0.0;
  double moc_loss = 0.0;
};

struct TrainResult {
  std::vector<CurvePoint> curve;  ///< training-batch loss before each update
  double dense_initial_eval = 0.0;
  double dense_final_eval = 0.0;
  double moc_initial_eval = 0.0;
  double moc_final_eval = 0.0;
  FfnWeights teacher;
  FfnWeights dense_student;
  FfnWeights moc_student;
  Matrix eval_inputs;
};

struct TaskSpec {
  std::size_t d = 16;
  std::size_t d_ffn = 43;
  std::size_t eval_samples = 1024;
  /// Teacher weights use FfnWeights::random scaled by this factor.
  double teacher_init_scale = 1.0;
  /// Student weights are drawn like the teacher's, then multiplied by this.
  double student_init_scale = 1.0;
};

/// Paired teacher-regression run. A frozen random dense FFN is the teacher;
/// a dense student and a MoC student start from the same weights and see the
/// same batches. Loss is mean squared error per output entry.
TrainResult train_compare(const TaskSpec& task, const TrainConfig& cfg, const MocConfig& moc_cfg,
                          std::uint64_t task_seed);

/// Mean over entries of (pred - target)^2.
double mse(const Matrix& pred, const Matrix& target);

struct ActivationStats {
  double frac_negative = 0.0;
  /// Value at or above which the top 30% of entries lie.
  double top30_threshold = 0.0;
  std::vector<double> bin_edges;         ///< bins + 1 edges over [min, max]
  std::vector<std::uint64_t> counts;     ///< per bin
  std::vector<double> cumulative;        ///< running fraction, ends at 1
  std::uint64_t elements = 0;
};

ActivationStats activation_stats(const Matrix& g, std::size_t bins);

}  // namespace moc
