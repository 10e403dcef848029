#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "pcta/data.hpp"
#include "pcta/graph.hpp"

namespace pcta {

enum class OptimizerKind { kSgd, kAdam };

struct TrainConfig {
  double eta_v = 0.1;               // inference learning rate
  double eta_theta = 0.01;          // weight learning rate
  std::size_t max_inference_iters = 100;
  double convergence_tol = 0.0;     // 0 = budget-only, runs all iterations
  bool amortize = true;             // PCN-TA when true, baseline PCN when false
  OptimizerKind optimizer = OptimizerKind::kSgd;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double update_count_threshold = 0.0;  // 0 counts every non-exactly-zero delta

  void validate() const;
};

struct SampleResult {
  std::size_t iterations_used = 0;
  double final_vfe = 0.0;
  std::size_t nonzero_weight_updates = 0;
  std::size_t predicted_class = 0;
};

/// Per-edge moment accumulators for Adam; empty and unused under SGD.
struct OptimizerState {
  std::size_t step_count = 0;
  std::vector<EdgeGradient> first_moment;
  std::vector<EdgeGradient> second_moment;

  void reset() {
    step_count = 0;
    first_moment.clear();
    second_moment.clear();
  }
};

/// Clamps the output node's state to the label for the inference phase.
void clamp_output(LayerGraph& g, const Tensor& label);

/// One simultaneous state update v <- v + eta_v * g_i over all hidden
/// nodes, gradients taken from the pre-step state. Returns the max
/// infinity-norm of the applied gradients.
double inference_step(LayerGraph& g, double eta_v);

/// Repeats inference_step until max_grad_norm < convergence_tol or the
/// iteration budget runs out; returns the number of steps taken.
std::size_t run_inference(LayerGraph& g, const TrainConfig& cfg);

/// Applies theta <- theta + eta_theta * weight_gradient through the
/// configured optimizer; returns how many scalar parameters moved by more
/// than update_count_threshold in absolute value.
std::size_t weight_update(LayerGraph& g, const TrainConfig& cfg, OptimizerState& opt);

/// Shared optimizer step: applies the given per-edge ascent directions to
/// the parameters and returns the above-threshold delta count. Used by both
/// the PC weight update and the backprop trainer.
std::size_t apply_param_step(LayerGraph& g, const std::vector<EdgeGradient>& directions,
                             const TrainConfig& cfg, OptimizerState& opt);

std::size_t predicted_class(const LayerGraph& g);

std::pair<SampleResult, StateSnapshot> train_first_sample(LayerGraph& g, const Tensor& x,
                                                          const Tensor& label,
                                                          const TrainConfig& cfg,
                                                          OptimizerState& opt);

std::pair<SampleResult, StateSnapshot> train_subsequent_sample(LayerGraph& g, const Tensor& x,
                                                               const Tensor& label,
                                                               const StateSnapshot& prev,
                                                               const TrainConfig& cfg,
                                                               OptimizerState& opt);

/// Online pass over the stream: train_first_sample on frame 0, then
/// train_subsequent_sample with the threaded snapshot.
std::vector<SampleResult> train_epoch(LayerGraph& g, const FrameStream& stream,
                                      const TrainConfig& cfg, OptimizerState& opt);

/// Fraction of test frames whose output-prediction argmax matches the
/// label. Restores all node buffers afterwards; weights are untouched.
double evaluate(LayerGraph& g, const FrameStream& testset);

}  // namespace pcta
