#pragma once

#include <cstdint>
#include <vector>

#include "pcta/engine.hpp"
#include "pcta/graph.hpp"

namespace pcta {

/// Per-edge parameter gradients of the loss L = 1/2 ||label - output||^2.
struct BpGradients {
  std::vector<EdgeGradient> edges;
};

/// Plain feedforward pass over the same edges and caches as
/// forward_predictions; returns a copy of the output activations.
Tensor bp_forward(LayerGraph& g, const Tensor& x);

/// Reverse-mode gradients of the summed (not averaged) half-MSE loss, so
/// that the backprop gradient and the PC free-energy weight gradient are
/// the same object at the PC fixed point.
BpGradients bp_gradients(LayerGraph& g, const Tensor& x, const Tensor& label);

/// theta <- theta - eta_theta * grad through the configured optimizer;
/// returns the above-threshold delta count under the same rule as the PC
/// weight update.
std::size_t bp_train_step(LayerGraph& g, const Tensor& x, const Tensor& label,
                          const TrainConfig& cfg, OptimizerState& opt);

struct EdgeComparison {
  double cosine = 0.0;     // PC update direction vs BP update direction
  double rel_error = 0.0;  // ||pc - bp|| / ||bp||
};

struct EquivalenceReport {
  std::vector<EdgeComparison> edges;
  std::size_t iterations_used = 0;
  double final_max_grad = 0.0;
};

/// Builds a small 10-8-6-4 MLP, runs PC inference under fixed predictions,
/// and compares the converged PC weight gradients against the backprop
/// update direction edge by edge.
EquivalenceReport pc_bp_equivalence_fixture(std::uint64_t seed, Activation hidden_activation,
                                            double eta_v, std::size_t max_iters, double tol);

}  // namespace pcta
