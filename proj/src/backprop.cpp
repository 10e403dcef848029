#include "pcta/backprop.hpp"

#include <cmath>
#include <stdexcept>

#include "pcta/rng.hpp"

namespace pcta {

Tensor bp_forward(LayerGraph& g, const Tensor& x) {
  forward_predictions(g, x);
  return g.nodes[g.output_index()].v_hat;
}

BpGradients bp_gradients(LayerGraph& g, const Tensor& x, const Tensor& label) {
  const Tensor output = bp_forward(g, x);
  if (label.shape != output.shape) {
    throw std::invalid_argument("bp_gradients: label " + shape_str(label.shape) +
                                " does not match output " + shape_str(output.shape));
  }
  BpGradients grads;
  grads.edges.resize(g.edges.size());
  Tensor delta(output.shape);  // dL/d(activation), L = 1/2 sum (label - out)^2
  for (std::size_t i = 0; i < delta.numel(); ++i) delta.data[i] = output.data[i] - label.data[i];
  for (std::size_t e = g.edges.size(); e-- > 0;) {
    grads.edges[e] = edge_param_vjp(g.edges[e], delta);
    if (e > 0) delta = edge_input_vjp(g.edges[e], delta);
  }
  return grads;
}

std::size_t bp_train_step(LayerGraph& g, const Tensor& x, const Tensor& label,
                          const TrainConfig& cfg, OptimizerState& opt) {
  cfg.validate();
  BpGradients grads = bp_gradients(g, x, label);
  // descend the loss: the applied direction is -grad
  for (EdgeGradient& eg : grads.edges) {
    for (double& v : eg.weights.data) v = -v;
    for (double& v : eg.bias.data) v = -v;
  }
  return apply_param_step(g, grads.edges, cfg, opt);
}

namespace {

void append_flat(std::vector<double>& out, const EdgeGradient& eg) {
  out.insert(out.end(), eg.weights.data.begin(), eg.weights.data.end());
  out.insert(out.end(), eg.bias.data.begin(), eg.bias.data.end());
}

EdgeComparison compare_directions(const EdgeGradient& pc, const EdgeGradient& bp_descent) {
  std::vector<double> a;
  std::vector<double> b;
  append_flat(a, pc);
  append_flat(b, bp_descent);
  double dot = 0.0, na = 0.0, nb = 0.0, diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
    const double d = a[i] - b[i];
    diff += d * d;
  }
  EdgeComparison cmp;
  if (na == 0.0 && nb == 0.0) {
    cmp.cosine = 1.0;
    cmp.rel_error = 0.0;
  } else if (na == 0.0 || nb == 0.0) {
    cmp.cosine = 0.0;
    cmp.rel_error = 1.0;
  } else {
    cmp.cosine = dot / (std::sqrt(na) * std::sqrt(nb));
    cmp.rel_error = std::sqrt(diff) / std::sqrt(nb);
  }
  return cmp;
}

}  // namespace

EquivalenceReport pc_bp_equivalence_fixture(std::uint64_t seed, Activation hidden_activation,
                                            double eta_v, std::size_t max_iters, double tol) {
  const std::vector<LayerSpec> specs = {LayerSpec::dense(8, hidden_activation),
                                        LayerSpec::dense(6, hidden_activation),
                                        LayerSpec::dense(4, Activation::kLinear)};
  Rng rng(seed ^ 0x9e3779b97f4a7c15ull);
  LayerGraph g = build_graph({10}, specs, seed);
  Tensor x({10});
  Tensor label({4});
  // resample until every ReLU layer keeps at least two active units, so no
  // edge comparison degenerates to zero-against-zero
  for (int attempt = 0; attempt < 64; ++attempt) {
    if (attempt > 0) g = build_graph({10}, specs, seed + 7919ull * attempt);
    for (double& v : x.data) v = rng.uniform(-1.0, 1.0);
    for (double& v : label.data) v = rng.uniform(-1.0, 1.0);
    if (hidden_activation == Activation::kLinear) break;
    forward_predictions(g, x);
    bool conditioned = true;
    for (const Edge& e : g.edges) {
      if (e.activation != Activation::kRelu) continue;
      std::size_t active = 0;
      for (double z : e.cache_preact.data) active += z > 0.0 ? 1 : 0;
      conditioned = conditioned && active >= 2;
    }
    if (conditioned) break;
  }

  // PC side: fixed-prediction inference to (near) convergence.
  TrainConfig cfg;
  cfg.eta_v = eta_v;
  cfg.max_inference_iters = max_iters;
  cfg.convergence_tol = tol;
  forward_predictions(g, x);
  init_states_from_predictions(g);
  clamp_output(g, label);
  EquivalenceReport report;
  report.iterations_used = run_inference(g, cfg);
  double max_norm = 0.0;
  for (std::size_t i = 1; i < g.output_index(); ++i) {
    const Tensor grad = state_gradient(g, i);
    for (double v : grad.data) max_norm = std::max(max_norm, std::fabs(v));
  }
  report.final_max_grad = max_norm;
  std::vector<EdgeGradient> pc_dirs;
  for (std::size_t e = 0; e < g.edges.size(); ++e) pc_dirs.push_back(weight_gradient(g, e));

  // BP side on the identical parameters (inference does not touch them).
  BpGradients bp = bp_gradients(g, x, label);
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    EdgeGradient descent = bp.edges[e];
    for (double& v : descent.weights.data) v = -v;
    for (double& v : descent.bias.data) v = -v;
    report.edges.push_back(compare_directions(pc_dirs[e], descent));
  }
  return report;
}

}  // namespace pcta
