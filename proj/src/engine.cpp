#include "pcta/engine.hpp"

#include <cmath>
#include <stdexcept>

namespace pcta {

void TrainConfig::validate() const {
  if (eta_v <= 0.0) throw std::invalid_argument("TrainConfig: eta_v must be positive");
  if (eta_theta <= 0.0) throw std::invalid_argument("TrainConfig: eta_theta must be positive");
  if (max_inference_iters < 1) throw std::invalid_argument("TrainConfig: max_inference_iters must be >= 1");
  if (convergence_tol < 0.0) throw std::invalid_argument("TrainConfig: convergence_tol must be >= 0");
  if (update_count_threshold < 0.0) {
    throw std::invalid_argument("TrainConfig: update_count_threshold must be >= 0");
  }
}

void clamp_output(LayerGraph& g, const Tensor& label) {
  NodeState& out = g.nodes[g.output_index()];
  if (label.shape != out.v.shape) {
    throw std::invalid_argument("clamp_output: label " + shape_str(label.shape) +
                                " does not match output node " + shape_str(out.v.shape));
  }
  out.v = label;
  refresh_errors(g);
}

double inference_step(LayerGraph& g, double eta_v) {
  const std::size_t out = g.output_index();
  std::vector<Tensor> grads;
  grads.reserve(out >= 1 ? out - 1 : 0);
  double max_norm = 0.0;
  for (std::size_t i = 1; i < out; ++i) {
    Tensor grad = state_gradient(g, i);
    for (double v : grad.data) {
      const double a = std::fabs(v);
      if (a > max_norm) max_norm = a;
    }
    grads.push_back(std::move(grad));
  }
  for (std::size_t i = 1; i < out; ++i) {
    Tensor& v = g.nodes[i].v;
    const Tensor& grad = grads[i - 1];
    for (std::size_t j = 0; j < v.numel(); ++j) v.data[j] += eta_v * grad.data[j];
  }
  refresh_errors(g);
  return max_norm;
}

std::size_t run_inference(LayerGraph& g, const TrainConfig& cfg) {
  for (std::size_t t = 1; t <= cfg.max_inference_iters; ++t) {
    const double max_norm = inference_step(g, cfg.eta_v);
    if (max_norm < cfg.convergence_tol) return t;
  }
  return cfg.max_inference_iters;
}

namespace {

EdgeGradient zeros_like_params(const Edge& e) {
  return EdgeGradient{Tensor(e.weights.shape), Tensor(e.bias.shape)};
}

void ensure_adam_state(const LayerGraph& g, OptimizerState& opt) {
  if (!opt.first_moment.empty()) return;
  for (const Edge& e : g.edges) {
    opt.first_moment.push_back(zeros_like_params(e));
    opt.second_moment.push_back(zeros_like_params(e));
  }
}

// Applies theta += delta(direction) for one tensor, counting deltas whose
// magnitude exceeds the threshold. `direction` is the ascent direction the
// caller wants to follow (free-energy descent for PC, -loss-gradient for BP).
std::size_t apply_delta(Tensor& theta, const Tensor& direction, Tensor* m, Tensor* v,
                        const TrainConfig& cfg, double bias1, double bias2) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < theta.numel(); ++i) {
    double delta;
    if (cfg.optimizer == OptimizerKind::kSgd) {
      delta = cfg.eta_theta * direction.data[i];
    } else {
      double& mi = m->data[i];
      double& vi = v->data[i];
      mi = cfg.adam_beta1 * mi + (1.0 - cfg.adam_beta1) * direction.data[i];
      vi = cfg.adam_beta2 * vi + (1.0 - cfg.adam_beta2) * direction.data[i] * direction.data[i];
      const double m_hat = mi / bias1;
      const double v_hat = vi / bias2;
      delta = cfg.eta_theta * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
    }
    theta.data[i] += delta;
    if (std::fabs(delta) > cfg.update_count_threshold) ++count;
  }
  return count;
}

}  // namespace

std::size_t apply_param_step(LayerGraph& g, const std::vector<EdgeGradient>& directions,
                             const TrainConfig& cfg, OptimizerState& opt) {
  if (cfg.optimizer == OptimizerKind::kAdam) ensure_adam_state(g, opt);
  ++opt.step_count;
  const double bias1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(opt.step_count));
  const double bias2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(opt.step_count));
  std::size_t count = 0;
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    Tensor* mw = nullptr;
    Tensor* vw = nullptr;
    Tensor* mb = nullptr;
    Tensor* vb = nullptr;
    if (cfg.optimizer == OptimizerKind::kAdam) {
      mw = &opt.first_moment[e].weights;
      vw = &opt.second_moment[e].weights;
      mb = &opt.first_moment[e].bias;
      vb = &opt.second_moment[e].bias;
    }
    count += apply_delta(g.edges[e].weights, directions[e].weights, mw, vw, cfg, bias1, bias2);
    count += apply_delta(g.edges[e].bias, directions[e].bias, mb, vb, cfg, bias1, bias2);
  }
  return count;
}

std::size_t weight_update(LayerGraph& g, const TrainConfig& cfg, OptimizerState& opt) {
  std::vector<EdgeGradient> directions;
  directions.reserve(g.edges.size());
  for (std::size_t e = 0; e < g.edges.size(); ++e) directions.push_back(weight_gradient(g, e));
  return apply_param_step(g, directions, cfg, opt);
}

std::size_t predicted_class(const LayerGraph& g) {
  const Tensor& out = g.nodes[g.output_index()].v_hat;
  std::size_t best = 0;
  for (std::size_t i = 1; i < out.numel(); ++i) {
    if (out.data[i] > out.data[best]) best = i;  // ties keep the lowest index
  }
  return best;
}

namespace {

std::pair<SampleResult, StateSnapshot> train_sample(LayerGraph& g, const Tensor& x,
                                                    const Tensor& label, const StateSnapshot* prev,
                                                    const TrainConfig& cfg, OptimizerState& opt) {
  cfg.validate();
  forward_predictions(g, x);
  if (prev != nullptr && cfg.amortize) {
    restore_states(g, *prev);
    // restore covers hidden nodes only; the output node still needs its
    // state initialized before the clamp below overwrites it
    g.nodes[g.output_index()].v = g.nodes[g.output_index()].v_hat;
  } else {
    init_states_from_predictions(g);
  }
  clamp_output(g, label);
  SampleResult res;
  res.predicted_class = predicted_class(g);
  res.iterations_used = run_inference(g, cfg);
  res.final_vfe = vfe(g);
  res.nonzero_weight_updates = weight_update(g, cfg, opt);
  return {res, take_snapshot(g)};
}

}  // namespace

std::pair<SampleResult, StateSnapshot> train_first_sample(LayerGraph& g, const Tensor& x,
                                                          const Tensor& label,
                                                          const TrainConfig& cfg,
                                                          OptimizerState& opt) {
  return train_sample(g, x, label, nullptr, cfg, opt);
}

std::pair<SampleResult, StateSnapshot> train_subsequent_sample(LayerGraph& g, const Tensor& x,
                                                               const Tensor& label,
                                                               const StateSnapshot& prev,
                                                               const TrainConfig& cfg,
                                                               OptimizerState& opt) {
  return train_sample(g, x, label, &prev, cfg, opt);
}

std::vector<SampleResult> train_epoch(LayerGraph& g, const FrameStream& stream,
                                      const TrainConfig& cfg, OptimizerState& opt) {
  if (stream.empty()) throw std::invalid_argument("train_epoch: empty stream");
  const std::size_t classes = g.nodes[g.output_index()].v.numel();
  std::vector<SampleResult> results;
  results.reserve(stream.size());
  StateSnapshot carry;
  for (std::size_t i = 0; i < stream.size(); ++i) {
    const Frame& f = stream.frames[i];
    const Tensor label = one_hot(f.label, classes);
    std::pair<SampleResult, StateSnapshot> r =
        i == 0 ? train_first_sample(g, f.image, label, cfg, opt)
               : train_subsequent_sample(g, f.image, label, carry, cfg, opt);
    results.push_back(r.first);
    carry = std::move(r.second);
  }
  return results;
}

double evaluate(LayerGraph& g, const FrameStream& testset) {
  if (testset.empty()) throw std::invalid_argument("evaluate: empty test set");
  // Scratch the node buffers but put everything back afterwards; the edge
  // caches are refreshed by the next forward pass anyway.
  std::vector<NodeState> saved = g.nodes;
  std::size_t correct = 0;
  for (const Frame& f : testset.frames) {
    forward_predictions(g, f.image);
    if (predicted_class(g) == f.label) ++correct;
  }
  g.nodes = std::move(saved);
  return static_cast<double>(correct) / static_cast<double>(testset.size());
}

}  // namespace pcta
