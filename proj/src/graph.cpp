#include "pcta/graph.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

#include "pcta/rng.hpp"

namespace pcta {

LayerSpec LayerSpec::conv2d(std::size_t out_channels, std::size_t kernel, Activation act) {
  LayerSpec s;
  s.kind = LayerKind::kConv2d;
  s.activation = act;
  s.out_channels = out_channels;
  s.kernel = kernel;
  return s;
}

LayerSpec LayerSpec::maxpool(std::size_t size) {
  LayerSpec s;
  s.kind = LayerKind::kMaxPool;
  s.pool_size = size;
  return s;
}

LayerSpec LayerSpec::flatten() {
  LayerSpec s;
  s.kind = LayerKind::kFlatten;
  return s;
}

LayerSpec LayerSpec::dense(std::size_t out_features, Activation act) {
  LayerSpec s;
  s.kind = LayerKind::kDense;
  s.activation = act;
  s.out_features = out_features;
  return s;
}

namespace {

std::string layer_name(std::size_t index, LayerKind kind) {
  const char* kind_name = "?";
  switch (kind) {
    case LayerKind::kConv2d: kind_name = "Conv2D"; break;
    case LayerKind::kMaxPool: kind_name = "MaxPool"; break;
    case LayerKind::kFlatten: kind_name = "Flatten"; break;
    case LayerKind::kDense: kind_name = "Dense"; break;
  }
  return "layer " + std::to_string(index) + " (" + std::string(kind_name) + ")";
}

[[noreturn]] void build_error(std::size_t index, LayerKind kind, const std::string& what) {
  throw std::invalid_argument("build_graph: " + layer_name(index, kind) + ": " + what);
}

struct EdgePlan {
  bool flatten_input = false;
  LayerKind op = LayerKind::kDense;
  Activation activation = Activation::kLinear;
  std::size_t pool_size = 0;
  std::vector<std::size_t> weight_shape;
  std::vector<std::size_t> bias_shape;
  std::vector<std::size_t> input_node_shape;
  std::vector<std::size_t> output_shape;
};

std::vector<EdgePlan> plan_edges(const std::vector<std::size_t>& input_shape,
                                 const std::vector<LayerSpec>& specs) {
  if (specs.empty()) throw std::invalid_argument("build_graph: architecture has no layers");
  if (shape_numel(input_shape) == 0 || input_shape.empty()) {
    throw std::invalid_argument("build_graph: bad input shape " + shape_str(input_shape));
  }
  std::vector<EdgePlan> plans;
  std::vector<std::size_t> cur = input_shape;
  std::size_t i = 0;
  while (i < specs.size()) {
    EdgePlan plan;
    plan.input_node_shape = cur;
    LayerSpec spec = specs[i];
    std::size_t at = i;

    if (spec.kind == LayerKind::kFlatten || spec.kind == LayerKind::kMaxPool) {
      if (spec.activation != Activation::kLinear) {
        build_error(at, spec.kind, "parameterless layers must use a linear activation");
      }
    }
    if (spec.kind == LayerKind::kMaxPool) {
      build_error(at, spec.kind, "MaxPool must directly follow a Conv2D layer");
    }
    if (spec.kind == LayerKind::kFlatten) {
      if (i + 1 >= specs.size() || specs[i + 1].kind != LayerKind::kDense) {
        build_error(at, spec.kind, "Flatten must be followed by a Dense layer");
      }
      plan.flatten_input = true;
      ++i;
      at = i;
      spec = specs[i];
    }

    if (spec.kind == LayerKind::kConv2d) {
      if (cur.size() != 3) {
        build_error(at, spec.kind, "requires a 3-d [C x H x W] input node, got " + shape_str(cur));
      }
      if (spec.out_channels == 0 || spec.kernel == 0) {
        build_error(at, spec.kind, "out_channels and kernel must be positive");
      }
      if (spec.kernel > cur[1] || spec.kernel > cur[2]) {
        build_error(at, spec.kind,
                    "kernel " + std::to_string(spec.kernel) + " larger than input " + shape_str(cur));
      }
      plan.op = LayerKind::kConv2d;
      plan.activation = spec.activation;
      plan.weight_shape = {spec.out_channels, cur[0], spec.kernel, spec.kernel};
      plan.bias_shape = {spec.out_channels};
      std::vector<std::size_t> out = {spec.out_channels, cur[1] - spec.kernel + 1,
                                      cur[2] - spec.kernel + 1};
      if (i + 1 < specs.size() && specs[i + 1].kind == LayerKind::kMaxPool) {
        const LayerSpec& pool = specs[i + 1];
        if (pool.activation != Activation::kLinear) {
          build_error(i + 1, pool.kind, "parameterless layers must use a linear activation");
        }
        if (pool.pool_size == 0) build_error(i + 1, pool.kind, "pool size must be positive");
        if (out[1] % pool.pool_size != 0 || out[2] % pool.pool_size != 0) {
          build_error(i + 1, pool.kind,
                      "spatial dims " + shape_str(out) + " not divisible by pool size " +
                          std::to_string(pool.pool_size));
        }
        plan.pool_size = pool.pool_size;
        out = {out[0], out[1] / pool.pool_size, out[2] / pool.pool_size};
        ++i;
      }
      plan.output_shape = out;
    } else if (spec.kind == LayerKind::kDense) {
      if (spec.out_features == 0) build_error(at, spec.kind, "out_features must be positive");
      std::size_t in_features = 0;
      if (plan.flatten_input) {
        in_features = shape_numel(cur);
      } else if (cur.size() == 1) {
        in_features = cur[0];
      } else {
        build_error(at, spec.kind,
                    "requires a 1-d input node but got " + shape_str(cur) + "; insert Flatten first");
      }
      plan.op = LayerKind::kDense;
      plan.activation = spec.activation;
      plan.weight_shape = {spec.out_features, in_features};
      plan.bias_shape = {spec.out_features};
      plan.output_shape = {spec.out_features};
    } else {
      build_error(at, spec.kind, "unexpected layer kind");
    }

    cur = plan.output_shape;
    plans.push_back(std::move(plan));
    ++i;
  }
  return plans;
}

}  // namespace

GraphDescription describe_graph(const std::vector<std::size_t>& input_shape,
                                const std::vector<LayerSpec>& specs) {
  GraphDescription d;
  d.node_shapes.push_back(input_shape);
  for (const EdgePlan& plan : plan_edges(input_shape, specs)) {
    d.node_shapes.push_back(plan.output_shape);
    d.parameter_count += shape_numel(plan.weight_shape) + shape_numel(plan.bias_shape);
  }
  return d;
}

LayerGraph build_graph(const std::vector<std::size_t>& input_shape,
                       const std::vector<LayerSpec>& specs, std::uint64_t seed) {
  const std::vector<EdgePlan> plans = plan_edges(input_shape, specs);
  LayerGraph g;
  g.input_shape = input_shape;
  g.specs = specs;
  Rng rng(seed);
  g.nodes.push_back(NodeState{Tensor(input_shape), Tensor(input_shape), Tensor(input_shape)});
  for (const EdgePlan& plan : plans) {
    Edge e;
    e.flatten_input = plan.flatten_input;
    e.op = plan.op;
    e.activation = plan.activation;
    e.pool_size = plan.pool_size;
    e.weights = Tensor(plan.weight_shape);
    e.bias = Tensor(plan.bias_shape);
    const std::size_t fan_in =
        plan.op == LayerKind::kDense ? plan.weight_shape[1]
                                     : plan.weight_shape[1] * plan.weight_shape[2] * plan.weight_shape[3];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& w : e.weights.data) w = rng.uniform_pm(bound);
    for (double& b : e.bias.data) b = rng.uniform_pm(bound);
    g.edges.push_back(std::move(e));
    g.nodes.push_back(NodeState{Tensor(plan.output_shape), Tensor(plan.output_shape),
                                Tensor(plan.output_shape)});
  }
  return g;
}

std::size_t LayerGraph::parameter_count() const {
  std::size_t n = 0;
  for (const Edge& e : edges) n += e.parameter_count();
  return n;
}

std::vector<LayerSpec> coil20_architecture_specs() {
  return {LayerSpec::conv2d(124, 5, Activation::kRelu), LayerSpec::maxpool(2),
          LayerSpec::flatten(),  LayerSpec::dense(200, Activation::kRelu),
          LayerSpec::dense(128, Activation::kLinear), LayerSpec::dense(20, Activation::kLinear)};
}

LayerGraph build_coil20_architecture(std::uint64_t seed) {
  return build_graph({1, 128, 128}, coil20_architecture_specs(), seed);
}

namespace {

Tensor apply_activation_mask(const Edge& e, Tensor upstream) {
  if (e.activation == Activation::kRelu) {
    const Tensor mask = relu_deriv(e.cache_preact);
    for (std::size_t i = 0; i < upstream.numel(); ++i) upstream.data[i] *= mask.data[i];
  }
  return upstream;
}

void require_cache(const Edge& e, const char* who) {
  if (!e.has_cache) {
    throw std::logic_error(std::string(who) + ": edge has no forward cache; run forward_predictions first");
  }
}

}  // namespace

Tensor edge_forward(Edge& e, const Tensor& input) {
  e.cache_input_node_shape = input.shape;
  Tensor u = e.flatten_input ? input.reshaped({input.numel()}) : input;
  Tensor z = e.op == LayerKind::kDense ? dense_forward(u, e.weights, e.bias)
                                       : conv2d_forward(u, e.weights, e.bias);
  Tensor a = e.activation == Activation::kRelu ? relu(z) : z;
  e.cache_input = std::move(u);
  e.cache_preact = std::move(z);
  e.has_cache = true;
  if (e.pool_size > 0) {
    PoolResult pooled = maxpool_forward(a, e.pool_size);
    e.cache_pool = std::move(pooled.indices);
    return std::move(pooled.output);
  }
  e.cache_pool = PoolIndices{};
  return a;
}

Tensor edge_input_vjp(const Edge& e, const Tensor& upstream) {
  require_cache(e, "edge_input_vjp");
  Tensor gu = upstream;
  if (e.pool_size > 0) gu = maxpool_vjp(e.cache_pool, gu);
  gu = apply_activation_mask(e, std::move(gu));
  Tensor dx;
  if (e.op == LayerKind::kDense) {
    dx = std::move(dense_vjp(e.cache_input, e.weights, gu).dx);
  } else {
    dx = std::move(conv2d_vjp(e.cache_input, e.weights, gu).dx);
  }
  if (e.flatten_input) dx = dx.reshaped(e.cache_input_node_shape);
  return dx;
}

EdgeGradient edge_param_vjp(const Edge& e, const Tensor& upstream) {
  require_cache(e, "edge_param_vjp");
  Tensor gu = upstream;
  if (e.pool_size > 0) gu = maxpool_vjp(e.cache_pool, gu);
  gu = apply_activation_mask(e, std::move(gu));
  if (e.op == LayerKind::kDense) {
    DenseVjp v = dense_vjp(e.cache_input, e.weights, gu);
    return EdgeGradient{std::move(v.dw), std::move(v.db)};
  }
  ConvVjp v = conv2d_vjp(e.cache_input, e.weights, gu);
  return EdgeGradient{std::move(v.dk), std::move(v.db)};
}

void forward_predictions(LayerGraph& g, const Tensor& x) {
  if (x.shape != g.input_shape) {
    throw std::invalid_argument("forward_predictions: input " + shape_str(x.shape) +
                                " does not match graph input " + shape_str(g.input_shape));
  }
  g.nodes[0].v = x;
  g.nodes[0].v_hat = x;
  for (std::size_t i = 0; i < g.edges.size(); ++i) {
    g.nodes[i + 1].v_hat = edge_forward(g.edges[i], g.nodes[i].v_hat);
  }
}

void init_states_from_predictions(LayerGraph& g) {
  for (std::size_t i = 1; i < g.nodes.size(); ++i) g.nodes[i].v = g.nodes[i].v_hat;
  refresh_errors(g);
}

StateSnapshot take_snapshot(const LayerGraph& g) {
  StateSnapshot s;
  for (std::size_t i = 1; i + 1 < g.nodes.size(); ++i) s.values.push_back(g.nodes[i].v);
  return s;
}

void restore_states(LayerGraph& g, const StateSnapshot& s) {
  const std::size_t hidden = g.nodes.size() >= 2 ? g.nodes.size() - 2 : 0;
  if (s.values.size() != hidden) {
    throw std::invalid_argument("restore_states: snapshot holds " + std::to_string(s.values.size()) +
                                " tensors but the graph has " + std::to_string(hidden) +
                                " hidden nodes");
  }
  for (std::size_t i = 0; i < hidden; ++i) {
    if (s.values[i].shape != g.nodes[i + 1].v.shape) {
      throw std::invalid_argument("restore_states: snapshot tensor " + std::to_string(i) + " has shape " +
                                  shape_str(s.values[i].shape) + ", expected " +
                                  shape_str(g.nodes[i + 1].v.shape));
    }
  }
  for (std::size_t i = 0; i < hidden; ++i) g.nodes[i + 1].v = s.values[i];
  refresh_errors(g);
}

void refresh_errors(LayerGraph& g) {
  for (std::size_t i = 1; i < g.nodes.size(); ++i) {
    NodeState& n = g.nodes[i];
    for (std::size_t j = 0; j < n.v.numel(); ++j) n.eps.data[j] = n.v.data[j] - n.v_hat.data[j];
  }
}

Tensor state_gradient(const LayerGraph& g, std::size_t node_index) {
  if (node_index == 0 || node_index >= g.output_index()) {
    throw std::out_of_range("state_gradient: node " + std::to_string(node_index) +
                            " is not a hidden node");
  }
  Tensor grad = edge_input_vjp(g.edges[node_index], g.nodes[node_index + 1].eps);
  const Tensor& eps = g.nodes[node_index].eps;
  for (std::size_t i = 0; i < grad.numel(); ++i) grad.data[i] -= eps.data[i];
  return grad;
}

EdgeGradient weight_gradient(const LayerGraph& g, std::size_t edge_index) {
  if (edge_index >= g.edges.size()) {
    throw std::out_of_range("weight_gradient: edge " + std::to_string(edge_index) + " out of range");
  }
  return edge_param_vjp(g.edges[edge_index], g.nodes[edge_index + 1].eps);
}

double vfe(const LayerGraph& g) {
  double total = 0.0;
  for (std::size_t i = 1; i < g.nodes.size(); ++i) {
    for (double e : g.nodes[i].eps.data) total += e * e;
  }
  return 0.5 * total;
}

}  // namespace pcta
