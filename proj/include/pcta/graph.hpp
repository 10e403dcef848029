#pragma once

#include <cstdint>
#include <vector>

#include "pcta/tensor.hpp"

namespace pcta {

enum class Activation { kLinear, kRelu };
enum class LayerKind { kConv2d, kMaxPool, kFlatten, kDense };

struct LayerSpec {
  LayerKind kind = LayerKind::kDense;
  Activation activation = Activation::kLinear;
  std::size_t out_channels = 0;  // conv
  std::size_t kernel = 0;        // conv
  std::size_t pool_size = 0;     // maxpool
  std::size_t out_features = 0;  // dense

  static LayerSpec conv2d(std::size_t out_channels, std::size_t kernel, Activation act);
  static LayerSpec maxpool(std::size_t size);
  static LayerSpec flatten();
  static LayerSpec dense(std::size_t out_features, Activation act);
};

// One prediction-generating edge of the graph. Parameterless layers are
// fused into their neighbouring trainable edge: a MaxPool rides on the
// preceding conv edge, a Flatten on the following dense edge. State/error
// nodes therefore sit only at the input, at each trainable edge's output,
// and at the output.
struct Edge {
  bool flatten_input = false;
  LayerKind op = LayerKind::kDense;  // kConv2d or kDense
  Activation activation = Activation::kLinear;
  std::size_t pool_size = 0;  // 0 = no pool

  Tensor weights;  // dense: [out x in]; conv: [Co x Ci x k x k]
  Tensor bias;

  // Forward-pass cache: the frozen linearization point used by every
  // adjoint during the inference phase.
  bool has_cache = false;
  Tensor cache_input;    // edge input (already flattened if flatten_input)
  Tensor cache_preact;   // pre-activation z
  PoolIndices cache_pool;
  std::vector<std::size_t> cache_input_node_shape;  // pre-flatten shape

  std::size_t parameter_count() const { return weights.numel() + bias.numel(); }
};

struct NodeState {
  Tensor v;      // state
  Tensor v_hat;  // top-down prediction
  Tensor eps;    // error, eps = v - v_hat after refresh_errors
};

/// Ordered chain of trainable edges with per-node state buffers. A graph is
/// a single-owner mutable object: one training run drives it from one
/// thread. Distinct graphs are independent.
struct LayerGraph {
  std::vector<std::size_t> input_shape;
  std::vector<LayerSpec> specs;  // original layer list, kept for checkpoints
  std::vector<Edge> edges;
  std::vector<NodeState> nodes;  // edges.size() + 1 entries

  std::size_t node_count() const { return nodes.size(); }
  std::size_t edge_count() const { return edges.size(); }
  std::size_t output_index() const { return nodes.size() - 1; }
  std::size_t parameter_count() const;
  std::vector<std::size_t> node_shape(std::size_t i) const { return nodes[i].v.shape; }
};

/// Hidden-node state values carried from one frame to the next
/// (excludes the input and output nodes).
struct StateSnapshot {
  std::vector<Tensor> values;
};

/// Shape propagation and parameter counting without allocating buffers.
struct GraphDescription {
  std::vector<std::vector<std::size_t>> node_shapes;
  std::size_t parameter_count = 0;
};

GraphDescription describe_graph(const std::vector<std::size_t>& input_shape,
                                const std::vector<LayerSpec>& specs);

/// Builds the graph with seeded uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))
/// parameter initialization; all node buffers zeroed.
LayerGraph build_graph(const std::vector<std::size_t>& input_shape,
                       const std::vector<LayerSpec>& specs, std::uint64_t seed);

std::vector<LayerSpec> coil20_architecture_specs();

/// Conv2D(124, k=5)+ReLU -> MaxPool(2) -> Flatten -> Dense(200)+ReLU ->
/// Dense(128) -> Dense(20), input 1x128x128.
LayerGraph build_coil20_architecture(std::uint64_t seed);

// Edge application. edge_forward records the cache consumed by the two
// adjoint calls; both adjoints evaluate at the frozen cache.
Tensor edge_forward(Edge& e, const Tensor& input);
Tensor edge_input_vjp(const Edge& e, const Tensor& upstream);
struct EdgeGradient {
  Tensor weights;
  Tensor bias;
};
EdgeGradient edge_param_vjp(const Edge& e, const Tensor& upstream);

/// Clamps the input node to x and runs the prediction pass; predictions
/// (and the adjoint linearization point) stay fixed until the next call.
void forward_predictions(LayerGraph& g, const Tensor& x);

/// v := v_hat at every non-input node.
void init_states_from_predictions(LayerGraph& g);

StateSnapshot take_snapshot(const LayerGraph& g);

/// Overwrites hidden-node states with the snapshot; predictions untouched.
void restore_states(LayerGraph& g, const StateSnapshot& s);

/// eps := v - v_hat at every non-input node.
void refresh_errors(LayerGraph& g);

/// Free-energy ascent direction for hidden node i:
///   g_i = -eps_i + J_i^T(eps_{i+1})
/// with J_i the edge adjoint at the frozen forward-pass point.
Tensor state_gradient(const LayerGraph& g, std::size_t node_index);

/// Direction d with theta <- theta + eta * d; the edge adjoint of the
/// output-node error with respect to the edge parameters, at the frozen
/// forward-pass input.
EdgeGradient weight_gradient(const LayerGraph& g, std::size_t edge_index);

/// F = 1/2 sum_i ||eps_i||^2 over all non-input nodes.
double vfe(const LayerGraph& g);

}  // namespace pcta
