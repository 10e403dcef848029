#include "pcta/gradcheck.hpp"

#include <cmath>
#include <functional>
#include <ostream>
#include <stdexcept>

#include "pcta/rng.hpp"

namespace pcta {

double fd_rel_error(double analytic, double fd) {
  const double scale = std::max({std::fabs(analytic), std::fabs(fd), 1e-3});
  return std::fabs(analytic - fd) / scale;
}

FdCheck check_against_fd(const std::string& name, const std::vector<double>& analytic,
                         const std::vector<double>& fd) {
  if (analytic.size() != fd.size()) {
    throw std::invalid_argument("check_against_fd: size mismatch for " + name);
  }
  FdCheck check;
  check.name = name;
  check.coords_checked = analytic.size();
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    check.worst_rel_error = std::max(check.worst_rel_error, fd_rel_error(analytic[i], fd[i]));
  }
  check.passed = check.worst_rel_error <= kFdRelTol;
  return check;
}

namespace {

// Central difference of `scalar` with respect to one coordinate of `t`.
double central_diff(Tensor& t, std::size_t coord, const std::function<double()>& scalar) {
  const double saved = t.data[coord];
  t.data[coord] = saved + kFdStep;
  const double up = scalar();
  t.data[coord] = saved - kFdStep;
  const double down = scalar();
  t.data[coord] = saved;
  return (up - down) / (2.0 * kFdStep);
}

Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape, double lo, double hi) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// Values bounded away from zero so ReLU kinks stay > 1e-4 from every test
// point and FD step.
Tensor random_kink_safe(Rng& rng, std::vector<std::size_t> shape) {
  Tensor t(std::move(shape));
  for (double& v : t.data) {
    const double mag = rng.uniform(0.2, 1.0);
    v = rng.uniform01() < 0.5 ? -mag : mag;
  }
  return t;
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a.data[i] * b.data[i];
  return s;
}

// Sampled coordinate list: all coords when small, a seeded subset otherwise.
std::vector<std::size_t> sample_coords(Rng& rng, std::size_t n, std::size_t want) {
  std::vector<std::size_t> coords;
  if (n <= want) {
    for (std::size_t i = 0; i < n; ++i) coords.push_back(i);
  } else {
    for (std::size_t i = 0; i < want; ++i) coords.push_back(rng.index(n));
  }
  return coords;
}

void fd_sweep(Tensor& t, const std::vector<std::size_t>& coords, const Tensor& analytic,
              const std::function<double()>& scalar, std::vector<double>& out_analytic,
              std::vector<double>& out_fd) {
  for (std::size_t c : coords) {
    out_analytic.push_back(analytic.data[c]);
    out_fd.push_back(central_diff(t, c, scalar));
  }
}

FdCheck check_dense_vjp(Rng& rng) {
  Tensor x = random_tensor(rng, {7}, -1.0, 1.0);
  Tensor w = random_tensor(rng, {5, 7}, -1.0, 1.0);
  Tensor b = random_tensor(rng, {5}, -1.0, 1.0);
  Tensor u = random_tensor(rng, {5}, -1.0, 1.0);
  const DenseVjp vjp = dense_vjp(x, w, u);
  std::vector<double> analytic, fd;
  const auto through_x = [&] { return dot(dense_forward(x, w, b), u); };
  fd_sweep(x, sample_coords(rng, x.numel(), 16), vjp.dx, through_x, analytic, fd);
  fd_sweep(w, sample_coords(rng, w.numel(), 24), vjp.dw, through_x, analytic, fd);
  fd_sweep(b, sample_coords(rng, b.numel(), 8), vjp.db, through_x, analytic, fd);
  return check_against_fd("tensor/dense_vjp", analytic, fd);
}

FdCheck check_conv_vjp(Rng& rng) {
  Tensor x = random_tensor(rng, {2, 8, 8}, -1.0, 1.0);
  Tensor k = random_tensor(rng, {3, 2, 3, 3}, -1.0, 1.0);
  Tensor b = random_tensor(rng, {3}, -0.5, 0.5);
  Tensor u = random_tensor(rng, {3, 6, 6}, -1.0, 1.0);
  const ConvVjp vjp = conv2d_vjp(x, k, u);
  std::vector<double> analytic, fd;
  const auto through = [&] { return dot(conv2d_forward(x, k, b), u); };
  fd_sweep(x, sample_coords(rng, x.numel(), 24), vjp.dx, through, analytic, fd);
  fd_sweep(k, sample_coords(rng, k.numel(), 24), vjp.dk, through, analytic, fd);
  fd_sweep(b, sample_coords(rng, b.numel(), 3), vjp.db, through, analytic, fd);
  return check_against_fd("tensor/conv2d_vjp", analytic, fd);
}

FdCheck check_maxpool_vjp(Rng& rng) {
  // distinct window entries keep every argmax margin far above the step
  Tensor x({2, 4, 4});
  for (std::size_t i = 0; i < x.numel(); ++i) {
    x.data[i] = 0.05 * static_cast<double>(i % 7) + rng.uniform(0.0, 0.01);
  }
  Tensor u = random_tensor(rng, {2, 2, 2}, -1.0, 1.0);
  const PoolResult fwd = maxpool_forward(x, 2);
  const Tensor dx = maxpool_vjp(fwd.indices, u);
  std::vector<double> analytic, fd;
  const auto through = [&] { return dot(maxpool_forward(x, 2).output, u); };
  fd_sweep(x, sample_coords(rng, x.numel(), 32), dx, through, analytic, fd);
  return check_against_fd("tensor/maxpool_vjp", analytic, fd);
}

FdCheck check_relu_deriv(Rng& rng) {
  Tensor x = random_kink_safe(rng, {24});
  const Tensor d = relu_deriv(x);
  Tensor u = random_tensor(rng, {24}, -1.0, 1.0);
  std::vector<double> analytic, fd;
  Tensor masked_u(u.shape);
  for (std::size_t i = 0; i < u.numel(); ++i) masked_u.data[i] = u.data[i] * d.data[i];
  const auto through = [&] { return dot(relu(x), u); };
  fd_sweep(x, sample_coords(rng, x.numel(), 24), masked_u, through, analytic, fd);
  return check_against_fd("tensor/relu_deriv", analytic, fd);
}

// Small mixed graph with every nonlinearity away from its kink, so FD
// steps of 1e-5 cannot cross one; retries until the margins hold. A pool
// window whose entries are all ReLU-clamped zeros is locally constant and
// counts as safe even though the tie margin is exactly zero.
LayerGraph kink_safe_graph(Rng& rng, const std::vector<std::size_t>& input_shape,
                           const std::vector<LayerSpec>& specs, Tensor& x) {
  constexpr double kMargin = 5e-4;
  for (int attempt = 0; attempt < 64; ++attempt) {
    LayerGraph g = build_graph(input_shape, specs, rng.raw());
    x = random_tensor(rng, input_shape, 0.0, 1.0);
    forward_predictions(g, x);
    bool safe = true;
    for (const Edge& e : g.edges) {
      const bool has_relu = e.activation == Activation::kRelu;
      if (has_relu) {
        for (double z : e.cache_preact.data) safe = safe && std::fabs(z) > kMargin;
      }
      if (e.pool_size > 0 && safe) {
        const Tensor& z = e.cache_preact;
        const Tensor a = has_relu ? relu(z) : z;
        const PoolResult pr = maxpool_forward(a, e.pool_size);
        const std::size_t h = pr.indices.input_shape[1];
        const std::size_t w = pr.indices.input_shape[2];
        const std::size_t oh = pr.indices.output_shape[1];
        const std::size_t ow = pr.indices.output_shape[2];
        for (std::size_t o = 0; o < pr.output.numel() && safe; ++o) {
          const double win = pr.output.data[o];
          const std::size_t ch = o / (oh * ow);
          const std::size_t r = (o / ow) % oh;
          const std::size_t col = o % ow;
          for (std::size_t p = 0; p < e.pool_size && safe; ++p) {
            for (std::size_t q = 0; q < e.pool_size && safe; ++q) {
              const std::size_t idx = (ch * h + r * e.pool_size + p) * w + col * e.pool_size + q;
              if (idx == pr.indices.winner[o]) continue;
              const bool dominated = win - a.data[idx] > kMargin;
              const bool both_clamped = has_relu && a.data[idx] == 0.0 && win == 0.0;
              safe = dominated || both_clamped;
            }
          }
        }
      }
    }
    if (safe) return g;
  }
  throw std::runtime_error("kink_safe_graph: could not find a kink-safe instance");
}

// PC weight gradient against FD of the local free-energy term
// 1/2 ||v_next - f(v_hat_in; theta)||^2 with the edge input held at its
// recorded forward value (the fixed-prediction reading of dF/dtheta).
FdCheck check_pc_weight_gradient(Rng& rng, bool with_conv) {
  std::vector<LayerSpec> specs;
  std::vector<std::size_t> input_shape;
  if (with_conv) {
    specs = {LayerSpec::conv2d(3, 3, Activation::kRelu), LayerSpec::maxpool(2),
             LayerSpec::flatten(), LayerSpec::dense(6, Activation::kRelu),
             LayerSpec::dense(4, Activation::kLinear)};
    input_shape = {1, 10, 10};
  } else {
    specs = {LayerSpec::dense(7, Activation::kRelu), LayerSpec::dense(5, Activation::kRelu),
             LayerSpec::dense(4, Activation::kLinear)};
    input_shape = {6};
  }
  Tensor x;
  LayerGraph g = kink_safe_graph(rng, input_shape, specs, x);
  init_states_from_predictions(g);
  Tensor label = random_tensor(rng, g.nodes[g.output_index()].v.shape, -1.0, 1.0);
  clamp_output(g, label);
  // a few state updates so the checked point is not the trivial eps = 0 one
  for (int i = 0; i < 3; ++i) inference_step(g, 0.3);

  std::vector<double> analytic, fd;
  for (std::size_t ei = 0; ei < g.edges.size(); ++ei) {
    const EdgeGradient grad = weight_gradient(g, ei);
    Edge& e = g.edges[ei];
    const Tensor& v_next = g.nodes[ei + 1].v;
    const Tensor frozen_input = e.cache_input;
    const auto local_f = [&]() {
      Edge scratch = e;
      scratch.flatten_input = false;  // cache_input is already flat
      const Tensor out = edge_forward(scratch, frozen_input);
      double s = 0.0;
      for (std::size_t i = 0; i < out.numel(); ++i) {
        const double d = v_next.data[i] - out.data[i];
        s += d * d;
      }
      return 0.5 * s;
    };
    // the gradient is the ascent direction, FD measures dF/dtheta: negate
    for (std::size_t c : sample_coords(rng, e.weights.numel(), 20)) {
      analytic.push_back(-grad.weights.data[c]);
      fd.push_back(central_diff(e.weights, c, local_f));
    }
    for (std::size_t c : sample_coords(rng, e.bias.numel(), 6)) {
      analytic.push_back(-grad.bias.data[c]);
      fd.push_back(central_diff(e.bias, c, local_f));
    }
  }
  return check_against_fd(with_conv ? "pc/weight_gradient_conv" : "pc/weight_gradient_dense",
                          analytic, fd);
}

// State gradient at the canonical inference start (states initialized from
// predictions, output clamped): there the frozen-prediction direction
// coincides with -dF/dv of the free energy with recomputed predictions.
FdCheck check_pc_state_gradient(Rng& rng, bool with_conv) {
  std::vector<LayerSpec> specs;
  std::vector<std::size_t> input_shape;
  if (with_conv) {
    specs = {LayerSpec::conv2d(2, 3, Activation::kRelu), LayerSpec::maxpool(2),
             LayerSpec::flatten(), LayerSpec::dense(4, Activation::kLinear)};
    input_shape = {1, 8, 8};
  } else {
    specs = {LayerSpec::dense(6, Activation::kRelu), LayerSpec::dense(4, Activation::kLinear)};
    input_shape = {5};
  }
  Tensor x;
  LayerGraph g = kink_safe_graph(rng, input_shape, specs, x);
  init_states_from_predictions(g);
  Tensor label = random_tensor(rng, g.nodes[g.output_index()].v.shape, -1.0, 1.0);
  clamp_output(g, label);

  const std::size_t hid = 1;  // 3-node graph: the single hidden node
  const Tensor grad = state_gradient(g, hid);
  Tensor& v_hid = g.nodes[hid].v;
  const Tensor v_hat_hid = g.nodes[hid].v_hat;
  const Tensor& v_out = g.nodes[g.output_index()].v;
  const auto free_energy = [&]() {
    Edge scratch = g.edges[hid];
    const Tensor pred_out = edge_forward(scratch, v_hid);
    double s = 0.0;
    for (std::size_t i = 0; i < v_hid.numel(); ++i) {
      const double d = v_hid.data[i] - v_hat_hid.data[i];
      s += d * d;
    }
    for (std::size_t i = 0; i < pred_out.numel(); ++i) {
      const double d = v_out.data[i] - pred_out.data[i];
      s += d * d;
    }
    return 0.5 * s;
  };
  std::vector<double> analytic, fd;
  for (std::size_t c : sample_coords(rng, v_hid.numel(), 24)) {
    analytic.push_back(-grad.data[c]);
    fd.push_back(central_diff(v_hid, c, free_energy));
  }
  return check_against_fd(with_conv ? "pc/state_gradient_conv" : "pc/state_gradient_dense",
                          analytic, fd);
}

// Backprop gradients against FD of the end-to-end loss.
FdCheck check_bp_gradients(Rng& rng) {
  const std::vector<LayerSpec> specs = {
      LayerSpec::conv2d(4, 5, Activation::kRelu), LayerSpec::maxpool(2), LayerSpec::flatten(),
      LayerSpec::dense(20, Activation::kRelu), LayerSpec::dense(12, Activation::kLinear),
      LayerSpec::dense(6, Activation::kLinear)};
  Tensor x;
  LayerGraph g = kink_safe_graph(rng, {1, 16, 16}, specs, x);
  Tensor label = random_tensor(rng, {6}, -1.0, 1.0);
  const BpGradients grads = bp_gradients(g, x, label);
  const auto loss = [&]() {
    LayerGraph& gr = g;
    forward_predictions(gr, x);
    const Tensor& out = gr.nodes[gr.output_index()].v_hat;
    double s = 0.0;
    for (std::size_t i = 0; i < out.numel(); ++i) {
      const double d = label.data[i] - out.data[i];
      s += d * d;
    }
    return 0.5 * s;
  };
  std::vector<double> analytic, fd;
  for (std::size_t ei = 0; ei < g.edges.size(); ++ei) {
    Edge& e = g.edges[ei];
    for (std::size_t c : sample_coords(rng, e.weights.numel(), 16)) {
      analytic.push_back(grads.edges[ei].weights.data[c]);
      fd.push_back(central_diff(e.weights, c, loss));
    }
    for (std::size_t c : sample_coords(rng, e.bias.numel(), 4)) {
      analytic.push_back(grads.edges[ei].bias.data[c]);
      fd.push_back(central_diff(e.bias, c, loss));
    }
  }
  return check_against_fd("bp/gradients", analytic, fd);
}

}  // namespace

std::vector<FdCheck> finite_difference_suite(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<FdCheck> checks;
  checks.push_back(check_dense_vjp(rng));
  checks.push_back(check_conv_vjp(rng));
  checks.push_back(check_maxpool_vjp(rng));
  checks.push_back(check_relu_deriv(rng));
  checks.push_back(check_pc_weight_gradient(rng, false));
  checks.push_back(check_pc_weight_gradient(rng, true));
  checks.push_back(check_pc_state_gradient(rng, false));
  checks.push_back(check_pc_state_gradient(rng, true));
  checks.push_back(check_bp_gradients(rng));
  return checks;
}

GradcheckReport run_gradcheck(std::uint64_t seed) {
  GradcheckReport report;
  report.fd_checks = finite_difference_suite(seed);
  report.linear_fixture = pc_bp_equivalence_fixture(seed, Activation::kLinear, 1.0, 400, 1e-13);
  report.relu_fixture = pc_bp_equivalence_fixture(seed, Activation::kRelu, 0.05, 200, 0.0);
  report.all_passed = true;
  for (const FdCheck& c : report.fd_checks) report.all_passed = report.all_passed && c.passed;
  for (const EdgeComparison& e : report.linear_fixture.edges) {
    report.all_passed = report.all_passed && std::fabs(e.cosine - 1.0) <= 1e-9;
  }
  for (const EdgeComparison& e : report.relu_fixture.edges) {
    report.all_passed = report.all_passed && e.cosine >= 0.99;
  }
  return report;
}

void print_gradcheck(const GradcheckReport& report, std::ostream& out) {
  for (const FdCheck& c : report.fd_checks) {
    out << (c.passed ? "  [PASS] " : "  [FAIL] ") << c.name << "  worst_rel_error="
        << c.worst_rel_error << "  coords=" << c.coords_checked << "\n";
  }
  const auto print_fixture = [&](const char* name, const EquivalenceReport& rep, double need) {
    for (std::size_t i = 0; i < rep.edges.size(); ++i) {
      const bool ok = rep.edges[i].cosine >= need;
      out << (ok ? "  [PASS] " : "  [FAIL] ") << name << "/edge" << i
          << "  cosine=" << rep.edges[i].cosine << "  rel_error=" << rep.edges[i].rel_error << "\n";
    }
    out << "         " << name << ": " << rep.iterations_used
        << " inference iterations, final max |dF/dv| = " << rep.final_max_grad << "\n";
  };
  print_fixture("equivalence/linear", report.linear_fixture, 1.0 - 1e-9);
  print_fixture("equivalence/relu", report.relu_fixture, 0.99);
  out << (report.all_passed ? "gradcheck: all checks passed\n" : "gradcheck: FAILURES present\n");
}

}  // namespace pcta
