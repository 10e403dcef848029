#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <limits>
#include <stdexcept>

#include "doctest.h"
#include "pcta/backprop.hpp"
#include "pcta/data.hpp"
#include "pcta/engine.hpp"
#include "support.hpp"

using namespace pcta;
using namespace pcta::test;

namespace {

LayerGraph mlp_graph(std::uint64_t seed) {
  return build_graph({4},
                     {LayerSpec::dense(3, Activation::kRelu),
                      LayerSpec::dense(2, Activation::kLinear)},
                     seed);
}

LayerGraph zero_param_graph() {
  LayerGraph g = mlp_graph(1);
  for (Edge& e : g.edges) {
    e.weights = Tensor(e.weights.shape);
    e.bias = Tensor(e.bias.shape);
  }
  return g;
}

bool params_bit_equal(const LayerGraph& a, const LayerGraph& b) {
  for (std::size_t e = 0; e < a.edge_count(); ++e) {
    if (!bit_equal(a.edges[e].weights, b.edges[e].weights)) return false;
    if (!bit_equal(a.edges[e].bias, b.edges[e].bias)) return false;
  }
  return true;
}

Frame make_frame(const Tensor& image, std::size_t label) {
  Frame f;
  f.image = image;
  f.label = label;
  return f;
}

}  // namespace

TEST_CASE("TrainConfig validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  TrainConfig bad = cfg;
  bad.eta_v = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.eta_theta = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.max_inference_iters = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("clamp_output") {
  LayerGraph g = mlp_graph(4);
  Rng rng(9);
  const Tensor x = random_tensor(rng, {4});
  forward_predictions(g, x);
  init_states_from_predictions(g);

  SUBCASE("label equal to the prediction freezes everything") {
    clamp_output(g, g.nodes[2].v_hat);
    for (double e : g.nodes[2].eps.data) CHECK(e == 0.0);
    const double norm = inference_step(g, 0.1);
    CHECK(norm == 0.0);
    CHECK(vfe(g) == 0.0);
  }
  SUBCASE("basis label against zero prediction") {
    LayerGraph z = zero_param_graph();
    forward_predictions(z, x);
    init_states_from_predictions(z);
    clamp_output(z, one_hot(1, 2));
    CHECK(z.nodes[2].eps.data == std::vector<double>{0.0, 1.0});
  }
  SUBCASE("output error is constant across inference steps") {
    clamp_output(g, one_hot(0, 2));
    const Tensor eps0 = g.nodes[2].eps;
    for (int i = 0; i < 10; ++i) inference_step(g, 0.2);
    CHECK(bit_equal(eps0, g.nodes[2].eps));
  }
  SUBCASE("label shape checked") {
    CHECK_THROWS_AS(clamp_output(g, Tensor({3})), std::invalid_argument);
  }
}

TEST_CASE("inference_step") {
  LayerGraph g = mlp_graph(12);
  Rng rng(31);
  const Tensor x = random_tensor(rng, {4});
  forward_predictions(g, x);
  init_states_from_predictions(g);

  SUBCASE("zero errors: no movement, zero norm") {
    clamp_output(g, g.nodes[2].v_hat);
    const Tensor before = g.nodes[1].v;
    CHECK(inference_step(g, 0.3) == 0.0);
    CHECK(bit_equal(before, g.nodes[1].v));
  }
  SUBCASE("eta_v = 0 leaves states unchanged") {
    clamp_output(g, one_hot(0, 2));
    const Tensor before = g.nodes[1].v;
    inference_step(g, 0.0);
    CHECK(bit_equal(before, g.nodes[1].v));
  }
  SUBCASE("vfe strictly decreases from a perturbed state at small eta_v") {
    clamp_output(g, one_hot(0, 2));
    // push the hidden state well away from its prediction
    for (std::size_t j = 0; j < 3; ++j) g.nodes[1].v[j] += 2.0 + 0.5 * static_cast<double>(j);
    refresh_errors(g);
    const double before = vfe(g);
    inference_step(g, 0.05);
    CHECK(vfe(g) < before);
  }
}

TEST_CASE("run_inference") {
  LayerGraph g = mlp_graph(19);
  Rng rng(77);
  const Tensor x = random_tensor(rng, {4});

  SUBCASE("zero output error converges in one step") {
    forward_predictions(g, x);
    init_states_from_predictions(g);
    clamp_output(g, g.nodes[2].v_hat);
    TrainConfig cfg;
    cfg.convergence_tol = 1e-9;
    cfg.max_inference_iters = 50;
    CHECK(run_inference(g, cfg) == 1);
  }
  SUBCASE("tol = 0 always exhausts the budget") {
    forward_predictions(g, x);
    init_states_from_predictions(g);
    clamp_output(g, one_hot(1, 2));
    TrainConfig cfg;
    cfg.convergence_tol = 0.0;
    cfg.max_inference_iters = 17;
    CHECK(run_inference(g, cfg) == 17);
  }
  SUBCASE("fixed point stability: below-tol start returns after one step") {
    forward_predictions(g, x);
    init_states_from_predictions(g);
    clamp_output(g, one_hot(1, 2));
    TrainConfig tight;
    tight.eta_v = 0.5;
    tight.convergence_tol = 1e-10;
    tight.max_inference_iters = 2000;
    const std::size_t iters = run_inference(g, tight);
    CHECK(iters < 2000);  // actually converged
    const Tensor settled = g.nodes[1].v;
    TrainConfig again = tight;
    again.convergence_tol = 1e-8;
    CHECK(run_inference(g, again) == 1);
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(std::fabs(g.nodes[1].v[j] - settled[j]) < 1e-8);
    }
  }
}

TEST_CASE("weight_update") {
  LayerGraph g = mlp_graph(23);
  Rng rng(41);
  const Tensor x = random_tensor(rng, {4});
  forward_predictions(g, x);
  init_states_from_predictions(g);
  TrainConfig cfg;
  cfg.eta_theta = 0.1;
  OptimizerState opt;

  SUBCASE("zero errors: nothing changes, count 0") {
    clamp_output(g, g.nodes[2].v_hat);
    const LayerGraph before = g;
    CHECK(weight_update(g, cfg, opt) == 0);
    CHECK(params_bit_equal(before, g));
  }
  SUBCASE("infinite threshold counts nothing") {
    clamp_output(g, one_hot(0, 2));
    TrainConfig inf_cfg = cfg;
    inf_cfg.update_count_threshold = std::numeric_limits<double>::infinity();
    CHECK(weight_update(g, inf_cfg, opt) == 0);
  }
  SUBCASE("count matches a brute-force outer-product census on a dense edge") {
    clamp_output(g, one_hot(0, 2));
    run_inference(g, cfg);
    // predict the count for the top edge by brute force before updating
    const Tensor eps = g.nodes[2].eps;
    const Tensor& vh = g.nodes[1].v_hat;
    std::size_t expected_top = 0;
    for (std::size_t o = 0; o < 2; ++o) {
      for (std::size_t i = 0; i < 3; ++i) {
        if (std::fabs(cfg.eta_theta * eps[o] * vh[i]) > 0.0) ++expected_top;
      }
      if (std::fabs(cfg.eta_theta * eps[o]) > 0.0) ++expected_top;
    }
    // lower edge contribution via the same rule
    const EdgeGradient low = weight_gradient(g, 0);
    std::size_t expected_low = 0;
    for (double v : low.weights.data) {
      if (std::fabs(cfg.eta_theta * v) > 0.0) ++expected_low;
    }
    for (double v : low.bias.data) {
      if (std::fabs(cfg.eta_theta * v) > 0.0) ++expected_low;
    }
    CHECK(weight_update(g, cfg, opt) == expected_top + expected_low);
  }
}

TEST_CASE("adam first step moves by about eta times the direction sign") {
  LayerGraph g = mlp_graph(29);
  Rng rng(51);
  const Tensor x = random_tensor(rng, {4});
  forward_predictions(g, x);
  init_states_from_predictions(g);
  clamp_output(g, one_hot(1, 2));
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::kAdam;
  cfg.eta_theta = 0.01;
  OptimizerState opt;
  const EdgeGradient dir = weight_gradient(g, 1);
  const double before = g.edges[1].bias[1];
  weight_update(g, cfg, opt);
  const double delta = g.edges[1].bias[1] - before;
  const double d = dir.bias[1];
  const double want = cfg.eta_theta * d / (std::fabs(d) + cfg.adam_eps);
  CHECK(delta == doctest::Approx(want).epsilon(1e-9));
  CHECK(opt.step_count == 1);
}

TEST_CASE("train_first_sample on zero parameters: hand-derived trace") {
  LayerGraph g = zero_param_graph();
  Rng rng(61);
  const Tensor x = random_tensor(rng, {4}, 0.0, 1.0);
  const Tensor label = one_hot(1, 2);
  TrainConfig cfg;
  cfg.eta_theta = 0.5;
  cfg.eta_v = 0.1;
  cfg.max_inference_iters = 5;
  OptimizerState opt;
  auto [res, snap] = train_first_sample(g, x, label, cfg, opt);

  // zero weights mean zero predictions, no state motion, and the only
  // nonzero gradient is the output bias, which receives eta * label
  CHECK(res.iterations_used == 5);
  CHECK(res.final_vfe == doctest::Approx(0.5));
  CHECK(res.nonzero_weight_updates == 1);
  CHECK(res.predicted_class == 0);  // all-zero output, tie-break lowest index
  CHECK(g.edges[1].bias.data == std::vector<double>{0.0, 0.5});
  CHECK(g.edges[1].weights.data == std::vector<double>(6, 0.0));
  CHECK(g.edges[0].weights.data == std::vector<double>(12, 0.0));
  CHECK(g.edges[0].bias.data == std::vector<double>(3, 0.0));
  REQUIRE(snap.values.size() == 1);
  CHECK(snap.values[0].data == std::vector<double>(3, 0.0));
}

TEST_CASE("train_first_sample seeded golden trace") {
  // recorded from the first verified build; any behavioural change to the
  // forward pass, inference loop, or update rule shifts these values
  LayerGraph g = build_graph({6},
                             {LayerSpec::dense(5, Activation::kRelu),
                              LayerSpec::dense(3, Activation::kLinear)},
                             321);
  Rng rng(77);
  Tensor x({6});
  for (double& v : x.data) v = rng.uniform(0.0, 1.0);
  TrainConfig cfg;
  cfg.eta_v = 0.1;
  cfg.eta_theta = 0.05;
  cfg.max_inference_iters = 40;
  OptimizerState opt;
  auto [res, snap] = train_first_sample(g, x, one_hot(1, 3), cfg, opt);
  CHECK(res.iterations_used == 40);
  CHECK(res.nonzero_weight_updates == 13);
  CHECK(res.predicted_class == 0);
  CHECK(res.final_vfe == doctest::Approx(1.0580271874162421).epsilon(1e-13));
  CHECK(g.edges[0].weights.data[0] == doctest::Approx(0.045634461110141022).epsilon(1e-13));
  CHECK(g.edges[1].weights.data[7] == doctest::Approx(0.24112593128277224).epsilon(1e-13));
  CHECK(g.edges[1].bias.data[1] == doctest::Approx(-0.26350791894361808).epsilon(1e-13));
  CHECK(snap.values[0].data[2] == doctest::Approx(0.256614503446772).epsilon(1e-13));
}

TEST_CASE("train_first_sample: label equal to prediction yields zero updates") {
  LayerGraph g = mlp_graph(71);
  Rng rng(5);
  const Tensor x = random_tensor(rng, {4});
  forward_predictions(g, x);
  const Tensor label = g.nodes[2].v_hat;
  TrainConfig cfg;
  OptimizerState opt;
  LayerGraph before = g;
  auto [res, snap] = train_first_sample(g, x, label, cfg, opt);
  CHECK(res.nonzero_weight_updates == 0);
  CHECK(params_bit_equal(before, g));
}

TEST_CASE("train_first_sample ignores the amortize flag") {
  const Tensor x = [&] {
    Rng rng(15);
    return random_tensor(rng, {4}, 0.0, 1.0);
  }();
  const Tensor label = one_hot(0, 2);
  TrainConfig on;
  on.amortize = true;
  TrainConfig off = on;
  off.amortize = false;
  LayerGraph g1 = mlp_graph(99);
  LayerGraph g2 = mlp_graph(99);
  OptimizerState o1, o2;
  auto [r1, s1] = train_first_sample(g1, x, label, on, o1);
  auto [r2, s2] = train_first_sample(g2, x, label, off, o2);
  CHECK(params_bit_equal(g1, g2));
  CHECK(r1.final_vfe == r2.final_vfe);
  CHECK(r1.nonzero_weight_updates == r2.nonzero_weight_updates);
  CHECK(bit_equal(s1.values[0], s2.values[0]));
}

TEST_CASE("train_subsequent_sample") {
  Rng rng(25);
  const Tensor f1 = random_tensor(rng, {4}, 0.0, 1.0);
  const Tensor f2 = random_tensor(rng, {4}, 0.0, 1.0);
  const Tensor label = one_hot(1, 2);

  SUBCASE("amortize off reproduces train_first_sample bit for bit") {
    TrainConfig cfg;
    cfg.amortize = false;
    LayerGraph g1 = mlp_graph(111);
    LayerGraph g2 = mlp_graph(111);
    OptimizerState o1, o2;
    StateSnapshot junk;
    junk.values.push_back(random_tensor(rng, {3}));
    auto [r1, s1] = train_first_sample(g1, f2, label, cfg, o1);
    auto [r2, s2] = train_subsequent_sample(g2, f2, label, junk, cfg, o2);
    CHECK(params_bit_equal(g1, g2));
    CHECK(r1.final_vfe == r2.final_vfe);
    CHECK(r1.iterations_used == r2.iterations_used);
    CHECK(bit_equal(s1.values[0], s2.values[0]));
  }
  SUBCASE("amortize on with the cold-init snapshot equals a cold start") {
    TrainConfig on;
    on.amortize = true;
    TrainConfig off = on;
    off.amortize = false;
    LayerGraph g1 = mlp_graph(113);
    LayerGraph g2 = mlp_graph(113);
    // snapshot of the cold init for this same frame
    forward_predictions(g1, f2);
    init_states_from_predictions(g1);
    const StateSnapshot cold = take_snapshot(g1);
    OptimizerState o1, o2;
    auto [r1, s1] = train_subsequent_sample(g1, f2, label, cold, on, o1);
    StateSnapshot junk;
    junk.values.push_back(random_tensor(rng, {3}));
    auto [r2, s2] = train_subsequent_sample(g2, f2, label, junk, off, o2);
    CHECK(params_bit_equal(g1, g2));
    CHECK(r1.final_vfe == r2.final_vfe);
    CHECK(bit_equal(s1.values[0], s2.values[0]));
  }
  SUBCASE("identical consecutive frames need no more iterations than the first") {
    TrainConfig cfg;
    cfg.eta_v = 0.2;
    cfg.convergence_tol = 1e-7;
    cfg.max_inference_iters = 2000;
    cfg.eta_theta = 1e-3;
    LayerGraph g = mlp_graph(115);
    OptimizerState opt;
    auto [r1, s1] = train_first_sample(g, f1, label, cfg, opt);
    auto [r2, s2] = train_subsequent_sample(g, f1, label, s1, cfg, opt);
    CHECK(r2.iterations_used <= r1.iterations_used);
  }
  SUBCASE("snapshot shape mismatch is rejected") {
    TrainConfig cfg;
    LayerGraph g = mlp_graph(117);
    OptimizerState opt;
    StateSnapshot bad;
    bad.values.push_back(Tensor({7}));
    CHECK_THROWS_AS(train_subsequent_sample(g, f1, label, bad, cfg, opt), std::invalid_argument);
  }
}

TEST_CASE("train_epoch") {
  Rng rng(35);
  FrameStream stream;
  for (std::size_t i = 0; i < 6; ++i) {
    stream.frames.push_back(make_frame(random_tensor(rng, {4}, 0.0, 1.0), i % 2));
  }
  TrainConfig cfg;
  cfg.max_inference_iters = 10;
  OptimizerState opt;

  SUBCASE("one result per frame") {
    LayerGraph g = mlp_graph(200);
    FrameStream single;
    single.frames.push_back(stream.frames[0]);
    CHECK(train_epoch(g, single, cfg, opt).size() == 1);
    LayerGraph g2 = mlp_graph(200);
    OptimizerState o2;
    CHECK(train_epoch(g2, stream, cfg, o2).size() == stream.size());
  }
  SUBCASE("empty stream is an error") {
    LayerGraph g = mlp_graph(201);
    FrameStream empty;
    CHECK_THROWS_AS(train_epoch(g, empty, cfg, opt), std::invalid_argument);
  }
  SUBCASE("constant-frame stream: nonzero update counts never increase") {
    FrameStream constant;
    for (std::size_t i = 0; i < 12; ++i) constant.frames.push_back(stream.frames[0]);
    TrainConfig ccfg;
    ccfg.eta_v = 0.5;
    ccfg.max_inference_iters = 60;
    ccfg.eta_theta = 0.05;
    ccfg.update_count_threshold = 1e-6;
    LayerGraph g = mlp_graph(202);
    OptimizerState o;
    const std::vector<SampleResult> results = train_epoch(g, constant, ccfg, o);
    for (std::size_t i = 1; i < results.size(); ++i) {
      CHECK(results[i].nonzero_weight_updates <= results[i - 1].nonzero_weight_updates);
    }
  }
}

TEST_CASE("evaluate") {
  SUBCASE("empty test set is an error, not zero") {
    LayerGraph g = mlp_graph(301);
    FrameStream empty;
    CHECK_THROWS_AS(evaluate(g, empty), std::invalid_argument);
  }
  SUBCASE("test set labelled by the model's own argmax scores 1.0") {
    LayerGraph g = mlp_graph(302);
    Rng rng(3);
    FrameStream stream;
    for (std::size_t i = 0; i < 8; ++i) {
      Frame f = make_frame(random_tensor(rng, {4}, 0.0, 1.0), 0);
      forward_predictions(g, f.image);
      f.label = predicted_class(g);
      stream.frames.push_back(std::move(f));
    }
    CHECK(evaluate(g, stream) == 1.0);
  }
  SUBCASE("evaluation does not perturb training state") {
    LayerGraph g = mlp_graph(303);
    Rng rng(4);
    forward_predictions(g, random_tensor(rng, {4}, 0.0, 1.0));
    init_states_from_predictions(g);
    const Tensor v1 = g.nodes[1].v;
    const Tensor vh = g.nodes[2].v_hat;
    FrameStream stream;
    stream.frames.push_back(make_frame(random_tensor(rng, {4}, 0.0, 1.0), 1));
    evaluate(g, stream);
    CHECK(bit_equal(v1, g.nodes[1].v));
    CHECK(bit_equal(vh, g.nodes[2].v_hat));
  }
  SUBCASE("untrained nets sit at chance level on 20 balanced classes") {
    const SplitStreams data = synthetic_stream(12345, 20, 8, 16, 0.7);
    REQUIRE(data.test.size() == 40);
    const std::vector<LayerSpec> specs = {LayerSpec::flatten(),
                                          LayerSpec::dense(24, Activation::kRelu),
                                          LayerSpec::dense(20, Activation::kLinear)};
    double total = 0.0;
    const std::size_t nets = 40;
    for (std::size_t s = 0; s < nets; ++s) {
      LayerGraph g = build_graph({1, 16, 16}, specs, 1000 + s);
      total += evaluate(g, data.test);
    }
    const double mean = total / static_cast<double>(nets);
    CHECK(mean > 0.02);
    CHECK(mean < 0.09);
  }
}

TEST_CASE("full epoch determinism") {
  const SplitStreams data = synthetic_stream(7, 5, 8, 16, 0.5);
  const std::vector<LayerSpec> specs = {LayerSpec::flatten(),
                                        LayerSpec::dense(16, Activation::kRelu),
                                        LayerSpec::dense(5, Activation::kLinear)};
  TrainConfig cfg;
  cfg.max_inference_iters = 20;
  cfg.eta_theta = 0.005;
  // run twice and compare every metric and parameter bit for bit
  LayerGraph g1 = build_graph({1, 16, 16}, specs, 9);
  LayerGraph g2 = build_graph({1, 16, 16}, specs, 9);
  OptimizerState o1, o2;
  const std::vector<SampleResult> r1 = train_epoch(g1, data.train, cfg, o1);
  const std::vector<SampleResult> r2 = train_epoch(g2, data.train, cfg, o2);
  REQUIRE(r1.size() == r2.size());
  for (std::size_t i = 0; i < r1.size(); ++i) {
    CHECK(r1[i].final_vfe == r2[i].final_vfe);
    CHECK(r1[i].iterations_used == r2[i].iterations_used);
    CHECK(r1[i].nonzero_weight_updates == r2[i].nonzero_weight_updates);
    CHECK(r1[i].predicted_class == r2[i].predicted_class);
  }
  CHECK(params_bit_equal(g1, g2));
}

TEST_CASE("vfe is non-increasing under inference for a small enough eta_v") {
  // Relaxation setting: zero output error, randomized hidden states. A
  // workable eta_v is found by halving, as elsewhere instance-dependent
  // weight norms can break single-step monotonicity.
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    LayerGraph g = build_graph({5},
                               {LayerSpec::dense(6, Activation::kRelu),
                                LayerSpec::dense(5, Activation::kRelu),
                                LayerSpec::dense(4, Activation::kLinear)},
                               400 + seed);
    Rng rng(600 + seed);
    const Tensor x = random_tensor(rng, {5}, 0.0, 1.0);
    forward_predictions(g, x);
    init_states_from_predictions(g);
    std::vector<Tensor> start;
    for (std::size_t i = 1; i + 1 < g.node_count(); ++i) {
      Tensor v = g.nodes[i].v;
      for (double& val : v.data) val += rng.uniform(-1.0, 1.0);
      start.push_back(std::move(v));
    }
    bool found = false;
    double eta = 1.0;
    for (int attempt = 0; attempt < 30 && !found; ++attempt, eta *= 0.5) {
      for (std::size_t i = 0; i < start.size(); ++i) g.nodes[i + 1].v = start[i];
      g.nodes[g.node_count() - 1].v = g.nodes[g.node_count() - 1].v_hat;  // zero output error
      refresh_errors(g);
      double prev = vfe(g);
      bool monotone = true;
      for (int step = 0; step < 50 && monotone; ++step) {
        inference_step(g, eta);
        const double cur = vfe(g);
        monotone = cur <= prev + 1e-12;
        prev = cur;
      }
      found = monotone;
    }
    CHECK(found);
  }
}
