#include "pcta/cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "pcta/backprop.hpp"
#include "pcta/checkpoint.hpp"
#include "pcta/errors.hpp"
#include "pcta/gradcheck.hpp"

namespace pcta {

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point from) {
  return std::chrono::duration<double, std::milli>(Clock::now() - from).count();
}

std::size_t stream_classes(const SplitStreams& streams) {
  std::size_t classes = 0;
  for (const Frame& f : streams.train.frames) classes = std::max(classes, f.label + 1);
  for (const Frame& f : streams.test.frames) classes = std::max(classes, f.label + 1);
  return classes;
}

LayerGraph build_run_graph(const RunConfig& cfg, std::size_t classes) {
  const std::vector<LayerSpec> specs = arch_for(cfg);
  const GraphDescription desc = describe_graph(input_shape_for(cfg), specs);
  const std::size_t out_units = shape_numel(desc.node_shapes.back());
  if (out_units != classes) {
    throw ConfigError("config: architecture output size " + std::to_string(out_units) +
                      " does not match the data's " + std::to_string(classes) + " classes");
  }
  return build_graph(input_shape_for(cfg), specs, cfg.seed);
}

std::vector<SampleResult> run_bp_epoch(LayerGraph& g, const FrameStream& stream,
                                       const TrainConfig& tc, OptimizerState& opt) {
  const std::size_t classes = g.nodes[g.output_index()].v.numel();
  std::vector<SampleResult> results;
  results.reserve(stream.size());
  for (const Frame& f : stream.frames) {
    const Tensor label = one_hot(f.label, classes);
    BpGradients grads = bp_gradients(g, f.image, label);
    SampleResult res;
    res.iterations_used = 0;
    res.predicted_class = predicted_class(g);
    const Tensor& out = g.nodes[g.output_index()].v_hat;
    double loss = 0.0;
    for (std::size_t i = 0; i < out.numel(); ++i) {
      const double d = label.data[i] - out.data[i];
      loss += d * d;
    }
    res.final_vfe = 0.5 * loss;
    for (EdgeGradient& eg : grads.edges) {
      for (double& v : eg.weights.data) v = -v;
      for (double& v : eg.bias.data) v = -v;
    }
    res.nonzero_weight_updates = apply_param_step(g, grads.edges, tc, opt);
    results.push_back(res);
  }
  return results;
}

std::vector<EpochRecord> run_method(LayerGraph& g, const SplitStreams& streams,
                                    const RunConfig& cfg, std::size_t inference_iters,
                                    const std::string& run_id) {
  TrainConfig tc = to_train_config(cfg);
  tc.max_inference_iters = inference_iters;
  tc.validate();
  OptimizerState opt;
  std::vector<EpochRecord> records;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const Clock::time_point t0 = Clock::now();
    std::vector<SampleResult> results = cfg.method == Method::kBackprop
                                            ? run_bp_epoch(g, streams.train, tc, opt)
                                            : train_epoch(g, streams.train, tc, opt);
    const double accuracy = evaluate(g, streams.test);
    EpochMeta meta{run_id, cfg.method, epoch, elapsed_ms(t0)};
    records.push_back(aggregate_epoch(results, accuracy, meta));
  }
  return records;
}

void write_resolved_config(const RunConfig& cfg) {
  std::ofstream out(fs::path(cfg.out) / "resolved_config.txt", std::ios::binary);
  if (!out) throw DataError(cfg.out + ": cannot write resolved config");
  out << resolved_text(cfg);
}

}  // namespace

int cmd_train(const RunConfig& cfg) {
  const SplitStreams streams = make_streams(cfg);
  if (streams.train.empty()) throw DataError("train stream is empty");
  fs::create_directories(cfg.out);
  write_resolved_config(cfg);
  LayerGraph g = build_run_graph(cfg, stream_classes(streams));
  const std::vector<EpochRecord> records =
      run_method(g, streams, cfg, cfg.inference_iters, cfg.run_id);
  const std::string base = cfg.run_id + "_" + method_name(cfg.method);
  write_csv(records, (fs::path(cfg.out) / (base + ".csv")).string());
  const StateSnapshot snap = take_snapshot(g);
  save_checkpoint((fs::path(cfg.out) / (base + ".ckpt")).string(), g, cfg.seed, &snap);
  return 0;
}

int cmd_compare(const RunConfig& cfg) {
  const SplitStreams streams = make_streams(cfg);
  if (streams.train.empty()) throw DataError("train stream is empty");
  fs::create_directories(cfg.out);
  write_resolved_config(cfg);
  const std::size_t classes = stream_classes(streams);
  const std::size_t full = cfg.inference_iters;
  const std::size_t half = std::max<std::size_t>(1, full / 2);

  struct Variant {
    Method method;
    std::size_t iters;
    std::string tag;
  };
  const std::vector<Variant> variants = {
      {Method::kPcnTa, half, "ta" + std::to_string(half)},
      {Method::kPcnTa, full, "ta" + std::to_string(full)},
      {Method::kPcn, full, "pcn" + std::to_string(full)},
      {Method::kBackprop, 1, "bp"},
  };
  std::vector<std::vector<EpochRecord>> parts;
  for (const Variant& variant : variants) {
    RunConfig vcfg = cfg;
    vcfg.method = variant.method;
    // all variants start from the identical seeded initialization
    LayerGraph g = build_run_graph(vcfg, classes);
    parts.push_back(run_method(g, streams, vcfg, variant.iters,
                               cfg.run_id + "_" + variant.tag));
    const std::string base = cfg.run_id + "_" + variant.tag;
    save_checkpoint((fs::path(cfg.out) / (base + ".ckpt")).string(), g, cfg.seed, nullptr);
  }
  write_csv(merge_records(std::move(parts)),
            (fs::path(cfg.out) / (cfg.run_id + "_compare.csv")).string());
  return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
  const GradcheckReport report = run_gradcheck(seed);
  print_gradcheck(report, std::cout);
  return report.all_passed ? 0 : 3;
}

int cmd_eval(const std::string& checkpoint_path, const RunConfig& cfg) {
  const LoadedCheckpoint loaded = load_checkpoint(checkpoint_path);
  const SplitStreams streams = make_streams(cfg);
  if (streams.test.empty()) throw DataError("test stream is empty");
  LayerGraph g = loaded.graph;
  const double accuracy = evaluate(g, streams.test);
  std::cout << "accuracy = " << format_double(accuracy) << " on " << streams.test.size()
            << " test frames\n";
  return 0;
}

namespace {

void print_usage(std::ostream& out) {
  out << "usage: pcta <train | compare | gradcheck | eval> [options]\n"
         "  --config <path>      key=value run configuration file\n"
         "  --out <dir>          output directory (overrides config)\n"
         "  --seed <u64>         RNG seed (overrides config)\n"
         "  --data <dir>         use COIL-20 PGM files from <dir>\n"
         "  --synthetic          use the built-in synthetic stream\n"
         "  --checkpoint <path>  checkpoint to evaluate (eval only)\n"
         "exit codes: 0 success, 1 config error, 2 data error, 3 check failure\n";
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  try {
    if (argc < 2) {
      print_usage(std::cerr);
      return 1;
    }
    const std::string command = argv[1];
    if (command == "--help" || command == "-h") {
      print_usage(std::cout);
      return 0;
    }
    std::string config_path, checkpoint_path;
    std::string out_override, seed_override, data_dir;
    bool synthetic = false;
    for (int i = 2; i < argc; ++i) {
      const std::string arg = argv[i];
      const auto need_value = [&](const char* flag) -> std::string {
        if (i + 1 >= argc) throw ConfigError(std::string("missing value for ") + flag);
        return argv[++i];
      };
      if (arg == "--config") config_path = need_value("--config");
      else if (arg == "--out") out_override = need_value("--out");
      else if (arg == "--seed") seed_override = need_value("--seed");
      else if (arg == "--data") data_dir = need_value("--data");
      else if (arg == "--synthetic") synthetic = true;
      else if (arg == "--checkpoint") checkpoint_path = need_value("--checkpoint");
      else if (arg == "--help" || arg == "-h") {
        print_usage(std::cout);
        return 0;
      } else {
        throw ConfigError("unknown argument '" + arg + "'");
      }
    }
    if (!data_dir.empty() && synthetic) {
      throw ConfigError("--data and --synthetic are mutually exclusive");
    }

    RunConfig cfg;
    if (!config_path.empty()) cfg = parse_config_file(config_path);
    if (!out_override.empty()) apply_config_entry(cfg, "out", out_override);
    if (!seed_override.empty()) apply_config_entry(cfg, "seed", seed_override);
    if (!data_dir.empty()) {
      apply_config_entry(cfg, "data", "coil20");
      apply_config_entry(cfg, "coil_dir", data_dir);
    }
    if (synthetic) apply_config_entry(cfg, "data", "synthetic");

    if (command == "train") return cmd_train(cfg);
    if (command == "compare") return cmd_compare(cfg);
    if (command == "gradcheck") return cmd_gradcheck(cfg.seed);
    if (command == "eval") {
      if (checkpoint_path.empty()) throw ConfigError("eval requires --checkpoint <path>");
      return cmd_eval(checkpoint_path, cfg);
    }
    throw ConfigError("unknown command '" + command + "'");
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace pcta
