#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pcta/data.hpp"
#include "pcta/engine.hpp"
#include "pcta/graph.hpp"
#include "pcta/metrics.hpp"

namespace pcta {

/// Key=value run configuration. Unknown keys are rejected; every field has
/// a documented default and the resolved set is echoed next to the outputs.
struct RunConfig {
  std::string run_id = "run";
  Method method = Method::kPcnTa;
  std::size_t epochs = 10;
  std::uint64_t seed = 1;

  std::string data = "synthetic";  // synthetic | coil20
  std::string coil_dir;
  OrderingMode ordering = OrderingMode::kTemporal;
  std::size_t classes = 20;
  std::size_t frames_per_class = 8;
  std::size_t image_size = 64;
  double drift_step = 1.0;

  // "coil20", "auto" (the coil20 net for that dataset, compact MLP for
  // synthetic) or a descriptor like "flatten,dense:100:relu,dense:32:linear,..."
  std::string arch = "auto";

  double eta_v = 0.1;
  double eta_theta = 0.01;
  std::size_t inference_iters = 100;
  double convergence_tol = 0.0;
  std::string optimizer = "sgd";  // sgd | adam
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double update_count_threshold = 0.0;

  std::string out = "pcta_out";
};

/// Applies one key=value pair; throws ConfigError on unknown keys or
/// unparseable values.
void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value);

/// Parses "key = value" lines; '#' starts a comment, blank lines ignored.
RunConfig parse_config_text(const std::string& text, const std::string& name);
RunConfig parse_config_file(const std::string& path);

/// Full key=value echo of the resolved configuration.
std::string resolved_text(const RunConfig& cfg);

std::vector<LayerSpec> parse_arch(const std::string& descriptor);

/// Concrete layer list for this run (resolves "auto"/"coil20").
std::vector<LayerSpec> arch_for(const RunConfig& cfg);
std::vector<std::size_t> input_shape_for(const RunConfig& cfg);

TrainConfig to_train_config(const RunConfig& cfg);

/// Builds the train/test streams this config describes.
SplitStreams make_streams(const RunConfig& cfg);

Method parse_method(const std::string& name);
OrderingMode parse_ordering(const std::string& name);
std::string ordering_name(OrderingMode mode);

}  // namespace pcta
