#include "pcta/config.hpp"

#include <fstream>
#include <sstream>

#include "pcta/errors.hpp"
#include "pcta/rng.hpp"

namespace pcta {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  std::size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: cannot parse '" + value + "' as a number for key '" + key + "'");
  }
}

std::uint64_t parse_uint(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(value, &used);
    if (used != value.size() || value[0] == '-') throw std::invalid_argument("bad integer");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: cannot parse '" + value + "' as an unsigned integer for key '" + key +
                      "'");
  }
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(cur);
  return parts;
}

Activation parse_activation(const std::string& name, const std::string& token) {
  if (name == "relu") return Activation::kRelu;
  if (name == "linear") return Activation::kLinear;
  throw ConfigError("config: unknown activation '" + name + "' in arch token '" + token + "'");
}

}  // namespace

Method parse_method(const std::string& name) {
  if (name == "pcn_ta") return Method::kPcnTa;
  if (name == "pcn") return Method::kPcn;
  if (name == "backprop") return Method::kBackprop;
  throw ConfigError("config: unknown method '" + name + "' (pcn_ta | pcn | backprop)");
}

OrderingMode parse_ordering(const std::string& name) {
  if (name == "temporal") return OrderingMode::kTemporal;
  if (name == "class_incremental") return OrderingMode::kClassIncremental;
  if (name == "shuffled") return OrderingMode::kShuffled;
  throw ConfigError("config: unknown ordering '" + name +
                    "' (temporal | class_incremental | shuffled)");
}

std::string ordering_name(OrderingMode mode) {
  switch (mode) {
    case OrderingMode::kTemporal: return "temporal";
    case OrderingMode::kClassIncremental: return "class_incremental";
    case OrderingMode::kShuffled: return "shuffled";
  }
  return "?";
}

void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "run_id") {
    if (value.empty() || value.find(',') != std::string::npos) {
      throw ConfigError("config: run_id must be non-empty and free of commas");
    }
    cfg.run_id = value;
  }
  else if (key == "method") cfg.method = parse_method(value);
  else if (key == "epochs") cfg.epochs = parse_uint(key, value);
  else if (key == "seed") cfg.seed = parse_uint(key, value);
  else if (key == "data") {
    if (value != "synthetic" && value != "coil20") {
      throw ConfigError("config: data must be 'synthetic' or 'coil20', got '" + value + "'");
    }
    cfg.data = value;
  } else if (key == "coil_dir") cfg.coil_dir = value;
  else if (key == "ordering") cfg.ordering = parse_ordering(value);
  else if (key == "classes") cfg.classes = parse_uint(key, value);
  else if (key == "frames_per_class") cfg.frames_per_class = parse_uint(key, value);
  else if (key == "image_size") cfg.image_size = parse_uint(key, value);
  else if (key == "drift_step") cfg.drift_step = parse_double(key, value);
  else if (key == "arch") cfg.arch = value;
  else if (key == "eta_v") cfg.eta_v = parse_double(key, value);
  else if (key == "eta_theta") cfg.eta_theta = parse_double(key, value);
  else if (key == "inference_iters") cfg.inference_iters = parse_uint(key, value);
  else if (key == "convergence_tol") cfg.convergence_tol = parse_double(key, value);
  else if (key == "optimizer") {
    if (value != "sgd" && value != "adam") {
      throw ConfigError("config: optimizer must be 'sgd' or 'adam', got '" + value + "'");
    }
    cfg.optimizer = value;
  } else if (key == "adam_beta1") cfg.adam_beta1 = parse_double(key, value);
  else if (key == "adam_beta2") cfg.adam_beta2 = parse_double(key, value);
  else if (key == "adam_eps") cfg.adam_eps = parse_double(key, value);
  else if (key == "update_count_threshold") cfg.update_count_threshold = parse_double(key, value);
  else if (key == "out") cfg.out = value;
  else throw ConfigError("config: unknown key '" + key + "'");
}

RunConfig parse_config_text(const std::string& text, const std::string& name) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(name + ":" + std::to_string(lineno) + ": expected key=value, got '" + line +
                        "'");
    }
    apply_config_entry(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

std::string resolved_text(const RunConfig& cfg) {
  std::ostringstream out;
  out << "run_id = " << cfg.run_id << "\n";
  out << "method = " << method_name(cfg.method) << "\n";
  out << "epochs = " << cfg.epochs << "\n";
  out << "seed = " << cfg.seed << "\n";
  out << "data = " << cfg.data << "\n";
  out << "coil_dir = " << cfg.coil_dir << "\n";
  out << "ordering = " << ordering_name(cfg.ordering) << "\n";
  out << "classes = " << cfg.classes << "\n";
  out << "frames_per_class = " << cfg.frames_per_class << "\n";
  out << "image_size = " << cfg.image_size << "\n";
  out << "drift_step = " << format_double(cfg.drift_step) << "\n";
  out << "arch = " << cfg.arch << "\n";
  out << "eta_v = " << format_double(cfg.eta_v) << "\n";
  out << "eta_theta = " << format_double(cfg.eta_theta) << "\n";
  out << "inference_iters = " << cfg.inference_iters << "\n";
  out << "convergence_tol = " << format_double(cfg.convergence_tol) << "\n";
  out << "optimizer = " << cfg.optimizer << "\n";
  out << "adam_beta1 = " << format_double(cfg.adam_beta1) << "\n";
  out << "adam_beta2 = " << format_double(cfg.adam_beta2) << "\n";
  out << "adam_eps = " << format_double(cfg.adam_eps) << "\n";
  out << "update_count_threshold = " << format_double(cfg.update_count_threshold) << "\n";
  out << "out = " << cfg.out << "\n";
  return out.str();
}

std::vector<LayerSpec> parse_arch(const std::string& descriptor) {
  std::vector<LayerSpec> specs;
  for (const std::string& raw : split(descriptor, ',')) {
    const std::string token = trim(raw);
    if (token.empty()) throw ConfigError("config: empty arch token in '" + descriptor + "'");
    const std::vector<std::string> parts = split(token, ':');
    const std::string& kind = parts[0];
    if (kind == "conv" && parts.size() == 4) {
      specs.push_back(LayerSpec::conv2d(parse_uint("arch", parts[1]), parse_uint("arch", parts[2]),
                                        parse_activation(parts[3], token)));
    } else if (kind == "pool" && parts.size() == 2) {
      specs.push_back(LayerSpec::maxpool(parse_uint("arch", parts[1])));
    } else if (kind == "flatten" && parts.size() == 1) {
      specs.push_back(LayerSpec::flatten());
    } else if (kind == "dense" && parts.size() == 3) {
      specs.push_back(LayerSpec::dense(parse_uint("arch", parts[1]),
                                       parse_activation(parts[2], token)));
    } else {
      throw ConfigError("config: bad arch token '" + token +
                        "' (conv:<c>:<k>:<act> | pool:<s> | flatten | dense:<n>:<act>)");
    }
  }
  return specs;
}

std::vector<LayerSpec> arch_for(const RunConfig& cfg) {
  if (cfg.arch == "coil20") return coil20_architecture_specs();
  if (cfg.arch == "auto") {
    if (cfg.data == "coil20") return coil20_architecture_specs();
    // compact stand-in for the coil20 net: one ReLU stage, linear
    // penultimate and output layers
    std::vector<LayerSpec> specs = {LayerSpec::flatten(), LayerSpec::dense(100, Activation::kRelu),
                                    LayerSpec::dense(32, Activation::kLinear),
                                    LayerSpec::dense(cfg.classes, Activation::kLinear)};
    return specs;
  }
  return parse_arch(cfg.arch);
}

std::vector<std::size_t> input_shape_for(const RunConfig& cfg) {
  if (cfg.data == "coil20") return {1, 128, 128};
  return {1, cfg.image_size, cfg.image_size};
}

TrainConfig to_train_config(const RunConfig& cfg) {
  TrainConfig t;
  t.eta_v = cfg.eta_v;
  t.eta_theta = cfg.eta_theta;
  t.max_inference_iters = cfg.inference_iters;
  t.convergence_tol = cfg.convergence_tol;
  t.amortize = cfg.method == Method::kPcnTa;
  t.optimizer = cfg.optimizer == "adam" ? OptimizerKind::kAdam : OptimizerKind::kSgd;
  t.adam_beta1 = cfg.adam_beta1;
  t.adam_beta2 = cfg.adam_beta2;
  t.adam_eps = cfg.adam_eps;
  t.update_count_threshold = cfg.update_count_threshold;
  return t;
}

SplitStreams make_streams(const RunConfig& cfg) {
  if (cfg.data == "coil20") {
    if (cfg.coil_dir.empty()) {
      throw ConfigError("config: data=coil20 requires coil_dir (or the --data flag)");
    }
    return load_coil20(cfg.coil_dir, cfg.ordering, cfg.seed);
  }
  SplitStreams streams =
      synthetic_stream(cfg.seed, cfg.classes, cfg.frames_per_class, cfg.image_size, cfg.drift_step);
  if (cfg.ordering == OrderingMode::kShuffled) {
    // synthetic frames come out temporally ordered; reshuffle on request
    Rng rng(cfg.seed ^ 0xd1b54a32d192ed03ull);
    for (std::size_t i = streams.train.frames.size(); i > 1; --i) {
      std::swap(streams.train.frames[i - 1], streams.train.frames[rng.index(i)]);
    }
    streams.train.ordering = OrderingMode::kShuffled;
  }
  return streams;
}

}  // namespace pcta
