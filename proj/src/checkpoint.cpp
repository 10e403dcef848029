#include "pcta/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "pcta/errors.hpp"

namespace pcta {

namespace {

constexpr char kMagic[4] = {'P', 'C', 'T', 'A'};

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_integral_v<T>);
  unsigned char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff);
  }
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const std::string& name) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw DataError(name + ": truncated checkpoint");
  }
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  }
  return static_cast<T>(v);
}

void write_doubles(std::ostream& out, const std::vector<double>& values) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(double)));
  } else {
    for (double d : values) {
      std::uint64_t bits;
      std::memcpy(&bits, &d, sizeof(bits));
      write_le(out, bits);
    }
  }
}

void read_doubles(std::istream& in, std::vector<double>& values, const std::string& name) {
  if constexpr (std::endian::native == std::endian::little) {
    if (!in.read(reinterpret_cast<char*>(values.data()),
                 static_cast<std::streamsize>(values.size() * sizeof(double)))) {
      throw DataError(name + ": truncated checkpoint");
    }
  } else {
    for (double& d : values) {
      const std::uint64_t bits = read_le<std::uint64_t>(in, name);
      std::memcpy(&d, &bits, sizeof(d));
    }
  }
}

void write_shape(std::ostream& out, const std::vector<std::size_t>& shape) {
  write_le<std::uint8_t>(out, static_cast<std::uint8_t>(shape.size()));
  for (std::size_t d : shape) write_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
}

std::vector<std::size_t> read_shape(std::istream& in, const std::string& name) {
  const std::uint8_t ndim = read_le<std::uint8_t>(in, name);
  std::vector<std::size_t> shape(ndim);
  for (std::size_t i = 0; i < ndim; ++i) shape[i] = read_le<std::uint32_t>(in, name);
  return shape;
}

void write_tensor(std::ostream& out, const Tensor& t) {
  write_shape(out, t.shape);
  write_doubles(out, t.data);
}

Tensor read_tensor(std::istream& in, const std::string& name) {
  Tensor t(read_shape(in, name));
  read_doubles(in, t.data, name);
  return t;
}

}  // namespace

void save_checkpoint(std::ostream& out, const LayerGraph& g, std::uint64_t seed,
                     const StateSnapshot* snapshot) {
  out.write(kMagic, 4);
  write_le<std::uint16_t>(out, kCheckpointVersion);
  write_le<std::uint64_t>(out, seed);
  write_shape(out, g.input_shape);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(g.specs.size()));
  for (const LayerSpec& s : g.specs) {
    write_le<std::uint8_t>(out, static_cast<std::uint8_t>(s.kind));
    write_le<std::uint8_t>(out, static_cast<std::uint8_t>(s.activation));
    std::uint32_t a = 0, b = 0;
    switch (s.kind) {
      case LayerKind::kConv2d: a = static_cast<std::uint32_t>(s.out_channels);
                               b = static_cast<std::uint32_t>(s.kernel); break;
      case LayerKind::kMaxPool: a = static_cast<std::uint32_t>(s.pool_size); break;
      case LayerKind::kFlatten: break;
      case LayerKind::kDense: a = static_cast<std::uint32_t>(s.out_features); break;
    }
    write_le<std::uint32_t>(out, a);
    write_le<std::uint32_t>(out, b);
  }
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(g.edges.size()));
  for (const Edge& e : g.edges) {
    write_tensor(out, e.weights);
    write_tensor(out, e.bias);
  }
  write_le<std::uint8_t>(out, snapshot != nullptr ? 1 : 0);
  if (snapshot != nullptr) {
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(snapshot->values.size()));
    for (const Tensor& t : snapshot->values) write_tensor(out, t);
  }
}

void save_checkpoint(const std::string& path, const LayerGraph& g, std::uint64_t seed,
                     const StateSnapshot* snapshot) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path + ": cannot open for writing");
  save_checkpoint(out, g, seed, snapshot);
  if (!out) throw DataError(path + ": write failed");
}

LoadedCheckpoint load_checkpoint(std::istream& in, const std::string& name) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError(name + ": not a PCTA checkpoint (bad magic)");
  }
  const std::uint16_t version = read_le<std::uint16_t>(in, name);
  if (version != kCheckpointVersion) {
    throw DataError(name + ": unsupported checkpoint version " + std::to_string(version) +
                    " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  LoadedCheckpoint loaded;
  loaded.seed = read_le<std::uint64_t>(in, name);
  const std::vector<std::size_t> input_shape = read_shape(in, name);
  const std::uint32_t spec_count = read_le<std::uint32_t>(in, name);
  std::vector<LayerSpec> specs;
  for (std::uint32_t i = 0; i < spec_count; ++i) {
    const std::uint8_t kind = read_le<std::uint8_t>(in, name);
    const std::uint8_t act = read_le<std::uint8_t>(in, name);
    const std::uint32_t a = read_le<std::uint32_t>(in, name);
    const std::uint32_t b = read_le<std::uint32_t>(in, name);
    if (kind > 3 || act > 1) throw DataError(name + ": corrupt layer descriptor");
    LayerSpec s;
    s.kind = static_cast<LayerKind>(kind);
    s.activation = static_cast<Activation>(act);
    switch (s.kind) {
      case LayerKind::kConv2d: s.out_channels = a; s.kernel = b; break;
      case LayerKind::kMaxPool: s.pool_size = a; break;
      case LayerKind::kFlatten: break;
      case LayerKind::kDense: s.out_features = a; break;
    }
    specs.push_back(s);
  }
  try {
    loaded.graph = build_graph(input_shape, specs, loaded.seed);
  } catch (const std::invalid_argument& e) {
    throw DataError(name + ": checkpoint architecture is invalid: " + e.what());
  }
  const std::uint32_t edge_count = read_le<std::uint32_t>(in, name);
  if (edge_count != loaded.graph.edges.size()) {
    throw DataError(name + ": edge count mismatch");
  }
  for (Edge& e : loaded.graph.edges) {
    Tensor w = read_tensor(in, name);
    Tensor b = read_tensor(in, name);
    if (w.shape != e.weights.shape || b.shape != e.bias.shape) {
      throw DataError(name + ": parameter tensor shape mismatch");
    }
    e.weights = std::move(w);
    e.bias = std::move(b);
  }
  const std::uint8_t has_snapshot = read_le<std::uint8_t>(in, name);
  if (has_snapshot != 0) {
    loaded.has_snapshot = true;
    const std::uint32_t count = read_le<std::uint32_t>(in, name);
    for (std::uint32_t i = 0; i < count; ++i) {
      loaded.snapshot.values.push_back(read_tensor(in, name));
    }
  }
  return loaded;
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open file");
  return load_checkpoint(in, path);
}

std::string checkpoint_bytes(const LayerGraph& g, std::uint64_t seed, const StateSnapshot* snapshot) {
  std::ostringstream out(std::ios::binary);
  save_checkpoint(out, g, seed, snapshot);
  return out.str();
}

}  // namespace pcta
