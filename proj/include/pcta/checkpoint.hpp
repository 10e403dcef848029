#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "pcta/graph.hpp"

namespace pcta {

// Little-endian binary checkpoint: magic "PCTA", u16 format version,
// architecture descriptor, seed, per-edge parameter tensors, optional
// hidden-state snapshot. Round-trips are bit-exact.
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct LoadedCheckpoint {
  LayerGraph graph;
  std::uint64_t seed = 0;
  bool has_snapshot = false;
  StateSnapshot snapshot;
};

void save_checkpoint(std::ostream& out, const LayerGraph& g, std::uint64_t seed,
                     const StateSnapshot* snapshot = nullptr);
void save_checkpoint(const std::string& path, const LayerGraph& g, std::uint64_t seed,
                     const StateSnapshot* snapshot = nullptr);

LoadedCheckpoint load_checkpoint(std::istream& in, const std::string& name);
LoadedCheckpoint load_checkpoint(const std::string& path);

/// Serialized checkpoint bytes, handy for hashing/equality checks.
std::string checkpoint_bytes(const LayerGraph& g, std::uint64_t seed,
                             const StateSnapshot* snapshot = nullptr);

}  // namespace pcta
