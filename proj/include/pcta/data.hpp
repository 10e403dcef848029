#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pcta/tensor.hpp"

namespace pcta {

struct Frame {
  Tensor image;  // [1 x H x W], values in [0, 1]
  std::size_t label = 0;
  std::size_t object_id = 0;
  std::size_t view_angle_index = 0;
};

enum class OrderingMode { kTemporal, kClassIncremental, kShuffled };

struct FrameStream {
  std::vector<Frame> frames;
  OrderingMode ordering = OrderingMode::kTemporal;

  std::size_t size() const { return frames.size(); }
  bool empty() const { return frames.empty(); }
};

struct SplitStreams {
  FrameStream train;
  FrameStream test;
};

/// Parses a binary (P5) PGM with maxval 255; pixels scaled to [0, 1].
Tensor parse_pgm(const std::vector<unsigned char>& bytes, const std::string& name);
Tensor load_pgm(const std::string& path);

/// Loads obj<k>__<angle>.pgm files. Every object present must carry the
/// same complete view set 0..V-1. Views with index % test_every == 0 go to
/// the test stream; the train stream is ordered per `mode`.
SplitStreams load_coil20(const std::string& dir, OrderingMode mode, std::uint64_t shuffle_seed = 0,
                         std::size_t test_every = 4);

/// Self-contained temporally correlated stream: one drifting geometric
/// pattern per class, consecutive frames shifted by drift_step pixels.
/// Frames with index % 4 == 3 are held out as the test stream.
SplitStreams synthetic_stream(std::uint64_t seed, std::size_t num_classes,
                              std::size_t frames_per_class, std::size_t size, double drift_step);

Tensor one_hot(std::size_t label, std::size_t n);

}  // namespace pcta
