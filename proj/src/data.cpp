#include "pcta/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <utility>

#include "pcta/errors.hpp"
#include "pcta/rng.hpp"

namespace pcta {

namespace {

constexpr double kPi = 3.14159265358979323846;

[[noreturn]] void pgm_error(const std::string& name, std::size_t offset, const std::string& what) {
  throw DataError(name + ": PGM parse error at byte " + std::to_string(offset) + ": " + what);
}

bool is_pgm_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f';
}

// Skips whitespace and '#' comments between header tokens.
void skip_separators(const std::vector<unsigned char>& bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    if (is_pgm_space(bytes[pos])) {
      ++pos;
    } else if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
}

std::size_t read_header_int(const std::vector<unsigned char>& bytes, std::size_t& pos,
                            const std::string& name, const char* what) {
  skip_separators(bytes, pos);
  if (pos >= bytes.size() || bytes[pos] < '0' || bytes[pos] > '9') {
    pgm_error(name, pos, std::string("expected ") + what);
  }
  std::size_t value = 0;
  while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
    value = value * 10 + static_cast<std::size_t>(bytes[pos] - '0');
    if (value > 1u << 30) pgm_error(name, pos, std::string(what) + " out of range");
    ++pos;
  }
  return value;
}

}  // namespace

Tensor parse_pgm(const std::vector<unsigned char>& bytes, const std::string& name) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    pgm_error(name, 0, "not a binary (P5) PGM");
  }
  std::size_t pos = 2;
  const std::size_t width = read_header_int(bytes, pos, name, "width");
  const std::size_t height = read_header_int(bytes, pos, name, "height");
  if (width == 0 || height == 0) pgm_error(name, pos, "zero image dimension");
  const std::size_t maxval_at = pos;
  const std::size_t maxval = read_header_int(bytes, pos, name, "maxval");
  if (maxval != 255) {
    pgm_error(name, maxval_at, "unsupported maxval " + std::to_string(maxval) + " (only 255)");
  }
  if (pos >= bytes.size() || !is_pgm_space(bytes[pos])) {
    pgm_error(name, pos, "expected single whitespace before pixel data");
  }
  ++pos;
  const std::size_t pixels = width * height;
  if (bytes.size() - pos < pixels) {
    pgm_error(name, bytes.size(),
              "truncated payload: need " + std::to_string(pixels) + " pixel bytes, have " +
                  std::to_string(bytes.size() - pos));
  }
  Tensor image({1, height, width});
  for (std::size_t i = 0; i < pixels; ++i) {
    image.data[i] = static_cast<double>(bytes[pos + i]) / 255.0;
  }
  return image;
}

Tensor load_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open file");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return parse_pgm(bytes, path);
}

namespace {

// Parses "obj<k>__<angle>.pgm"; returns false when the name does not match.
bool parse_coil_name(const std::string& name, std::size_t& object, std::size_t& angle) {
  if (name.size() < 10 || name.rfind("obj", 0) != 0) return false;
  if (name.substr(name.size() - 4) != ".pgm") return false;
  const std::size_t sep = name.find("__");
  if (sep == std::string::npos || sep <= 3) return false;
  const std::string obj_part = name.substr(3, sep - 3);
  const std::string angle_part = name.substr(sep + 2, name.size() - 4 - (sep + 2));
  if (obj_part.empty() || angle_part.empty()) return false;
  for (char c : obj_part) {
    if (c < '0' || c > '9') return false;
  }
  for (char c : angle_part) {
    if (c < '0' || c > '9') return false;
  }
  object = std::stoul(obj_part);
  angle = std::stoul(angle_part);
  return true;
}

void shuffle_frames(std::vector<Frame>& frames, std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t i = frames.size(); i > 1; --i) {
    std::swap(frames[i - 1], frames[rng.index(i)]);
  }
}

}  // namespace

SplitStreams load_coil20(const std::string& dir, OrderingMode mode, std::uint64_t shuffle_seed,
                         std::size_t test_every) {
  namespace fs = std::filesystem;
  if (test_every < 2) throw std::invalid_argument("load_coil20: test_every must be >= 2");
  if (!fs::is_directory(dir)) throw DataError(dir + ": not a directory");

  std::map<std::pair<std::size_t, std::size_t>, std::string> files;
  std::vector<std::string> offenders;
  for (const fs::directory_entry& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    std::size_t object = 0, angle = 0;
    if (!parse_coil_name(name, object, angle)) continue;
    if (object == 0) {
      offenders.push_back(name + " (object ids start at 1)");
      continue;
    }
    auto [it, inserted] = files.emplace(std::make_pair(object, angle), entry.path().string());
    if (!inserted) offenders.push_back(name + " (duplicate of view obj" + std::to_string(object) +
                                       "__" + std::to_string(angle) + ")");
  }
  if (files.empty() && offenders.empty()) {
    throw DataError(dir + ": no obj<k>__<angle>.pgm files found");
  }

  std::set<std::size_t> objects;
  std::size_t max_angle = 0;
  for (const auto& [key, path] : files) {
    objects.insert(key.first);
    max_angle = std::max(max_angle, key.second);
  }
  const std::size_t views = max_angle + 1;
  for (std::size_t object : objects) {
    for (std::size_t angle = 0; angle < views; ++angle) {
      if (!files.count({object, angle})) {
        offenders.push_back("obj" + std::to_string(object) + "__" + std::to_string(angle) +
                            ".pgm (missing view)");
      }
    }
  }
  if (!offenders.empty()) {
    std::string msg = dir + ": ingestion errors:";
    for (const std::string& o : offenders) msg += "\n  " + o;
    throw DataError(msg);
  }

  std::map<std::size_t, std::size_t> label_of;  // object id -> class index
  for (std::size_t object : objects) {
    const std::size_t label = label_of.size();
    label_of[object] = label;
  }

  SplitStreams streams;
  std::vector<std::size_t> image_shape;
  for (const auto& [key, path] : files) {  // map order = (object, angle) = temporal
    Frame f;
    f.image = load_pgm(path);
    if (image_shape.empty()) {
      image_shape = f.image.shape;
    } else if (f.image.shape != image_shape) {
      throw DataError(path + ": image shape " + shape_str(f.image.shape) +
                      " differs from the rest of the dataset " + shape_str(image_shape));
    }
    f.object_id = key.first;
    f.view_angle_index = key.second;
    f.label = label_of[key.first];
    if (key.second % test_every == 0) {
      streams.test.frames.push_back(std::move(f));
    } else {
      streams.train.frames.push_back(std::move(f));
    }
  }

  streams.train.ordering = mode;
  streams.test.ordering = OrderingMode::kTemporal;
  switch (mode) {
    case OrderingMode::kTemporal:
      break;  // already sorted by (object, angle)
    case OrderingMode::kClassIncremental:
      std::stable_sort(streams.train.frames.begin(), streams.train.frames.end(),
                       [](const Frame& a, const Frame& b) {
                         return a.label != b.label ? a.label < b.label
                                                   : a.view_angle_index < b.view_angle_index;
                       });
      break;
    case OrderingMode::kShuffled:
      shuffle_frames(streams.train.frames, shuffle_seed);
      break;
  }
  return streams;
}

namespace {

struct ClassPattern {
  double blob_cx = 0.0, blob_cy = 0.0;  // base blob centre
  double drift_dx = 0.0, drift_dy = 0.0;
  double sigma = 1.0;
  double bar_angle = 0.0;
  double bar_spin = 0.0;  // radians per drifted pixel
  double bar_width = 1.0;
};

double torus_delta(double a, double b, double period) {
  double d = a - b;
  while (d > period / 2.0) d -= period;
  while (d < -period / 2.0) d += period;
  return d;
}

Frame render_frame(const ClassPattern& p, std::size_t cls, std::size_t frame_idx, std::size_t size,
                   double drift_step) {
  const double n = static_cast<double>(size);
  const double shift = static_cast<double>(frame_idx) * drift_step;
  const double cx = p.blob_cx + shift * p.drift_dx;
  const double cy = p.blob_cy + shift * p.drift_dy;
  const double angle = p.bar_angle + shift * p.bar_spin;
  const double nx = -std::sin(angle);
  const double ny = std::cos(angle);
  const double mid = n / 2.0;

  Frame f;
  f.image = Tensor({1, size, size});
  f.label = cls;
  f.object_id = cls;
  f.view_angle_index = frame_idx;
  for (std::size_t r = 0; r < size; ++r) {
    for (std::size_t c = 0; c < size; ++c) {
      const double y = static_cast<double>(r) + 0.5;
      const double x = static_cast<double>(c) + 0.5;
      const double dx = torus_delta(x, cx, n);
      const double dy = torus_delta(y, cy, n);
      const double blob = std::exp(-(dx * dx + dy * dy) / (2.0 * p.sigma * p.sigma));
      const double bx = x - mid;
      const double by = y - mid;
      const double dist = bx * nx + by * ny;
      const double bar = 0.8 * std::exp(-(dist * dist) / (2.0 * p.bar_width * p.bar_width));
      // hard floor so the background is exactly zero, as in real
      // black-background object images
      const double v = std::max(0.0, std::min(1.0, blob + bar) - 0.02) / 0.98;
      f.image.data[r * size + c] = v;
    }
  }
  return f;
}

}  // namespace

SplitStreams synthetic_stream(std::uint64_t seed, std::size_t num_classes,
                              std::size_t frames_per_class, std::size_t size, double drift_step) {
  if (size < 16) throw std::invalid_argument("synthetic_stream: size must be >= 16");
  if (num_classes == 0 || frames_per_class == 0) {
    throw std::invalid_argument("synthetic_stream: num_classes and frames_per_class must be positive");
  }
  Rng rng(seed);
  const double n = static_cast<double>(size);
  SplitStreams streams;
  for (std::size_t cls = 0; cls < num_classes; ++cls) {
    ClassPattern p;
    const double base = 2.0 * kPi * static_cast<double>(cls) / static_cast<double>(num_classes);
    const double angle = base + rng.uniform_pm(0.06);
    // alternate between two rings so neighbouring classes stay separable
    const double radius = n * (cls % 2 == 0 ? 0.21 : 0.34) * (1.0 + rng.uniform_pm(0.04));
    p.blob_cx = n / 2.0 + radius * std::cos(angle);
    p.blob_cy = n / 2.0 + radius * std::sin(angle);
    const double drift_dir = angle + kPi / 3.0 + rng.uniform_pm(0.2);
    p.drift_dx = std::cos(drift_dir);
    p.drift_dy = std::sin(drift_dir);
    p.sigma = n * (0.085 + rng.uniform_pm(0.008));
    p.bar_angle = kPi * static_cast<double>(cls) / static_cast<double>(num_classes) +
                  rng.uniform_pm(0.04);
    p.bar_spin = 2.0 / n;  // bar tip moves about one pixel per drifted pixel
    p.bar_width = n * (0.045 + rng.uniform_pm(0.005));

    for (std::size_t j = 0; j < frames_per_class; ++j) {
      Frame f = render_frame(p, cls, j, size, drift_step);
      if (j % 4 == 3) {
        streams.test.frames.push_back(std::move(f));
      } else {
        streams.train.frames.push_back(std::move(f));
      }
    }
  }
  streams.train.ordering = OrderingMode::kTemporal;
  streams.test.ordering = OrderingMode::kTemporal;
  return streams;
}

Tensor one_hot(std::size_t label, std::size_t n) {
  if (n == 0) throw std::invalid_argument("one_hot: n must be positive");
  if (label >= n) {
    throw std::invalid_argument("one_hot: label " + std::to_string(label) + " out of range [0, " +
                                std::to_string(n) + ")");
  }
  Tensor t({n});
  t.data[label] = 1.0;
  return t;
}

}  // namespace pcta
