#pragma once

#include <string>
#include <vector>

#include "pcta/engine.hpp"

namespace pcta {

enum class Method { kPcnTa, kPcn, kBackprop };

std::string method_name(Method m);

struct EpochRecord {
  std::string run_id;
  Method method = Method::kPcnTa;
  std::size_t epoch = 0;
  double accuracy = 0.0;
  double avg_nonzero_updates_per_frame = 0.0;
  double avg_inference_iters = 0.0;
  double mean_final_vfe = 0.0;
  double wall_time_ms = 0.0;
};

struct EpochMeta {
  std::string run_id;
  Method method = Method::kPcnTa;
  std::size_t epoch = 0;
  double wall_time_ms = 0.0;
};

/// Means over the epoch's per-frame results, computed in 64-bit.
EpochRecord aggregate_epoch(const std::vector<SampleResult>& results, double accuracy,
                            const EpochMeta& meta);

/// Formats with 17 significant digits so parsing the text recovers the
/// exact double.
std::string format_double(double v);

std::string csv_header();
std::string csv_line(const EpochRecord& r);

/// Header plus one LF-terminated line per record.
void write_csv(const std::vector<EpochRecord>& records, const std::string& path);

/// Deterministic concatenation of per-run record lists, ordered by
/// (method, epoch, run_id).
std::vector<EpochRecord> merge_records(std::vector<std::vector<EpochRecord>> parts);

}  // namespace pcta
