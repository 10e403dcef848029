#include "pcta/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "pcta/errors.hpp"

namespace pcta {

std::string method_name(Method m) {
  switch (m) {
    case Method::kPcnTa: return "pcn_ta";
    case Method::kPcn: return "pcn";
    case Method::kBackprop: return "backprop";
  }
  return "?";
}

EpochRecord aggregate_epoch(const std::vector<SampleResult>& results, double accuracy,
                            const EpochMeta& meta) {
  if (results.empty()) throw std::invalid_argument("aggregate_epoch: empty result list");
  EpochRecord rec;
  rec.run_id = meta.run_id;
  rec.method = meta.method;
  rec.epoch = meta.epoch;
  rec.accuracy = accuracy;
  rec.wall_time_ms = meta.wall_time_ms;
  double updates = 0.0, iters = 0.0, vfe_sum = 0.0;
  for (const SampleResult& r : results) {
    updates += static_cast<double>(r.nonzero_weight_updates);
    iters += static_cast<double>(r.iterations_used);
    vfe_sum += r.final_vfe;
  }
  const double n = static_cast<double>(results.size());
  rec.avg_nonzero_updates_per_frame = updates / n;
  rec.avg_inference_iters = iters / n;
  rec.mean_final_vfe = vfe_sum / n;
  return rec;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string csv_header() {
  return "run_id,method,epoch,accuracy,avg_nonzero_updates_per_frame,avg_inference_iters,"
         "mean_final_vfe,wall_time_ms";
}

std::string csv_line(const EpochRecord& r) {
  return r.run_id + "," + method_name(r.method) + "," + std::to_string(r.epoch) + "," +
         format_double(r.accuracy) + "," + format_double(r.avg_nonzero_updates_per_frame) + "," +
         format_double(r.avg_inference_iters) + "," + format_double(r.mean_final_vfe) + "," +
         format_double(r.wall_time_ms);
}

void write_csv(const std::vector<EpochRecord>& records, const std::string& path) {
  std::ofstream out(path, std::ios::binary);  // binary keeps LF on every platform
  if (!out) throw DataError(path + ": cannot open for writing");
  out << csv_header() << "\n";
  for (const EpochRecord& r : records) out << csv_line(r) << "\n";
  if (!out) throw DataError(path + ": write failed");
}

std::vector<EpochRecord> merge_records(std::vector<std::vector<EpochRecord>> parts) {
  std::vector<EpochRecord> all;
  for (std::vector<EpochRecord>& part : parts) {
    all.insert(all.end(), part.begin(), part.end());
  }
  std::stable_sort(all.begin(), all.end(), [](const EpochRecord& a, const EpochRecord& b) {
    const std::string ma = method_name(a.method);
    const std::string mb = method_name(b.method);
    if (ma != mb) return ma < mb;
    if (a.epoch != b.epoch) return a.epoch < b.epoch;
    return a.run_id < b.run_id;
  });
  return all;
}

}  // namespace pcta
