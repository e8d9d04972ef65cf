#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pathonet/quantize.hpp"

namespace pathonet {

struct BenchReport {
    std::int64_t samples_run = 0;
    std::int64_t warmup_count = 0;
    double mean_ms = 0;
    double median_ms = 0;
    double p95_ms = 0;
    double min_ms = 0;
    double max_ms = 0;
    double throughput_sps = 0;       // single-sample scoring
    double batch_throughput_sps = 0; // batch scoring (0 when not measured)
    std::string host;
    std::vector<double> latencies_ms; // the raw timed samples

    std::string to_json() const;
    /// Aligned table with the paper-methodology row labels; the power row
    /// is reported as unmeasured (no physical meter in software).
    std::string to_text() const;
};

/// Runs `warmup` untimed then `count` timed single-sample inferences on
/// seeded random inputs (monotonic clock). An additional batched pass
/// measures batch throughput when batch_size > 1.
BenchReport bench_inference(const Model<float>& model, std::int64_t count,
                            std::int64_t warmup, std::uint64_t seed, int batch_size = 64);

/// Dequantize-on-load execution path.
BenchReport bench_inference(const QuantizedModel& qm, std::int64_t count, std::int64_t warmup,
                            std::uint64_t seed, int batch_size = 64);

struct FootprintReport {
    double model_kb = 0;     // exact serialized MDF1 size / 1000
    double quantized_kb = 0; // exact serialized MDQ1 size / 1000 (0 if absent)
    double factor = 0;
    std::string breakdown;   // per-layer text table

    std::string to_json() const;
};

/// Serialized byte sizes / 1000 with a per-layer breakdown; the quantized
/// side delegates to compression_report.
FootprintReport footprint_report(const Model<float>& model, const QuantizedModel* qm);

std::string host_description();

} // namespace pathonet
