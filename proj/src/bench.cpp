#include "pathonet/bench.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "pathonet/rng.hpp"

namespace pathonet {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

std::string host_description() {
    std::string model = "unknown cpu";
    std::ifstream cpuinfo("/proc/cpuinfo");
    std::string line;
    while (std::getline(cpuinfo, line)) {
        if (line.rfind("model name", 0) == 0) {
            const auto colon = line.find(':');
            if (colon != std::string::npos) {
                model = line.substr(colon + 1);
                const auto first = model.find_first_not_of(' ');
                if (first != std::string::npos) model = model.substr(first);
            }
            break;
        }
    }
    return model + ", " + std::to_string(std::thread::hardware_concurrency()) +
           " hardware threads";
}

namespace {

BenchReport run_bench(const Model<float>& model, std::int64_t count, std::int64_t warmup,
                      std::uint64_t seed, int batch_size) {
    if (count < 1) throw ConfigError("bench: count must be >= 1");
    const NetworkConfig& cfg = model.config;

    Rng rng(seed);
    auto make_sample = [&]() {
        Tensor<float> s({1, cfg.in_channels, cfg.in_height, cfg.in_width});
        for (std::int64_t i = 0; i < s.numel(); ++i) s[i] = rng.uniformf();
        return s;
    };

    BenchReport rep;
    rep.samples_run = count;
    rep.warmup_count = warmup;
    rep.host = host_description();

    for (std::int64_t i = 0; i < warmup; ++i) forward(model, make_sample());

    rep.latencies_ms.reserve(static_cast<std::size_t>(count));
    double total_s = 0;
    for (std::int64_t i = 0; i < count; ++i) {
        const Tensor<float> s = make_sample();
        const auto t0 = Clock::now();
        volatile float sink = forward(model, s).at2(0, 1);
        const auto t1 = Clock::now();
        (void)sink;
        const double dt = std::chrono::duration<double>(t1 - t0).count();
        total_s += dt;
        rep.latencies_ms.push_back(dt * 1e3);
    }

    std::vector<double> sorted = rep.latencies_ms;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    rep.min_ms = sorted.front();
    rep.max_ms = sorted.back();
    rep.mean_ms = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(n);
    rep.median_ms = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    rep.p95_ms = sorted[std::min(n - 1, static_cast<std::size_t>(
                                            std::ceil(0.95 * static_cast<double>(n)) - 1))];
    rep.throughput_sps = static_cast<double>(count) / total_s;

    if (batch_size > 1) {
        const std::int64_t batches = std::max<std::int64_t>(1, count / batch_size);
        Tensor<float> batch({static_cast<int>(batch_size), cfg.in_channels, cfg.in_height,
                             cfg.in_width});
        for (std::int64_t i = 0; i < batch.numel(); ++i) batch[i] = rng.uniformf();
        const auto t0 = Clock::now();
        for (std::int64_t b = 0; b < batches; ++b) {
            volatile float sink = forward(model, batch).at2(0, 1);
            (void)sink;
        }
        const auto t1 = Clock::now();
        rep.batch_throughput_sps = static_cast<double>(batches * batch_size) /
                                   std::chrono::duration<double>(t1 - t0).count();
    }
    return rep;
}

} // namespace

BenchReport bench_inference(const Model<float>& model, std::int64_t count, std::int64_t warmup,
                            std::uint64_t seed, int batch_size) {
    return run_bench(model, count, warmup, seed, batch_size);
}

BenchReport bench_inference(const QuantizedModel& qm, std::int64_t count, std::int64_t warmup,
                            std::uint64_t seed, int batch_size) {
    return run_bench(dequantize(qm), count, warmup, seed, batch_size);
}

std::string BenchReport::to_json() const {
    json j;
    j["samples_run"] = samples_run;
    j["warmup_count"] = warmup_count;
    j["mean_ms"] = mean_ms;
    j["median_ms"] = median_ms;
    j["p95_ms"] = p95_ms;
    j["min_ms"] = min_ms;
    j["max_ms"] = max_ms;
    j["throughput_sps"] = throughput_sps;
    if (batch_throughput_sps > 0) j["batch_throughput_sps"] = batch_throughput_sps;
    j["host"] = host;
    j["power_w"] = "unmeasured";
    j["reference"] = {{"movidius_ncs_rpi3_ms_per_sample", 2.7},
                      {"intel_i5_6300u_ms_per_sample", 1.1},
                      {"movidius_ncs_rpi3_power_w", 2.9},
                      {"intel_i5_6300u_power_w", 18.5}};
    return j.dump(2);
}

std::string BenchReport::to_text() const {
    std::ostringstream os;
    char line[160];
    os << "Platform                 " << host << "\n";
    std::snprintf(line, sizeof(line), "Time(/sample) (ms)       mean %.4f  median %.4f  p95 %.4f  min %.4f\n",
                  mean_ms, median_ms, p95_ms, min_ms);
    os << line;
    std::snprintf(line, sizeof(line), "Throughput (samples/s)   %.1f", throughput_sps);
    os << line;
    if (batch_throughput_sps > 0) {
        std::snprintf(line, sizeof(line), "  (batched: %.1f)", batch_throughput_sps);
        os << line;
    }
    os << "\nPower (W)                unmeasured (no physical meter)\n";
    os << "Reference: Movidius NCS + RPi3 2.7 ms/sample @ 2.9 W; "
          "Intel i5-6300U 1.1 ms/sample @ 18.5 W\n";
    return os.str();
}

FootprintReport footprint_report(const Model<float>& model, const QuantizedModel* qm) {
    FootprintReport rep;
    rep.model_kb = static_cast<double>(serialize_model(model).size()) / 1000.0;
    if (qm) {
        const CompressionReport cr = compression_report(model, *qm);
        rep.quantized_kb = static_cast<double>(cr.compressed_total_bytes) / 1000.0;
        rep.factor = cr.factor;
        rep.breakdown = cr.to_text();
    } else {
        std::ostringstream os;
        char line[160];
        std::snprintf(line, sizeof(line), "%-24s %10s %12s\n", "layer", "params", "kB");
        os << line;
        for (const auto& [name, t] : model.params) {
            std::snprintf(line, sizeof(line), "%-24s %10lld %12.3f\n", name.c_str(),
                          static_cast<long long>(t.numel()),
                          static_cast<double>(t.numel() * 4) / 1000.0);
            os << line;
        }
        rep.breakdown = os.str();
    }
    return rep;
}

std::string FootprintReport::to_json() const {
    json j;
    j["model_kb"] = model_kb;
    if (quantized_kb > 0) {
        j["quantized_kb"] = quantized_kb;
        j["factor"] = factor;
    }
    return j.dump(2);
}

} // namespace pathonet
