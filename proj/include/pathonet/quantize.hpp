#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pathonet/model_io.hpp"
#include "pathonet/train.hpp"

namespace pathonet {

struct KMeansResult {
    std::vector<float> centroids;       // strictly ascending
    std::vector<int> assignments;
    double inertia = 0;
    std::vector<double> inertia_history; // one entry per Lloyd iteration
};

/// 1-D Lloyd's algorithm. Centroids start evenly spaced over [min, max];
/// ties assign to the lower-index centroid; an emptied cluster is
/// re-seeded on the value farthest from its centroid. Stops when
/// assignments are stable or after 300 iterations. Fully deterministic;
/// the seed is recorded but unused.
KMeansResult kmeans_1d(const std::vector<float>& values, int k, std::uint64_t seed);

/// Packs cluster ids LSB-first at `bits` bits each; final byte zero-padded.
std::vector<std::uint8_t> pack_indices(const std::vector<int>& ids, int bits);
std::vector<int> unpack_indices(const std::vector<std::uint8_t>& bytes, int bits,
                                std::int64_t count);

struct LayerCodebook {
    std::string name;              // parameter name, e.g. "fire1.squeeze.weight"
    std::vector<int> shape;        // original tensor shape (derived from config)
    std::vector<float> centroids;  // k values, ascending after quantization
    std::vector<std::uint8_t> packed;
    std::int64_t count = 0;        // number of weights
    int bits = 0;                  // ceil(log2 k), min 1

    int k() const { return static_cast<int>(centroids.size()); }
    Tensor<float> dequantize_tensor() const;
    std::vector<int> indices() const { return unpack_indices(packed, bits, count); }
};

struct QuantizeConfig {
    int k = 16;
    std::map<std::string, int> k_per_layer; // overrides by parameter name
    int finetune_epochs = 0;
    float finetune_lr = 1e-4f;
    int finetune_batch = 256;
    std::uint64_t seed = 42;
};

struct QuantizedModel {
    NetworkConfig config;
    std::vector<LayerCodebook> layers; // every ".weight" tensor, model order
    std::vector<std::pair<std::string, Tensor<float>>> side_params; // biases, batchnorm
    std::vector<std::string> warnings; // k-clamp records
};

/// Per-layer k-means over every conv/dense weight tensor; biases and
/// batchnorm parameters stay raw. Layers with fewer distinct weights than
/// k get k clamped down (recorded in warnings).
QuantizedModel quantize_model(const Model<float>& model, const QuantizeConfig& cfg);

/// Full-precision model whose weights are centroid lookups.
Model<float> dequantize(const QuantizedModel& qm);

/// Runs the quantized model (dequantize-on-load execution).
Tensor<float> quantized_forward(const QuantizedModel& qm, const Tensor<float>& batch);

/// Centroid fine-tuning: assignments stay frozen, each centroid receives
/// the summed gradient of its member weights; biases and batchnorm remain
/// trainable. The packed index streams are never touched.
std::vector<EpochStats> finetune(QuantizedModel& qm, const PatchSet& dataset,
                                 const QuantizeConfig& cfg);

struct LayerReport {
    std::string name;
    std::int64_t weight_count = 0;
    int k = 0;
    int bits = 0;
    std::int64_t original_bytes = 0;   // 4 * weight_count
    std::int64_t compressed_bytes = 0; // 4k + ceil(count*bits/8)
    double factor = 0;
};

struct CompressionReport {
    std::vector<LayerReport> layers;
    std::int64_t side_parameter_bytes = 0;
    std::int64_t original_header_bytes = 0;   // MDF1 overhead (magic, JSON, names)
    std::int64_t compressed_header_bytes = 0; // MDQ1 overhead
    std::int64_t original_total_bytes = 0;    // exact serialized MDF1 size
    std::int64_t compressed_total_bytes = 0;  // exact serialized MDQ1 size
    double factor = 0;

    std::string to_json() const;
    std::string to_text() const; // aligned columns, kB = bytes/1000
};

CompressionReport compression_report(const Model<float>& model, const QuantizedModel& qm);

// MDQ1 quantized model file
std::vector<std::uint8_t> serialize_quantized(const QuantizedModel& qm);
QuantizedModel deserialize_quantized(const std::vector<std::uint8_t>& bytes,
                                     const std::string& what);
void save_quantized(const QuantizedModel& qm, const std::string& path);
QuantizedModel load_quantized(const std::string& path);

} // namespace pathonet
