#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pathonet/ops.hpp"
#include "pathonet/rng.hpp"
#include "pathonet/tensor.hpp"

namespace pathonet {

enum class LayerKind { Conv, MaxPool, Fire, BatchNorm, Flatten, Dense, Relu, Softmax };

std::string layer_kind_name(LayerKind kind);

struct LayerSpec {
    LayerKind kind = LayerKind::Relu;
    std::string name; // conv1, pool1, fire2, ... assigned by NetworkConfig

    // conv
    int in_channels = 0; // also batchnorm channels and fire input channels
    int out_channels = 0;
    int kernel = 0;
    int stride = 1;
    int padding = 0;

    // fire
    int squeeze_ch = 0;
    int expand1x1_ch = 0;
    int expand3x3_ch = 0;

    // dense
    int in_features = 0;
    int units = 0;

    static LayerSpec conv(int in_ch, int out_ch, int kernel, int stride, int padding);
    static LayerSpec maxpool(int stride);
    static LayerSpec fire(int in_ch, int squeeze, int expand1x1, int expand3x3);
    static LayerSpec batchnorm(int channels);
    static LayerSpec flatten();
    static LayerSpec dense(int in_features, int units);
    static LayerSpec relu_layer();
    static LayerSpec softmax_layer();
};

/// Declarative linear layer chain. Shapes are checked statically against
/// each layer's declared input; validation failures name the offending
/// layer.
struct NetworkConfig {
    int in_channels = 0;
    int in_height = 0;
    int in_width = 0;
    std::vector<LayerSpec> layers;
    int class_count = 2;

    // training metadata, carried inside the serialized config JSON
    std::int64_t trained_epochs = 0;
    std::uint64_t seed = 0;

    /// Conv1(3x3x32, pad 1) -> ReLU -> MaxPool/2 -> Fire(16, 64+64) x2 ->
    /// MaxPool/2 -> BatchNorm -> Flatten -> Dense(56) -> ReLU -> Dense(2)
    /// -> Softmax. The dense width keeps the 20x20 float model near 550 kB.
    static NetworkConfig default_config(int patch_size = 20, int channels = 3);

    static NetworkConfig from_json(const std::string& json_text);
    std::string to_json() const;

    /// Static shape check; throws ConfigError naming the first mismatch.
    /// Returns per-layer output shapes (sans batch axis).
    std::vector<std::vector<int>> validate() const;

    /// Output shape (sans batch) of the layer at `index`.
    std::vector<int> output_shape(std::size_t index) const;

    void assign_names();
};

/// Parameter-holding network instance. Parameters are stored in layer
/// order under stable dotted names (conv1.weight, fire1.squeeze.bias,
/// bn1.running_mean, ...). Running statistics are parameters for
/// serialization purposes but are not gradient-trained.
template <typename S>
struct Model {
    NetworkConfig config;
    std::vector<std::pair<std::string, Tensor<S>>> params;

    bool has_param(const std::string& name) const {
        for (const auto& [n, t] : params)
            if (n == name) return true;
        return false;
    }

    Tensor<S>& param(const std::string& name) {
        for (auto& [n, t] : params)
            if (n == name) return t;
        throw ConfigError("unknown parameter: " + name);
    }

    const Tensor<S>& param(const std::string& name) const {
        for (const auto& [n, t] : params)
            if (n == name) return t;
        throw ConfigError("unknown parameter: " + name);
    }

    static bool is_running_stat(const std::string& name) {
        return name.ends_with(".running_mean") || name.ends_with(".running_var");
    }

    std::vector<std::string> trainable_names() const {
        std::vector<std::string> out;
        for (const auto& [n, t] : params)
            if (!is_running_stat(n)) out.push_back(n);
        return out;
    }

    /// Serialized float-parameter payload size (data only, no headers).
    std::int64_t parameter_bytes() const {
        std::int64_t n = 0;
        for (const auto& [name, t] : params) n += t.numel() * static_cast<std::int64_t>(sizeof(float));
        return n;
    }

    template <typename T>
    Model<T> cast() const {
        Model<T> m;
        m.config = config;
        for (const auto& [n, t] : params) m.params.emplace_back(n, t.template cast<T>());
        return m;
    }
};

namespace detail {

/// Expected parameter tensors (name, shape) for one layer, in layer order.
std::vector<std::pair<std::string, std::vector<int>>> layer_param_shapes(const LayerSpec& l);

} // namespace detail

/// Allocates parameters for a config. Conv/dense weights use He-uniform
/// fan-in init; biases 0, gamma 1, beta 0, running stats (0, 1).
template <typename S>
Model<S> build_model(const NetworkConfig& config, std::uint64_t init_seed) {
    config.validate();
    Model<S> m;
    m.config = config;
    m.config.seed = init_seed;
    Rng rng(init_seed);
    for (const LayerSpec& l : config.layers) {
        for (const auto& [name, shape] : detail::layer_param_shapes(l)) {
            Tensor<S> t(shape);
            const bool is_weight = name.ends_with(".weight");
            if (is_weight) {
                std::int64_t fan_in = 1;
                for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
                const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
                for (std::int64_t i = 0; i < t.numel(); ++i)
                    t[i] = static_cast<S>(rng.uniform(-limit, limit));
            } else if (name.ends_with(".gamma") || name.ends_with(".running_var")) {
                t.fill(S(1));
            }
            m.params.emplace_back(name, std::move(t));
        }
    }
    return m;
}

/// Squeeze conv + ReLU feeding parallel 1x1 / 3x3 expand convs whose
/// ReLU outputs concatenate along channels. expand3 must use padding 1 so
/// both branches share spatial extents.
template <typename S>
Tensor<S> fire_forward(const Tensor<S>& x, const ConvParams<S>& squeeze,
                       const ConvParams<S>& expand1, const ConvParams<S>& expand3);

template <typename S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b);

template <typename S>
struct LayerCache {
    Tensor<S> input;
    PoolResult<S> pool;
    BatchNormCache<S> bn;
    Tensor<S> fire_squeeze_pre; // squeeze conv output before ReLU
    Tensor<S> fire_squeeze_act; // after ReLU, input to both expands
    Tensor<S> fire_e1_pre;
    Tensor<S> fire_e3_pre;
};

template <typename S>
struct ForwardCache {
    std::vector<LayerCache<S>> layers;
    Tensor<S> logits;
    Tensor<S> probs;
};

/// Inference forward pass: batchnorm uses running statistics, no cache,
/// deterministic, model untouched.
template <typename S>
Tensor<S> forward(const Model<S>& model, const Tensor<S>& batch);

/// Training forward pass: batch statistics, running stats updated, cache
/// filled for backward.
template <typename S>
Tensor<S> forward_train(Model<S>& model, const Tensor<S>& batch, ForwardCache<S>& cache);

/// Named gradients for every trainable parameter (running stats excluded),
/// aligned with Model::trainable_names() order.
template <typename S>
struct GradientSet {
    std::vector<std::pair<std::string, Tensor<S>>> grads;

    const Tensor<S>& grad(const std::string& name) const {
        for (const auto& [n, t] : grads)
            if (n == name) return t;
        throw ConfigError("no gradient recorded for: " + name);
    }
};

/// Backpropagates the fused softmax+loss gradient (w.r.t. logits) through
/// every layer of a cached training forward pass.
template <typename S>
GradientSet<S> backward(const Model<S>& model, const ForwardCache<S>& cache,
                        const Tensor<S>& grad_logits);

/// Per-channel activation maps of one named layer, min-max scaled to
/// [0,255] and tiled into a single grayscale raster (PGM).
void dump_activations(const Model<float>& model, const Tensor<float>& sample,
                      const std::string& layer_name, const std::string& path);

} // namespace pathonet

#include "pathonet/net_impl.hpp"
