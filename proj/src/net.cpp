#include "pathonet/net.hpp"

#include <json.hpp>

#include <cmath>
#include <map>

#include "pathonet/raster.hpp"

namespace pathonet {

using nlohmann::json;

std::string layer_kind_name(LayerKind kind) {
    switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::Fire: return "fire";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Dense: return "dense";
    case LayerKind::Relu: return "relu";
    case LayerKind::Softmax: return "softmax";
    }
    return "?";
}

static LayerKind layer_kind_from_name(const std::string& s) {
    static const std::map<std::string, LayerKind> kinds = {
        {"conv", LayerKind::Conv},         {"maxpool", LayerKind::MaxPool},
        {"fire", LayerKind::Fire},         {"batchnorm", LayerKind::BatchNorm},
        {"flatten", LayerKind::Flatten},   {"dense", LayerKind::Dense},
        {"relu", LayerKind::Relu},         {"softmax", LayerKind::Softmax},
    };
    auto it = kinds.find(s);
    if (it == kinds.end()) throw FormatError("unknown layer kind: \"" + s + "\"");
    return it->second;
}

LayerSpec LayerSpec::conv(int in_ch, int out_ch, int kernel, int stride, int padding) {
    LayerSpec l;
    l.kind = LayerKind::Conv;
    l.in_channels = in_ch;
    l.out_channels = out_ch;
    l.kernel = kernel;
    l.stride = stride;
    l.padding = padding;
    return l;
}

LayerSpec LayerSpec::maxpool(int stride) {
    LayerSpec l;
    l.kind = LayerKind::MaxPool;
    l.kernel = 3;
    l.stride = stride;
    return l;
}

LayerSpec LayerSpec::fire(int in_ch, int squeeze, int expand1x1, int expand3x3) {
    LayerSpec l;
    l.kind = LayerKind::Fire;
    l.in_channels = in_ch;
    l.squeeze_ch = squeeze;
    l.expand1x1_ch = expand1x1;
    l.expand3x3_ch = expand3x3;
    return l;
}

LayerSpec LayerSpec::batchnorm(int channels) {
    LayerSpec l;
    l.kind = LayerKind::BatchNorm;
    l.in_channels = channels;
    return l;
}

LayerSpec LayerSpec::flatten() {
    LayerSpec l;
    l.kind = LayerKind::Flatten;
    return l;
}

LayerSpec LayerSpec::dense(int in_features, int units) {
    LayerSpec l;
    l.kind = LayerKind::Dense;
    l.in_features = in_features;
    l.units = units;
    return l;
}

LayerSpec LayerSpec::relu_layer() {
    LayerSpec l;
    l.kind = LayerKind::Relu;
    return l;
}

LayerSpec LayerSpec::softmax_layer() {
    LayerSpec l;
    l.kind = LayerKind::Softmax;
    return l;
}

void NetworkConfig::assign_names() {
    std::map<std::string, int> counters;
    for (LayerSpec& l : layers) {
        std::string base;
        switch (l.kind) {
        case LayerKind::Conv: base = "conv"; break;
        case LayerKind::MaxPool: base = "pool"; break;
        case LayerKind::Fire: base = "fire"; break;
        case LayerKind::BatchNorm: base = "bn"; break;
        case LayerKind::Flatten: base = "flatten"; break;
        case LayerKind::Dense: base = "dense"; break;
        case LayerKind::Relu: base = "relu"; break;
        case LayerKind::Softmax: base = "softmax"; break;
        }
        l.name = base + std::to_string(++counters[base]);
    }
}

NetworkConfig NetworkConfig::default_config(int patch_size, int channels) {
    if (patch_size != 20 && patch_size != 30)
        throw ConfigError("default config supports patch sizes 20 and 30, got " +
                          std::to_string(patch_size));
    NetworkConfig cfg;
    cfg.in_channels = channels;
    cfg.in_height = patch_size;
    cfg.in_width = patch_size;
    cfg.class_count = 2;

    const int after_pool1 = (patch_size - 3) / 2 + 1;  // conv1 keeps extent (pad 1)
    const int after_pool2 = (after_pool1 - 3) / 2 + 1;
    const int flat = 128 * after_pool2 * after_pool2;

    cfg.layers = {
        LayerSpec::conv(channels, 32, 3, 1, 1),
        LayerSpec::relu_layer(),
        LayerSpec::maxpool(2),
        LayerSpec::fire(32, 16, 64, 64),
        LayerSpec::fire(128, 16, 64, 64),
        LayerSpec::maxpool(2),
        LayerSpec::batchnorm(128),
        LayerSpec::flatten(),
        LayerSpec::dense(flat, 56),
        LayerSpec::relu_layer(),
        LayerSpec::dense(56, 2),
        LayerSpec::softmax_layer(),
    };
    cfg.assign_names();
    cfg.validate();
    return cfg;
}

std::vector<std::vector<int>> NetworkConfig::validate() const {
    if (in_channels <= 0 || in_height <= 0 || in_width <= 0)
        throw ConfigError("invalid input shape (" + std::to_string(in_channels) + "," +
                          std::to_string(in_height) + "," + std::to_string(in_width) + ")");
    if (class_count != 2)
        throw ConfigError("class_count must be 2, got " + std::to_string(class_count));
    if (layers.empty()) throw ConfigError("config has no layers");

    std::vector<std::vector<int>> shapes;
    std::vector<int> cur = {in_channels, in_height, in_width}; // or {F} once flat
    auto layer_id = [&](std::size_t i) {
        const std::string& n = layers[i].name;
        return "layer " + std::to_string(i) + " (" +
               (n.empty() ? layer_kind_name(layers[i].kind) : n) + ")";
    };

    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        const bool spatial = cur.size() == 3;
        switch (l.kind) {
        case LayerKind::Conv: {
            if (!spatial) throw ConfigError(layer_id(i) + ": conv requires spatial input");
            if (l.in_channels != cur[0])
                throw ConfigError(layer_id(i) + ": declared in_channels " +
                                  std::to_string(l.in_channels) + " != incoming channels " +
                                  std::to_string(cur[0]));
            if (l.kernel != 1 && l.kernel != 3)
                throw ConfigError(layer_id(i) + ": kernel must be 1 or 3");
            if (l.stride < 1 || l.padding < 0)
                throw ConfigError(layer_id(i) + ": bad stride/padding");
            const int h = cur[1] + 2 * l.padding - l.kernel;
            const int w = cur[2] + 2 * l.padding - l.kernel;
            if (h < 0 || w < 0)
                throw ConfigError(layer_id(i) + ": input smaller than kernel");
            cur = {l.out_channels, h / l.stride + 1, w / l.stride + 1};
            break;
        }
        case LayerKind::MaxPool: {
            if (!spatial) throw ConfigError(layer_id(i) + ": maxpool requires spatial input");
            if (cur[1] < 3 || cur[2] < 3)
                throw ConfigError(layer_id(i) + ": input smaller than 3x3 window");
            cur = {cur[0], (cur[1] - 3) / l.stride + 1, (cur[2] - 3) / l.stride + 1};
            break;
        }
        case LayerKind::Fire: {
            if (!spatial) throw ConfigError(layer_id(i) + ": fire requires spatial input");
            if (l.in_channels != cur[0])
                throw ConfigError(layer_id(i) + ": declared in_channels " +
                                  std::to_string(l.in_channels) + " != incoming channels " +
                                  std::to_string(cur[0]));
            if (l.squeeze_ch <= 0 || l.expand1x1_ch <= 0 || l.expand3x3_ch <= 0)
                throw ConfigError(layer_id(i) + ": fire channel counts must be positive");
            cur = {l.expand1x1_ch + l.expand3x3_ch, cur[1], cur[2]};
            break;
        }
        case LayerKind::BatchNorm: {
            if (!spatial) throw ConfigError(layer_id(i) + ": batchnorm requires spatial input");
            if (l.in_channels != cur[0])
                throw ConfigError(layer_id(i) + ": declared channels " +
                                  std::to_string(l.in_channels) + " != incoming channels " +
                                  std::to_string(cur[0]));
            break;
        }
        case LayerKind::Flatten: {
            if (!spatial) throw ConfigError(layer_id(i) + ": flatten requires spatial input");
            cur = {cur[0] * cur[1] * cur[2]};
            break;
        }
        case LayerKind::Dense: {
            if (spatial) throw ConfigError(layer_id(i) + ": dense requires flattened input");
            if (l.in_features != cur[0])
                throw ConfigError(layer_id(i) + ": declared in_features " +
                                  std::to_string(l.in_features) + " != incoming features " +
                                  std::to_string(cur[0]));
            if (l.units <= 0) throw ConfigError(layer_id(i) + ": units must be positive");
            cur = {l.units};
            break;
        }
        case LayerKind::Relu:
            break;
        case LayerKind::Softmax: {
            if (spatial) throw ConfigError(layer_id(i) + ": softmax requires flattened input");
            if (i + 1 != layers.size())
                throw ConfigError(layer_id(i) + ": softmax must be the final layer");
            if (cur[0] != class_count)
                throw ConfigError(layer_id(i) + ": softmax input width " +
                                  std::to_string(cur[0]) + " != class_count " +
                                  std::to_string(class_count));
            break;
        }
        }
        shapes.push_back(cur);
    }
    if (layers.back().kind != LayerKind::Softmax)
        throw ConfigError("final layer must be softmax");
    return shapes;
}

std::vector<int> NetworkConfig::output_shape(std::size_t index) const {
    auto shapes = validate();
    if (index >= shapes.size()) throw ConfigError("layer index out of range");
    return shapes[index];
}

std::string NetworkConfig::to_json() const {
    json j;
    j["input"] = {in_channels, in_height, in_width};
    j["class_count"] = class_count;
    j["metadata"] = {{"epochs", trained_epochs}, {"seed", seed}};
    json arr = json::array();
    for (const LayerSpec& l : layers) {
        json e;
        e["kind"] = layer_kind_name(l.kind);
        switch (l.kind) {
        case LayerKind::Conv:
            e["in_channels"] = l.in_channels;
            e["out_channels"] = l.out_channels;
            e["kernel"] = l.kernel;
            e["stride"] = l.stride;
            e["padding"] = l.padding;
            break;
        case LayerKind::MaxPool:
            e["kernel"] = 3;
            e["stride"] = l.stride;
            break;
        case LayerKind::Fire:
            e["in_channels"] = l.in_channels;
            e["squeeze"] = l.squeeze_ch;
            e["expand1x1"] = l.expand1x1_ch;
            e["expand3x3"] = l.expand3x3_ch;
            break;
        case LayerKind::BatchNorm:
            e["channels"] = l.in_channels;
            break;
        case LayerKind::Dense:
            e["in_features"] = l.in_features;
            e["units"] = l.units;
            break;
        default:
            break;
        }
        arr.push_back(e);
    }
    j["layers"] = arr;
    return j.dump();
}

NetworkConfig NetworkConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("config JSON parse error: ") + e.what());
    }
    try {
        NetworkConfig cfg;
        auto input = j.at("input");
        cfg.in_channels = input.at(0).get<int>();
        cfg.in_height = input.at(1).get<int>();
        cfg.in_width = input.at(2).get<int>();
        cfg.class_count = j.at("class_count").get<int>();
        if (j.contains("metadata")) {
            cfg.trained_epochs = j["metadata"].value("epochs", std::int64_t(0));
            cfg.seed = j["metadata"].value("seed", std::uint64_t(0));
        }
        for (const json& e : j.at("layers")) {
            LayerKind kind = layer_kind_from_name(e.at("kind").get<std::string>());
            switch (kind) {
            case LayerKind::Conv:
                cfg.layers.push_back(LayerSpec::conv(
                    e.at("in_channels").get<int>(), e.at("out_channels").get<int>(),
                    e.at("kernel").get<int>(), e.at("stride").get<int>(),
                    e.at("padding").get<int>()));
                break;
            case LayerKind::MaxPool:
                if (e.value("kernel", 3) != 3)
                    throw FormatError("maxpool kernel must be 3");
                cfg.layers.push_back(LayerSpec::maxpool(e.at("stride").get<int>()));
                break;
            case LayerKind::Fire:
                cfg.layers.push_back(LayerSpec::fire(
                    e.at("in_channels").get<int>(), e.at("squeeze").get<int>(),
                    e.at("expand1x1").get<int>(), e.at("expand3x3").get<int>()));
                break;
            case LayerKind::BatchNorm:
                cfg.layers.push_back(LayerSpec::batchnorm(e.at("channels").get<int>()));
                break;
            case LayerKind::Flatten:
                cfg.layers.push_back(LayerSpec::flatten());
                break;
            case LayerKind::Dense:
                cfg.layers.push_back(LayerSpec::dense(e.at("in_features").get<int>(),
                                                      e.at("units").get<int>()));
                break;
            case LayerKind::Relu:
                cfg.layers.push_back(LayerSpec::relu_layer());
                break;
            case LayerKind::Softmax:
                cfg.layers.push_back(LayerSpec::softmax_layer());
                break;
            }
        }
        cfg.assign_names();
        cfg.validate();
        return cfg;
    } catch (const json::exception& e) {
        throw FormatError(std::string("config JSON missing/invalid field: ") + e.what());
    }
}

namespace detail {

std::vector<std::pair<std::string, std::vector<int>>> layer_param_shapes(const LayerSpec& l) {
    std::vector<std::pair<std::string, std::vector<int>>> out;
    switch (l.kind) {
    case LayerKind::Conv:
        out.emplace_back(l.name + ".weight",
                         std::vector<int>{l.out_channels, l.in_channels, l.kernel, l.kernel});
        out.emplace_back(l.name + ".bias", std::vector<int>{l.out_channels});
        break;
    case LayerKind::Fire:
        out.emplace_back(l.name + ".squeeze.weight",
                         std::vector<int>{l.squeeze_ch, l.in_channels, 1, 1});
        out.emplace_back(l.name + ".squeeze.bias", std::vector<int>{l.squeeze_ch});
        out.emplace_back(l.name + ".expand1x1.weight",
                         std::vector<int>{l.expand1x1_ch, l.squeeze_ch, 1, 1});
        out.emplace_back(l.name + ".expand1x1.bias", std::vector<int>{l.expand1x1_ch});
        out.emplace_back(l.name + ".expand3x3.weight",
                         std::vector<int>{l.expand3x3_ch, l.squeeze_ch, 3, 3});
        out.emplace_back(l.name + ".expand3x3.bias", std::vector<int>{l.expand3x3_ch});
        break;
    case LayerKind::BatchNorm:
        out.emplace_back(l.name + ".gamma", std::vector<int>{l.in_channels});
        out.emplace_back(l.name + ".beta", std::vector<int>{l.in_channels});
        out.emplace_back(l.name + ".running_mean", std::vector<int>{l.in_channels});
        out.emplace_back(l.name + ".running_var", std::vector<int>{l.in_channels});
        break;
    case LayerKind::Dense:
        out.emplace_back(l.name + ".weight", std::vector<int>{l.units, l.in_features});
        out.emplace_back(l.name + ".bias", std::vector<int>{l.units});
        break;
    default:
        break;
    }
    return out;
}

} // namespace detail

void dump_activations(const Model<float>& model, const Tensor<float>& sample,
                      const std::string& layer_name, const std::string& path) {
    Tensor<float> batch = sample;
    if (batch.rank() == 3)
        batch = batch.reshaped({1, batch.extent(0), batch.extent(1), batch.extent(2)});

    std::vector<std::pair<std::string, Tensor<float>>> outputs;
    detail::forward_impl(const_cast<Model<float>&>(model), batch, Mode::Infer, nullptr,
                         &outputs);

    const Tensor<float>* act = nullptr;
    std::string valid;
    for (const auto& [name, t] : outputs) {
        if (t.rank() == 4) {
            if (!valid.empty()) valid += ", ";
            valid += name;
        }
        if (name == layer_name) act = &t;
    }
    if (!act || act->rank() != 4)
        throw ConfigError("no spatial layer named \"" + layer_name + "\"; valid layers: " +
                          valid);

    const int c = act->extent(1), h = act->extent(2), w = act->extent(3);
    const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(c))));
    const int rows = (c + cols - 1) / cols;

    Tensor<float> grid({1, rows * h, cols * w});
    for (int ic = 0; ic < c; ++ic) {
        float lo = act->at4(0, ic, 0, 0), hi = lo;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const float v = act->at4(0, ic, y, x);
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        const float scale = hi > lo ? 1.0f / (hi - lo) : 0.0f;
        const int ty = (ic / cols) * h, tx = (ic % cols) * w;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                grid[static_cast<std::int64_t>(ty + y) * (cols * w) + tx + x] =
                    (act->at4(0, ic, y, x) - lo) * scale;
    }
    save_raster(grid, path);
}

} // namespace pathonet
