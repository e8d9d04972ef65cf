#include "pathonet/quantize.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

#include "pathonet/serial.hpp"

namespace pathonet {

using nlohmann::json;

static constexpr std::uint16_t kQuantFormatVersion = 1;

KMeansResult kmeans_1d(const std::vector<float>& values, int k, std::uint64_t seed) {
    (void)seed; // deterministic: linear init + farthest-point reseeding
    if (k < 1) throw ConfigError("kmeans_1d: k must be >= 1");
    if (values.empty()) throw DataError("kmeans_1d: no values");
    std::set<float> distinct(values.begin(), values.end());
    if (static_cast<std::size_t>(k) > distinct.size())
        throw DataError("kmeans_1d: k=" + std::to_string(k) + " exceeds " +
                        std::to_string(distinct.size()) + " distinct values");

    const std::size_t n = values.size();
    const float lo = *distinct.begin();
    const float hi = *distinct.rbegin();

    std::vector<double> centroids(static_cast<std::size_t>(k));
    if (k == 1)
        centroids[0] = 0.5 * (static_cast<double>(lo) + static_cast<double>(hi));
    else
        for (int c = 0; c < k; ++c)
            centroids[static_cast<std::size_t>(c)] =
                static_cast<double>(lo) +
                (static_cast<double>(hi) - static_cast<double>(lo)) * c / (k - 1);

    std::vector<int> assign(n, 0);
    KMeansResult result;

    auto assign_all = [&]() {
        bool changed = false;
        double inertia = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double v = static_cast<double>(values[i]);
            int best = 0;
            double best_d = std::abs(v - centroids[0]);
            for (int c = 1; c < k; ++c) {
                const double d = std::abs(v - centroids[static_cast<std::size_t>(c)]);
                if (d < best_d) { // strict: ties keep the lower index
                    best_d = d;
                    best = c;
                }
            }
            if (assign[i] != best) {
                assign[i] = best;
                changed = true;
            }
            inertia += best_d * best_d;
        }
        result.inertia_history.push_back(inertia);
        return changed;
    };

    assign_all();
    for (int iter = 0; iter < 300; ++iter) {
        // means
        std::vector<double> sum(static_cast<std::size_t>(k), 0);
        std::vector<std::int64_t> cnt(static_cast<std::size_t>(k), 0);
        for (std::size_t i = 0; i < n; ++i) {
            sum[static_cast<std::size_t>(assign[i])] += static_cast<double>(values[i]);
            cnt[static_cast<std::size_t>(assign[i])] += 1;
        }
        for (int c = 0; c < k; ++c)
            if (cnt[static_cast<std::size_t>(c)] > 0)
                centroids[static_cast<std::size_t>(c)] =
                    sum[static_cast<std::size_t>(c)] /
                    static_cast<double>(cnt[static_cast<std::size_t>(c)]);

        // re-seed empty clusters on the value farthest from its centroid
        for (int c = 0; c < k; ++c) {
            if (cnt[static_cast<std::size_t>(c)] > 0) continue;
            std::size_t far_i = 0;
            double far_d = -1;
            for (std::size_t i = 0; i < n; ++i) {
                const double d = std::abs(static_cast<double>(values[i]) -
                                          centroids[static_cast<std::size_t>(assign[i])]);
                if (d > far_d) {
                    far_d = d;
                    far_i = i;
                }
            }
            centroids[static_cast<std::size_t>(c)] = static_cast<double>(values[far_i]);
        }

        if (!assign_all()) break;
    }
    result.inertia = result.inertia_history.back();

    // canonical form: ascending centroids, remapped assignments; merge the
    // (pathological) duplicates the iteration cap can leave behind
    std::vector<int> order(static_cast<std::size_t>(k));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return centroids[static_cast<std::size_t>(a)] < centroids[static_cast<std::size_t>(b)];
    });
    std::vector<int> remap(static_cast<std::size_t>(k), 0);
    std::vector<float> sorted;
    for (int rank = 0; rank < k; ++rank) {
        const float c = static_cast<float>(centroids[static_cast<std::size_t>(order[rank])]);
        if (!sorted.empty() && sorted.back() == c) {
            remap[static_cast<std::size_t>(order[rank])] =
                static_cast<int>(sorted.size()) - 1;
        } else {
            sorted.push_back(c);
            remap[static_cast<std::size_t>(order[rank])] =
                static_cast<int>(sorted.size()) - 1;
        }
    }
    result.centroids = std::move(sorted);
    result.assignments.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        result.assignments[i] = remap[static_cast<std::size_t>(assign[i])];
    return result;
}

std::vector<std::uint8_t> pack_indices(const std::vector<int>& ids, int bits) {
    if (bits < 1 || bits > 8) throw ConfigError("pack_indices: bits must be in 1..8");
    std::vector<std::uint8_t> out((ids.size() * static_cast<std::size_t>(bits) + 7) / 8, 0);
    std::size_t bitpos = 0;
    for (int id : ids) {
        if (id < 0 || id >= (1 << bits))
            throw ConfigError("pack_indices: id " + std::to_string(id) + " does not fit in " +
                              std::to_string(bits) + " bits");
        for (int b = 0; b < bits; ++b, ++bitpos)
            if (id & (1 << b)) out[bitpos >> 3] |= static_cast<std::uint8_t>(1u << (bitpos & 7));
    }
    return out;
}

std::vector<int> unpack_indices(const std::vector<std::uint8_t>& bytes, int bits,
                                std::int64_t count) {
    if (bits < 1 || bits > 8) throw ConfigError("unpack_indices: bits must be in 1..8");
    const std::size_t need = (static_cast<std::size_t>(count) * static_cast<std::size_t>(bits) + 7) / 8;
    if (bytes.size() < need)
        throw FormatError("unpack_indices: " + std::to_string(bytes.size()) +
                          " bytes cannot hold " + std::to_string(count) + " ids");
    std::vector<int> ids(static_cast<std::size_t>(count), 0);
    std::size_t bitpos = 0;
    for (std::int64_t i = 0; i < count; ++i) {
        int v = 0;
        for (int b = 0; b < bits; ++b, ++bitpos)
            if (bytes[bitpos >> 3] & (1u << (bitpos & 7))) v |= 1 << b;
        ids[static_cast<std::size_t>(i)] = v;
    }
    return ids;
}

static int bits_for(int k) {
    int b = 1;
    while ((1 << b) < k) ++b;
    return b;
}

Tensor<float> LayerCodebook::dequantize_tensor() const {
    const std::vector<int> ids = indices();
    std::vector<float> data(static_cast<std::size_t>(count));
    for (std::int64_t i = 0; i < count; ++i) {
        const int id = ids[static_cast<std::size_t>(i)];
        if (id >= k())
            throw FormatError("codebook " + name + ": index " + std::to_string(id) +
                              " >= k=" + std::to_string(k()) + " (corrupt stream)");
        data[static_cast<std::size_t>(i)] = centroids[static_cast<std::size_t>(id)];
    }
    return Tensor<float>::from_data(shape, std::move(data));
}

QuantizedModel quantize_model(const Model<float>& model, const QuantizeConfig& cfg) {
    if (cfg.k < 2) throw ConfigError("quantize_model: k must be >= 2");
    QuantizedModel qm;
    qm.config = model.config;

    for (const auto& [name, t] : model.params) {
        if (name.ends_with(".weight")) {
            int k = cfg.k;
            if (auto it = cfg.k_per_layer.find(name); it != cfg.k_per_layer.end())
                k = it->second;
            std::set<float> distinct(t.storage().begin(), t.storage().end());
            if (static_cast<std::size_t>(k) > distinct.size()) {
                k = static_cast<int>(distinct.size());
                qm.warnings.push_back(name + ": k clamped to " + std::to_string(k) +
                                      " (distinct weight count)");
            }
            KMeansResult km = kmeans_1d(t.storage(), k, cfg.seed);
            LayerCodebook cb;
            cb.name = name;
            cb.shape = t.shape();
            cb.centroids = std::move(km.centroids);
            cb.count = t.numel();
            cb.bits = bits_for(cb.k());
            cb.packed = pack_indices(km.assignments, cb.bits);
            qm.layers.push_back(std::move(cb));
        } else {
            qm.side_params.emplace_back(name, t);
        }
    }
    return qm;
}

Model<float> dequantize(const QuantizedModel& qm) {
    Model<float> m;
    m.config = qm.config;
    std::size_t li = 0, si = 0;
    for (const LayerSpec& l : qm.config.layers) {
        for (const auto& [name, shape] : detail::layer_param_shapes(l)) {
            if (name.ends_with(".weight")) {
                if (li >= qm.layers.size() || qm.layers[li].name != name)
                    throw FormatError("quantized model missing codebook for " + name);
                Tensor<float> t = qm.layers[li].dequantize_tensor();
                if (t.shape() != shape)
                    throw FormatError("codebook " + name + " has shape " + t.shape_str() +
                                      ", config expects " + Tensor<float>::shape_str(shape));
                m.params.emplace_back(name, std::move(t));
                ++li;
            } else {
                if (si >= qm.side_params.size() || qm.side_params[si].first != name)
                    throw FormatError("quantized model missing side parameter " + name);
                m.params.emplace_back(name, qm.side_params[si].second);
                ++si;
            }
        }
    }
    return m;
}

Tensor<float> quantized_forward(const QuantizedModel& qm, const Tensor<float>& batch) {
    return forward(dequantize(qm), batch);
}

std::vector<EpochStats> finetune(QuantizedModel& qm, const PatchSet& dataset,
                                 const QuantizeConfig& cfg) {
    if (dataset.count() == 0) throw DataError("finetune: empty dataset");

    Model<float> work = dequantize(qm);
    const std::vector<std::string> trainable = work.trainable_names();

    // frozen assignments per codebook
    std::vector<std::vector<int>> ids;
    ids.reserve(qm.layers.size());
    for (const LayerCodebook& cb : qm.layers) ids.push_back(cb.indices());

    // Adam runs over [centroid vectors..., non-weight trainables...]
    std::vector<Tensor<float>> centroid_params;
    for (const LayerCodebook& cb : qm.layers) {
        Tensor<float> c({cb.k()});
        std::copy(cb.centroids.begin(), cb.centroids.end(), c.data());
        centroid_params.push_back(std::move(c));
    }
    std::vector<std::string> side_trainable;
    for (const std::string& n : trainable)
        if (!n.ends_with(".weight")) side_trainable.push_back(n);

    AdamState<float> adam;
    adam.lr = cfg.finetune_lr;

    Rng rng(cfg.seed);
    std::vector<std::int64_t> order(static_cast<std::size_t>(dataset.count()));
    std::iota(order.begin(), order.end(), 0);

    std::vector<EpochStats> log;
    for (int epoch = 0; epoch < cfg.finetune_epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0;
        std::int64_t correct = 0, seen = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.finetune_batch)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.finetune_batch));
            std::vector<std::int64_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                          order.begin() + static_cast<std::ptrdiff_t>(end));
            Tensor<float> batch = dataset.gather(idx);
            std::vector<int> labels(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i)
                labels[i] = dataset.labels[static_cast<std::size_t>(idx[i])];

            ForwardCache<float> cache;
            Tensor<float> probs = forward_train(work, batch, cache);
            BceResult<float> loss = bce_loss(probs, labels);
            GradientSet<float> grads = backward(work, cache, loss.grad_logits);

            // group weight gradients by frozen assignment
            std::vector<Tensor<float>> centroid_grads;
            for (std::size_t l = 0; l < qm.layers.size(); ++l) {
                const Tensor<float>& gw = grads.grad(qm.layers[l].name);
                std::vector<double> acc(centroid_params[l].storage().size(), 0.0);
                for (std::int64_t i = 0; i < gw.numel(); ++i)
                    acc[static_cast<std::size_t>(ids[l][static_cast<std::size_t>(i)])] +=
                        static_cast<double>(gw[i]);
                Tensor<float> cg({static_cast<int>(acc.size())});
                for (std::size_t i = 0; i < acc.size(); ++i)
                    cg[static_cast<std::int64_t>(i)] = static_cast<float>(acc[i]);
                centroid_grads.push_back(std::move(cg));
            }

            std::vector<Tensor<float>*> params;
            std::vector<const Tensor<float>*> gptrs;
            for (std::size_t l = 0; l < centroid_params.size(); ++l) {
                params.push_back(&centroid_params[l]);
                gptrs.push_back(&centroid_grads[l]);
            }
            for (const std::string& n : side_trainable) {
                params.push_back(&work.param(n));
                gptrs.push_back(&grads.grad(n));
            }
            adam_step(params, gptrs, adam);

            // refresh weights from the updated centroids, indices frozen
            for (std::size_t l = 0; l < qm.layers.size(); ++l) {
                Tensor<float>& w = work.param(qm.layers[l].name);
                for (std::int64_t i = 0; i < w.numel(); ++i)
                    w[i] = centroid_params[l][ids[l][static_cast<std::size_t>(i)]];
            }

            loss_sum += loss.loss * static_cast<double>(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) {
                const int pred = probs.at2(static_cast<int>(i), 1) >
                                         probs.at2(static_cast<int>(i), 0)
                                     ? 1
                                     : 0;
                correct += pred == labels[i];
            }
            seen += static_cast<std::int64_t>(idx.size());
        }
        log.push_back({epoch + 1, loss_sum / static_cast<double>(seen),
                       static_cast<double>(correct) / static_cast<double>(seen)});
    }

    // write back centroids and side parameters (packed streams untouched)
    for (std::size_t l = 0; l < qm.layers.size(); ++l)
        std::copy(centroid_params[l].data(),
                  centroid_params[l].data() + centroid_params[l].numel(),
                  qm.layers[l].centroids.begin());
    for (auto& [name, t] : qm.side_params) t = work.param(name);
    qm.config.trained_epochs += cfg.finetune_epochs;
    return log;
}

CompressionReport compression_report(const Model<float>& model, const QuantizedModel& qm) {
    if (model.config.to_json() != qm.config.to_json())
        throw ConfigError("compression_report: model and quantized model configs differ");

    CompressionReport rep;
    std::int64_t layer_compressed = 0, layer_original = 0;
    for (const LayerCodebook& cb : qm.layers) {
        LayerReport lr;
        lr.name = cb.name;
        lr.weight_count = cb.count;
        lr.k = cb.k();
        lr.bits = cb.bits;
        lr.original_bytes = cb.count * 4;
        lr.compressed_bytes =
            4 * lr.k + (cb.count * cb.bits + 7) / 8;
        lr.factor = static_cast<double>(lr.original_bytes) /
                    static_cast<double>(lr.compressed_bytes);
        layer_compressed += lr.compressed_bytes;
        layer_original += lr.original_bytes;
        rep.layers.push_back(std::move(lr));
    }
    for (const auto& [name, t] : qm.side_params)
        rep.side_parameter_bytes += t.numel() * 4;

    rep.original_total_bytes = static_cast<std::int64_t>(serialize_model(model).size());
    rep.compressed_total_bytes = static_cast<std::int64_t>(serialize_quantized(qm).size());
    rep.original_header_bytes =
        rep.original_total_bytes - layer_original - rep.side_parameter_bytes;
    rep.compressed_header_bytes =
        rep.compressed_total_bytes - layer_compressed - rep.side_parameter_bytes;
    rep.factor = static_cast<double>(rep.original_total_bytes) /
                 static_cast<double>(rep.compressed_total_bytes);
    return rep;
}

std::string CompressionReport::to_json() const {
    json j;
    json layers_j = json::array();
    for (const LayerReport& l : layers)
        layers_j.push_back({{"name", l.name},
                            {"weights", l.weight_count},
                            {"k", l.k},
                            {"bits", l.bits},
                            {"original_bytes", l.original_bytes},
                            {"compressed_bytes", l.compressed_bytes},
                            {"factor", l.factor}});
    j["layers"] = layers_j;
    j["side_parameter_bytes"] = side_parameter_bytes;
    j["original_header_bytes"] = original_header_bytes;
    j["compressed_header_bytes"] = compressed_header_bytes;
    j["original_total_bytes"] = original_total_bytes;
    j["compressed_total_bytes"] = compressed_total_bytes;
    j["original_kb"] = static_cast<double>(original_total_bytes) / 1000.0;
    j["compressed_kb"] = static_cast<double>(compressed_total_bytes) / 1000.0;
    j["factor"] = factor;
    return j.dump(2);
}

std::string CompressionReport::to_text() const {
    std::ostringstream os;
    char line[160];
    std::snprintf(line, sizeof(line), "%-24s %10s %4s %5s %12s %12s %8s\n", "layer", "weights",
                  "k", "bits", "orig kB", "comp kB", "factor");
    os << line;
    for (const LayerReport& l : layers) {
        std::snprintf(line, sizeof(line), "%-24s %10lld %4d %5d %12.3f %12.3f %7.2fx\n",
                      l.name.c_str(), static_cast<long long>(l.weight_count), l.k, l.bits,
                      static_cast<double>(l.original_bytes) / 1000.0,
                      static_cast<double>(l.compressed_bytes) / 1000.0, l.factor);
        os << line;
    }
    std::snprintf(line, sizeof(line), "%-24s %33s %12.3f\n", "side parameters", "",
                  static_cast<double>(side_parameter_bytes) / 1000.0);
    os << line;
    std::snprintf(line, sizeof(line), "%-24s %33s %12.3f %12.3f %7.2fx\n", "total (serialized)",
                  "", static_cast<double>(original_total_bytes) / 1000.0,
                  static_cast<double>(compressed_total_bytes) / 1000.0, factor);
    os << line;
    return os.str();
}

std::vector<std::uint8_t> serialize_quantized(const QuantizedModel& qm) {
    ByteWriter w;
    w.magic("MDQ1");
    w.u16(kQuantFormatVersion);
    w.str32(qm.config.to_json());
    w.u32(static_cast<std::uint32_t>(qm.layers.size()));
    for (const LayerCodebook& cb : qm.layers) {
        w.str16(cb.name);
        w.u16(static_cast<std::uint16_t>(cb.k()));
        w.f32_array(cb.centroids.data(), cb.centroids.size());
        w.u64(cb.packed.size());
        w.raw(cb.packed.data(), cb.packed.size());
    }
    w.u32(static_cast<std::uint32_t>(qm.side_params.size()));
    for (const auto& [name, t] : qm.side_params) {
        w.str16(name);
        w.u8(static_cast<std::uint8_t>(t.rank()));
        for (int i = 0; i < t.rank(); ++i) w.u32(static_cast<std::uint32_t>(t.extent(i)));
        w.f32_array(t.data(), static_cast<std::size_t>(t.numel()));
    }
    return w.take();
}

QuantizedModel deserialize_quantized(const std::vector<std::uint8_t>& bytes,
                                     const std::string& what) {
    ByteReader r(bytes, what);
    r.expect_magic("MDQ1", "MDQ1 quantized model");
    const std::uint16_t version = r.u16();
    if (version != kQuantFormatVersion)
        throw FormatError(what + ": unsupported format version " + std::to_string(version));

    QuantizedModel qm;
    qm.config = NetworkConfig::from_json(r.str32());

    // expected weight shapes from the config
    std::vector<std::pair<std::string, std::vector<int>>> expected_w, expected_s;
    for (const LayerSpec& l : qm.config.layers)
        for (auto& e : detail::layer_param_shapes(l)) {
            if (e.first.ends_with(".weight")) expected_w.push_back(std::move(e));
            else expected_s.push_back(std::move(e));
        }

    const std::uint32_t layer_count = r.u32();
    if (layer_count != expected_w.size())
        throw FormatError(what + ": " + std::to_string(layer_count) +
                          " codebooks, config expects " + std::to_string(expected_w.size()));
    for (std::uint32_t i = 0; i < layer_count; ++i) {
        LayerCodebook cb;
        cb.name = r.str16();
        if (cb.name != expected_w[i].first)
            throw FormatError(what + ": codebook " + std::to_string(i) + " is \"" + cb.name +
                              "\", config expects \"" + expected_w[i].first + "\"");
        cb.shape = expected_w[i].second;
        cb.count = Tensor<float>::checked_numel(cb.shape);
        const std::uint16_t k = r.u16();
        if (k < 1 || k > 256) throw FormatError(what + ": codebook k=" + std::to_string(k));
        cb.centroids = r.f32_array(k);
        for (float c : cb.centroids)
            if (!std::isfinite(c)) throw FormatError(what + ": non-finite centroid");
        cb.bits = bits_for(k);
        const std::uint64_t plen = r.u64();
        const std::uint64_t need =
            (static_cast<std::uint64_t>(cb.count) * static_cast<std::uint64_t>(cb.bits) + 7) / 8;
        if (plen != need)
            throw FormatError(what + ": codebook " + cb.name + " packed length " +
                              std::to_string(plen) + ", expected " + std::to_string(need));
        cb.packed.resize(plen);
        r.raw(cb.packed.data(), plen);
        for (int id : cb.indices())
            if (id >= k)
                throw FormatError(what + ": codebook " + cb.name + " has index " +
                                  std::to_string(id) + " >= k=" + std::to_string(k));
        qm.layers.push_back(std::move(cb));
    }

    const std::uint32_t side_count = r.u32();
    if (side_count != expected_s.size())
        throw FormatError(what + ": " + std::to_string(side_count) +
                          " side parameters, config expects " + std::to_string(expected_s.size()));
    for (std::uint32_t i = 0; i < side_count; ++i) {
        const std::string name = r.str16();
        if (name != expected_s[i].first)
            throw FormatError(what + ": side parameter \"" + name + "\", config expects \"" +
                              expected_s[i].first + "\"");
        const int rank = r.u8();
        std::vector<int> shape(static_cast<std::size_t>(rank));
        for (int d = 0; d < rank; ++d) shape[static_cast<std::size_t>(d)] = static_cast<int>(r.u32());
        if (shape != expected_s[i].second)
            throw FormatError(what + ": side parameter \"" + name + "\" shape mismatch");
        const std::int64_t n = Tensor<float>::checked_numel(shape);
        std::vector<float> data(static_cast<std::size_t>(n));
        r.raw(data.data(), static_cast<std::size_t>(n) * sizeof(float));
        qm.side_params.emplace_back(name, Tensor<float>::from_data(shape, std::move(data)));
    }
    if (r.remaining() != 0)
        throw FormatError(what + ": " + std::to_string(r.remaining()) + " trailing bytes");
    return qm;
}

void save_quantized(const QuantizedModel& qm, const std::string& path) {
    write_file(path, serialize_quantized(qm));
}

QuantizedModel load_quantized(const std::string& path) {
    return deserialize_quantized(read_file(path), path);
}

} // namespace pathonet
