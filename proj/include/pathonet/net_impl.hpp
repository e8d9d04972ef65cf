#pragma once

// Template implementation detail of net.hpp; do not include directly.

namespace pathonet {

template <typename S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.rank() != 4 || b.rank() != 4 || a.extent(0) != b.extent(0) ||
        a.extent(2) != b.extent(2) || a.extent(3) != b.extent(3))
        throw ShapeError("concat_channels: incompatible shapes " + a.shape_str() + " and " +
                         b.shape_str());
    const int n = a.extent(0), ca = a.extent(1), cb = b.extent(1);
    const int h = a.extent(2), w = a.extent(3);
    Tensor<S> out({n, ca + cb, h, w});
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    for (int in = 0; in < n; ++in) {
        std::copy_n(a.data() + a.index4(in, 0, 0, 0), ca * plane,
                    out.data() + out.index4(in, 0, 0, 0));
        std::copy_n(b.data() + b.index4(in, 0, 0, 0), cb * plane,
                    out.data() + out.index4(in, ca, 0, 0));
    }
    return out;
}

template <typename S>
std::pair<Tensor<S>, Tensor<S>> split_channels(const Tensor<S>& x, int first) {
    const int n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
    Tensor<S> a({n, first, h, w});
    Tensor<S> b({n, c - first, h, w});
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    for (int in = 0; in < n; ++in) {
        std::copy_n(x.data() + x.index4(in, 0, 0, 0), first * plane,
                    a.data() + a.index4(in, 0, 0, 0));
        std::copy_n(x.data() + x.index4(in, first, 0, 0), (c - first) * plane,
                    b.data() + b.index4(in, 0, 0, 0));
    }
    return {std::move(a), std::move(b)};
}

template <typename S>
Tensor<S> fire_forward(const Tensor<S>& x, const ConvParams<S>& squeeze,
                       const ConvParams<S>& expand1, const ConvParams<S>& expand3) {
    if (expand1.in_channels() != squeeze.out_channels() ||
        expand3.in_channels() != squeeze.out_channels())
        throw ShapeError("fire: expand input channels must equal squeeze output channels");
    Tensor<S> s = relu(conv2d_forward(x, squeeze));
    Tensor<S> e1 = relu(conv2d_forward(s, expand1));
    Tensor<S> e3 = relu(conv2d_forward(s, expand3));
    return concat_channels(e1, e3);
}

namespace detail {

template <typename S>
ConvParams<S> conv_params_for(const Model<S>& m, const std::string& prefix, int stride,
                              int padding) {
    ConvParams<S> p;
    p.weights = m.param(prefix + ".weight");
    p.bias = m.param(prefix + ".bias");
    p.stride = stride;
    p.padding = padding;
    return p;
}

template <typename S>
Tensor<S> forward_impl(Model<S>& model, const Tensor<S>& batch, Mode mode,
                       ForwardCache<S>* cache,
                       std::vector<std::pair<std::string, Tensor<S>>>* named_outputs) {
    const NetworkConfig& cfg = model.config;
    if (batch.rank() != 4 || batch.extent(1) != cfg.in_channels ||
        batch.extent(2) != cfg.in_height || batch.extent(3) != cfg.in_width)
        throw ShapeError("forward: batch " + batch.shape_str() + " does not match input (," +
                         std::to_string(cfg.in_channels) + "," + std::to_string(cfg.in_height) +
                         "," + std::to_string(cfg.in_width) + ")");

    if (cache) {
        cache->layers.clear();
        cache->layers.resize(cfg.layers.size());
    }

    Tensor<S> x = batch;
    for (std::size_t li = 0; li < cfg.layers.size(); ++li) {
        const LayerSpec& l = cfg.layers[li];
        LayerCache<S>* lc = cache ? &cache->layers[li] : nullptr;
        if (lc) lc->input = x;

        switch (l.kind) {
        case LayerKind::Conv: {
            auto p = conv_params_for(model, l.name, l.stride, l.padding);
            x = conv2d_forward(x, p);
            break;
        }
        case LayerKind::MaxPool: {
            PoolResult<S> r = maxpool3x3(x, l.stride);
            x = r.output;
            if (lc) lc->pool = std::move(r);
            break;
        }
        case LayerKind::Fire: {
            auto sq = conv_params_for(model, l.name + ".squeeze", 1, 0);
            auto e1 = conv_params_for(model, l.name + ".expand1x1", 1, 0);
            auto e3 = conv_params_for(model, l.name + ".expand3x3", 1, 1);
            Tensor<S> s_pre = conv2d_forward(x, sq);
            Tensor<S> s_act = relu(s_pre);
            Tensor<S> e1_pre = conv2d_forward(s_act, e1);
            Tensor<S> e3_pre = conv2d_forward(s_act, e3);
            x = concat_channels(relu(e1_pre), relu(e3_pre));
            if (lc) {
                lc->fire_squeeze_pre = std::move(s_pre);
                lc->fire_squeeze_act = std::move(s_act);
                lc->fire_e1_pre = std::move(e1_pre);
                lc->fire_e3_pre = std::move(e3_pre);
            }
            break;
        }
        case LayerKind::BatchNorm: {
            BatchNormParams<S> p;
            p.gamma = model.param(l.name + ".gamma");
            p.beta = model.param(l.name + ".beta");
            p.running_mean = model.param(l.name + ".running_mean");
            p.running_var = model.param(l.name + ".running_var");
            x = batchnorm_forward(x, p, mode, lc ? &lc->bn : nullptr);
            if (mode == Mode::Train) {
                model.param(l.name + ".running_mean") = p.running_mean;
                model.param(l.name + ".running_var") = p.running_var;
            }
            break;
        }
        case LayerKind::Flatten: {
            x = x.reshaped({x.extent(0), static_cast<int>(x.numel() / x.extent(0))});
            break;
        }
        case LayerKind::Dense: {
            x = dense_forward(x, model.param(l.name + ".weight"), model.param(l.name + ".bias"));
            break;
        }
        case LayerKind::Relu: {
            x = relu(x);
            break;
        }
        case LayerKind::Softmax: {
            if (cache) cache->logits = x;
            x = softmax(x);
            break;
        }
        }
        if (named_outputs) named_outputs->emplace_back(l.name, x);
    }
    if (cache) cache->probs = x;
    return x;
}

} // namespace detail

template <typename S>
Tensor<S> forward(const Model<S>& model, const Tensor<S>& batch) {
    // Infer mode never mutates the model.
    return detail::forward_impl(const_cast<Model<S>&>(model), batch, Mode::Infer, nullptr,
                                nullptr);
}

template <typename S>
Tensor<S> forward_train(Model<S>& model, const Tensor<S>& batch, ForwardCache<S>& cache) {
    return detail::forward_impl(model, batch, Mode::Train, &cache, nullptr);
}

template <typename S>
GradientSet<S> backward(const Model<S>& model, const ForwardCache<S>& cache,
                        const Tensor<S>& grad_logits) {
    const NetworkConfig& cfg = model.config;
    if (cache.layers.size() != cfg.layers.size())
        throw ShapeError("backward: cache does not match config (missing forward_train?)");

    std::vector<std::pair<std::string, Tensor<S>>> collected;
    Tensor<S> g = grad_logits;

    for (std::size_t i = cfg.layers.size(); i-- > 0;) {
        const LayerSpec& l = cfg.layers[i];
        const LayerCache<S>& lc = cache.layers[i];
        switch (l.kind) {
        case LayerKind::Softmax:
            // Fused with the loss: incoming g is already d(loss)/d(logits).
            break;
        case LayerKind::Relu:
            g = relu_backward(lc.input, g);
            break;
        case LayerKind::Dense: {
            DenseGrads<S> dg = dense_backward(lc.input, model.param(l.name + ".weight"), g);
            collected.emplace_back(l.name + ".weight", std::move(dg.weights));
            collected.emplace_back(l.name + ".bias", std::move(dg.bias));
            g = std::move(dg.input);
            break;
        }
        case LayerKind::Flatten:
            g = g.reshaped(lc.input.shape());
            break;
        case LayerKind::BatchNorm: {
            BatchNormParams<S> p;
            p.gamma = model.param(l.name + ".gamma");
            p.beta = model.param(l.name + ".beta");
            p.running_mean = model.param(l.name + ".running_mean");
            p.running_var = model.param(l.name + ".running_var");
            BatchNormGrads<S> bg = batchnorm_backward(p, lc.bn, g);
            collected.emplace_back(l.name + ".gamma", std::move(bg.gamma));
            collected.emplace_back(l.name + ".beta", std::move(bg.beta));
            g = std::move(bg.input);
            break;
        }
        case LayerKind::Fire: {
            auto sq = detail::conv_params_for(model, l.name + ".squeeze", 1, 0);
            auto e1 = detail::conv_params_for(model, l.name + ".expand1x1", 1, 0);
            auto e3 = detail::conv_params_for(model, l.name + ".expand3x3", 1, 1);
            auto [g1, g3] = split_channels(g, l.expand1x1_ch);
            Tensor<S> g1_pre = relu_backward(lc.fire_e1_pre, g1);
            Tensor<S> g3_pre = relu_backward(lc.fire_e3_pre, g3);
            ConvGrads<S> cg1 = conv2d_backward(lc.fire_squeeze_act, e1, g1_pre);
            ConvGrads<S> cg3 = conv2d_backward(lc.fire_squeeze_act, e3, g3_pre);
            Tensor<S> gs(lc.fire_squeeze_act.shape());
            for (std::int64_t j = 0; j < gs.numel(); ++j)
                gs[j] = static_cast<S>(static_cast<Acc>(cg1.input[j]) +
                                       static_cast<Acc>(cg3.input[j]));
            Tensor<S> gs_pre = relu_backward(lc.fire_squeeze_pre, gs);
            ConvGrads<S> cgs = conv2d_backward(lc.input, sq, gs_pre);
            collected.emplace_back(l.name + ".squeeze.weight", std::move(cgs.weights));
            collected.emplace_back(l.name + ".squeeze.bias", std::move(cgs.bias));
            collected.emplace_back(l.name + ".expand1x1.weight", std::move(cg1.weights));
            collected.emplace_back(l.name + ".expand1x1.bias", std::move(cg1.bias));
            collected.emplace_back(l.name + ".expand3x3.weight", std::move(cg3.weights));
            collected.emplace_back(l.name + ".expand3x3.bias", std::move(cg3.bias));
            g = std::move(cgs.input);
            break;
        }
        case LayerKind::MaxPool:
            g = maxpool_backward(lc.pool, g);
            break;
        case LayerKind::Conv: {
            auto p = detail::conv_params_for(model, l.name, l.stride, l.padding);
            ConvGrads<S> cg = conv2d_backward(lc.input, p, g);
            collected.emplace_back(l.name + ".weight", std::move(cg.weights));
            collected.emplace_back(l.name + ".bias", std::move(cg.bias));
            g = std::move(cg.input);
            break;
        }
        }
    }

    // Reorder to the model's trainable parameter order.
    GradientSet<S> out;
    for (const std::string& name : model.trainable_names()) {
        bool found = false;
        for (auto& [n, t] : collected)
            if (n == name) {
                out.grads.emplace_back(name, std::move(t));
                found = true;
                break;
            }
        if (!found)
            throw ConfigError("backward produced no gradient for " + name);
    }
    return out;
}

} // namespace pathonet
