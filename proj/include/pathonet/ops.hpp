#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "pathonet/tensor.hpp"

namespace pathonet {

enum class Mode { Train, Infer };

// Reductions accumulate in 64-bit regardless of the storage scalar, so a
// float network still rounds each output exactly once.
using Acc = double;

template <typename S>
struct ConvParams {
    Tensor<S> weights; // (out_ch, in_ch, kH, kW)
    Tensor<S> bias;    // (out_ch)
    int stride = 1;
    int padding = 0;

    int out_channels() const { return weights.extent(0); }
    int in_channels() const { return weights.extent(1); }
    int kernel_h() const { return weights.extent(2); }
    int kernel_w() const { return weights.extent(3); }
};

template <typename S>
struct ConvGrads {
    Tensor<S> input;
    Tensor<S> weights;
    Tensor<S> bias;
};

namespace detail {

inline int conv_out_extent(int in, int kernel, int stride, int pad, const char* what) {
    int span = in + 2 * pad - kernel;
    if (span < 0)
        throw ShapeError(std::string(what) + ": spatial extent " + std::to_string(in) +
                         " smaller than kernel " + std::to_string(kernel) +
                         " after padding " + std::to_string(pad));
    return span / stride + 1;
}

// Gathers padded input windows into a (C*kH*kW) x (N*outH*outW) column
// matrix, sample-major along columns. Out-of-image taps read as zero.
template <typename S>
void im2col(const Tensor<S>& x, int kh, int kw, int stride, int pad,
            int oh, int ow, MatrixRM<Acc>& col) {
    const int n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
    col.setZero(static_cast<std::int64_t>(c) * kh * kw,
                static_cast<std::int64_t>(n) * oh * ow);
    for (int in = 0; in < n; ++in) {
        for (int ic = 0; ic < c; ++ic) {
            const S* plane = x.data() + x.index4(in, ic, 0, 0);
            for (int r = 0; r < kh; ++r) {
                for (int s = 0; s < kw; ++s) {
                    const std::int64_t row = (static_cast<std::int64_t>(ic) * kh + r) * kw + s;
                    for (int y = 0; y < oh; ++y) {
                        const int iy = y * stride + r - pad;
                        if (iy < 0 || iy >= h) continue;
                        Acc* dst = col.row(row).data() +
                                   (static_cast<std::int64_t>(in) * oh + y) * ow;
                        const S* src = plane + static_cast<std::int64_t>(iy) * w;
                        for (int xo = 0; xo < ow; ++xo) {
                            const int ix = xo * stride + s - pad;
                            if (ix < 0 || ix >= w) continue;
                            dst[xo] = static_cast<Acc>(src[ix]);
                        }
                    }
                }
            }
        }
    }
}

// Scatter-add of a column matrix back onto the input layout (the adjoint
// of im2col). Collisions from overlapping windows sum in fixed order.
template <typename S>
void col2im(const MatrixRM<Acc>& col, int kh, int kw, int stride, int pad,
            int oh, int ow, Tensor<S>& x_grad) {
    const int n = x_grad.extent(0), c = x_grad.extent(1);
    const int h = x_grad.extent(2), w = x_grad.extent(3);
    std::vector<Acc> acc(static_cast<std::size_t>(x_grad.numel()), Acc(0));
    for (int in = 0; in < n; ++in) {
        for (int ic = 0; ic < c; ++ic) {
            Acc* plane = acc.data() + x_grad.index4(in, ic, 0, 0);
            for (int r = 0; r < kh; ++r) {
                for (int s = 0; s < kw; ++s) {
                    const std::int64_t row = (static_cast<std::int64_t>(ic) * kh + r) * kw + s;
                    for (int y = 0; y < oh; ++y) {
                        const int iy = y * stride + r - pad;
                        if (iy < 0 || iy >= h) continue;
                        const Acc* src = col.row(row).data() +
                                         (static_cast<std::int64_t>(in) * oh + y) * ow;
                        Acc* dst = plane + static_cast<std::int64_t>(iy) * w;
                        for (int xo = 0; xo < ow; ++xo) {
                            const int ix = xo * stride + s - pad;
                            if (ix < 0 || ix >= w) continue;
                            dst[ix] += src[xo];
                        }
                    }
                }
            }
        }
    }
    for (std::int64_t i = 0; i < x_grad.numel(); ++i)
        x_grad[i] = static_cast<S>(acc[static_cast<std::size_t>(i)]);
}

template <typename S>
MatrixRM<Acc> weights_as_acc_matrix(const Tensor<S>& w) {
    const std::int64_t rows = w.extent(0);
    const std::int64_t cols = w.numel() / rows;
    MatrixRM<Acc> m(rows, cols);
    for (std::int64_t i = 0; i < w.numel(); ++i)
        m.data()[i] = static_cast<Acc>(w[i]);
    return m;
}

} // namespace detail

/// 2-D cross-correlation (no kernel flip) with symmetric zero padding.
/// x: (N, C, H, W) -> (N, out_ch, oH, oW).
template <typename S>
Tensor<S> conv2d_forward(const Tensor<S>& x, const ConvParams<S>& p) {
    if (x.rank() != 4)
        throw ShapeError("conv2d: input must be rank 4, got " + x.shape_str());
    if (x.extent(1) != p.in_channels())
        throw ShapeError("conv2d: input channels " + std::to_string(x.extent(1)) +
                         " != weight in_ch " + std::to_string(p.in_channels()));
    if (p.bias.numel() != p.out_channels())
        throw ShapeError("conv2d: bias length " + std::to_string(p.bias.numel()) +
                         " != out_ch " + std::to_string(p.out_channels()));
    const int n = x.extent(0);
    const int kh = p.kernel_h(), kw = p.kernel_w();
    const int oh = detail::conv_out_extent(x.extent(2), kh, p.stride, p.padding, "conv2d");
    const int ow = detail::conv_out_extent(x.extent(3), kw, p.stride, p.padding, "conv2d");
    const int oc = p.out_channels();

    MatrixRM<Acc> col;
    detail::im2col(x, kh, kw, p.stride, p.padding, oh, ow, col);
    MatrixRM<Acc> wmat = detail::weights_as_acc_matrix(p.weights);
    MatrixRM<Acc> out = wmat * col; // (oc, N*oh*ow)

    Tensor<S> y({n, oc, oh, ow});
    const std::int64_t plane = static_cast<std::int64_t>(oh) * ow;
    for (int in = 0; in < n; ++in) {
        for (int c = 0; c < oc; ++c) {
            const Acc b = static_cast<Acc>(p.bias[c]);
            const Acc* src = out.row(c).data() + static_cast<std::int64_t>(in) * plane;
            S* dst = y.data() + y.index4(in, c, 0, 0);
            for (std::int64_t i = 0; i < plane; ++i)
                dst[i] = static_cast<S>(src[i] + b);
        }
    }
    return y;
}

/// Gradients of sum(grad_out * conv2d_forward(x, p)) w.r.t. x, weights, bias.
template <typename S>
ConvGrads<S> conv2d_backward(const Tensor<S>& x, const ConvParams<S>& p,
                             const Tensor<S>& grad_out) {
    const int n = x.extent(0);
    const int kh = p.kernel_h(), kw = p.kernel_w();
    const int oh = detail::conv_out_extent(x.extent(2), kh, p.stride, p.padding, "conv2d_backward");
    const int ow = detail::conv_out_extent(x.extent(3), kw, p.stride, p.padding, "conv2d_backward");
    const int oc = p.out_channels();
    if (grad_out.shape() != std::vector<int>{n, oc, oh, ow})
        throw ShapeError("conv2d_backward: grad_out shape " + grad_out.shape_str() +
                         " does not match forward output (" + std::to_string(n) + "," +
                         std::to_string(oc) + "," + std::to_string(oh) + "," +
                         std::to_string(ow) + ")");

    // grad_out as (oc, N*oh*ow), sample-major columns like im2col
    MatrixRM<Acc> gmat(oc, static_cast<std::int64_t>(n) * oh * ow);
    const std::int64_t plane = static_cast<std::int64_t>(oh) * ow;
    for (int in = 0; in < n; ++in)
        for (int c = 0; c < oc; ++c) {
            const S* src = grad_out.data() + grad_out.index4(in, c, 0, 0);
            Acc* dst = gmat.row(c).data() + static_cast<std::int64_t>(in) * plane;
            for (std::int64_t i = 0; i < plane; ++i) dst[i] = static_cast<Acc>(src[i]);
        }

    MatrixRM<Acc> col;
    detail::im2col(x, kh, kw, p.stride, p.padding, oh, ow, col);

    ConvGrads<S> g;
    g.weights = Tensor<S>(p.weights.shape());
    MatrixRM<Acc> gw = gmat * col.transpose(); // (oc, c*kh*kw)
    for (std::int64_t i = 0; i < g.weights.numel(); ++i)
        g.weights[i] = static_cast<S>(gw.data()[i]);

    g.bias = Tensor<S>(p.bias.shape());
    for (int c = 0; c < oc; ++c)
        g.bias[c] = static_cast<S>(gmat.row(c).sum());

    MatrixRM<Acc> wmat = detail::weights_as_acc_matrix(p.weights);
    MatrixRM<Acc> gcol = wmat.transpose() * gmat;
    g.input = Tensor<S>(x.shape());
    detail::col2im(gcol, kh, kw, p.stride, p.padding, oh, ow, g.input);
    return g;
}

template <typename S>
struct PoolResult {
    Tensor<S> output;
    std::vector<std::int64_t> argmax; // flat input index of each window winner
    std::vector<int> input_shape;
};

/// 3x3 max pooling. Ties go to the lowest flat index so backward routing
/// is deterministic.
template <typename S>
PoolResult<S> maxpool3x3(const Tensor<S>& x, int stride) {
    constexpr int K = 3;
    if (x.rank() != 4)
        throw ShapeError("maxpool3x3: input must be rank 4, got " + x.shape_str());
    if (x.extent(2) < K || x.extent(3) < K)
        throw ShapeError("maxpool3x3: input " + x.shape_str() + " smaller than 3x3 window");
    if (stride < 1) throw ShapeError("maxpool3x3: stride must be positive");
    const int n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
    const int oh = (h - K) / stride + 1;
    const int ow = (w - K) / stride + 1;

    PoolResult<S> r;
    r.output = Tensor<S>({n, c, oh, ow});
    r.argmax.resize(static_cast<std::size_t>(r.output.numel()));
    r.input_shape = x.shape();

    std::int64_t o = 0;
    for (int in = 0; in < n; ++in)
        for (int ic = 0; ic < c; ++ic)
            for (int y = 0; y < oh; ++y)
                for (int xo = 0; xo < ow; ++xo, ++o) {
                    const int y0 = y * stride, x0 = xo * stride;
                    std::int64_t best_idx = x.index4(in, ic, y0, x0);
                    S best = x[best_idx];
                    for (int r2 = 0; r2 < K; ++r2)
                        for (int s2 = 0; s2 < K; ++s2) {
                            const std::int64_t idx = x.index4(in, ic, y0 + r2, x0 + s2);
                            if (x[idx] > best) {
                                best = x[idx];
                                best_idx = idx;
                            }
                        }
                    r.output[o] = best;
                    r.argmax[static_cast<std::size_t>(o)] = best_idx;
                }
    return r;
}

/// Routes grad_out to the recorded argmax positions, summing collisions.
template <typename S>
Tensor<S> maxpool_backward(const PoolResult<S>& pool, const Tensor<S>& grad_out) {
    if (grad_out.numel() != static_cast<std::int64_t>(pool.argmax.size()))
        throw ShapeError("maxpool_backward: grad_out " + grad_out.shape_str() +
                         " does not match pooled output of " +
                         std::to_string(pool.argmax.size()) + " elements");
    Tensor<S> gx(pool.input_shape);
    std::vector<Acc> acc(static_cast<std::size_t>(gx.numel()), Acc(0));
    for (std::size_t i = 0; i < pool.argmax.size(); ++i)
        acc[static_cast<std::size_t>(pool.argmax[i])] +=
            static_cast<Acc>(grad_out[static_cast<std::int64_t>(i)]);
    for (std::int64_t i = 0; i < gx.numel(); ++i)
        gx[i] = static_cast<S>(acc[static_cast<std::size_t>(i)]);
    return gx;
}

template <typename S>
struct BatchNormParams {
    Tensor<S> gamma;        // (C)
    Tensor<S> beta;         // (C)
    Tensor<S> running_mean; // (C)
    Tensor<S> running_var;  // (C)
    S momentum = S(0.1);
    S epsilon = S(1e-5);

    static BatchNormParams identity(int channels) {
        BatchNormParams p;
        p.gamma = Tensor<S>::full({channels}, S(1));
        p.beta = Tensor<S>({channels});
        p.running_mean = Tensor<S>({channels});
        p.running_var = Tensor<S>::full({channels}, S(1));
        return p;
    }
};

template <typename S>
struct BatchNormCache {
    Tensor<S> x_hat;          // normalized input
    std::vector<Acc> inv_std; // per channel
};

/// Per-channel normalization over (N, H, W). Train mode uses batch
/// statistics and folds them into the running estimates with
/// new = (1 - momentum) * old + momentum * batch; infer mode uses the
/// running estimates and is deterministic. Variances are population
/// (biased) throughout.
template <typename S>
Tensor<S> batchnorm_forward(const Tensor<S>& x, BatchNormParams<S>& p, Mode mode,
                            BatchNormCache<S>* cache = nullptr) {
    if (x.rank() != 4)
        throw ShapeError("batchnorm: input must be rank 4, got " + x.shape_str());
    const int n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
    if (p.gamma.numel() != c)
        throw ShapeError("batchnorm: channel count " + std::to_string(c) +
                         " != parameter channels " + std::to_string(p.gamma.numel()));
    const std::int64_t m = static_cast<std::int64_t>(n) * h * w;

    Tensor<S> y(x.shape());
    if (cache) {
        cache->x_hat = Tensor<S>(x.shape());
        cache->inv_std.assign(static_cast<std::size_t>(c), Acc(0));
    }

    for (int ic = 0; ic < c; ++ic) {
        Acc mean, var;
        if (mode == Mode::Train) {
            Acc sum = 0, sq = 0;
            for (int in = 0; in < n; ++in) {
                const S* plane = x.data() + x.index4(in, ic, 0, 0);
                for (std::int64_t i = 0; i < static_cast<std::int64_t>(h) * w; ++i) {
                    const Acc v = static_cast<Acc>(plane[i]);
                    sum += v;
                    sq += v * v;
                }
            }
            mean = sum / static_cast<Acc>(m);
            var = sq / static_cast<Acc>(m) - mean * mean;
            if (var < 0) var = 0; // guard tiny negative from cancellation
            p.running_mean[ic] = static_cast<S>((Acc(1) - p.momentum) * p.running_mean[ic] +
                                                static_cast<Acc>(p.momentum) * mean);
            p.running_var[ic] = static_cast<S>((Acc(1) - p.momentum) * p.running_var[ic] +
                                               static_cast<Acc>(p.momentum) * var);
        } else {
            mean = static_cast<Acc>(p.running_mean[ic]);
            var = static_cast<Acc>(p.running_var[ic]);
        }
        const Acc inv_std = Acc(1) / std::sqrt(var + static_cast<Acc>(p.epsilon));
        if (cache) cache->inv_std[static_cast<std::size_t>(ic)] = inv_std;
        const Acc g = static_cast<Acc>(p.gamma[ic]);
        const Acc b = static_cast<Acc>(p.beta[ic]);
        for (int in = 0; in < n; ++in) {
            const S* src = x.data() + x.index4(in, ic, 0, 0);
            S* dst = y.data() + y.index4(in, ic, 0, 0);
            S* xh = cache ? cache->x_hat.data() + y.index4(in, ic, 0, 0) : nullptr;
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(h) * w; ++i) {
                const Acc hat = (static_cast<Acc>(src[i]) - mean) * inv_std;
                if (xh) xh[i] = static_cast<S>(hat);
                dst[i] = static_cast<S>(g * hat + b);
            }
        }
    }
    return y;
}

template <typename S>
struct BatchNormGrads {
    Tensor<S> input;
    Tensor<S> gamma;
    Tensor<S> beta;
};

/// Train-mode batchnorm gradient (batch statistics participate).
template <typename S>
BatchNormGrads<S> batchnorm_backward(const BatchNormParams<S>& p,
                                     const BatchNormCache<S>& cache,
                                     const Tensor<S>& grad_out) {
    const Tensor<S>& xh = cache.x_hat;
    if (!grad_out.same_shape(xh))
        throw ShapeError("batchnorm_backward: grad_out " + grad_out.shape_str() +
                         " does not match cached input " + xh.shape_str());
    const int n = xh.extent(0), c = xh.extent(1), h = xh.extent(2), w = xh.extent(3);
    const Acc m = static_cast<Acc>(n) * h * w;

    BatchNormGrads<S> g;
    g.input = Tensor<S>(xh.shape());
    g.gamma = Tensor<S>({c});
    g.beta = Tensor<S>({c});

    for (int ic = 0; ic < c; ++ic) {
        Acc sum_dy = 0, sum_dy_xhat = 0;
        for (int in = 0; in < n; ++in) {
            const S* dy = grad_out.data() + grad_out.index4(in, ic, 0, 0);
            const S* xhp = xh.data() + xh.index4(in, ic, 0, 0);
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(h) * w; ++i) {
                sum_dy += static_cast<Acc>(dy[i]);
                sum_dy_xhat += static_cast<Acc>(dy[i]) * static_cast<Acc>(xhp[i]);
            }
        }
        g.gamma[ic] = static_cast<S>(sum_dy_xhat);
        g.beta[ic] = static_cast<S>(sum_dy);
        const Acc scale = static_cast<Acc>(p.gamma[ic]) * cache.inv_std[static_cast<std::size_t>(ic)];
        for (int in = 0; in < n; ++in) {
            const S* dy = grad_out.data() + grad_out.index4(in, ic, 0, 0);
            const S* xhp = xh.data() + xh.index4(in, ic, 0, 0);
            S* dx = g.input.data() + g.input.index4(in, ic, 0, 0);
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(h) * w; ++i) {
                const Acc t = static_cast<Acc>(dy[i]) - sum_dy / m -
                              static_cast<Acc>(xhp[i]) * sum_dy_xhat / m;
                dx[i] = static_cast<S>(scale * t);
            }
        }
    }
    return g;
}

/// Affine map y = x W^T + b. x: (N, in) (higher ranks are viewed as
/// (N, rest)), W: (out, in), b: (out) -> (N, out).
template <typename S>
Tensor<S> dense_forward(const Tensor<S>& x, const Tensor<S>& weights, const Tensor<S>& bias) {
    const int n = x.extent(0);
    const std::int64_t in_features = x.numel() / n;
    if (weights.rank() != 2 || weights.extent(1) != in_features)
        throw ShapeError("dense: input features " + std::to_string(in_features) +
                         " != weight inner dim " +
                         std::to_string(weights.rank() == 2 ? weights.extent(1) : -1));
    const int out = weights.extent(0);
    if (bias.numel() != out)
        throw ShapeError("dense: bias length " + std::to_string(bias.numel()) +
                         " != out features " + std::to_string(out));

    MatrixRM<Acc> xm(n, in_features);
    for (std::int64_t i = 0; i < x.numel(); ++i) xm.data()[i] = static_cast<Acc>(x[i]);
    MatrixRM<Acc> wm = detail::weights_as_acc_matrix(weights);
    MatrixRM<Acc> ym = xm * wm.transpose();

    Tensor<S> y({n, out});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < out; ++j)
            y.at2(i, j) = static_cast<S>(ym(i, j) + static_cast<Acc>(bias[j]));
    return y;
}

template <typename S>
struct DenseGrads {
    Tensor<S> input;
    Tensor<S> weights;
    Tensor<S> bias;
};

template <typename S>
DenseGrads<S> dense_backward(const Tensor<S>& x, const Tensor<S>& weights,
                             const Tensor<S>& grad_out) {
    const int n = x.extent(0);
    const std::int64_t in_features = x.numel() / n;
    const int out = weights.extent(0);
    if (grad_out.rank() != 2 || grad_out.extent(0) != n || grad_out.extent(1) != out)
        throw ShapeError("dense_backward: grad_out " + grad_out.shape_str() + " must be (" +
                         std::to_string(n) + "," + std::to_string(out) + ")");

    MatrixRM<Acc> xm(n, in_features);
    for (std::int64_t i = 0; i < x.numel(); ++i) xm.data()[i] = static_cast<Acc>(x[i]);
    MatrixRM<Acc> gm(n, out);
    for (std::int64_t i = 0; i < grad_out.numel(); ++i) gm.data()[i] = static_cast<Acc>(grad_out[i]);
    MatrixRM<Acc> wm = detail::weights_as_acc_matrix(weights);

    DenseGrads<S> g;
    MatrixRM<Acc> gw = gm.transpose() * xm; // (out, in)
    g.weights = Tensor<S>(weights.shape());
    for (std::int64_t i = 0; i < g.weights.numel(); ++i)
        g.weights[i] = static_cast<S>(gw.data()[i]);

    g.bias = Tensor<S>({out});
    for (int j = 0; j < out; ++j) g.bias[j] = static_cast<S>(gm.col(j).sum());

    MatrixRM<Acc> gx = gm * wm; // (n, in)
    g.input = Tensor<S>(x.shape());
    for (std::int64_t i = 0; i < g.input.numel(); ++i)
        g.input[i] = static_cast<S>(gx.data()[i]);
    return g;
}

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
    Tensor<S> y(x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i) y[i] = x[i] > S(0) ? x[i] : S(0);
    return y;
}

/// Masks by x > 0 (subgradient 0 at exactly 0).
template <typename S>
Tensor<S> relu_backward(const Tensor<S>& x, const Tensor<S>& grad_out) {
    if (!x.same_shape(grad_out))
        throw ShapeError("relu_backward: shapes differ, " + x.shape_str() + " vs " +
                         grad_out.shape_str());
    Tensor<S> g(x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i) g[i] = x[i] > S(0) ? grad_out[i] : S(0);
    return g;
}

/// Row-wise max-subtracted softmax over the class axis of (N, K).
template <typename S>
Tensor<S> softmax(const Tensor<S>& logits) {
    if (logits.rank() != 2)
        throw ShapeError("softmax: expected rank-2 logits, got " + logits.shape_str());
    const int n = logits.extent(0), k = logits.extent(1);
    Tensor<S> p(logits.shape());
    for (int i = 0; i < n; ++i) {
        Acc mx = static_cast<Acc>(logits.at2(i, 0));
        for (int j = 1; j < k; ++j) mx = std::max(mx, static_cast<Acc>(logits.at2(i, j)));
        Acc sum = 0;
        for (int j = 0; j < k; ++j) sum += std::exp(static_cast<Acc>(logits.at2(i, j)) - mx);
        for (int j = 0; j < k; ++j)
            p.at2(i, j) = static_cast<S>(std::exp(static_cast<Acc>(logits.at2(i, j)) - mx) / sum);
    }
    return p;
}

template <typename S>
struct BceResult {
    double loss = 0;
    Tensor<S> grad_logits; // fused softmax+BCE gradient, (p - onehot)/batch
};

/// Mean over the batch of -log p(true class), probabilities clamped to
/// [1e-7, 1-1e-7]. grad_logits is exact for the softmax that produced
/// the probabilities.
template <typename S>
BceResult<S> bce_loss(const Tensor<S>& probs, const std::vector<int>& labels) {
    if (probs.rank() != 2)
        throw ShapeError("bce_loss: expected rank-2 probabilities, got " + probs.shape_str());
    const int n = probs.extent(0), k = probs.extent(1);
    if (static_cast<int>(labels.size()) != n)
        throw ShapeError("bce_loss: " + std::to_string(labels.size()) + " labels for batch " +
                         std::to_string(n));
    constexpr Acc clamp_lo = 1e-7, clamp_hi = 1.0 - 1e-7;

    BceResult<S> r;
    r.grad_logits = Tensor<S>(probs.shape());
    Acc total = 0;
    for (int i = 0; i < n; ++i) {
        const int t = labels[static_cast<std::size_t>(i)];
        Acc pt = static_cast<Acc>(probs.at2(i, t));
        pt = std::clamp(pt, clamp_lo, clamp_hi);
        total += -std::log(pt);
        for (int j = 0; j < k; ++j) {
            const Acc onehot = (j == t) ? Acc(1) : Acc(0);
            r.grad_logits.at2(i, j) =
                static_cast<S>((static_cast<Acc>(probs.at2(i, j)) - onehot) / static_cast<Acc>(n));
        }
    }
    r.loss = total / static_cast<Acc>(n);
    return r;
}

template <typename S>
struct AdamState {
    S lr = S(1e-4);
    S beta1 = S(0.9);
    S beta2 = S(0.999);
    S eps = S(1e-8);
    std::int64_t step_count = 0;
    std::vector<Tensor<S>> m; // lazily sized to mirror the parameter list
    std::vector<Tensor<S>> v;
};

/// Bias-corrected Adam over a fixed parameter list. Moments are allocated
/// on the first call and must keep matching shapes afterwards.
template <typename S>
void adam_step(const std::vector<Tensor<S>*>& params,
               const std::vector<const Tensor<S>*>& grads, AdamState<S>& st) {
    if (params.size() != grads.size())
        throw ShapeError("adam_step: " + std::to_string(params.size()) + " params vs " +
                         std::to_string(grads.size()) + " grads");
    if (st.m.empty()) {
        for (const Tensor<S>* p : params) {
            st.m.emplace_back(p->shape());
            st.v.emplace_back(p->shape());
        }
    }
    if (st.m.size() != params.size())
        throw ShapeError("adam_step: state tracks " + std::to_string(st.m.size()) +
                         " tensors, got " + std::to_string(params.size()));

    st.step_count += 1;
    const Acc b1 = static_cast<Acc>(st.beta1), b2 = static_cast<Acc>(st.beta2);
    const Acc bc1 = Acc(1) - std::pow(b1, static_cast<Acc>(st.step_count));
    const Acc bc2 = Acc(1) - std::pow(b2, static_cast<Acc>(st.step_count));

    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor<S>& p = *params[i];
        const Tensor<S>& g = *grads[i];
        if (!p.same_shape(g) || !p.same_shape(st.m[i]))
            throw ShapeError("adam_step: shape mismatch at parameter " + std::to_string(i));
        Tensor<S>& m = st.m[i];
        Tensor<S>& v = st.v[i];
        for (std::int64_t j = 0; j < p.numel(); ++j) {
            const Acc gj = static_cast<Acc>(g[j]);
            const Acc mj = b1 * static_cast<Acc>(m[j]) + (Acc(1) - b1) * gj;
            const Acc vj = b2 * static_cast<Acc>(v[j]) + (Acc(1) - b2) * gj * gj;
            m[j] = static_cast<S>(mj);
            v[j] = static_cast<S>(vj);
            const Acc mhat = mj / bc1;
            const Acc vhat = vj / bc2;
            p[j] = static_cast<S>(static_cast<Acc>(p[j]) -
                                  static_cast<Acc>(st.lr) * mhat /
                                      (std::sqrt(vhat) + static_cast<Acc>(st.eps)));
        }
    }
}

} // namespace pathonet
