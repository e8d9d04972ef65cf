#pragma once

// Shared test helpers: independent brute-force references (plain nested
// loops, no im2col / no Eigen) and a central finite-difference harness.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "pathonet/ops.hpp"
#include "pathonet/rng.hpp"
#include "pathonet/tensor.hpp"

namespace testsup {

using pathonet::Rng;
using pathonet::Tensor;

template <typename S>
Tensor<S> random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<S> t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<S>(rng.uniform(lo, hi));
    return t;
}

// ------------------------------------------------------------ references

// Direct cross-correlation, nested loops over every output element.
template <typename S>
Tensor<S> conv2d_reference(const Tensor<S>& x, const pathonet::ConvParams<S>& p) {
    const int n = x.extent(0), ci = x.extent(1), h = x.extent(2), w = x.extent(3);
    const int co = p.weights.extent(0), kh = p.weights.extent(2), kw = p.weights.extent(3);
    const int oh = (h + 2 * p.padding - kh) / p.stride + 1;
    const int ow = (w + 2 * p.padding - kw) / p.stride + 1;
    Tensor<S> y({n, co, oh, ow});
    for (int in = 0; in < n; ++in)
        for (int oc = 0; oc < co; ++oc)
            for (int y0 = 0; y0 < oh; ++y0)
                for (int x0 = 0; x0 < ow; ++x0) {
                    double acc = static_cast<double>(p.bias[oc]);
                    for (int ic = 0; ic < ci; ++ic)
                        for (int r = 0; r < kh; ++r)
                            for (int s = 0; s < kw; ++s) {
                                const int iy = y0 * p.stride + r - p.padding;
                                const int ix = x0 * p.stride + s - p.padding;
                                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                                acc += static_cast<double>(x.at4(in, ic, iy, ix)) *
                                       static_cast<double>(p.weights.at4(oc, ic, r, s));
                            }
                    y.at4(in, oc, y0, x0) = static_cast<S>(acc);
                }
    return y;
}

// Brute-force 3x3 window max.
template <typename S>
Tensor<S> maxpool_reference(const Tensor<S>& x, int stride) {
    const int n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
    const int oh = (h - 3) / stride + 1, ow = (w - 3) / stride + 1;
    Tensor<S> y({n, c, oh, ow});
    for (int in = 0; in < n; ++in)
        for (int ic = 0; ic < c; ++ic)
            for (int y0 = 0; y0 < oh; ++y0)
                for (int x0 = 0; x0 < ow; ++x0) {
                    S best = x.at4(in, ic, y0 * stride, x0 * stride);
                    for (int r = 0; r < 3; ++r)
                        for (int s = 0; s < 3; ++s)
                            best = std::max(best, x.at4(in, ic, y0 * stride + r,
                                                        x0 * stride + s));
                    y.at4(in, ic, y0, x0) = best;
                }
    return y;
}

// Direct per-channel statistics (train-mode normalization), no running
// stats involvement.
template <typename S>
Tensor<S> batchnorm_train_reference(const Tensor<S>& x, const Tensor<S>& gamma,
                                    const Tensor<S>& beta, double epsilon) {
    const int n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
    const double m = static_cast<double>(n) * h * w;
    Tensor<S> y(x.shape());
    for (int ic = 0; ic < c; ++ic) {
        double sum = 0;
        for (int in = 0; in < n; ++in)
            for (int iy = 0; iy < h; ++iy)
                for (int ix = 0; ix < w; ++ix)
                    sum += static_cast<double>(x.at4(in, ic, iy, ix));
        const double mean = sum / m;
        double var = 0;
        for (int in = 0; in < n; ++in)
            for (int iy = 0; iy < h; ++iy)
                for (int ix = 0; ix < w; ++ix) {
                    const double d = static_cast<double>(x.at4(in, ic, iy, ix)) - mean;
                    var += d * d;
                }
        var /= m;
        const double inv = 1.0 / std::sqrt(var + epsilon);
        for (int in = 0; in < n; ++in)
            for (int iy = 0; iy < h; ++iy)
                for (int ix = 0; ix < w; ++ix)
                    y.at4(in, ic, iy, ix) = static_cast<S>(
                        static_cast<double>(gamma[ic]) *
                            (static_cast<double>(x.at4(in, ic, iy, ix)) - mean) * inv +
                        static_cast<double>(beta[ic]));
    }
    return y;
}

template <typename S>
Tensor<S> dense_reference(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
    const int n = x.extent(0);
    const std::int64_t in_f = x.numel() / n;
    const int out = w.extent(0);
    Tensor<S> y({n, out});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < out; ++j) {
            double acc = static_cast<double>(b[j]);
            for (std::int64_t f = 0; f < in_f; ++f)
                acc += static_cast<double>(x[i * in_f + f]) *
                       static_cast<double>(w[j * in_f + f]);
            y.at2(i, j) = static_cast<S>(acc);
        }
    return y;
}

// ------------------------------------------------------ finite differences

// Central differences of a scalar functional w.r.t. every element of x.
inline Tensor<double> finite_diff(Tensor<double>& x, const std::function<double()>& loss,
                                  double h = 1e-3) {
    Tensor<double> g(x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        const double orig = x[i];
        x[i] = orig + h;
        const double lp = loss();
        x[i] = orig - h;
        const double lm = loss();
        x[i] = orig;
        g[i] = (lp - lm) / (2 * h);
    }
    return g;
}

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

template <typename S>
double max_rel_err(const Tensor<S>& a, const Tensor<double>& b) {
    double worst = 0;
    for (std::int64_t i = 0; i < a.numel(); ++i)
        worst = std::max(worst, rel_err(static_cast<double>(a[i]), b[i]));
    return worst;
}

template <typename S>
double max_abs_diff(const Tensor<S>& a, const Tensor<S>& b) {
    double worst = 0;
    for (std::int64_t i = 0; i < a.numel(); ++i)
        worst = std::max(worst, std::abs(static_cast<double>(a[i]) -
                                         static_cast<double>(b[i])));
    return worst;
}

// Weighted-sum functional sum(w .* f(x)): its gradient w.r.t. x equals
// backward with grad_out = w.
template <typename S>
double weighted_sum(const Tensor<S>& out, const Tensor<S>& w) {
    double acc = 0;
    for (std::int64_t i = 0; i < out.numel(); ++i)
        acc += static_cast<double>(out[i]) * static_cast<double>(w[i]);
    return acc;
}

// Unique temp directory per test binary run.
inline std::string temp_dir(const std::string& tag) {
    const auto dir =
        std::filesystem::temp_directory_path() / ("pathonet_test_" + tag + "_" +
                                                  std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    return dir.string();
}

} // namespace testsup
