#include <doctest.h>

#include "pathonet/ops.hpp"
#include "test_support.hpp"

using namespace pathonet;
using namespace testsup;

// Every backward is validated against central finite differences in
// double, tolerance 1e-4 relative with denominator max(|a|,|b|,1e-8).
namespace {
constexpr double kTol = 1e-4;
}

TEST_CASE("conv2d_backward zero grad_out gives zero gradients") {
    Rng rng(31);
    Tensor<float> x = random_tensor<float>({1, 2, 5, 5}, rng);
    ConvParams<float> p;
    p.weights = random_tensor<float>({3, 2, 3, 3}, rng);
    p.bias = random_tensor<float>({3}, rng);
    p.padding = 1;
    Tensor<float> gy(conv2d_forward(x, p).shape());
    auto g = conv2d_backward(x, p, gy);
    for (std::int64_t i = 0; i < g.input.numel(); ++i) CHECK(g.input[i] == 0.0f);
    for (std::int64_t i = 0; i < g.weights.numel(); ++i) CHECK(g.weights[i] == 0.0f);
    for (std::int64_t i = 0; i < g.bias.numel(); ++i) CHECK(g.bias[i] == 0.0f);
}

TEST_CASE("conv2d_backward bias gradient is the per-channel grad_out sum") {
    Rng rng(32);
    Tensor<float> x = random_tensor<float>({2, 2, 5, 5}, rng);
    ConvParams<float> p;
    p.weights = random_tensor<float>({3, 2, 3, 3}, rng);
    p.bias = random_tensor<float>({3}, rng);
    Tensor<float> y = conv2d_forward(x, p);
    Tensor<float> gy = random_tensor<float>(y.shape(), rng);
    auto g = conv2d_backward(x, p, gy);
    for (int c = 0; c < 3; ++c) {
        double sum = 0;
        for (int n = 0; n < 2; ++n)
            for (int iy = 0; iy < y.extent(2); ++iy)
                for (int ix = 0; ix < y.extent(3); ++ix)
                    sum += static_cast<double>(gy.at4(n, c, iy, ix));
        CHECK(rel_err(static_cast<double>(g.bias[c]), sum) < 1e-6);
    }
}

TEST_CASE("conv2d_backward matches finite differences") {
    Rng rng(33);
    for (int it = 0; it < 5; ++it) {
        const int stride = 1 + static_cast<int>(rng.uniform_int(2));
        const int pad = static_cast<int>(rng.uniform_int(2));
        Tensor<double> x = random_tensor<double>({2, 2, 5, 5}, rng);
        ConvParams<double> p;
        p.weights = random_tensor<double>({3, 2, 3, 3}, rng);
        p.bias = random_tensor<double>({3}, rng);
        p.stride = stride;
        p.padding = pad;
        Tensor<double> w_out = random_tensor<double>(conv2d_forward(x, p).shape(), rng);

        auto loss = [&]() { return weighted_sum(conv2d_forward(x, p), w_out); };
        auto g = conv2d_backward(x, p, w_out);

        CHECK(max_rel_err(g.input, finite_diff(x, loss)) < kTol);
        CHECK(max_rel_err(g.weights, finite_diff(p.weights, loss)) < kTol);
        CHECK(max_rel_err(g.bias, finite_diff(p.bias, loss)) < kTol);
    }
}

TEST_CASE("maxpool_backward non-overlapping windows scatter each element once") {
    Rng rng(34);
    Tensor<float> x = random_tensor<float>({1, 1, 6, 6}, rng);
    auto pool = maxpool3x3(x, 3); // stride 3: windows partition the input
    Tensor<float> gy = random_tensor<float>(pool.output.shape(), rng);
    Tensor<float> gx = maxpool_backward(pool, gy);

    double sum_gy = 0, sum_gx = 0;
    std::int64_t nonzero = 0;
    for (std::int64_t i = 0; i < gy.numel(); ++i) sum_gy += gy[i];
    for (std::int64_t i = 0; i < gx.numel(); ++i) {
        sum_gx += gx[i];
        nonzero += gx[i] != 0.0f;
    }
    CHECK(nonzero == gy.numel());
    CHECK(rel_err(sum_gx, sum_gy) < 1e-6); // conservation under partition
}

TEST_CASE("maxpool_backward matches finite differences on overlapping windows") {
    Rng rng(35);
    Tensor<double> x = random_tensor<double>({1, 2, 6, 6}, rng);
    auto pool = maxpool3x3(x, 1);
    Tensor<double> w_out = random_tensor<double>(pool.output.shape(), rng);

    auto loss = [&]() { return weighted_sum(maxpool3x3(x, 1).output, w_out); };
    Tensor<double> gx = maxpool_backward(pool, w_out);
    // h=1e-3 is far below the expected gap between window competitors, so
    // the max is differentiable at almost every random input
    CHECK(max_rel_err(gx, finite_diff(x, loss)) < kTol);
}

TEST_CASE("maxpool_backward rejects stale indices") {
    Rng rng(36);
    Tensor<float> x = random_tensor<float>({1, 1, 5, 5}, rng);
    auto pool = maxpool3x3(x, 2);
    Tensor<float> bad({1, 1, 3, 3});
    CHECK_THROWS_AS(maxpool_backward(pool, bad), ShapeError);
}

TEST_CASE("batchnorm_backward matches finite differences (train mode)") {
    Rng rng(37);
    Tensor<double> x = random_tensor<double>({3, 2, 4, 4}, rng);
    BatchNormParams<double> p = BatchNormParams<double>::identity(2);
    p.gamma = random_tensor<double>({2}, rng, 0.5, 1.5);
    p.beta = random_tensor<double>({2}, rng);
    Tensor<double> w_out({3, 2, 4, 4});
    w_out = random_tensor<double>({3, 2, 4, 4}, rng);

    auto loss = [&]() {
        BatchNormParams<double> fresh = p; // running-stat updates stay local
        return weighted_sum(batchnorm_forward(x, fresh, Mode::Train), w_out);
    };

    BatchNormParams<double> run = p;
    BatchNormCache<double> cache;
    batchnorm_forward(x, run, Mode::Train, &cache);
    auto g = batchnorm_backward(p, cache, w_out);

    CHECK(max_rel_err(g.input, finite_diff(x, loss)) < kTol);
    CHECK(max_rel_err(g.gamma, finite_diff(p.gamma, loss)) < kTol);
    CHECK(max_rel_err(g.beta, finite_diff(p.beta, loss)) < kTol);
}

TEST_CASE("dense_backward matches finite differences") {
    Rng rng(38);
    Tensor<double> x = random_tensor<double>({3, 7}, rng);
    Tensor<double> w = random_tensor<double>({4, 7}, rng);
    Tensor<double> b = random_tensor<double>({4}, rng);
    Tensor<double> w_out = random_tensor<double>({3, 4}, rng);

    auto loss = [&]() { return weighted_sum(dense_forward(x, w, b), w_out); };
    auto g = dense_backward(x, w, w_out);

    CHECK(max_rel_err(g.input, finite_diff(x, loss)) < kTol);
    CHECK(max_rel_err(g.weights, finite_diff(w, loss)) < kTol);
    // bias gradient: column sums of w_out
    for (int j = 0; j < 4; ++j) {
        double sum = 0;
        for (int i = 0; i < 3; ++i) sum += w_out.at2(i, j);
        CHECK(rel_err(static_cast<double>(g.bias[j]), sum) < 1e-9);
    }
}

TEST_CASE("relu_backward masks by positive input") {
    Rng rng(39);
    Tensor<double> x = random_tensor<double>({2, 10}, rng);
    Tensor<double> w_out = random_tensor<double>({2, 10}, rng);
    auto loss = [&]() { return weighted_sum(relu(x), w_out); };
    Tensor<double> g = relu_backward(x, w_out);
    CHECK(max_rel_err(g, finite_diff(x, loss)) < kTol);
    for (std::int64_t i = 0; i < x.numel(); ++i)
        CHECK(g[i] == (x[i] > 0 ? w_out[i] : 0.0));
}

TEST_CASE("softmax+bce fused gradient matches finite differences on logits") {
    Rng rng(40);
    for (int it = 0; it < 5; ++it) {
        Tensor<double> z = random_tensor<double>({4, 2}, rng, -2.0, 2.0);
        std::vector<int> labels;
        for (int i = 0; i < 4; ++i) labels.push_back(static_cast<int>(rng.uniform_int(2)));

        auto loss = [&]() { return bce_loss(softmax(z), labels).loss; };
        auto r = bce_loss(softmax(z), labels);
        CHECK(max_rel_err(r.grad_logits, finite_diff(z, loss)) < kTol);
    }
}
