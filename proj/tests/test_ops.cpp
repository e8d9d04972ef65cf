#include <doctest.h>

#include <cmath>

#include "pathonet/ops.hpp"
#include "test_support.hpp"

using namespace pathonet;
using namespace testsup;

namespace {

template <typename S>
ConvParams<S> random_conv(Rng& rng, int in_ch, int out_ch, int k, int stride, int pad,
                          double lo = -1.0, double hi = 1.0) {
    ConvParams<S> p;
    p.weights = random_tensor<S>({out_ch, in_ch, k, k}, rng, lo, hi);
    p.bias = random_tensor<S>({out_ch}, rng, lo, hi);
    p.stride = stride;
    p.padding = pad;
    return p;
}

} // namespace

TEST_CASE("conv2d identity kernel reproduces the input") {
    Rng rng(1);
    Tensor<float> x = random_tensor<float>({1, 1, 5, 5}, rng);
    ConvParams<float> p;
    p.weights = Tensor<float>({1, 1, 3, 3});
    p.weights.at4(0, 0, 1, 1) = 1.0f; // delta at center
    p.bias = Tensor<float>({1});
    p.stride = 1;
    p.padding = 1;
    Tensor<float> y = conv2d_forward(x, p);
    REQUIRE(y.shape() == x.shape());
    CHECK(max_abs_diff(y, x) == 0.0);
}

TEST_CASE("conv2d all-ones kernel on constant input sums the window") {
    const float c = 0.37f;
    Tensor<float> x = Tensor<float>::full({1, 1, 4, 4}, c);
    ConvParams<float> p;
    p.weights = Tensor<float>::full({1, 1, 3, 3}, 1.0f);
    p.bias = Tensor<float>({1});
    Tensor<float> y = conv2d_forward(x, p);
    REQUIRE(y.shape() == std::vector<int>{1, 1, 2, 2});
    for (std::int64_t i = 0; i < y.numel(); ++i)
        CHECK(y[i] == doctest::Approx(9 * c).epsilon(1e-6));
}

TEST_CASE("conv2d matches the nested-loop reference on random cases") {
    Rng rng(7);
    for (int it = 0; it < 100; ++it) {
        const int n = 1 + static_cast<int>(rng.uniform_int(2));
        const int ci = 1 + static_cast<int>(rng.uniform_int(4));
        const int h = 3 + static_cast<int>(rng.uniform_int(7));
        const int w = 3 + static_cast<int>(rng.uniform_int(7));
        const int co = 1 + static_cast<int>(rng.uniform_int(4));
        const int k = rng.uniform_int(2) ? 3 : 1;
        const int stride = 1 + static_cast<int>(rng.uniform_int(2));
        const int pad = static_cast<int>(rng.uniform_int(2));
        Tensor<float> x = random_tensor<float>({n, ci, h, w}, rng);
        ConvParams<float> p = random_conv<float>(rng, ci, co, k, stride, pad);
        CHECK(max_abs_diff(conv2d_forward(x, p), conv2d_reference(x, p)) < 1e-6);
    }
}

TEST_CASE("conv2d double instantiation matches the reference on [-10,10]") {
    Rng rng(8);
    for (int it = 0; it < 25; ++it) {
        Tensor<double> x = random_tensor<double>({2, 3, 8, 8}, rng, -10.0, 10.0);
        ConvParams<double> p = random_conv<double>(rng, 3, 4, 3, 1, 1, -10.0, 10.0);
        CHECK(max_abs_diff(conv2d_forward(x, p), conv2d_reference(x, p)) < 1e-6);
    }
}

TEST_CASE("conv2d is linear for zero bias") {
    Rng rng(9);
    Tensor<float> x = random_tensor<float>({1, 2, 6, 6}, rng);
    Tensor<float> y = random_tensor<float>({1, 2, 6, 6}, rng);
    ConvParams<float> p = random_conv<float>(rng, 2, 3, 3, 1, 1);
    p.bias.fill(0.0f);
    const float a = 0.7f, b = -1.3f;

    Tensor<float> mix({1, 2, 6, 6});
    for (std::int64_t i = 0; i < mix.numel(); ++i) mix[i] = a * x[i] + b * y[i];
    Tensor<float> lhs = conv2d_forward(mix, p);
    Tensor<float> cx = conv2d_forward(x, p);
    Tensor<float> cy = conv2d_forward(y, p);
    for (std::int64_t i = 0; i < lhs.numel(); ++i)
        CHECK(std::abs(lhs[i] - (a * cx[i] + b * cy[i])) < 1e-5);
}

TEST_CASE("conv2d rejects channel mismatch") {
    Rng rng(2);
    Tensor<float> x = random_tensor<float>({1, 2, 5, 5}, rng);
    ConvParams<float> p = random_conv<float>(rng, 3, 1, 3, 1, 0);
    CHECK_THROWS_AS(conv2d_forward(x, p), ShapeError);
}

TEST_CASE("conv2d rejects input smaller than kernel") {
    Rng rng(3);
    Tensor<float> x = random_tensor<float>({1, 1, 2, 2}, rng);
    ConvParams<float> p = random_conv<float>(rng, 1, 1, 3, 1, 0);
    CHECK_THROWS_AS(conv2d_forward(x, p), ShapeError);
}

TEST_CASE("maxpool constant input gives constant output") {
    Tensor<float> x = Tensor<float>::full({1, 2, 6, 6}, 2.5f);
    auto r = maxpool3x3(x, 2);
    for (std::int64_t i = 0; i < r.output.numel(); ++i) CHECK(r.output[i] == 2.5f);
}

TEST_CASE("maxpool ramp fixture") {
    Tensor<float> x({1, 1, 5, 5});
    for (std::int64_t i = 0; i < 25; ++i) x[i] = static_cast<float>(i);
    auto r = maxpool3x3(x, 2);
    REQUIRE(r.output.shape() == std::vector<int>{1, 1, 2, 2});
    CHECK(r.output[0] == 12.0f);
    CHECK(r.output[1] == 14.0f);
    CHECK(r.output[2] == 22.0f);
    CHECK(r.output[3] == 24.0f);
}

TEST_CASE("maxpool matches brute force exactly on random cases") {
    Rng rng(11);
    for (int it = 0; it < 100; ++it) {
        const int n = 1 + static_cast<int>(rng.uniform_int(2));
        const int c = 1 + static_cast<int>(rng.uniform_int(3));
        const int h = 3 + static_cast<int>(rng.uniform_int(8));
        const int w = 3 + static_cast<int>(rng.uniform_int(8));
        const int stride = 1 + static_cast<int>(rng.uniform_int(3));
        Tensor<float> x = random_tensor<float>({n, c, h, w}, rng);
        auto r = maxpool3x3(x, stride);
        Tensor<float> ref = maxpool_reference(x, stride);
        REQUIRE(r.output.shape() == ref.shape());
        for (std::int64_t i = 0; i < ref.numel(); ++i) CHECK(r.output[i] == ref[i]);
    }
}

TEST_CASE("maxpool rejects inputs smaller than the window") {
    Tensor<float> x({1, 1, 2, 5});
    CHECK_THROWS_AS(maxpool3x3(x, 1), ShapeError);
}

TEST_CASE("batchnorm train mode normalizes per channel") {
    Rng rng(13);
    Tensor<float> x = random_tensor<float>({4, 3, 5, 5}, rng, -2.0, 3.0);
    auto p = BatchNormParams<float>::identity(3);
    Tensor<float> y = batchnorm_forward(x, p, Mode::Train);

    const int n = 4, h = 5, w = 5;
    const double m = n * h * w;
    for (int c = 0; c < 3; ++c) {
        double sum = 0, sq = 0;
        for (int in = 0; in < n; ++in)
            for (int iy = 0; iy < h; ++iy)
                for (int ix = 0; ix < w; ++ix) {
                    const double v = y.at4(in, c, iy, ix);
                    sum += v;
                    sq += v * v;
                }
        const double mean = sum / m;
        const double var = sq / m - mean * mean;
        CHECK(std::abs(mean) < 1e-6);
        CHECK(std::abs(var - 1.0) < 1e-4);
    }
}

TEST_CASE("batchnorm infer with identity statistics passes input through") {
    Rng rng(14);
    Tensor<float> x = random_tensor<float>({2, 2, 4, 4}, rng);
    auto p = BatchNormParams<float>::identity(2);
    Tensor<float> y = batchnorm_forward(x, p, Mode::Infer);
    CHECK(max_abs_diff(y, x) < 1e-4); // epsilon shrinks values slightly
}

TEST_CASE("batchnorm matches brute-force statistics on random cases") {
    Rng rng(15);
    for (int it = 0; it < 100; ++it) {
        const int n = 2 + static_cast<int>(rng.uniform_int(3));
        const int c = 1 + static_cast<int>(rng.uniform_int(4));
        const int h = 2 + static_cast<int>(rng.uniform_int(5));
        const int w = 2 + static_cast<int>(rng.uniform_int(5));
        Tensor<float> x = random_tensor<float>({n, c, h, w}, rng);
        auto p = BatchNormParams<float>::identity(c);
        p.gamma = random_tensor<float>({c}, rng, 0.5, 2.0);
        p.beta = random_tensor<float>({c}, rng);
        Tensor<float> ref =
            batchnorm_train_reference(x, p.gamma, p.beta, static_cast<double>(p.epsilon));
        Tensor<float> y = batchnorm_forward(x, p, Mode::Train);
        CHECK(max_abs_diff(y, ref) < 1e-6);
    }
}

TEST_CASE("batchnorm updates running stats with momentum") {
    Tensor<float> x = Tensor<float>::full({1, 1, 2, 2}, 4.0f);
    auto p = BatchNormParams<float>::identity(1);
    p.momentum = 0.1f;
    batchnorm_forward(x, p, Mode::Train);
    CHECK(p.running_mean[0] == doctest::Approx(0.4f));       // 0.9*0 + 0.1*4
    CHECK(p.running_var[0] == doctest::Approx(0.9f));        // 0.9*1 + 0.1*0
}

TEST_CASE("dense identity weights reproduce the input") {
    Tensor<float> x({2, 3});
    for (std::int64_t i = 0; i < 6; ++i) x[i] = static_cast<float>(i) - 2.0f;
    Tensor<float> w({3, 3});
    for (int i = 0; i < 3; ++i) w.at2(i, i) = 1.0f;
    Tensor<float> b({3});
    Tensor<float> y = dense_forward(x, w, b);
    CHECK(max_abs_diff(y, x.reshaped({2, 3})) == 0.0);
}

TEST_CASE("dense zero input returns the bias") {
    Tensor<float> x({1, 4});
    Rng rng(17);
    Tensor<float> w = random_tensor<float>({2, 4}, rng);
    Tensor<float> b = random_tensor<float>({2}, rng);
    Tensor<float> y = dense_forward(x, w, b);
    CHECK(y.at2(0, 0) == b[0]);
    CHECK(y.at2(0, 1) == b[1]);
}

TEST_CASE("dense matches the reference on random cases") {
    Rng rng(18);
    for (int it = 0; it < 100; ++it) {
        const int n = 1 + static_cast<int>(rng.uniform_int(4));
        const int in_f = 1 + static_cast<int>(rng.uniform_int(20));
        const int out_f = 1 + static_cast<int>(rng.uniform_int(8));
        Tensor<float> x = random_tensor<float>({n, in_f}, rng);
        Tensor<float> w = random_tensor<float>({out_f, in_f}, rng);
        Tensor<float> b = random_tensor<float>({out_f}, rng);
        CHECK(max_abs_diff(dense_forward(x, w, b), dense_reference(x, w, b)) < 1e-6);
    }
}

TEST_CASE("dense rejects mismatched inner dimension") {
    Tensor<float> x({1, 4});
    Tensor<float> w({2, 5});
    Tensor<float> b({2});
    CHECK_THROWS_AS(dense_forward(x, w, b), ShapeError);
}

TEST_CASE("relu basics") {
    Tensor<float> neg = Tensor<float>::full({1, 4}, -3.0f);
    for (std::int64_t i = 0; i < 4; ++i) CHECK(relu(neg)[i] == 0.0f);

    Tensor<float> pos = Tensor<float>::full({1, 4}, 3.0f);
    for (std::int64_t i = 0; i < 4; ++i) CHECK(relu(pos)[i] == 3.0f);

    Rng rng(19);
    Tensor<float> x = random_tensor<float>({2, 8}, rng);
    Tensor<float> y = relu(x);
    for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(y[i] == std::max(0.0f, x[i]));
}

TEST_CASE("softmax equal logits give 0.5/0.5") {
    Tensor<float> z = Tensor<float>::full({3, 2}, 1.7f);
    Tensor<float> p = softmax(z);
    for (std::int64_t i = 0; i < p.numel(); ++i) CHECK(p[i] == doctest::Approx(0.5));
}

TEST_CASE("softmax analytic ratio [0, ln3] -> [0.25, 0.75]") {
    Tensor<float> z({1, 2});
    z.at2(0, 1) = std::log(3.0f);
    Tensor<float> p = softmax(z);
    CHECK(p.at2(0, 0) == doctest::Approx(0.25).epsilon(1e-6));
    CHECK(p.at2(0, 1) == doctest::Approx(0.75).epsilon(1e-6));
}

TEST_CASE("softmax survives huge logits") {
    Tensor<float> z({1, 2});
    z.at2(0, 0) = 1000.0f;
    Tensor<float> p = softmax(z);
    CHECK(p.all_finite());
    CHECK(p.at2(0, 0) == doctest::Approx(1.0));
    CHECK(p.at2(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("softmax rows sum to 1 and shift invariance holds") {
    Rng rng(21);
    for (int it = 0; it < 50; ++it) {
        Tensor<float> z = random_tensor<float>({4, 2}, rng, -5.0, 5.0);
        Tensor<float> p = softmax(z);
        for (int i = 0; i < 4; ++i)
            CHECK(std::abs(p.at2(i, 0) + p.at2(i, 1) - 1.0f) < 1e-6);
        Tensor<float> shifted = z;
        const float c = static_cast<float>(rng.uniform(-3.0, 3.0));
        for (std::int64_t i = 0; i < shifted.numel(); ++i) shifted[i] += c;
        CHECK(max_abs_diff(softmax(shifted), p) < 1e-6);
    }
}

TEST_CASE("bce loss of a certain correct prediction is 0") {
    Tensor<float> p({1, 2});
    p.at2(0, 1) = 1.0f;
    auto r = bce_loss(p, {1});
    CHECK(r.loss == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("bce loss at p=0.5 is ln 2") {
    Tensor<float> p = Tensor<float>::full({1, 2}, 0.5f);
    auto r = bce_loss(p, {0});
    CHECK(r.loss == doctest::Approx(0.6931472).epsilon(1e-6));
}

TEST_CASE("bce gradient is (p - onehot)/batch") {
    Tensor<float> p({2, 2});
    p.at2(0, 0) = 0.3f;
    p.at2(0, 1) = 0.7f;
    p.at2(1, 0) = 0.9f;
    p.at2(1, 1) = 0.1f;
    auto r = bce_loss(p, {1, 0});
    CHECK(r.grad_logits.at2(0, 0) == doctest::Approx(0.3 / 2));
    CHECK(r.grad_logits.at2(0, 1) == doctest::Approx((0.7 - 1.0) / 2));
    CHECK(r.grad_logits.at2(1, 0) == doctest::Approx((0.9 - 1.0) / 2));
    CHECK(r.grad_logits.at2(1, 1) == doctest::Approx(0.1 / 2));
}

TEST_CASE("adam zero gradient leaves parameters unchanged") {
    Tensor<float> w = Tensor<float>::full({3}, 1.5f);
    Tensor<float> g({3});
    AdamState<float> st;
    st.lr = 0.1f;
    adam_step<float>({&w}, {&g}, st);
    adam_step<float>({&w}, {&g}, st);
    for (std::int64_t i = 0; i < 3; ++i) CHECK(w[i] == 1.5f);
}

TEST_CASE("adam first step moves by about lr") {
    Tensor<double> w = Tensor<double>::full({1}, 1.0);
    Tensor<double> g = Tensor<double>::full({1}, 2.0);
    AdamState<double> st;
    st.lr = 0.1;
    adam_step<double>({&w}, {&g}, st);
    CHECK(w[0] == doctest::Approx(0.9000000005).epsilon(1e-9));
    CHECK(st.step_count == 1);
}

TEST_CASE("adam reference run on f(w)=w^2") {
    // textbook recursion, lr 0.1, 100 steps from w=1
    Tensor<double> w = Tensor<double>::full({1}, 1.0);
    AdamState<double> st;
    st.lr = 0.1;
    std::vector<double> traj{1.0};
    for (int t = 0; t < 100; ++t) {
        Tensor<double> g = Tensor<double>::full({1}, 2.0 * w[0]);
        adam_step<double>({&w}, {&g}, st);
        traj.push_back(w[0]);
    }
    CHECK(std::abs(w[0] - 0.002936675681102549) < 1e-9); // frozen scripted value
    CHECK(std::abs(w[0]) < 0.1);
    CHECK(traj[1] == doctest::Approx(0.9).epsilon(1e-9));
    CHECK(traj[5] == doctest::Approx(0.507964).epsilon(1e-5));

    // peak envelope over 10-step windows decreases toward 0
    double prev_peak = 1e9;
    for (std::size_t start = 0; start + 10 <= traj.size(); start += 10) {
        double peak = 0;
        for (std::size_t i = start; i < start + 10; ++i)
            peak = std::max(peak, std::abs(traj[i]));
        CHECK(peak <= prev_peak + 1e-12);
        prev_peak = peak;
    }
}

TEST_CASE("ops are bit-deterministic across repeated calls") {
    Rng rng(23);
    Tensor<float> x = random_tensor<float>({2, 3, 7, 7}, rng);
    ConvParams<float> p = random_conv<float>(rng, 3, 4, 3, 1, 1);
    Tensor<float> a = conv2d_forward(x, p);
    Tensor<float> b = conv2d_forward(x, p);
    for (std::int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
}
