// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cmc/adam.hpp"
#include "cmc/conv.hpp"
#include "cmc/gradcheck.hpp"
#include "cmc/loss.hpp"
#include "cmc/rng.hpp"

#include "oracles.hpp"

using namespace cmc;

namespace {

template <typename T>
double inner(const Tensor4<T>& a, const Tensor4<T>& b) {
    double acc = 0.0;
    for (i64 i = 0; i < a.size(); ++i)
        acc += static_cast<double>(a.data[i]) * static_cast<double>(b.data[i]);
    return acc;
}

}  // namespace

TEST_CASE("conv2d_forward: all-ones 3x3 kernel sums the 3x3 neighborhood") {
    Tensor4<double> in(1, 1, 3, 3);
    in.fill(1.0);
    Kernel<double> k(1, 1, 3);
    std::fill(k.data.begin(), k.data.end(), 1.0);
    const std::vector<double> bias{0.0};
    for (ConvBackend be : {ConvBackend::naive, ConvBackend::im2col}) {
        const Tensor4<double> out = conv2d_forward<double>(in, k, bias, be);
        CHECK(out.at(0, 0, 1, 1) == doctest::Approx(9.0));  // center sees all nine ones
        CHECK(out.at(0, 0, 0, 0) == doctest::Approx(4.0));  // corner sees four
    }
}

TEST_CASE("conv2d_forward: identity kernel reproduces the input") {
    Rng rng(1);
    Tensor4<double> in(2, 3, 7, 5);
    oracle::fill_uniform(in, rng);
    Kernel<double> k(3, 3, 3);
    for (int c = 0; c < 3; ++c) k.at(c, c, 1, 1) = 1.0;
    const std::vector<double> bias(3, 0.0);
    for (ConvBackend be : {ConvBackend::naive, ConvBackend::im2col}) {
        const Tensor4<double> out = conv2d_forward<double>(in, k, bias, be);
        for (i64 i = 0; i < in.size(); ++i) CHECK(out.data[i] == doctest::Approx(in.data[i]));
    }
}

TEST_CASE("conv2d_forward matches the padded-buffer oracle") {
    Rng rng(2);
    Tensor4<double> in(1, 2, 5, 5);
    oracle::fill_normal(in, rng);
    Kernel<double> k(3, 2, 3);
    oracle::fill_normal_kernel(k, rng);
    std::vector<double> bias{0.3, -0.1, 0.7};
    const Tensor4<double> want = oracle::conv2d(in, k, bias);
    for (ConvBackend be : {ConvBackend::naive, ConvBackend::im2col}) {
        const Tensor4<double> got = conv2d_forward<double>(in, k, bias, be);
        for (i64 i = 0; i < want.size(); ++i)
            CHECK(got.data[i] == doctest::Approx(want.data[i]).epsilon(1e-12));
    }
}

TEST_CASE("conv2d_forward handles even kernels with asymmetric padding") {
    Rng rng(3);
    Tensor4<double> in(1, 2, 6, 6);
    oracle::fill_normal(in, rng);
    for (int n : {2, 4, 6}) {
        Kernel<double> k(3, 2, n);
        oracle::fill_normal_kernel(k, rng);
        std::vector<double> bias{0.1, 0.2, 0.3};
        const Tensor4<double> want = oracle::conv2d(in, k, bias);
        const Tensor4<double> got = conv2d_forward<double>(in, k, bias, ConvBackend::im2col);
        CHECK(got.height == in.height);
        CHECK(got.width == in.width);
        for (i64 i = 0; i < want.size(); ++i)
            CHECK(got.data[i] == doctest::Approx(want.data[i]).epsilon(1e-12));
    }
}

TEST_CASE("conv2d_forward is linear (zero bias)") {
    Rng rng(4);
    Tensor4<double> x(1, 2, 6, 6), y(1, 2, 6, 6);
    oracle::fill_normal(x, rng);
    oracle::fill_normal(y, rng);
    Kernel<double> k(3, 2, 3);
    oracle::fill_normal_kernel(k, rng);
    const std::vector<double> bias(3, 0.0);
    const double a = 1.7, b = -0.4;

    Tensor4<double> combo(1, 2, 6, 6);
    for (i64 i = 0; i < combo.size(); ++i) combo.data[i] = a * x.data[i] + b * y.data[i];
    const Tensor4<double> lhs = conv2d_forward<double>(combo, k, bias);
    const Tensor4<double> cx = conv2d_forward<double>(x, k, bias);
    const Tensor4<double> cy = conv2d_forward<double>(y, k, bias);
    for (i64 i = 0; i < lhs.size(); ++i) {
        const double rhs = a * cx.data[i] + b * cy.data[i];
        CHECK(lhs.data[i] == doctest::Approx(rhs).epsilon(1e-10));
    }
}

TEST_CASE("conv2d adjoint identity <conv(x), g> == <x, conv_backward_input(g)>") {
    Rng rng(5);
    Tensor4<double> x(2, 3, 5, 6), g(2, 4, 5, 6);
    oracle::fill_normal(x, rng);
    oracle::fill_normal(g, rng);
    Kernel<double> k(4, 3, 3);
    oracle::fill_normal_kernel(k, rng);
    const std::vector<double> bias(4, 0.0);
    for (ConvBackend be : {ConvBackend::naive, ConvBackend::im2col}) {
        const Tensor4<double> cx = conv2d_forward<double>(x, k, bias, be);
        const ConvGrads<double> grads = conv2d_backward(x, k, g, true, be);
        CHECK(inner(cx, g) == doctest::Approx(inner(x, grads.input)).epsilon(1e-10));
    }
}

TEST_CASE("conv2d_backward: zero upstream gradient gives zero gradients") {
    Rng rng(6);
    Tensor4<double> x(1, 2, 4, 4);
    oracle::fill_normal(x, rng);
    Kernel<double> k(2, 2, 3);
    oracle::fill_normal_kernel(k, rng);
    Tensor4<double> g(1, 2, 4, 4);
    const ConvGrads<double> grads = conv2d_backward(x, k, g);
    for (double v : grads.input.data) CHECK(v == 0.0);
    for (double v : grads.kernel.data) CHECK(v == 0.0);
    for (double v : grads.bias) CHECK(v == 0.0);
}

TEST_CASE("conv2d_backward: grad_input of the identity kernel is grad_output") {
    Rng rng(7);
    Tensor4<double> x(1, 2, 4, 4), g(1, 2, 4, 4);
    oracle::fill_normal(x, rng);
    oracle::fill_normal(g, rng);
    Kernel<double> k(2, 2, 3);
    for (int c = 0; c < 2; ++c) k.at(c, c, 1, 1) = 1.0;
    const ConvGrads<double> grads = conv2d_backward(x, k, g);
    for (i64 i = 0; i < g.size(); ++i) CHECK(grads.input.data[i] == doctest::Approx(g.data[i]));
}

TEST_CASE("conv2d_backward kernel gradient agrees with finite differences") {
    Rng rng(8);
    Tensor4<double> x(1, 1, 4, 4), target(1, 1, 4, 4);
    oracle::fill_normal(x, rng);
    oracle::fill_normal(target, rng);
    Kernel<double> k(1, 1, 3);
    oracle::fill_normal_kernel(k, rng);
    const std::vector<double> bias{0.2};

    const auto loss_at = [&](std::span<const double> kp) {
        Kernel<double> kk = k;
        std::copy(kp.begin(), kp.end(), kk.data.begin());
        const Tensor4<double> out = conv2d_forward<double>(x, kk, bias);
        return mse_loss(out, target);
    };
    Tensor4<double> pred = conv2d_forward<double>(x, k, bias);
    Tensor4<double> grad_pred;
    mse_loss(pred, target, &grad_pred);
    const ConvGrads<double> grads = conv2d_backward(x, k, grad_pred);
    const double err = finite_diff_check(loss_at, k.data, grads.kernel.data, 1e-4);
    CHECK(err <= 1e-5);
}

TEST_CASE("naive and im2col backward paths agree") {
    Rng rng(9);
    Tensor4<double> x(2, 3, 6, 5), g(2, 4, 6, 5);
    oracle::fill_normal(x, rng);
    oracle::fill_normal(g, rng);
    Kernel<double> k(4, 3, 3);
    oracle::fill_normal_kernel(k, rng);
    const ConvGrads<double> a = conv2d_backward(x, k, g, true, ConvBackend::naive);
    const ConvGrads<double> b = conv2d_backward(x, k, g, true, ConvBackend::im2col);
    CHECK(oracle::max_rel_diff(a.input.data, b.input.data) < 1e-6);
    CHECK(oracle::max_rel_diff(a.kernel.data, b.kernel.data) < 1e-6);
    CHECK(oracle::max_rel_diff(a.bias, b.bias) < 1e-6);
}

TEST_CASE("conv2d rejects shape mismatches") {
    Tensor4<double> x(1, 2, 4, 4);
    Kernel<double> k(2, 3, 3);  // expects 3 input channels
    CHECK_THROWS_AS(conv2d_forward<double>(x, k, {}), ShapeError);
    Kernel<double> ok(2, 2, 3);
    Tensor4<double> bad_g(1, 3, 4, 4);
    CHECK_THROWS_AS(conv2d_backward(x, ok, bad_g), ShapeError);
    std::vector<double> bad_bias(5, 0.0);
    CHECK_THROWS_AS(conv2d_forward<double>(x, ok, bad_bias), ShapeError);
}

TEST_CASE("adam: zero gradient at step 1 leaves parameters unchanged") {
    std::vector<double> p{1.5, -2.0};
    std::vector<double> g{0.0, 0.0};
    AdamState<double> st(2);
    adam_step<double>(p, g, st, 1e-3);
    CHECK(p[0] == 1.5);
    CHECK(p[1] == -2.0);
    CHECK(st.step == 1);
}

TEST_CASE("adam: single hand-computed step") {
    // m=0.1, v=1e-3, mhat=1, vhat=1 -> delta = lr/(1+eps)
    std::vector<double> p{0.0};
    std::vector<double> g{1.0};
    AdamState<double> st(1);
    adam_step<double>(p, g, st, 1e-3);
    const double expect = -1e-3 * 1.0 / (1.0 + 1e-8);
    CHECK(p[0] == doctest::Approx(expect).epsilon(1e-12));
    CHECK(p[0] == doctest::Approx(-0.001).epsilon(1e-6));
}

TEST_CASE("adam: identical coordinates get identical updates") {
    std::vector<double> p{0.7, 0.7, -0.3};
    std::vector<double> g{0.2, 0.2, 0.9};
    AdamState<double> st(3);
    for (int i = 0; i < 5; ++i) adam_step<double>(p, g, st, 1e-2);
    CHECK(p[0] == p[1]);
}

TEST_CASE("adam rejects non-finite gradients and size mismatches") {
    std::vector<double> p{0.0};
    std::vector<double> g{std::numeric_limits<double>::quiet_NaN()};
    AdamState<double> st(1);
    CHECK_THROWS_AS(adam_step<double>(p, g, st, 1e-3), NumericError);
    std::vector<double> g2{1.0, 2.0};
    CHECK_THROWS_AS(adam_step<double>(p, g2, st, 1e-3), ShapeError);
}

TEST_CASE("mse_loss basics") {
    Tensor4<double> a(1, 1, 1, 2), b(1, 1, 1, 2);
    a.data = {1.0, 1.0};
    b.data = {0.0, 0.0};
    CHECK(mse_loss(a, b) == doctest::Approx(1.0));
    CHECK(mse_loss(a, a) == 0.0);
    Tensor4<double> c(1, 1, 2, 1);
    CHECK_THROWS_AS(mse_loss(a, c), ShapeError);
}

TEST_CASE("mse_loss gradient agrees with finite differences") {
    Rng rng(10);
    Tensor4<double> pred(1, 2, 3, 3), target(1, 2, 3, 3);
    oracle::fill_normal(pred, rng);
    oracle::fill_normal(target, rng);
    Tensor4<double> grad;
    mse_loss(pred, target, &grad);
    const auto f = [&](std::span<const double> p) {
        Tensor4<double> t = pred;
        std::copy(p.begin(), p.end(), t.data.begin());
        return mse_loss(t, target);
    };
    CHECK(finite_diff_check(f, pred.data, grad.data, 1e-6) < 1e-6);
}

TEST_CASE("finite_diff_check: exact quadratic") {
    const auto f = [](std::span<const double> x) { return x[0] * x[0]; };
    const std::vector<double> point{3.0};
    const std::vector<double> grad{6.0};
    CHECK(finite_diff_check(f, point, grad, 1e-5) < 1e-8);
}

TEST_CASE("finite_diff_check: doubled gradient reports error near 1/3") {
    const auto f = [](std::span<const double> x) { return x[0] * x[0]; };
    const std::vector<double> point{3.0};
    const std::vector<double> wrong{12.0};  // 2x the true gradient
    CHECK(finite_diff_check(f, point, wrong, 1e-5) == doctest::Approx(1.0 / 3.0).epsilon(1e-3));
}

TEST_CASE("finite_diff_check: one conv layer MSE") {
    Rng rng(11);
    Tensor4<double> x(1, 2, 5, 5), target(1, 3, 5, 5);
    oracle::fill_normal(x, rng);
    oracle::fill_normal(target, rng);
    Kernel<double> k(3, 2, 3);
    oracle::fill_normal_kernel(k, rng);
    std::vector<double> bias{0.1, -0.2, 0.05};

    // parameter vector = [kernel | bias]
    std::vector<double> params(k.data.begin(), k.data.end());
    params.insert(params.end(), bias.begin(), bias.end());
    const auto f = [&](std::span<const double> p) {
        Kernel<double> kk = k;
        std::copy_n(p.begin(), kk.data.size(), kk.data.begin());
        std::vector<double> bb(p.begin() + static_cast<std::ptrdiff_t>(kk.data.size()), p.end());
        return mse_loss(conv2d_forward<double>(x, kk, bb), target);
    };
    Tensor4<double> grad_pred;
    mse_loss(conv2d_forward<double>(x, k, bias), target, &grad_pred);
    const ConvGrads<double> g = conv2d_backward(x, k, grad_pred);
    std::vector<double> analytic(g.kernel.data.begin(), g.kernel.data.end());
    analytic.insert(analytic.end(), g.bias.begin(), g.bias.end());
    CHECK(finite_diff_check(f, params, analytic, 1e-5) < 1e-5);
}

TEST_CASE("rng determinism and stream independence") {
    Rng a(123), b(123), c(124);
    for (int i = 0; i < 100; ++i) {
        const double va = a.normal();
        CHECK(va == b.normal());
        (void)c.normal();
    }
    CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
    CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 2));
}
