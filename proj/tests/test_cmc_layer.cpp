// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "cmc/cmc_layer.hpp"
#include "cmc/gradcheck.hpp"
#include "cmc/loss.hpp"
#include "cmc/rng.hpp"

#include "oracles.hpp"

using namespace cmc;

namespace {

/// Push random values into the active task's parameters, as training would.
template <typename T>
void jitter_active(CmcLayer<T>& layer, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<T> p(static_cast<std::size_t>(layer.active_param_count()));
    layer.gather_active_params(p);
    for (T& v : p) v += static_cast<T>(rng.normal(0.0, 0.3));
    layer.scatter_active_params(p);
}

template <typename T>
bool bits_equal(const std::vector<T>& a, const std::vector<T>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0;
}

}  // namespace

TEST_CASE("allocate_mask: paper-scale 64->64 3x3 layer at 10% fills 18432 bits") {
    CmcLayer<double> layer("l", 64, 64, 3, 5);
    CHECK(layer.kernel_params() == 36864);
    const TaskMask& m1 = layer.allocate_mask(1, 0.10, 42);
    CHECK(m1.bits.popcount() == 18432);
    layer.init_task(1, true, 43);
    layer.freeze_task(1);
    const TaskMask& m2 = layer.allocate_mask(2, 0.10, 44);
    CHECK(m2.bits.popcount() == 18432);
    CHECK_FALSE(layer.mask(1).bits.intersects(layer.mask(2).bits));
    CHECK(layer.free_count() == 5 * 36864 - 2 * 18432);
}

TEST_CASE("allocate_mask: fraction 1.0 on fresh memory sets every bit") {
    CmcLayer<double> layer("l", 2, 2, 3, 3);
    const TaskMask& m = layer.allocate_mask(1, 1.0, 1);
    CHECK(m.bits.popcount() == 3 * 36);
    CHECK(layer.free_count() == 0);
}

TEST_CASE("allocate_mask: requesting more than the free fraction raises CapacityExhausted") {
    CmcLayer<double> layer("middle", 4, 4, 3, 5);
    layer.allocate_mask(1, 0.10, 1);
    layer.init_task(1, true, 2);
    layer.freeze_task(1);
    try {
        layer.allocate_mask(2, 0.95, 3);
        FAIL("expected CapacityExhausted");
    } catch (const CapacityExhausted& e) {
        CHECK(e.layer() == "middle");
        CHECK(std::string(e.what()).find("expand") != std::string::npos);
    }
}

TEST_CASE("allocate_mask protocol: out-of-order task ids rejected") {
    CmcLayer<double> layer("l", 2, 2, 3, 3);
    CHECK_THROWS_AS(layer.allocate_mask(2, 0.1, 1), ProtocolError);
    layer.allocate_mask(1, 0.1, 1);
    layer.init_task(1, true, 2);
    // task 1 not yet frozen
    CHECK_THROWS_AS(layer.allocate_mask(2, 0.1, 3), ProtocolError);
}

TEST_CASE("estimate_kernel: zero task vector gives the zero kernel") {
    CmcLayer<double> layer("l", 2, 3, 3, 4);
    layer.allocate_mask(1, 0.5, 5);
    layer.init_task(1, true, 6);
    std::vector<double> p(static_cast<std::size_t>(layer.active_param_count()));
    layer.gather_active_params(p);
    for (int r = 0; r < layer.capacity(); ++r) p[static_cast<std::size_t>(r)] = 0.0;
    layer.scatter_active_params(p);
    const Kernel<double> k = layer.estimate_kernel(1);
    for (double v : k.data) CHECK(v == 0.0);
}

TEST_CASE("estimate_kernel: t=1, T=[1], full mask reproduces the memory row") {
    CmcLayer<double> layer("l", 2, 2, 1, 1);
    layer.allocate_mask(1, 1.0, 7);
    layer.init_task(1, true, 8);
    std::vector<double> p(static_cast<std::size_t>(layer.active_param_count()));
    layer.gather_active_params(p);
    p[0] = 1.0;  // task vector
    layer.scatter_active_params(p);
    const Kernel<double> k = layer.estimate_kernel(1);
    for (std::size_t j = 0; j < k.data.size(); ++j) CHECK(k.data[j] == layer.memory()[j]);
}

TEST_CASE("estimate_kernel equals the dense oracle exactly (two tasks, random)") {
    // m = 8 via a 2->4 1x1 layer, t = 3
    CmcLayer<double> layer("l", 2, 4, 1, 3);
    layer.allocate_mask(1, 0.4, 11);
    layer.init_task(1, true, 12);
    jitter_active(layer, 13);
    layer.freeze_task(1);
    layer.allocate_mask(2, 0.3, 14);
    layer.init_task(2, true, 15);
    jitter_active(layer, 16);

    for (int task = 1; task <= 2; ++task) {
        const Kernel<double> k = layer.estimate_kernel(task);
        const std::vector<double> want = oracle::estimate_kernel_dense(layer, task);
        CHECK(bits_equal(k.data, want));
    }
}

TEST_CASE("forward equals conv2d_forward on the materialized kernel, exactly") {
    CmcLayer<float> layer("l", 3, 4, 3, 5);
    layer.allocate_mask(1, 0.25, 21);
    layer.init_task(1, true, 22);
    Rng rng(23);
    Tensor4<float> x(2, 3, 6, 6);
    oracle::fill_uniform(x, rng);
    const Tensor4<float> a = layer.forward(x, 1);
    const Tensor4<float> b = conv2d_forward(x, layer.estimate_kernel(1), layer.bias(1));
    CHECK(bits_equal(a.data, b.data));
}

TEST_CASE("zero input and zero bias give zero output") {
    CmcLayer<double> layer("l", 2, 3, 3, 4);
    layer.allocate_mask(1, 0.5, 31);
    layer.init_task(1, true, 32);
    Tensor4<double> x(1, 2, 5, 5);
    const Tensor4<double> y = layer.forward(x, 1);
    for (double v : y.data) CHECK(v == 0.0);
}

TEST_CASE("backward_masked: full-mask single task matches finite differences") {
    CmcLayer<double> layer("l", 2, 2, 3, 3);
    layer.allocate_mask(1, 1.0, 41);
    layer.init_task(1, true, 42);
    Rng rng(43);
    Tensor4<double> x(1, 2, 4, 4), target(1, 2, 4, 4);
    oracle::fill_normal(x, rng);
    oracle::fill_normal(target, rng);

    std::vector<double> params(static_cast<std::size_t>(layer.active_param_count()));
    layer.gather_active_params(params);
    const auto f = [&](std::span<const double> p) {
        layer.scatter_active_params(p);
        const double loss = mse_loss(layer.forward(x, 1), target);
        layer.scatter_active_params(params);
        return loss;
    };
    Tensor4<double> grad_pred;
    mse_loss(layer.forward(x, 1), target, &grad_pred);
    const ConvGrads<double> cg = conv2d_backward(x, layer.estimate_kernel(1), grad_pred);
    std::vector<double> analytic(params.size());
    layer.backward_masked(cg.kernel, cg.bias, analytic);
    CHECK(finite_diff_check(f, params, analytic, 1e-5) <= 1e-5);
}

TEST_CASE("backward_masked: projection onto the mask commutes with the dense gradient") {
    CmcLayer<double> layer("l", 2, 3, 3, 4);
    layer.allocate_mask(1, 0.3, 51);
    layer.init_task(1, true, 52);
    layer.freeze_task(1);
    layer.allocate_mask(2, 0.4, 53);
    layer.init_task(2, true, 54);
    jitter_active(layer, 55);

    Rng rng(56);
    Kernel<double> gk(3, 2, 3);
    oracle::fill_normal_kernel(gk, rng);
    std::vector<double> gbias(3, 0.0);
    std::vector<double> grads(static_cast<std::size_t>(layer.active_param_count()));
    layer.backward_masked(gk, gbias, grads);

    // dense dL/dM = T ⊗ gk, then mask; compare over every memory cell
    const i64 m = layer.kernel_params();
    const std::vector<double>& vec = layer.task_vector(2).values;
    std::size_t o = static_cast<std::size_t>(layer.capacity());  // grads after the T block
    for (int r = 0; r < layer.capacity(); ++r)
        for (i64 j = 0; j < m; ++j) {
            const i64 bit = static_cast<i64>(r) * m + j;
            const double dense = vec[static_cast<std::size_t>(r)] * gk.data[static_cast<std::size_t>(j)];
            const bool active = layer.mask(2).bits.test(bit);
            const bool frozen = layer.mask(1).bits.test(bit);
            if (active) {
                CHECK(grads[o++] == dense);
            } else {
                // masked-out and frozen regions receive exactly zero gradient,
                // which the flat layout encodes by not carrying them at all
                CHECK((frozen || !active));
            }
        }
}

TEST_CASE("freeze contract: writes rejected, task-1 kernel stable, cache verified") {
    CmcLayer<double> layer("l", 2, 2, 3, 4);
    layer.allocate_mask(1, 0.4, 61);
    layer.init_task(1, true, 62);
    jitter_active(layer, 63);
    const Kernel<double> k1_before = layer.estimate_kernel(1);
    layer.freeze_task(1);

    std::vector<double> junk(10, 1.0);
    CHECK_THROWS_AS(layer.scatter_active_params(junk), ProtocolError);

    layer.allocate_mask(2, 0.4, 64);
    layer.init_task(2, true, 65);
    CHECK(layer.verify_cached_old());
    const std::vector<double>& cached = layer.cached_old_kernel();
    const std::vector<double> fresh = oracle::estimate_kernel_dense(layer, 1);
    CHECK(bits_equal(cached, fresh));  // K_old is exactly the frozen task-1 sum

    jitter_active(layer, 66);  // train task 2
    const Kernel<double> k1_after = layer.estimate_kernel(1);
    CHECK(bits_equal(k1_before.data, k1_after.data));

    CHECK_THROWS_AS(layer.freeze_task(1), ProtocolError);  // out of order
    CHECK_THROWS_AS(layer.estimate_kernel(5), ProtocolError);
}

TEST_CASE("non-sharing task ignores frozen contributions") {
    CmcLayer<double> layer("l", 2, 2, 3, 4);
    layer.allocate_mask(1, 0.4, 71);
    layer.init_task(1, true, 72);
    jitter_active(layer, 73);
    layer.freeze_task(1);
    layer.allocate_mask(2, 0.4, 74);
    layer.init_task(2, /*knowledge_sharing=*/false, 75);

    for (double v : layer.cached_old_kernel()) CHECK(v == 0.0);
    auto snap = layer.snapshot();
    // zero every frozen parameter; a non-sharing kernel must not notice
    const i64 m = layer.kernel_params();
    for (int r = 0; r < snap.t; ++r)
        for (i64 j = 0; j < m; ++j)
            if (snap.masks[0].bits.test(static_cast<i64>(r) * m + j))
                snap.memory[static_cast<std::size_t>(static_cast<i64>(r) * m + j)] = 0.0;
    for (double& v : snap.vectors[0].values) v = 0.0;
    snap.frozen_through = 2;  // snapshots restore only fully frozen layers
    auto snap2 = layer.snapshot();
    snap2.frozen_through = 2;
    CmcLayer<double> zeroed = CmcLayer<double>::from_snapshot("l", std::move(snap));
    CmcLayer<double> original = CmcLayer<double>::from_snapshot("l", std::move(snap2));
    CHECK(bits_equal(zeroed.estimate_kernel(2).data, original.estimate_kernel(2).data));
}

TEST_CASE("expand_capacity: frozen kernels unchanged, new rows usable, zero-expansion is a no-op") {
    CmcLayer<double> layer("l", 2, 3, 3, 5);
    layer.allocate_mask(1, 0.5, 81);
    layer.init_task(1, true, 82);
    jitter_active(layer, 83);
    layer.freeze_task(1);
    const Kernel<double> k1 = layer.estimate_kernel(1);
    const i64 free_before = layer.free_count();
    const i64 trainable_before = layer.trainable_params();

    layer.expand_capacity(0);
    CHECK(layer.capacity() == 5);

    layer.expand_capacity(15);  // CMC-5 -> CMC-20
    CHECK(layer.capacity() == 20);
    CHECK(bits_equal(layer.estimate_kernel(1).data, k1.data));
    CHECK(layer.free_count() == free_before + 15 * layer.kernel_params());
    // memory rows quadrupled; vectors are a rounding term on top
    CHECK(layer.trainable_params() >= 4 * trainable_before - 64);

    // a task can now take more than the old free space
    const i64 total = 20 * layer.kernel_params();
    const double fraction = 0.8;
    const TaskMask& mask = layer.allocate_mask(2, fraction, 84);
    CHECK(mask.bits.popcount() == static_cast<i64>(std::nearbyint(fraction * total)));
    CHECK_FALSE(mask.bits.intersects(layer.mask(1).bits));
    layer.init_task(2, true, 85);
    CHECK(bits_equal(layer.estimate_kernel(1).data, k1.data));

    CHECK_THROWS_AS(layer.expand_capacity(1), ProtocolError);  // mid-training
}

TEST_CASE("free-parameter accounting is exact over a random allocation run") {
    Rng rng(91);
    for (int trial = 0; trial < 25; ++trial) {
        const int t = static_cast<int>(rng.uniform_int(1, 6));
        const int k_in = static_cast<int>(rng.uniform_int(1, 3));
        const int k_out = static_cast<int>(rng.uniform_int(1, 3));
        CmcLayer<double> layer("l", k_in, k_out, 3, t);
        const i64 total = static_cast<i64>(t) * layer.kernel_params();
        i64 used = 0;
        for (int task = 1; task <= 4; ++task) {
            const double fraction = rng.uniform(0.05, 0.5);
            const i64 request = static_cast<i64>(std::nearbyint(fraction * static_cast<double>(total)));
            if (request < 1) break;
            if (request > total - used) {
                CHECK_THROWS_AS(layer.allocate_mask(task, fraction, rng.next_u64()),
                                CapacityExhausted);
                break;
            }
            layer.allocate_mask(task, fraction, rng.next_u64());
            used += request;
            CHECK(layer.free_count() == total - used);
            layer.init_task(task, true, rng.next_u64());
            layer.freeze_task(task);
        }
    }
}
