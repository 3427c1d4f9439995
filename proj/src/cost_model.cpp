// SPDX-License-Identifier: Apache-2.0
#include "cmc/cost_model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "cmc/cmc_layer.hpp"
#include "cmc/conv.hpp"
#include "cmc/rng.hpp"

namespace cmc {

const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::plain: return "plain";
        case Strategy::type1: return "type1";
        case Strategy::type2: return "type2";
        case Strategy::cmc: return "cmc";
    }
    return "?";
}

namespace {

double conv_macs(int k_in, int k_out, int n, int H, int W) {
    return static_cast<double>(k_out) * k_in * n * n * H * W;
}

double workset_bytes(int k_in, int k_out, int n, int H, int W, int layers, std::int64_t extra) {
    const double activations = static_cast<double>(k_in + k_out) * H * W * 4.0;
    const double kernels = static_cast<double>(layers) * k_out * k_in * n * n * 4.0;
    return activations + kernels + static_cast<double>(extra) * 4.0;
}

}  // namespace

BenchReport model_cost(const LayerCostModel& m) {
    if (m.k_in <= 0 || m.k_out <= 0 || m.n <= 0 || m.height <= 0 || m.width <= 0)
        throw Error("model_cost: invalid dimensions");

    const std::int64_t base_kernel = static_cast<std::int64_t>(m.k_in) * m.k_out * m.n * m.n;
    const double base_macs = conv_macs(m.k_in, m.k_out, m.n, m.height, m.width);

    BenchReport r;
    switch (m.strategy) {
        case Strategy::plain: {
            r.label = "plain " + std::to_string(m.n) + "x" + std::to_string(m.n);
            r.kernel_params = base_kernel;
            r.trainable_params = base_kernel;
            r.conv_macs = base_macs;
            r.workset_mb = workset_bytes(m.k_in, m.k_out, m.n, m.height, m.width, 1, 0) / 1e6;
            break;
        }
        case Strategy::type1: {
            if (m.type1_kernel < m.n) throw Error("model_cost: type1 kernel must not shrink");
            r.label = "type1 " + std::to_string(m.type1_kernel) + "x" +
                      std::to_string(m.type1_kernel);
            r.kernel_params = static_cast<std::int64_t>(m.k_in) * m.k_out * m.type1_kernel *
                              m.type1_kernel;
            r.trainable_params = r.kernel_params;
            r.conv_macs = conv_macs(m.k_in, m.k_out, m.type1_kernel, m.height, m.width);
            r.workset_mb =
                workset_bytes(m.k_in, m.k_out, m.type1_kernel, m.height, m.width, 1, 0) / 1e6;
            break;
        }
        case Strategy::type2: {
            if (m.type2_extra < 0) throw Error("model_cost: negative extra layers");
            const int layers = 1 + m.type2_extra;
            r.label = "type2 x" + std::to_string(layers);
            r.kernel_params = base_kernel * layers;
            r.trainable_params = r.kernel_params;
            r.conv_macs = base_macs * layers;
            r.workset_mb =
                workset_bytes(m.k_in, m.k_out, m.n, m.height, m.width, layers, 0) / 1e6;
            break;
        }
        case Strategy::cmc: {
            if (m.cmc_t < 1 || m.cmc_base_t < 1) throw Error("model_cost: invalid CMC capacity");
            r.label = "cmc t=" + std::to_string(m.cmc_t);
            r.kernel_params = base_kernel;  // the estimated kernel keeps its size
            r.trainable_params =
                static_cast<std::int64_t>(m.cmc_t) * base_kernel + m.cmc_t;  // memory + vector
            r.conv_macs = base_macs;
            r.estimation_macs = static_cast<double>(m.cmc_t) * base_kernel;
            r.workset_mb = workset_bytes(m.k_in, m.k_out, m.n, m.height, m.width, 1,
                                         static_cast<std::int64_t>(m.cmc_t) * base_kernel) /
                           1e6;
            break;
        }
    }
    r.conv_gmac = r.conv_macs / 1e9;

    const std::int64_t base_trainable =
        m.strategy == Strategy::cmc
            ? static_cast<std::int64_t>(m.cmc_base_t) * base_kernel + m.cmc_base_t
            : base_kernel;
    r.trainable_ratio = static_cast<double>(r.trainable_params) / static_cast<double>(base_trainable);
    r.kernel_ratio = static_cast<double>(r.kernel_params) / static_cast<double>(base_kernel);
    r.conv_macs_ratio = r.conv_macs / base_macs;
    return r;
}

BenchReport bench_forward(const LayerCostModel& m, int repeats, int spatial_override) {
    if (repeats < 1) throw Error("bench_forward: repeats must be positive");
    BenchReport r = model_cost(m);

    LayerCostModel measured = m;
    if (spatial_override > 0) {
        measured.height = spatial_override;
        measured.width = spatial_override;
    }
    const int H = measured.height, W = measured.width;

    Rng rng(42);
    Tensor4<float> input(1, m.k_in, H, W);
    for (float& v : input.data) v = static_cast<float>(rng.uniform());

    std::vector<Kernel<float>> kernels;
    std::vector<std::vector<float>> biases;
    auto add_random_kernel = [&rng](std::vector<Kernel<float>>& ks, int ko, int ki, int n) {
        Kernel<float> k(ko, ki, n);
        for (float& v : k.data) v = static_cast<float>(rng.normal(0.0, 0.05));
        ks.push_back(std::move(k));
    };
    switch (m.strategy) {
        case Strategy::plain:
            add_random_kernel(kernels, m.k_out, m.k_in, m.n);
            break;
        case Strategy::type1:
            add_random_kernel(kernels, m.k_out, m.k_in, m.type1_kernel);
            break;
        case Strategy::type2:
            add_random_kernel(kernels, m.k_out, m.k_in, m.n);
            for (int i = 0; i < m.type2_extra; ++i)
                add_random_kernel(kernels, m.k_out, m.k_out, m.n);
            break;
        case Strategy::cmc: {
            // Pre-materialize through a real layer: frozen-task inference mode.
            CmcLayer<float> layer("bench", m.k_in, m.k_out, m.n, m.cmc_t);
            layer.allocate_mask(1, 1.0 / m.cmc_t, 7);
            layer.init_task(1, true, 8);
            layer.freeze_task(1);
            kernels.push_back(layer.estimate_kernel(1));
            break;
        }
    }
    for (const Kernel<float>& k : kernels) biases.emplace_back(static_cast<std::size_t>(k.k_out), 0.1f);

    auto run_once = [&]() {
        const Tensor4<float>* cur = &input;
        Tensor4<float> out;
        for (std::size_t i = 0; i < kernels.size(); ++i) {
            out = conv2d_forward(*cur, kernels[i],
                                 std::span<const float>(biases[i].data(), biases[i].size()),
                                 ConvBackend::im2col);
            cur = &out;
        }
        return out.data[0];  // defeat dead-code elimination
    };

    volatile float sink = 0.0f;
    sink += run_once();
    sink += run_once();
    std::vector<double> samples;
    samples.reserve(static_cast<std::size_t>(repeats));
    for (int i = 0; i < repeats; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        sink += run_once();
        const auto t1 = std::chrono::steady_clock::now();
        samples.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    (void)sink;
    std::sort(samples.begin(), samples.end());
    const std::size_t n = samples.size();
    r.median_ms = n % 2 == 1 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
    return r;
}

}  // namespace cmc
