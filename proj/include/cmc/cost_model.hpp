// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cmc/tensor.hpp"

namespace cmc {

/// Growth strategies compared by the complexity benchmark:
///   plain  - the base convolution layer
///   type1  - enlarge the kernel spatial size (params and per-pixel MACs grow)
///   type2  - stack extra layers (params and MACs grow linearly)
///   cmc    - widen the memory capacity t (params grow, conv MACs unchanged)
enum class Strategy { plain, type1, type2, cmc };

const char* strategy_name(Strategy s);

struct LayerCostModel {
    int k_in = 64, k_out = 64, n = 3;
    int height = 1000, width = 1000;
    Strategy strategy = Strategy::plain;
    int type1_kernel = 6;   // enlarged kernel size (4 and 6 in the reference table)
    int type2_extra = 1;    // extra stacked layers
    int cmc_t = 5;
    int cmc_base_t = 5;     // the CMC variant is ratioed against this capacity
};

struct BenchReport {
    std::string label;
    std::int64_t trainable_params = 0;
    std::int64_t kernel_params = 0;
    double trainable_ratio = 1.0;   // vs the strategy's base configuration
    double kernel_ratio = 1.0;
    double conv_macs = 0.0;         // multiply-accumulates per forward pass
    double conv_gmac = 0.0;
    double conv_macs_ratio = 1.0;
    double estimation_macs = 0.0;   // kernel estimation, once per weight update (CMC)
    double workset_mb = 0.0;        // activations + kernel + memory matrix, float32
    double median_ms = -1.0;        // filled by bench_forward
};

/// Closed-form cost accounting. Conv MACs = k_out*k_in*n^2*H*W; the CMC
/// kernel-estimation term is t*m and independent of the spatial size.
BenchReport model_cost(const LayerCostModel& m);

/// Measured single-thread forward timings: `repeats` runs after warmup,
/// median wall time. The CMC path materializes its kernel once up front
/// (frozen-task inference mode) so the timed region is the convolution only.
/// `spatial_override` (>0) shrinks H and W for desk-scale measurement.
BenchReport bench_forward(const LayerCostModel& m, int repeats, int spatial_override = -1);

}  // namespace cmc
