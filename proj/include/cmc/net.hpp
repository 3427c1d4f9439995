// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cmc/cmc_layer.hpp"

namespace cmc {

struct NetGeometry {
    int img_channels = 3;
    int channels = 8;       // feature width C
    int blocks = 2;         // residual blocks B
    int kernel = 3;         // conv size n
    int capacity = 5;       // CMC rows t for block convs
    int first_last_capacity = -1;  // t for head/tail convs; -1 means same as capacity
    bool global_skip = true;

    int head_tail_t() const { return first_last_capacity > 0 ? first_last_capacity : capacity; }
};

/// Residual restoration network built entirely from CmcLayers:
/// head conv (3->C), B blocks of [conv -> relu -> conv] with a skip, tail
/// conv (C->3), plus an optional global input->output skip.
template <typename T>
class RestorationNet {
public:
    explicit RestorationNet(const NetGeometry& geo);

    const NetGeometry& geometry() const { return geo_; }
    int layer_count() const { return static_cast<int>(layers_.size()); }
    CmcLayer<T>& layer(int i) { return layers_[static_cast<std::size_t>(i)]; }
    const CmcLayer<T>& layer(int i) const { return layers_[static_cast<std::size_t>(i)]; }
    int frozen_through() const { return layers_.front().frozen_through(); }

    /// Allocate masks and task state in every layer. `fraction_for` maps a
    /// layer name to its mask fraction (per-layer overrides).
    void allocate_task(int task_id, const std::function<double(const std::string&)>& fraction_for,
                       bool knowledge_sharing, std::uint64_t seed);
    void freeze_task(int task_id);

    /// Inference/eval path; same code path training uses, so frozen-task
    /// outputs are reproduced bit for bit.
    Tensor4<T> forward(const Tensor4<T>& x, int task_id,
                       ConvBackend backend = ConvBackend::im2col) const;

    /// Training forward that retains what backward needs.
    struct Trace {
        int task_id = 0;
        std::vector<Kernel<T>> kernels;     // per layer, materialized once
        Tensor4<T> input;
        Tensor4<T> head_out;
        std::vector<Tensor4<T>> block_in;   // features entering each block
        std::vector<Tensor4<T>> pre_act;    // first conv output per block
        std::vector<Tensor4<T>> act;        // relu output per block
        Tensor4<T> features;                // features entering the tail conv
    };
    Tensor4<T> forward_train(const Tensor4<T>& x, int task_id, Trace& trace,
                             ConvBackend backend = ConvBackend::im2col) const;

    /// Backprop from d(loss)/d(output) into the flat active-parameter gradient
    /// (layers concatenated in order). Gradients exist only for the active
    /// task's vector, masked memory entries, and bias in each layer.
    void backward(const Tensor4<T>& grad_output, const Trace& trace, std::span<T> grad_params,
                  ConvBackend backend = ConvBackend::im2col) const;

    i64 active_param_count() const;
    void gather_active_params(std::span<T> out) const;
    void scatter_active_params(std::span<const T> in);

    i64 trainable_params() const;

private:
    NetGeometry geo_;
    std::vector<CmcLayer<T>> layers_;  // [head, b0.conv1, b0.conv2, ..., tail]
};

}  // namespace cmc
