// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cmc/conv.hpp"
#include "cmc/mask.hpp"
#include "cmc/tensor.hpp"

namespace cmc {

/// Task-specific weight vector; one per (layer, task), fixed once its task freezes.
template <typename T>
struct TaskVector {
    int task_id = 0;
    std::vector<T> values;  // length = layer capacity t (zero-padded on expansion)
};

/// A convolution layer whose kernel is estimated, not stored: a shared (t x m)
/// memory matrix holds every task's weights behind disjoint binary masks, and
/// the kernel for task n is the masked linear combination
///     K_n = sum_{i<=n} T_i * (M ⊙ H_i)
/// reshaped to (k_out, k_in, n, n). Earlier tasks' contributions are frozen;
/// only task n's vector, masked memory entries, and bias receive gradients.
///
/// Frozen state is immutable and safe to read concurrently; the active task's
/// parameters are single-owner during training.
template <typename T>
class CmcLayer {
public:
    /// `init_scale` multiplies the initialization std of masked memory values;
    /// 1.0 targets fan-in variance 2/(k_in*n^2) for the composed kernel.
    /// Residual-tail layers pass a damped scale so a fresh network starts
    /// close to the identity map.
    CmcLayer(std::string name, int k_in, int k_out, int n, int t, double init_scale = 1.0);

    // -- geometry / bookkeeping ------------------------------------------
    const std::string& name() const { return name_; }
    int k_in() const { return k_in_; }
    int k_out() const { return k_out_; }
    int kernel_size() const { return n_; }
    int capacity() const { return t_; }
    i64 kernel_params() const { return m_; }          // m = k_in*k_out*n*n
    int frozen_through() const { return frozen_through_; }
    int task_count() const { return static_cast<int>(vectors_.size()); }
    bool has_active_task() const { return task_count() > frozen_through_; }
    i64 free_count() const;                            // t*m - sum of popcounts
    i64 trainable_params() const;                      // t*m + per-task vectors/biases

    // -- task lifecycle ---------------------------------------------------
    /// Sample a mask of round(fraction * t * m) entries uniformly at random
    /// from the still-free entries, and draw initial values for them.
    /// Throws CapacityExhausted when not enough entries are free.
    const TaskMask& allocate_mask(int task_id, double fraction, std::uint64_t seed);

    /// Create the task vector and bias, record the knowledge-sharing flag,
    /// and cache the frozen kernel contribution for the task.
    void init_task(int task_id, bool knowledge_sharing, std::uint64_t seed);

    void freeze_task(int task_id);

    /// Grow the memory by extra_rows. All existing masks and vectors are
    /// zero-padded so every previously estimated kernel is unchanged bit for
    /// bit. Only allowed between tasks.
    void expand_capacity(int extra_rows);

    // -- kernel estimation / inference -------------------------------------
    Kernel<T> estimate_kernel(int task_id) const;
    Tensor4<T> forward(const Tensor4<T>& input, int task_id,
                       ConvBackend backend = ConvBackend::im2col) const;
    std::span<const T> bias(int task_id) const;
    bool knowledge_sharing(int task_id) const;
    const TaskMask& mask(int task_id) const;
    const TaskVector<T>& task_vector(int task_id) const;

    // -- active-task training surface --------------------------------------
    /// Flat parameter layout: [ T_n (t) | masked M entries (ascending bit) | bias (k_out) ].
    i64 active_param_count() const;
    void gather_active_params(std::span<T> out) const;
    void scatter_active_params(std::span<const T> in);

    /// Map a gradient w.r.t. the materialized kernel (plus bias gradient) into
    /// the flat active-parameter layout. Frozen vectors and memory regions
    /// outside the active mask get no gradient by construction.
    void backward_masked(const Kernel<T>& grad_kernel, std::span<const T> grad_bias,
                         std::span<T> grad_params) const;

    /// Frozen-contribution cache for the active task (flattened, length m).
    const std::vector<T>& cached_old_kernel() const;
    /// Recompute the frozen contribution and compare bit-exactly to the cache.
    bool verify_cached_old() const;

    // -- persistence --------------------------------------------------------
    struct Snapshot {
        int k_in = 0, k_out = 0, n = 0, t = 0;
        std::vector<T> memory;
        std::vector<TaskMask> masks;
        std::vector<TaskVector<T>> vectors;
        std::vector<std::vector<T>> biases;
        std::vector<std::uint8_t> sharing;
        int frozen_through = 0;
    };
    Snapshot snapshot() const;
    static CmcLayer<T> from_snapshot(std::string name, Snapshot s, double init_scale = 1.0);

    double init_scale() const { return init_scale_; }
    const std::vector<T>& memory() const { return memory_; }

private:
    void check_known_task(int task_id, const char* who) const;
    // acc[j] += T_i[r] * M[r,j] over the set bits of task i's mask.
    void accumulate_term(std::vector<T>& acc, int task_index) const;
    std::vector<T> frozen_contribution(int task_id, bool sharing) const;
    void rebuild_active_bits();

    std::string name_;
    int k_in_, k_out_, n_, t_;
    double init_scale_;
    i64 m_;
    std::vector<T> memory_;            // t x m row-major; unmasked entries stay zero
    std::vector<TaskMask> masks_;      // index task_id-1
    std::vector<TaskVector<T>> vectors_;
    std::vector<std::vector<T>> biases_;
    std::vector<std::uint8_t> sharing_;
    int frozen_through_ = 0;

    // active-task scratch
    std::vector<i64> active_bits_;     // sorted set-bit indices of the active mask
    std::vector<T> cached_old_;        // frozen kernel contribution, length m
    bool cache_valid_ = false;
};

}  // namespace cmc
