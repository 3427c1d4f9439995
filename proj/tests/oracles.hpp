// SPDX-License-Identifier: Apache-2.0
//
// Test-only reference implementations, kept structurally independent of the
// library code paths they check.
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "cmc/cmc_layer.hpp"
#include "cmc/rng.hpp"
#include "cmc/tensor.hpp"

namespace oracle {

/// Direct convolution against an explicitly materialized zero-padded buffer;
/// loop nesting differs from the library's naive path on purpose.
template <typename T>
cmc::Tensor4<T> conv2d(const cmc::Tensor4<T>& in, const cmc::Kernel<T>& k,
                       const std::vector<T>& bias) {
    const int pad_lo = (k.n - 1) / 2;
    const int ph = in.height + k.n - 1;
    const int pw = in.width + k.n - 1;
    cmc::Tensor4<T> padded(in.batch, in.channels, ph, pw);
    for (int b = 0; b < in.batch; ++b)
        for (int c = 0; c < in.channels; ++c)
            for (int y = 0; y < in.height; ++y)
                for (int x = 0; x < in.width; ++x)
                    padded.at(b, c, y + pad_lo, x + pad_lo) = in.at(b, c, y, x);

    cmc::Tensor4<T> out(in.batch, k.k_out, in.height, in.width);
    for (int b = 0; b < in.batch; ++b)
        for (int oc = 0; oc < k.k_out; ++oc)
            for (int ic = 0; ic < k.k_in; ++ic)
                for (int ky = 0; ky < k.n; ++ky)
                    for (int kx = 0; kx < k.n; ++kx) {
                        const T w = k.at(oc, ic, ky, kx);
                        for (int y = 0; y < in.height; ++y)
                            for (int x = 0; x < in.width; ++x)
                                out.at(b, oc, y, x) += w * padded.at(b, ic, y + ky, x + kx);
                    }
    if (!bias.empty())
        for (int b = 0; b < in.batch; ++b)
            for (int oc = 0; oc < k.k_out; ++oc)
                for (int y = 0; y < in.height; ++y)
                    for (int x = 0; x < in.width; ++x) out.at(b, oc, y, x) += bias[oc];
    return out;
}

/// Multiply-accumulate count of a direct same-padded convolution (taps that
/// fall outside the input still count, as in the closed-form model).
inline std::int64_t conv2d_mac_count(int batch, int k_in, int k_out, int n, int H, int W) {
    std::int64_t macs = 0;
    for (int b = 0; b < batch; ++b)
        for (int oc = 0; oc < k_out; ++oc)
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x)
                    for (int ic = 0; ic < k_in; ++ic)
                        for (int ky = 0; ky < n; ++ky)
                            for (int kx = 0; kx < n; ++kx) macs += 1;
    return macs;
}

/// Dense-matrix kernel estimation: K = sum_i T_i * (M ⊙ H_i) with explicit
/// 0/1 mask matrices. Summation runs tasks ascending, rows ascending, which is
/// the order the formula defines.
template <typename T>
std::vector<T> estimate_kernel_dense(const cmc::CmcLayer<T>& layer, int task_id) {
    const int t = layer.capacity();
    const cmc::i64 m = layer.kernel_params();
    const std::vector<T>& mem = layer.memory();
    std::vector<T> acc(static_cast<std::size_t>(m), T(0));
    const int first = layer.knowledge_sharing(task_id) ? 1 : task_id;
    for (int i = first; i <= task_id; ++i) {
        const cmc::TaskMask& mask = layer.mask(i);
        const std::vector<T>& vec = layer.task_vector(i).values;
        for (int r = 0; r < t; ++r)
            for (cmc::i64 j = 0; j < m; ++j) {
                const T h = mask.bits.test(static_cast<cmc::i64>(r) * m + j) ? T(1) : T(0);
                acc[static_cast<std::size_t>(j)] +=
                    vec[static_cast<std::size_t>(r)] *
                    (mem[static_cast<std::size_t>(static_cast<cmc::i64>(r) * m + j)] * h);
            }
    }
    return acc;
}

/// Second, independently coded PSNR (long double accumulation, the
/// 10*log10(max^2 / mse) form).
template <typename T>
double psnr_reference(const cmc::Tensor4<T>& a, const cmc::Tensor4<T>& b, double max_val = 1.0) {
    long double acc = 0.0L;
    for (cmc::i64 i = 0; i < a.size(); ++i) {
        const long double d =
            static_cast<long double>(a.data[i]) - static_cast<long double>(b.data[i]);
        acc += d * d;
    }
    const long double mse = acc / static_cast<long double>(a.size());
    if (mse <= 0.0L) return 100.0;
    return static_cast<double>(10.0L * std::log10(static_cast<long double>(max_val) *
                                                  max_val / mse));
}

template <typename T>
void fill_uniform(cmc::Tensor4<T>& t, cmc::Rng& rng, double lo = 0.0, double hi = 1.0) {
    for (T& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
}

template <typename T>
void fill_normal(cmc::Tensor4<T>& t, cmc::Rng& rng, double mean = 0.0, double sd = 1.0) {
    for (T& v : t.data) v = static_cast<T>(rng.normal(mean, sd));
}

template <typename T>
void fill_normal_kernel(cmc::Kernel<T>& k, cmc::Rng& rng, double sd = 0.5) {
    for (T& v : k.data) v = static_cast<T>(rng.normal(0.0, sd));
}

template <typename T>
double max_rel_diff(const std::vector<T>& a, const std::vector<T>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = static_cast<double>(a[i]), db = static_cast<double>(b[i]);
        const double denom = std::max(1.0, std::max(std::abs(da), std::abs(db)));
        worst = std::max(worst, std::abs(da - db) / denom);
    }
    return worst;
}

}  // namespace oracle
