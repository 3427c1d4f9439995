// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "cmc/tensor.hpp"

namespace cmc {

/// `naive` is the reference implementation (direct loops); `im2col` is the
/// fast path used for training and benchmarks. Both compute stride-1
/// cross-correlation with "same" zero padding. Even kernel sizes get
/// asymmetric padding (top/left = (n-1)/2, bottom/right = n/2) and exist for
/// the cost benchmarks only.
enum class ConvBackend { naive, im2col };

template <typename T>
struct ConvGrads {
    Tensor4<T> input;       // empty when grad_input was not requested
    Kernel<T> kernel;
    std::vector<T> bias;
};

template <typename T>
Tensor4<T> conv2d_forward(const Tensor4<T>& input, const Kernel<T>& kernel,
                          std::span<const T> bias,
                          ConvBackend backend = ConvBackend::im2col);

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor4<T>& input, const Kernel<T>& kernel,
                             const Tensor4<T>& grad_output, bool need_grad_input = true,
                             ConvBackend backend = ConvBackend::im2col);

}  // namespace cmc
