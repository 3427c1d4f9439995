// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "cmc/tensor.hpp"

namespace cmc {

/// Mean squared error over all elements. If `grad` is non-null it receives
/// d(loss)/d(prediction) = 2*(pred - target)/N.
template <typename T>
double mse_loss(const Tensor4<T>& prediction, const Tensor4<T>& target,
                Tensor4<T>* grad = nullptr) {
    check_same_shape(prediction, target, "mse_loss");
    const i64 n = prediction.size();
    if (n == 0) throw ShapeError("mse_loss: empty tensors");
    double acc = 0.0;
    for (i64 i = 0; i < n; ++i) {
        const double d = static_cast<double>(prediction.data[i]) -
                         static_cast<double>(target.data[i]);
        acc += d * d;
    }
    if (grad) {
        *grad = Tensor4<T>(prediction.batch, prediction.channels, prediction.height,
                           prediction.width);
        const T scale = T(2) / static_cast<T>(n);
        for (i64 i = 0; i < n; ++i)
            grad->data[i] = scale * (prediction.data[i] - target.data[i]);
    }
    return acc / static_cast<double>(n);
}

}  // namespace cmc
