// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "cmc/tensor.hpp"

namespace cmc {

/// PSNR in dB on [0, max_val] images: 20*log10(max) - 10*log10(mse).
/// A zero-MSE pair reports the cap (100 dB by default) instead of infinity.
template <typename T>
double psnr(const Tensor4<T>& a, const Tensor4<T>& b, double max_val = 1.0,
            double cap_db = 100.0);

/// Mean SSIM with the standard 11x11 Gaussian window (sigma 1.5), K1=0.01,
/// K2=0.03, dynamic range 1. Valid-region filtering; needs H,W >= 11.
template <typename T>
double ssim(const Tensor4<T>& a, const Tensor4<T>& b);

}  // namespace cmc
