// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cmc/errors.hpp"

namespace cmc {

using i64 = std::int64_t;

/// Dense NCHW tensor.
template <typename T>
struct Tensor4 {
    int batch = 0, channels = 0, height = 0, width = 0;
    std::vector<T> data;

    Tensor4() = default;
    Tensor4(int b, int c, int h, int w)
        : batch(b), channels(c), height(h), width(w),
          data(static_cast<std::size_t>(b) * c * h * w, T(0)) {
        if (b < 0 || c < 0 || h < 0 || w < 0) throw ShapeError("Tensor4: negative dimension");
    }

    i64 size() const { return static_cast<i64>(batch) * channels * height * width; }

    T& at(int b, int c, int y, int x) {
        return data[((static_cast<std::size_t>(b) * channels + c) * height + y) * width + x];
    }
    const T& at(int b, int c, int y, int x) const {
        return data[((static_cast<std::size_t>(b) * channels + c) * height + y) * width + x];
    }

    bool same_shape(const Tensor4& o) const {
        return batch == o.batch && channels == o.channels && height == o.height && width == o.width;
    }

    std::string shape_str() const {
        return "(" + std::to_string(batch) + "," + std::to_string(channels) + "," +
               std::to_string(height) + "," + std::to_string(width) + ")";
    }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    bool all_finite() const {
        for (const T& v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }
};

/// Convolution kernel, layout (k_out, k_in, n, n).
template <typename T>
struct Kernel {
    int k_out = 0, k_in = 0, n = 0;
    std::vector<T> data;

    Kernel() = default;
    Kernel(int ko, int ki, int kn)
        : k_out(ko), k_in(ki), n(kn),
          data(static_cast<std::size_t>(ko) * ki * kn * kn, T(0)) {
        if (ko <= 0 || ki <= 0 || kn <= 0) throw ShapeError("Kernel: non-positive dimension");
    }

    i64 size() const { return static_cast<i64>(k_out) * k_in * n * n; }

    T& at(int oc, int ic, int y, int x) {
        return data[((static_cast<std::size_t>(oc) * k_in + ic) * n + y) * n + x];
    }
    const T& at(int oc, int ic, int y, int x) const {
        return data[((static_cast<std::size_t>(oc) * k_in + ic) * n + y) * n + x];
    }
};

template <typename T>
void check_same_shape(const Tensor4<T>& a, const Tensor4<T>& b, const char* who) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(who) + ": shape mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
}

/// y = relu(x), elementwise.
template <typename T>
Tensor4<T> relu(const Tensor4<T>& x) {
    Tensor4<T> y = x;
    for (T& v : y.data) v = v > T(0) ? v : T(0);
    return y;
}

/// dx = dy ⊙ (x > 0).
template <typename T>
Tensor4<T> relu_backward(const Tensor4<T>& x, const Tensor4<T>& dy) {
    check_same_shape(x, dy, "relu_backward");
    Tensor4<T> dx = dy;
    for (i64 i = 0; i < x.size(); ++i)
        if (!(x.data[i] > T(0))) dx.data[i] = T(0);
    return dx;
}

template <typename T>
void add_inplace(Tensor4<T>& a, const Tensor4<T>& b) {
    check_same_shape(a, b, "add_inplace");
    for (i64 i = 0; i < a.size(); ++i) a.data[i] += b.data[i];
}

template <typename T>
void clamp01_inplace(Tensor4<T>& a) {
    for (T& v : a.data) v = std::min(T(1), std::max(T(0), v));
}

template <typename T, typename U>
Tensor4<T> cast_tensor(const Tensor4<U>& x) {
    Tensor4<T> y(x.batch, x.channels, x.height, x.width);
    for (i64 i = 0; i < x.size(); ++i) y.data[i] = static_cast<T>(x.data[i]);
    return y;
}

}  // namespace cmc
