// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cmc/errors.hpp"

namespace cmc {

template <typename T>
struct AdamState {
    std::vector<T> m;  // first moment
    std::vector<T> v;  // second moment
    std::int64_t step = 0;
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T epsilon = T(1e-8);

    explicit AdamState(std::size_t n = 0, T b1 = T(0.9), T b2 = T(0.999), T eps = T(1e-8))
        : m(n, T(0)), v(n, T(0)), beta1(b1), beta2(b2), epsilon(eps) {}
};

/// One Adam update with bias correction. Rejects non-finite gradients so a
/// diverging run stops with a diagnostic instead of poisoning the state.
template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState<T>& state, T lr) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw ShapeError("adam_step: size mismatch (params " + std::to_string(params.size()) +
                         ", grads " + std::to_string(grads.size()) + ", state " +
                         std::to_string(state.m.size()) + ")");
    if (!(lr > T(0))) throw Error("adam_step: lr must be positive");
    for (std::size_t i = 0; i < grads.size(); ++i)
        if (!std::isfinite(static_cast<double>(grads[i])))
            throw NumericError("adam_step: non-finite gradient at index " + std::to_string(i));

    state.step += 1;
    const T c1 = T(1) - static_cast<T>(std::pow(static_cast<double>(state.beta1),
                                                static_cast<double>(state.step)));
    const T c2 = T(1) - static_cast<T>(std::pow(static_cast<double>(state.beta2),
                                                static_cast<double>(state.step)));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const T g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (T(1) - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (T(1) - state.beta2) * g * g;
        const T mhat = state.m[i] / c1;
        const T vhat = state.v[i] / c2;
        params[i] -= lr * mhat / (static_cast<T>(std::sqrt(static_cast<double>(vhat))) +
                                  state.epsilon);
    }
}

}  // namespace cmc
