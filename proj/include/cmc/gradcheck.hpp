// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

namespace cmc {

/// Central-difference gradient check, float64 only.
/// Returns max over coordinates of
///   |analytic - central| / (|analytic| + |central| + eps).
inline double finite_diff_check(const std::function<double(std::span<const double>)>& f,
                                std::span<const double> point,
                                std::span<const double> analytic_grad,
                                double step = 1e-5, double eps = 1e-12) {
    std::vector<double> x(point.begin(), point.end());
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + step;
        const double fp = f(x);
        x[i] = saved - step;
        const double fm = f(x);
        x[i] = saved;
        const double central = (fp - fm) / (2.0 * step);
        const double a = analytic_grad[i];
        const double err = std::abs(a - central) / (std::abs(a) + std::abs(central) + eps);
        if (err > worst) worst = err;
    }
    return worst;
}

}  // namespace cmc
