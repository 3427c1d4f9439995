// SPDX-License-Identifier: Apache-2.0
#include "cmc/metrics.hpp"

#include <array>
#include <cmath>

namespace cmc {

template <typename T>
double psnr(const Tensor4<T>& a, const Tensor4<T>& b, double max_val, double cap_db) {
    check_same_shape(a, b, "psnr");
    if (a.size() == 0) throw ShapeError("psnr: empty tensors");
    double acc = 0.0;
    for (i64 i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
        acc += d * d;
    }
    const double mse = acc / static_cast<double>(a.size());
    if (mse <= 0.0) return cap_db;
    const double db = 20.0 * std::log10(max_val) - 10.0 * std::log10(mse);
    return std::min(db, cap_db);
}

namespace {

constexpr int kWin = 11;

std::array<double, kWin> ssim_window() {
    std::array<double, kWin> w{};
    const double sigma = 1.5;
    double sum = 0.0;
    for (int i = 0; i < kWin; ++i) {
        const double d = i - (kWin - 1) / 2.0;
        w[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += w[static_cast<std::size_t>(i)];
    }
    for (double& v : w) v /= sum;
    return w;
}

// Separable valid-mode Gaussian filter of one (H,W) channel given as doubles.
void filter_valid(const std::vector<double>& img, int H, int W,
                  const std::array<double, kWin>& win, std::vector<double>& out) {
    const int vw = W - kWin + 1;
    const int vh = H - kWin + 1;
    std::vector<double> tmp(static_cast<std::size_t>(H) * vw);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < vw; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kWin; ++k)
                acc += win[static_cast<std::size_t>(k)] * img[static_cast<std::size_t>(y) * W + x + k];
            tmp[static_cast<std::size_t>(y) * vw + x] = acc;
        }
    out.assign(static_cast<std::size_t>(vh) * vw, 0.0);
    for (int y = 0; y < vh; ++y)
        for (int x = 0; x < vw; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kWin; ++k)
                acc += win[static_cast<std::size_t>(k)] * tmp[static_cast<std::size_t>(y + k) * vw + x];
            out[static_cast<std::size_t>(y) * vw + x] = acc;
        }
}

}  // namespace

template <typename T>
double ssim(const Tensor4<T>& a, const Tensor4<T>& b) {
    check_same_shape(a, b, "ssim");
    if (a.height < kWin || a.width < kWin)
        throw ShapeError("ssim: images must be at least 11x11");
    static const std::array<double, kWin> win = ssim_window();
    const double c1 = 0.01 * 0.01;
    const double c2 = 0.03 * 0.03;
    const int H = a.height, W = a.width;
    const std::size_t plane = static_cast<std::size_t>(H) * W;

    std::vector<double> x(plane), y(plane), xx(plane), yy(plane), xy(plane);
    std::vector<double> mx, my, mxx, myy, mxy;
    double total = 0.0;
    i64 count = 0;
    for (int bi = 0; bi < a.batch; ++bi)
        for (int c = 0; c < a.channels; ++c) {
            const T* pa = &a.at(bi, c, 0, 0);
            const T* pb = &b.at(bi, c, 0, 0);
            for (std::size_t i = 0; i < plane; ++i) {
                x[i] = static_cast<double>(pa[i]);
                y[i] = static_cast<double>(pb[i]);
                xx[i] = x[i] * x[i];
                yy[i] = y[i] * y[i];
                xy[i] = x[i] * y[i];
            }
            filter_valid(x, H, W, win, mx);
            filter_valid(y, H, W, win, my);
            filter_valid(xx, H, W, win, mxx);
            filter_valid(yy, H, W, win, myy);
            filter_valid(xy, H, W, win, mxy);
            for (std::size_t i = 0; i < mx.size(); ++i) {
                const double vx = mxx[i] - mx[i] * mx[i];
                const double vy = myy[i] - my[i] * my[i];
                const double cxy = mxy[i] - mx[i] * my[i];
                const double num = (2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2);
                const double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2);
                total += num / den;
            }
            count += static_cast<i64>(mx.size());
        }
    return total / static_cast<double>(count);
}

template double psnr(const Tensor4<float>&, const Tensor4<float>&, double, double);
template double psnr(const Tensor4<double>&, const Tensor4<double>&, double, double);
template double ssim(const Tensor4<float>&, const Tensor4<float>&);
template double ssim(const Tensor4<double>&, const Tensor4<double>&);

}  // namespace cmc
