// SPDX-License-Identifier: Apache-2.0
#include "cmc/conv.hpp"

#include <cstring>

namespace cmc {
namespace {

template <typename T>
void check_conv_shapes(const Tensor4<T>& input, const Kernel<T>& kernel,
                       std::span<const T> bias) {
    if (input.channels != kernel.k_in)
        throw ShapeError("conv2d: input has " + std::to_string(input.channels) +
                         " channels but kernel expects " + std::to_string(kernel.k_in));
    if (!bias.empty() && static_cast<int>(bias.size()) != kernel.k_out)
        throw ShapeError("conv2d: bias size " + std::to_string(bias.size()) +
                         " != k_out " + std::to_string(kernel.k_out));
    if (kernel.n > input.height + kernel.n / 2 || kernel.n > input.width + kernel.n / 2)
        throw ShapeError("conv2d: kernel larger than padded input");
}

template <typename T>
void forward_naive(const Tensor4<T>& in, const Kernel<T>& k, std::span<const T> bias,
                   Tensor4<T>& out) {
    const int pad = (k.n - 1) / 2;  // top/left; bottom/right padding is implied by bounds
    for (int b = 0; b < in.batch; ++b)
        for (int oc = 0; oc < k.k_out; ++oc)
            for (int oy = 0; oy < in.height; ++oy)
                for (int ox = 0; ox < in.width; ++ox) {
                    T acc = bias.empty() ? T(0) : bias[oc];
                    for (int ic = 0; ic < k.k_in; ++ic)
                        for (int ky = 0; ky < k.n; ++ky) {
                            const int iy = oy + ky - pad;
                            if (iy < 0 || iy >= in.height) continue;
                            for (int kx = 0; kx < k.n; ++kx) {
                                const int ix = ox + kx - pad;
                                if (ix < 0 || ix >= in.width) continue;
                                acc += in.at(b, ic, iy, ix) * k.at(oc, ic, ky, kx);
                            }
                        }
                    out.at(b, oc, oy, ox) = acc;
                }
}

template <typename T>
void backward_naive(const Tensor4<T>& in, const Kernel<T>& k, const Tensor4<T>& gout,
                    bool need_gin, ConvGrads<T>& g) {
    const int pad = (k.n - 1) / 2;
    for (int b = 0; b < in.batch; ++b)
        for (int oc = 0; oc < k.k_out; ++oc)
            for (int oy = 0; oy < in.height; ++oy)
                for (int ox = 0; ox < in.width; ++ox) {
                    const T go = gout.at(b, oc, oy, ox);
                    g.bias[oc] += go;
                    for (int ic = 0; ic < k.k_in; ++ic)
                        for (int ky = 0; ky < k.n; ++ky) {
                            const int iy = oy + ky - pad;
                            if (iy < 0 || iy >= in.height) continue;
                            for (int kx = 0; kx < k.n; ++kx) {
                                const int ix = ox + kx - pad;
                                if (ix < 0 || ix >= in.width) continue;
                                g.kernel.at(oc, ic, ky, kx) += go * in.at(b, ic, iy, ix);
                                if (need_gin) g.input.at(b, ic, iy, ix) += go * k.at(oc, ic, ky, kx);
                            }
                        }
                }
}

// C(MxN) += A(MxK) * B(KxN), row-major.
template <typename T>
void gemm_nn(int M, int K, int N, const T* a, const T* b, T* c) {
    for (int i = 0; i < M; ++i) {
        const T* arow = a + static_cast<std::size_t>(i) * K;
        T* crow = c + static_cast<std::size_t>(i) * N;
        for (int kk = 0; kk < K; ++kk) {
            const T av = arow[kk];
            const T* brow = b + static_cast<std::size_t>(kk) * N;
            for (int j = 0; j < N; ++j) crow[j] += av * brow[j];
        }
    }
}

// C(MxK) += A(MxN) * B(KxN)^T
template <typename T>
void gemm_nt(int M, int N, int K, const T* a, const T* b, T* c) {
    for (int i = 0; i < M; ++i) {
        const T* arow = a + static_cast<std::size_t>(i) * N;
        T* crow = c + static_cast<std::size_t>(i) * K;
        for (int j = 0; j < K; ++j) {
            const T* brow = b + static_cast<std::size_t>(j) * N;
            T acc = T(0);
            for (int n = 0; n < N; ++n) acc += arow[n] * brow[n];
            crow[j] += acc;
        }
    }
}

// C(KxN) += A(MxK)^T * B(MxN)
template <typename T>
void gemm_tn(int M, int K, int N, const T* a, const T* b, T* c) {
    for (int m = 0; m < M; ++m) {
        const T* arow = a + static_cast<std::size_t>(m) * K;
        const T* brow = b + static_cast<std::size_t>(m) * N;
        for (int i = 0; i < K; ++i) {
            const T av = arow[i];
            T* crow = c + static_cast<std::size_t>(i) * N;
            for (int j = 0; j < N; ++j) crow[j] += av * brow[j];
        }
    }
}

// cols: (k_in*n*n) x (H*W) for one batch element.
template <typename T>
void im2col(const Tensor4<T>& in, int b, int n, std::vector<T>& cols) {
    const int pad = (n - 1) / 2;
    const int H = in.height, W = in.width;
    T* dst = cols.data();
    for (int ic = 0; ic < in.channels; ++ic)
        for (int ky = 0; ky < n; ++ky)
            for (int kx = 0; kx < n; ++kx) {
                for (int oy = 0; oy < H; ++oy) {
                    const int iy = oy + ky - pad;
                    if (iy < 0 || iy >= H) {
                        std::memset(dst, 0, sizeof(T) * W);
                        dst += W;
                        continue;
                    }
                    const T* src = &in.at(b, ic, iy, 0);
                    const int ix0 = kx - pad;
                    for (int ox = 0; ox < W; ++ox) {
                        const int ix = ox + ix0;
                        dst[ox] = (ix >= 0 && ix < W) ? src[ix] : T(0);
                    }
                    dst += W;
                }
            }
}

// Scatter-add of a cols matrix back into the input gradient.
template <typename T>
void col2im_add(const std::vector<T>& cols, int n, Tensor4<T>& gin, int b) {
    const int pad = (n - 1) / 2;
    const int H = gin.height, W = gin.width;
    const T* src = cols.data();
    for (int ic = 0; ic < gin.channels; ++ic)
        for (int ky = 0; ky < n; ++ky)
            for (int kx = 0; kx < n; ++kx) {
                for (int oy = 0; oy < H; ++oy) {
                    const int iy = oy + ky - pad;
                    if (iy < 0 || iy >= H) {
                        src += W;
                        continue;
                    }
                    T* dst = &gin.at(b, ic, iy, 0);
                    const int ix0 = kx - pad;
                    for (int ox = 0; ox < W; ++ox) {
                        const int ix = ox + ix0;
                        if (ix >= 0 && ix < W) dst[ix] += src[ox];
                    }
                    src += W;
                }
            }
}

template <typename T>
void forward_im2col(const Tensor4<T>& in, const Kernel<T>& k, std::span<const T> bias,
                    Tensor4<T>& out) {
    const int HW = in.height * in.width;
    const int K = k.k_in * k.n * k.n;
    std::vector<T> cols(static_cast<std::size_t>(K) * HW);
    for (int b = 0; b < in.batch; ++b) {
        im2col(in, b, k.n, cols);
        T* obase = &out.at(b, 0, 0, 0);
        if (bias.empty()) {
            std::memset(obase, 0, sizeof(T) * static_cast<std::size_t>(k.k_out) * HW);
        } else {
            for (int oc = 0; oc < k.k_out; ++oc)
                std::fill_n(obase + static_cast<std::size_t>(oc) * HW, HW, bias[oc]);
        }
        gemm_nn(k.k_out, K, HW, k.data.data(), cols.data(), obase);
    }
}

template <typename T>
void backward_im2col(const Tensor4<T>& in, const Kernel<T>& k, const Tensor4<T>& gout,
                     bool need_gin, ConvGrads<T>& g) {
    const int HW = in.height * in.width;
    const int K = k.k_in * k.n * k.n;
    std::vector<T> cols(static_cast<std::size_t>(K) * HW);
    std::vector<T> gcols(need_gin ? cols.size() : 0);
    for (int b = 0; b < in.batch; ++b) {
        im2col(in, b, k.n, cols);
        const T* gbase = &gout.at(b, 0, 0, 0);
        // grad_kernel += gout_b (k_out x HW) * cols^T
        gemm_nt(k.k_out, HW, K, gbase, cols.data(), g.kernel.data.data());
        for (int oc = 0; oc < k.k_out; ++oc) {
            const T* grow = gbase + static_cast<std::size_t>(oc) * HW;
            T acc = T(0);
            for (int i = 0; i < HW; ++i) acc += grow[i];
            g.bias[oc] += acc;
        }
        if (need_gin) {
            std::fill(gcols.begin(), gcols.end(), T(0));
            gemm_tn(k.k_out, K, HW, k.data.data(), gbase, gcols.data());
            col2im_add(gcols, k.n, g.input, b);
        }
    }
}

}  // namespace

template <typename T>
Tensor4<T> conv2d_forward(const Tensor4<T>& input, const Kernel<T>& kernel,
                          std::span<const T> bias, ConvBackend backend) {
    check_conv_shapes(input, kernel, bias);
    Tensor4<T> out(input.batch, kernel.k_out, input.height, input.width);
    if (backend == ConvBackend::naive)
        forward_naive(input, kernel, bias, out);
    else
        forward_im2col(input, kernel, bias, out);
    return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor4<T>& input, const Kernel<T>& kernel,
                             const Tensor4<T>& grad_output, bool need_grad_input,
                             ConvBackend backend) {
    check_conv_shapes(input, kernel, std::span<const T>{});
    if (grad_output.batch != input.batch || grad_output.channels != kernel.k_out ||
        grad_output.height != input.height || grad_output.width != input.width)
        throw ShapeError("conv2d_backward: grad_output shape " + grad_output.shape_str() +
                         " inconsistent with forward output");
    ConvGrads<T> g;
    if (need_grad_input) g.input = Tensor4<T>(input.batch, input.channels, input.height, input.width);
    g.kernel = Kernel<T>(kernel.k_out, kernel.k_in, kernel.n);
    g.bias.assign(kernel.k_out, T(0));
    if (backend == ConvBackend::naive)
        backward_naive(input, kernel, grad_output, need_grad_input, g);
    else
        backward_im2col(input, kernel, grad_output, need_grad_input, g);
    return g;
}

template Tensor4<float> conv2d_forward(const Tensor4<float>&, const Kernel<float>&,
                                       std::span<const float>, ConvBackend);
template Tensor4<double> conv2d_forward(const Tensor4<double>&, const Kernel<double>&,
                                        std::span<const double>, ConvBackend);
template ConvGrads<float> conv2d_backward(const Tensor4<float>&, const Kernel<float>&,
                                          const Tensor4<float>&, bool, ConvBackend);
template ConvGrads<double> conv2d_backward(const Tensor4<double>&, const Kernel<double>&,
                                           const Tensor4<double>&, bool, ConvBackend);

}  // namespace cmc
