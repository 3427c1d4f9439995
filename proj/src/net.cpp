// SPDX-License-Identifier: Apache-2.0
#include "cmc/net.hpp"

#include "cmc/rng.hpp"

namespace cmc {

namespace {
constexpr std::uint64_t kSeedPurposeMask = 101;
constexpr std::uint64_t kSeedPurposeInit = 102;

// Damped initialization for the convs that feed a skip connection, so a fresh
// network starts near the identity map instead of adding a high-variance
// random perturbation the optimizer first has to unlearn.
constexpr double kResidualInitScale = 0.1;
constexpr double kTailInitScale = 0.03;
}  // namespace

template <typename T>
RestorationNet<T>::RestorationNet(const NetGeometry& geo) : geo_(geo) {
    if (geo.channels <= 0 || geo.blocks < 0 || geo.kernel <= 0 || geo.capacity <= 0)
        throw ShapeError("RestorationNet: invalid geometry");
    layers_.emplace_back("head", geo.img_channels, geo.channels, geo.kernel, geo.head_tail_t());
    for (int b = 0; b < geo.blocks; ++b) {
        const std::string prefix = "block" + std::to_string(b + 1);
        layers_.emplace_back(prefix + ".conv1", geo.channels, geo.channels, geo.kernel,
                             geo.capacity);
        layers_.emplace_back(prefix + ".conv2", geo.channels, geo.channels, geo.kernel,
                             geo.capacity, kResidualInitScale);
    }
    layers_.emplace_back("tail", geo.channels, geo.img_channels, geo.kernel, geo.head_tail_t(),
                         geo.global_skip ? kTailInitScale : 1.0);
}

template <typename T>
void RestorationNet<T>::allocate_task(int task_id,
                                      const std::function<double(const std::string&)>& fraction_for,
                                      bool knowledge_sharing, std::uint64_t seed) {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        CmcLayer<T>& layer = layers_[i];
        const double fraction = fraction_for(layer.name());
        layer.allocate_mask(task_id, fraction,
                            derive_seed(seed, kSeedPurposeMask, i, static_cast<std::uint64_t>(task_id)));
        layer.init_task(task_id, knowledge_sharing,
                        derive_seed(seed, kSeedPurposeInit, i, static_cast<std::uint64_t>(task_id)));
    }
}

template <typename T>
void RestorationNet<T>::freeze_task(int task_id) {
    for (CmcLayer<T>& layer : layers_) layer.freeze_task(task_id);
}

template <typename T>
Tensor4<T> RestorationNet<T>::forward(const Tensor4<T>& x, int task_id, ConvBackend be) const {
    Trace trace;
    return forward_train(x, task_id, trace, be);
}

template <typename T>
Tensor4<T> RestorationNet<T>::forward_train(const Tensor4<T>& x, int task_id, Trace& trace,
                                            ConvBackend be) const {
    trace.task_id = task_id;
    trace.kernels.clear();
    trace.kernels.reserve(layers_.size());
    for (const CmcLayer<T>& layer : layers_) trace.kernels.push_back(layer.estimate_kernel(task_id));

    trace.input = x;
    std::size_t li = 0;
    Tensor4<T> f = conv2d_forward(x, trace.kernels[li], layers_[li].bias(task_id), be);
    trace.head_out = f;
    ++li;

    trace.block_in.clear();
    trace.pre_act.clear();
    trace.act.clear();
    for (int b = 0; b < geo_.blocks; ++b) {
        trace.block_in.push_back(f);
        Tensor4<T> z1 = conv2d_forward(f, trace.kernels[li], layers_[li].bias(task_id), be);
        ++li;
        trace.pre_act.push_back(z1);
        Tensor4<T> a1 = relu(z1);
        trace.act.push_back(a1);
        Tensor4<T> z2 = conv2d_forward(a1, trace.kernels[li], layers_[li].bias(task_id), be);
        ++li;
        add_inplace(z2, f);  // block skip
        f = std::move(z2);
    }
    trace.features = f;
    Tensor4<T> y = conv2d_forward(f, trace.kernels[li], layers_[li].bias(task_id), be);
    if (geo_.global_skip) add_inplace(y, x);
    return y;
}

template <typename T>
void RestorationNet<T>::backward(const Tensor4<T>& grad_output, const Trace& trace,
                                 std::span<T> grad_params, ConvBackend be) const {
    if (static_cast<i64>(grad_params.size()) != active_param_count())
        throw ShapeError("RestorationNet::backward: gradient buffer size mismatch");

    // Per-layer slices of the flat gradient, in layer order.
    std::vector<std::span<T>> slices;
    slices.reserve(layers_.size());
    std::size_t off = 0;
    for (const CmcLayer<T>& layer : layers_) {
        const std::size_t n = static_cast<std::size_t>(layer.active_param_count());
        slices.push_back(grad_params.subspan(off, n));
        off += n;
    }

    std::size_t li = layers_.size() - 1;
    ConvGrads<T> g = conv2d_backward(trace.features, trace.kernels[li], grad_output, true, be);
    layers_[li].backward_masked(g.kernel, {g.bias.data(), g.bias.size()}, slices[li]);
    Tensor4<T> gf = std::move(g.input);

    for (int b = geo_.blocks - 1; b >= 0; --b) {
        // block: f_out = f_in + conv2(relu(conv1(f_in)))
        --li;
        ConvGrads<T> g2 = conv2d_backward(trace.act[static_cast<std::size_t>(b)],
                                          trace.kernels[li], gf, true, be);
        layers_[li].backward_masked(g2.kernel, {g2.bias.data(), g2.bias.size()}, slices[li]);
        Tensor4<T> gz1 = relu_backward(trace.pre_act[static_cast<std::size_t>(b)], g2.input);
        --li;
        ConvGrads<T> g1 = conv2d_backward(trace.block_in[static_cast<std::size_t>(b)],
                                          trace.kernels[li], gz1, true, be);
        layers_[li].backward_masked(g1.kernel, {g1.bias.data(), g1.bias.size()}, slices[li]);
        add_inplace(gf, g1.input);  // skip path carries the incoming gradient through
    }

    // Head: input gradient is never consumed.
    ConvGrads<T> gh = conv2d_backward(trace.input, trace.kernels[0], gf, false, be);
    layers_[0].backward_masked(gh.kernel, {gh.bias.data(), gh.bias.size()}, slices[0]);
}

template <typename T>
i64 RestorationNet<T>::active_param_count() const {
    i64 n = 0;
    for (const CmcLayer<T>& layer : layers_) n += layer.active_param_count();
    return n;
}

template <typename T>
void RestorationNet<T>::gather_active_params(std::span<T> out) const {
    std::size_t off = 0;
    for (const CmcLayer<T>& layer : layers_) {
        const std::size_t n = static_cast<std::size_t>(layer.active_param_count());
        layer.gather_active_params(out.subspan(off, n));
        off += n;
    }
}

template <typename T>
void RestorationNet<T>::scatter_active_params(std::span<const T> in) {
    std::size_t off = 0;
    for (CmcLayer<T>& layer : layers_) {
        const std::size_t n = static_cast<std::size_t>(layer.active_param_count());
        layer.scatter_active_params(in.subspan(off, n));
        off += n;
    }
}

template <typename T>
i64 RestorationNet<T>::trainable_params() const {
    i64 n = 0;
    for (const CmcLayer<T>& layer : layers_) n += layer.trainable_params();
    return n;
}

template class RestorationNet<float>;
template class RestorationNet<double>;

}  // namespace cmc
