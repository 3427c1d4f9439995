// SPDX-License-Identifier: Apache-2.0
#include "cmc/cmc_layer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "cmc/rng.hpp"

namespace cmc {

namespace {
// New-term init damping for tasks that build on a frozen contribution.
constexpr double kContinuationInitScale = 0.1;
}  // namespace

template <typename T>
CmcLayer<T>::CmcLayer(std::string name, int k_in, int k_out, int n, int t, double init_scale)
    : name_(std::move(name)), k_in_(k_in), k_out_(k_out), n_(n), t_(t),
      init_scale_(init_scale), m_(static_cast<i64>(k_in) * k_out * n * n),
      memory_(static_cast<std::size_t>(t) * m_, T(0)) {
    if (k_in <= 0 || k_out <= 0 || n <= 0 || t <= 0)
        throw ShapeError("CmcLayer '" + name_ + "': non-positive geometry");
    if (n % 2 == 0)
        throw ShapeError("CmcLayer '" + name_ + "': kernel size must be odd for training layers");
}

template <typename T>
i64 CmcLayer<T>::free_count() const {
    i64 used = 0;
    for (const TaskMask& m : masks_) used += m.bits.popcount();
    return static_cast<i64>(t_) * m_ - used;
}

template <typename T>
i64 CmcLayer<T>::trainable_params() const {
    i64 p = static_cast<i64>(t_) * m_;
    for (const auto& v : vectors_) p += static_cast<i64>(v.values.size());
    for (const auto& b : biases_) p += static_cast<i64>(b.size());
    return p;
}

template <typename T>
const TaskMask& CmcLayer<T>::allocate_mask(int task_id, double fraction, std::uint64_t seed) {
    if (task_id != frozen_through_ + 1 || task_id != static_cast<int>(masks_.size()) + 1)
        throw ProtocolError("CmcLayer '" + name_ + "': allocate_mask for task " +
                            std::to_string(task_id) + " out of order (next task is " +
                            std::to_string(static_cast<int>(masks_.size()) + 1) + ")");
    if (!(fraction > 0.0) || fraction > 1.0)
        throw Error("CmcLayer '" + name_ + "': mask fraction must be in (0,1], got " +
                    std::to_string(fraction));

    const i64 total = static_cast<i64>(t_) * m_;
    const i64 requested = static_cast<i64>(std::nearbyint(fraction * static_cast<double>(total)));
    if (requested < 1)
        throw Error("CmcLayer '" + name_ + "': fraction " + std::to_string(fraction) +
                    " rounds to an empty mask (t*m = " + std::to_string(total) + ")");
    const i64 free = free_count();
    if (requested > free) throw CapacityExhausted(name_, requested, free);

    // Union of prior masks; sample uniformly without replacement from its complement.
    MaskBits used(total);
    for (const TaskMask& m : masks_) used.or_with(m.bits);
    std::vector<i64> free_idx;
    free_idx.reserve(static_cast<std::size_t>(free));
    for (i64 i = 0; i < total; ++i)
        if (!used.test(i)) free_idx.push_back(i);

    Rng rng(seed);
    TaskMask mask;
    mask.task_id = task_id;
    mask.fraction = fraction;
    mask.bits = MaskBits(total);
    for (i64 k = 0; k < requested; ++k) {
        const i64 pick = rng.uniform_int(k, static_cast<i64>(free_idx.size()) - 1);
        std::swap(free_idx[static_cast<std::size_t>(k)], free_idx[static_cast<std::size_t>(pick)]);
        mask.bits.set(free_idx[static_cast<std::size_t>(k)]);
    }
    masks_.push_back(std::move(mask));
    return masks_.back();
}

template <typename T>
void CmcLayer<T>::init_task(int task_id, bool knowledge_sharing, std::uint64_t seed) {
    if (task_id != static_cast<int>(masks_.size()) || task_id != task_count() + 1 ||
        task_id != frozen_through_ + 1)
        throw ProtocolError("CmcLayer '" + name_ + "': init_task(" + std::to_string(task_id) +
                            ") requires a freshly allocated mask for the next task");

    Rng rng(seed);
    const double fraction = masks_.back().fraction;
    const double mu_t = 1.0 / (fraction * static_cast<double>(t_));
    const double sigma_t = 0.1 * mu_t;

    // A task that inherits a frozen contribution starts as a small correction
    // on top of it; a first (or non-sharing) task carries the whole kernel, so
    // its composed variance targets fan-in 2/(k_in*n^2), damped by init_scale.
    const bool continuation = knowledge_sharing && task_id > 1;
    const double per_col =
        static_cast<double>(masks_.back().bits.popcount()) / static_cast<double>(m_);
    const double target_var = 2.0 / (static_cast<double>(k_in_) * n_ * n_);
    const double sigma_m = (continuation ? kContinuationInitScale : 1.0) * init_scale_ *
        std::sqrt(target_var / (per_col * (mu_t * mu_t + sigma_t * sigma_t)));

    const MaskBits& bits = masks_.back().bits;
    for (i64 i = 0; i < bits.nbits(); ++i)
        if (bits.test(i)) memory_[static_cast<std::size_t>(i)] = static_cast<T>(rng.normal(0.0, sigma_m));

    TaskVector<T> vec;
    vec.task_id = task_id;
    vec.values.resize(static_cast<std::size_t>(t_));
    for (T& v : vec.values) v = static_cast<T>(rng.normal(mu_t, sigma_t));
    vectors_.push_back(std::move(vec));
    biases_.emplace_back(static_cast<std::size_t>(k_out_), T(0));
    sharing_.push_back(knowledge_sharing ? 1 : 0);

    cached_old_ = frozen_contribution(task_id, knowledge_sharing);
    cache_valid_ = true;
    rebuild_active_bits();
}

template <typename T>
void CmcLayer<T>::rebuild_active_bits() {
    active_bits_.clear();
    const MaskBits& bits = masks_.back().bits;
    for (i64 i = 0; i < bits.nbits(); ++i)
        if (bits.test(i)) active_bits_.push_back(i);
}

template <typename T>
void CmcLayer<T>::accumulate_term(std::vector<T>& acc, int task_index) const {
    const MaskBits& bits = masks_[static_cast<std::size_t>(task_index)].bits;
    const std::vector<T>& vec = vectors_[static_cast<std::size_t>(task_index)].values;
    for (int r = 0; r < t_; ++r) {
        const T tr = vec[static_cast<std::size_t>(r)];
        const i64 base = static_cast<i64>(r) * m_;
        for (i64 j = 0; j < m_; ++j)
            if (bits.test(base + j)) acc[static_cast<std::size_t>(j)] += tr * memory_[static_cast<std::size_t>(base + j)];
    }
}

template <typename T>
std::vector<T> CmcLayer<T>::frozen_contribution(int task_id, bool sharing) const {
    std::vector<T> acc(static_cast<std::size_t>(m_), T(0));
    if (sharing)
        for (int i = 0; i < task_id - 1; ++i) accumulate_term(acc, i);
    return acc;
}

template <typename T>
void CmcLayer<T>::check_known_task(int task_id, const char* who) const {
    if (task_id < 1 || task_id > task_count())
        throw ProtocolError("CmcLayer '" + name_ + "': " + who + ": unknown task " +
                            std::to_string(task_id));
    if (task_id - 1 > frozen_through_)
        throw ProtocolError("CmcLayer '" + name_ + "': " + who + ": task " +
                            std::to_string(task_id) + " has unfrozen predecessors");
}

template <typename T>
Kernel<T> CmcLayer<T>::estimate_kernel(int task_id) const {
    check_known_task(task_id, "estimate_kernel");
    std::vector<T> acc;
    const bool is_active = (task_id == task_count()) && has_active_task();
    if (is_active && cache_valid_) {
        acc = cached_old_;
    } else {
        acc = frozen_contribution(task_id, sharing_[static_cast<std::size_t>(task_id - 1)] != 0);
    }
    accumulate_term(acc, task_id - 1);
    Kernel<T> k(k_out_, k_in_, n_);
    std::memcpy(k.data.data(), acc.data(), sizeof(T) * acc.size());
    return k;
}

template <typename T>
Tensor4<T> CmcLayer<T>::forward(const Tensor4<T>& input, int task_id, ConvBackend backend) const {
    const Kernel<T> k = estimate_kernel(task_id);
    return conv2d_forward(input, k, bias(task_id), backend);
}

template <typename T>
std::span<const T> CmcLayer<T>::bias(int task_id) const {
    check_known_task(task_id, "bias");
    const auto& b = biases_[static_cast<std::size_t>(task_id - 1)];
    return {b.data(), b.size()};
}

template <typename T>
bool CmcLayer<T>::knowledge_sharing(int task_id) const {
    check_known_task(task_id, "knowledge_sharing");
    return sharing_[static_cast<std::size_t>(task_id - 1)] != 0;
}

template <typename T>
const TaskMask& CmcLayer<T>::mask(int task_id) const {
    if (task_id < 1 || task_id > static_cast<int>(masks_.size()))
        throw ProtocolError("CmcLayer '" + name_ + "': mask: unknown task " +
                            std::to_string(task_id));
    return masks_[static_cast<std::size_t>(task_id - 1)];
}

template <typename T>
const TaskVector<T>& CmcLayer<T>::task_vector(int task_id) const {
    check_known_task(task_id, "task_vector");
    return vectors_[static_cast<std::size_t>(task_id - 1)];
}

template <typename T>
void CmcLayer<T>::freeze_task(int task_id) {
    if (task_id != frozen_through_ + 1)
        throw ProtocolError("CmcLayer '" + name_ + "': freeze_task(" + std::to_string(task_id) +
                            ") out of order (frozen through " + std::to_string(frozen_through_) +
                            ")");
    if (task_id != task_count())
        throw ProtocolError("CmcLayer '" + name_ + "': freeze_task(" + std::to_string(task_id) +
                            ") before init_task");
    if (!verify_cached_old())
        throw NumericError("CmcLayer '" + name_ +
                           "': cached frozen contribution diverged from recomputation");
    frozen_through_ = task_id;
    cached_old_.clear();
    cache_valid_ = false;
    active_bits_.clear();
}

template <typename T>
void CmcLayer<T>::expand_capacity(int extra_rows) {
    if (extra_rows < 0) throw Error("CmcLayer '" + name_ + "': negative capacity expansion");
    if (extra_rows == 0) return;
    if (has_active_task())
        throw ProtocolError("CmcLayer '" + name_ + "': cannot expand capacity mid-training");
    t_ += extra_rows;
    memory_.resize(static_cast<std::size_t>(t_) * m_, T(0));
    for (TaskMask& m : masks_) m.bits.append_zero_bits(static_cast<i64>(extra_rows) * m_);
    for (TaskVector<T>& v : vectors_) v.values.resize(static_cast<std::size_t>(t_), T(0));
}

template <typename T>
i64 CmcLayer<T>::active_param_count() const {
    if (!has_active_task())
        throw ProtocolError("CmcLayer '" + name_ + "': no active task");
    return static_cast<i64>(t_) + static_cast<i64>(active_bits_.size()) + k_out_;
}

template <typename T>
void CmcLayer<T>::gather_active_params(std::span<T> out) const {
    if (static_cast<i64>(out.size()) != active_param_count())
        throw ShapeError("CmcLayer '" + name_ + "': gather size mismatch");
    const std::vector<T>& vec = vectors_.back().values;
    std::size_t o = 0;
    for (int r = 0; r < t_; ++r) out[o++] = vec[static_cast<std::size_t>(r)];
    for (i64 idx : active_bits_) out[o++] = memory_[static_cast<std::size_t>(idx)];
    for (const T& b : biases_.back()) out[o++] = b;
}

template <typename T>
void CmcLayer<T>::scatter_active_params(std::span<const T> in) {
    if (!has_active_task())
        throw ProtocolError("CmcLayer '" + name_ +
                            "': parameter write rejected: no active task (frozen state is immutable)");
    if (static_cast<i64>(in.size()) != active_param_count())
        throw ShapeError("CmcLayer '" + name_ + "': scatter size mismatch");
    std::vector<T>& vec = vectors_.back().values;
    std::size_t o = 0;
    for (int r = 0; r < t_; ++r) vec[static_cast<std::size_t>(r)] = in[o++];
    for (i64 idx : active_bits_) memory_[static_cast<std::size_t>(idx)] = in[o++];
    for (T& b : biases_.back()) b = in[o++];
}

template <typename T>
void CmcLayer<T>::backward_masked(const Kernel<T>& grad_kernel, std::span<const T> grad_bias,
                                  std::span<T> grad_params) const {
    if (!has_active_task())
        throw ProtocolError("CmcLayer '" + name_ + "': backward_masked: no active task");
    if (grad_kernel.k_out != k_out_ || grad_kernel.k_in != k_in_ || grad_kernel.n != n_)
        throw ShapeError("CmcLayer '" + name_ + "': backward_masked kernel shape mismatch");
    if (static_cast<int>(grad_bias.size()) != k_out_ ||
        static_cast<i64>(grad_params.size()) != active_param_count())
        throw ShapeError("CmcLayer '" + name_ + "': backward_masked size mismatch");

    const std::vector<T>& vec = vectors_.back().values;
    const T* gk = grad_kernel.data.data();
    std::size_t o = 0;
    // d L / d T_r = sum_j M[r,j] * gk[j] over the active mask row r
    {
        std::vector<T> gt(static_cast<std::size_t>(t_), T(0));
        for (i64 idx : active_bits_) {
            const i64 r = idx / m_;
            const i64 j = idx % m_;
            gt[static_cast<std::size_t>(r)] += memory_[static_cast<std::size_t>(idx)] * gk[j];
        }
        for (int r = 0; r < t_; ++r) grad_params[o++] = gt[static_cast<std::size_t>(r)];
    }
    // d L / d M[r,j] = T_r * gk[j], active mask only
    for (i64 idx : active_bits_) {
        const i64 r = idx / m_;
        const i64 j = idx % m_;
        grad_params[o++] = vec[static_cast<std::size_t>(r)] * gk[j];
    }
    for (int c = 0; c < k_out_; ++c) grad_params[o++] = grad_bias[static_cast<std::size_t>(c)];
}

template <typename T>
const std::vector<T>& CmcLayer<T>::cached_old_kernel() const {
    if (!cache_valid_)
        throw ProtocolError("CmcLayer '" + name_ + "': no cached frozen contribution");
    return cached_old_;
}

template <typename T>
bool CmcLayer<T>::verify_cached_old() const {
    if (!cache_valid_) return true;
    const int active = task_count();
    const std::vector<T> fresh =
        frozen_contribution(active, sharing_[static_cast<std::size_t>(active - 1)] != 0);
    return fresh.size() == cached_old_.size() &&
           std::memcmp(fresh.data(), cached_old_.data(), sizeof(T) * fresh.size()) == 0;
}

template <typename T>
typename CmcLayer<T>::Snapshot CmcLayer<T>::snapshot() const {
    Snapshot s;
    s.k_in = k_in_;
    s.k_out = k_out_;
    s.n = n_;
    s.t = t_;
    s.memory = memory_;
    s.masks = masks_;
    s.vectors = vectors_;
    s.biases = biases_;
    s.sharing = sharing_;
    s.frozen_through = frozen_through_;
    return s;
}

template <typename T>
CmcLayer<T> CmcLayer<T>::from_snapshot(std::string name, Snapshot s, double init_scale) {
    CmcLayer<T> layer(std::move(name), s.k_in, s.k_out, s.n, s.t, init_scale);
    const i64 total = static_cast<i64>(s.t) * layer.m_;
    if (static_cast<i64>(s.memory.size()) != total)
        throw IoError("CmcLayer snapshot: memory size mismatch for '" + layer.name_ + "'");
    if (s.masks.size() != s.vectors.size() || s.masks.size() != s.biases.size() ||
        s.masks.size() != s.sharing.size())
        throw IoError("CmcLayer snapshot: inconsistent task counts for '" + layer.name_ + "'");
    if (s.frozen_through != static_cast<int>(s.masks.size()))
        throw IoError("CmcLayer snapshot: contains an unfrozen task for '" + layer.name_ + "'");
    for (std::size_t i = 0; i < s.masks.size(); ++i) {
        if (s.masks[i].bits.nbits() != total)
            throw IoError("CmcLayer snapshot: mask size mismatch for '" + layer.name_ + "'");
        if (static_cast<int>(s.vectors[i].values.size()) != s.t ||
            static_cast<int>(s.biases[i].size()) != s.k_out)
            throw IoError("CmcLayer snapshot: vector/bias size mismatch for '" + layer.name_ + "'");
        for (std::size_t j = 0; j < i; ++j)
            if (s.masks[i].bits.intersects(s.masks[j].bits))
                throw IoError("CmcLayer snapshot: overlapping masks for '" + layer.name_ + "'");
    }
    layer.memory_ = std::move(s.memory);
    layer.masks_ = std::move(s.masks);
    layer.vectors_ = std::move(s.vectors);
    layer.biases_ = std::move(s.biases);
    layer.sharing_ = std::move(s.sharing);
    layer.frozen_through_ = s.frozen_through;
    return layer;
}

template class CmcLayer<float>;
template class CmcLayer<double>;

}  // namespace cmc
