// SPDX-License-Identifier: Apache-2.0
#include "cmc/trainer.hpp"

#include <cmath>

#include "cmc/adam.hpp"
#include "cmc/loss.hpp"
#include "cmc/metrics.hpp"
#include "cmc/rng.hpp"

namespace cmc {

namespace {
constexpr std::uint64_t kSeedTrainSource = 201;
constexpr std::uint64_t kSeedEvalSource = 202;
constexpr std::uint64_t kSeedEvalDegrade = 203;
constexpr std::uint64_t kSeedBatches = 204;

template <typename T>
Tensor4<T> slice_image(const Tensor4<T>& batch, int index) {
    Tensor4<T> out(1, batch.channels, batch.height, batch.width);
    const std::size_t plane =
        static_cast<std::size_t>(batch.channels) * batch.height * batch.width;
    std::copy_n(batch.data.begin() + static_cast<std::ptrdiff_t>(plane * index), plane,
                out.data.begin());
    return out;
}

/// Mean of per-image metrics, images clamped to [0,1] first.
template <typename T>
EvalResult mean_image_metrics(const Tensor4<T>& pred, const Tensor4<T>& target) {
    Tensor4<T> clamped = pred;
    clamp01_inplace(clamped);
    double psnr_acc = 0.0, ssim_acc = 0.0;
    for (int i = 0; i < pred.batch; ++i) {
        const Tensor4<T> p = slice_image(clamped, i);
        const Tensor4<T> t = slice_image(target, i);
        psnr_acc += psnr(p, t);
        ssim_acc += ssim(p, t);
    }
    return {psnr_acc / pred.batch, ssim_acc / pred.batch};
}

}  // namespace

template <typename T>
Trainer<T>::Trainer(RestorationNet<T>& net, std::vector<TaskSpec> specs, TrainSchedule schedule,
                    DataConfig data, std::uint64_t seed, ConvBackend backend)
    : net_(net), specs_(std::move(specs)), schedule_(schedule), data_(data), seed_(seed),
      backend_(backend) {
    for (std::size_t i = 0; i < specs_.size(); ++i)
        if (specs_[i].task_id != static_cast<int>(i) + 1)
            throw ProtocolError("Trainer: task ids must be contiguous from 1, got " +
                                std::to_string(specs_[i].task_id) + " at position " +
                                std::to_string(i + 1));
    if (data_.eval_images < 1) throw Error("Trainer: need at least one eval image");
}

template <typename T>
const TaskSpec& Trainer<T>::spec_for(int task_id) const {
    if (task_id < 1 || task_id > static_cast<int>(specs_.size()))
        throw ProtocolError("Trainer: unknown task " + std::to_string(task_id));
    return specs_[static_cast<std::size_t>(task_id - 1)];
}

template <typename T>
const typename Trainer<T>::EvalSet& Trainer<T>::eval_set(int task_id) {
    auto it = eval_sets_.find(task_id);
    if (it != eval_sets_.end()) return it->second;

    const TaskSpec& spec = spec_for(task_id);
    const int n = data_.eval_images;
    const int s = data_.image_size;
    EvalSet set;
    set.clean = Tensor4<T>(n, 3, s, s);
    set.degraded = Tensor4<T>(n, 3, s, s);

    std::unique_ptr<CleanImageSource<T>> src;
    if (data_.image_dir.empty()) {
        src = std::make_unique<CleanImageSource<T>>(
            derive_seed(seed_, kSeedEvalSource, static_cast<std::uint64_t>(task_id)), s, n);
    } else {
        src = std::make_unique<CleanImageSource<T>>(
            CleanImageSource<T>::from_directory(data_.image_dir, s));
        if (src->count() < n)
            throw Error("Trainer: image directory has fewer images than eval_images");
    }
    for (int i = 0; i < n; ++i) {
        // directory mode reserves the tail of the pool for evaluation
        const int idx = data_.image_dir.empty() ? i : src->count() - n + i;
        const Tensor4<T>& clean = src->image(idx);
        const Tensor4<T> degraded =
            degrade(clean, spec.degradation,
                    derive_seed(seed_, kSeedEvalDegrade, static_cast<std::uint64_t>(task_id),
                                static_cast<std::uint64_t>(i)),
                    /*eval_mode=*/true);
        const std::size_t plane = static_cast<std::size_t>(3) * s * s;
        std::copy_n(clean.data.begin(), plane,
                    set.clean.data.begin() + static_cast<std::ptrdiff_t>(plane * i));
        std::copy_n(degraded.data.begin(), plane,
                    set.degraded.data.begin() + static_cast<std::ptrdiff_t>(plane * i));
    }
    return eval_sets_.emplace(task_id, std::move(set)).first->second;
}

template <typename T>
EvalResult Trainer<T>::evaluate(int task_id) {
    const EvalSet& set = eval_set(task_id);
    const Tensor4<T> pred = net_.forward(set.degraded, task_id, backend_);
    return mean_image_metrics(pred, set.clean);
}

template <typename T>
double Trainer<T>::identity_psnr(int task_id) {
    const EvalSet& set = eval_set(task_id);
    double acc = 0.0;
    for (int i = 0; i < set.clean.batch; ++i)
        acc += psnr(slice_image(set.degraded, i), slice_image(set.clean, i));
    return acc / set.clean.batch;
}

template <typename T>
TaskResult Trainer<T>::train_task(const TaskSpec& spec) {
    if (spec.task_id != net_.frozen_through() + 1)
        throw ProtocolError("train_task: task " + std::to_string(spec.task_id) +
                            " but network is frozen through " +
                            std::to_string(net_.frozen_through()));
    if (hooks_.on_task_start) hooks_.on_task_start(spec);

    const auto fraction_for = [&spec](const std::string& layer_name) {
        const auto it = spec.fraction_overrides.find(layer_name);
        return it != spec.fraction_overrides.end() ? it->second : spec.fraction;
    };
    net_.allocate_task(spec.task_id, fraction_for, spec.knowledge_sharing, seed_);

    std::unique_ptr<CleanImageSource<T>> src;
    if (data_.image_dir.empty()) {
        src = std::make_unique<CleanImageSource<T>>(
            derive_seed(seed_, kSeedTrainSource, static_cast<std::uint64_t>(spec.task_id)),
            data_.image_size, data_.images_per_task);
    } else {
        src = std::make_unique<CleanImageSource<T>>(
            CleanImageSource<T>::from_directory(data_.image_dir, data_.image_size));
        // the tail of a directory pool is reserved for evaluation
        src->truncate(src->count() - data_.eval_images);
    }
    PairStream<T> stream(src.get(), spec.degradation, spec.patch_size, spec.batch_size,
                         derive_seed(seed_, kSeedBatches, static_cast<std::uint64_t>(spec.task_id)));

    const i64 n_params = net_.active_param_count();
    std::vector<T> params(static_cast<std::size_t>(n_params));
    std::vector<T> grads(static_cast<std::size_t>(n_params));
    net_.gather_active_params(params);
    AdamState<T> opt(params.size(), static_cast<T>(schedule_.beta1),
                     static_cast<T>(schedule_.beta2), static_cast<T>(schedule_.epsilon));

    TaskResult result;
    result.task_id = spec.task_id;
    result.name = spec.name;
    result.identity_psnr = identity_psnr(spec.task_id);

    for (int epoch = 0; epoch < spec.epochs; ++epoch) {
        const double lr = lr_at_epoch(schedule_, epoch);
        double loss_acc = 0.0;
        for (int step = 0; step < spec.batches_per_epoch; ++step) {
            const i64 batch_index =
                static_cast<i64>(epoch) * spec.batches_per_epoch + step;
            const typename PairStream<T>::Batch batch = stream.batch(batch_index);
            typename RestorationNet<T>::Trace trace;
            const Tensor4<T> pred = net_.forward_train(batch.degraded, spec.task_id, trace, backend_);
            Tensor4<T> grad_pred;
            const double loss = mse_loss(pred, batch.clean, &grad_pred);
            if (!std::isfinite(loss))
                throw NumericError("train_task: non-finite loss in task " +
                                   std::to_string(spec.task_id) + " ('" + spec.name +
                                   "') at epoch " + std::to_string(epoch) + ", step " +
                                   std::to_string(step) +
                                   "; restart from the last archived checkpoint");
            net_.backward(grad_pred, trace, grads, backend_);
            adam_step<T>(params, grads, opt, static_cast<T>(lr));
            net_.scatter_active_params(params);
            loss_acc += loss;
        }
        EpochMetrics em;
        em.epoch = epoch;
        em.lr = lr;
        em.mean_loss = loss_acc / spec.batches_per_epoch;
        const EvalResult er = evaluate(spec.task_id);
        em.eval_psnr = er.psnr;
        em.eval_ssim = er.ssim;
        result.epochs.push_back(em);
        if (hooks_.on_epoch) hooks_.on_epoch(spec, em);
    }

    net_.freeze_task(spec.task_id);
    if (hooks_.dump_triptych) {
        const EvalSet& set = eval_set(spec.task_id);
        Tensor4<T> restored = net_.forward(set.degraded, spec.task_id, backend_);
        clamp01_inplace(restored);
        hooks_.dump_triptych(spec.task_id, slice_image(set.degraded, 0),
                             slice_image(restored, 0), slice_image(set.clean, 0));
    }
    if (hooks_.after_freeze) hooks_.after_freeze(spec, result);
    return result;
}

template <typename T>
SequenceReport Trainer<T>::run_sequence() {
    SequenceReport report;
    report.matrix = prior_matrix_;

    for (const TaskSpec& spec : specs_) {
        if (spec.task_id <= net_.frozen_through()) continue;  // resumed past this task
        report.tasks.push_back(train_task(spec));

        for (int i = 1; i <= spec.task_id; ++i) {
            const EvalResult er = evaluate(i);
            ReportEntry entry{i, spec.task_id, er.psnr, er.ssim};
            report.matrix.push_back(entry);
            if (hooks_.on_matrix_entry) hooks_.on_matrix_entry(entry);
        }
        // Frozen tasks must reproduce their at-freeze metrics exactly.
        for (int i = 1; i < spec.task_id; ++i) {
            const ReportEntry* at_freeze = report.find(i, i);
            const ReportEntry* now = report.find(i, spec.task_id);
            if (!at_freeze || !now)
                throw ProtocolError("run_sequence: missing report entry for task " +
                                    std::to_string(i));
            if (at_freeze->psnr != now->psnr || at_freeze->ssim != now->ssim)
                throw NumericError(
                    "non-forgetting violated: task " + std::to_string(i) + " PSNR " +
                    std::to_string(at_freeze->psnr) + " dB at freeze vs " +
                    std::to_string(now->psnr) + " dB after task " + std::to_string(spec.task_id));
        }
        if (hooks_.after_column) hooks_.after_column(spec.task_id);
        if (stop_after_ > 0 && spec.task_id >= stop_after_) break;
    }
    return report;
}

template class Trainer<float>;
template class Trainer<double>;

}  // namespace cmc
