// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cmc/net.hpp"
#include "cmc/tasks.hpp"

namespace cmc {

struct TrainSchedule {
    double base_lr = 1e-3;
    int halve_every = 4;  // epochs between halvings
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// lr at (0-based) epoch e is base_lr * 0.5^floor(e / halve_every).
inline double lr_at_epoch(const TrainSchedule& s, int epoch) {
    if (s.halve_every <= 0) return s.base_lr;
    return s.base_lr * std::pow(0.5, static_cast<double>(epoch / s.halve_every));
}

struct TaskSpec {
    int task_id = 0;  // 1-based, contiguous
    std::string name;
    Degradation degradation;
    double fraction = 0.2;
    std::map<std::string, double> fraction_overrides;  // layer name -> fraction
    int epochs = 10;
    int batches_per_epoch = 50;
    int batch_size = 8;
    int patch_size = 32;
    bool knowledge_sharing = true;
};

struct DataConfig {
    int image_size = 64;
    int images_per_task = 32;
    int eval_images = 8;
    std::string image_dir;  // optional PNG directory; empty = procedural textures
};

struct EvalResult {
    double psnr = 0.0;
    double ssim = 0.0;
};

struct EpochMetrics {
    int epoch = 0;
    double lr = 0.0;
    double mean_loss = 0.0;
    double eval_psnr = 0.0;
    double eval_ssim = 0.0;
};

struct TaskResult {
    int task_id = 0;
    std::string name;
    double identity_psnr = 0.0;  // PSNR of the degraded eval input itself
    std::vector<EpochMetrics> epochs;

    double final_psnr() const { return epochs.empty() ? 0.0 : epochs.back().eval_psnr; }
    double first_epoch_psnr() const { return epochs.empty() ? 0.0 : epochs.front().eval_psnr; }
};

/// One cell of the task x after-task evaluation matrix.
struct ReportEntry {
    int task_id = 0;
    int after_task = 0;
    double psnr = 0.0;
    double ssim = 0.0;
};

struct SequenceReport {
    std::vector<TaskResult> tasks;      // tasks trained in this process
    std::vector<ReportEntry> matrix;    // includes entries restored from an archive

    const ReportEntry* find(int task_id, int after_task) const {
        for (const ReportEntry& e : matrix)
            if (e.task_id == task_id && e.after_task == after_task) return &e;
        return nullptr;
    }
};

/// Sequential multi-task training orchestrator. Each task allocates its masks,
/// trains only its own parameters with Adam + the halving schedule, is frozen,
/// and every frozen task is re-evaluated after each completion; re-evaluations
/// must reproduce the at-freeze metrics bit for bit.
template <typename T>
class Trainer {
public:
    struct Hooks {
        std::function<void(const TaskSpec&)> on_task_start;
        std::function<void(const TaskSpec&, const EpochMetrics&)> on_epoch;
        std::function<void(const TaskSpec&, const TaskResult&)> after_freeze;
        std::function<void(const ReportEntry&)> on_matrix_entry;
        // fired once the frozen-task evaluation column for `task_id` is complete
        std::function<void(int)> after_column;
        // (task_id, degraded, restored, clean) of the first eval image
        std::function<void(int, const Tensor4<T>&, const Tensor4<T>&, const Tensor4<T>&)>
            dump_triptych;
    };

    Trainer(RestorationNet<T>& net, std::vector<TaskSpec> specs, TrainSchedule schedule,
            DataConfig data, std::uint64_t seed, ConvBackend backend = ConvBackend::im2col);

    void set_hooks(Hooks hooks) { hooks_ = std::move(hooks); }

    /// Seed report entries computed before a resume.
    void restore_matrix(std::vector<ReportEntry> prior) { prior_matrix_ = std::move(prior); }

    /// Stop the sequence once this task's column is complete (0 = run all).
    void set_stop_after(int task_id) { stop_after_ = task_id; }

    TaskResult train_task(const TaskSpec& spec);
    SequenceReport run_sequence();
    EvalResult evaluate(int task_id);
    double identity_psnr(int task_id);

    const std::vector<TaskSpec>& specs() const { return specs_; }
    RestorationNet<T>& net() { return net_; }

private:
    struct EvalSet {
        Tensor4<T> degraded;
        Tensor4<T> clean;
    };
    const EvalSet& eval_set(int task_id);
    const TaskSpec& spec_for(int task_id) const;

    RestorationNet<T>& net_;
    std::vector<TaskSpec> specs_;
    TrainSchedule schedule_;
    DataConfig data_;
    std::uint64_t seed_;
    ConvBackend backend_;
    Hooks hooks_;
    int stop_after_ = 0;
    std::map<int, EvalSet> eval_sets_;
    std::vector<ReportEntry> prior_matrix_;
};

}  // namespace cmc
