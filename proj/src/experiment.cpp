// SPDX-License-Identifier: Apache-2.0
#include "cmc/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "cmc/archive.hpp"
#include "cmc/png_io.hpp"

namespace cmc {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string iso_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

template <typename T>
ImageU8 to_image_u8(const Tensor4<T>& img) {
    ImageU8 out;
    out.width = img.width;
    out.height = img.height;
    out.channels = 3;
    out.pixels.resize(static_cast<std::size_t>(img.width) * img.height * 3);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) {
                const double v = std::min(1.0, std::max(0.0, static_cast<double>(img.at(0, c, y, x))));
                out.pixels[(static_cast<std::size_t>(y) * img.width + x) * 3 +
                           static_cast<std::size_t>(c)] =
                    static_cast<std::uint8_t>(std::lround(v * 255.0));
            }
    return out;
}

template <typename T>
ImageU8 triptych(const Tensor4<T>& degraded, const Tensor4<T>& restored,
                 const Tensor4<T>& clean) {
    const ImageU8 a = to_image_u8(degraded), b = to_image_u8(restored), c = to_image_u8(clean);
    ImageU8 out;
    out.height = a.height;
    out.width = a.width * 3;
    out.channels = 3;
    out.pixels.resize(static_cast<std::size_t>(out.width) * out.height * 3);
    for (int y = 0; y < out.height; ++y) {
        const std::size_t row = static_cast<std::size_t>(y) * out.width * 3;
        const std::size_t srow = static_cast<std::size_t>(y) * a.width * 3;
        std::copy_n(&a.pixels[srow], a.width * 3, &out.pixels[row]);
        std::copy_n(&b.pixels[srow], a.width * 3, &out.pixels[row + static_cast<std::size_t>(a.width) * 3]);
        std::copy_n(&c.pixels[srow], a.width * 3, &out.pixels[row + static_cast<std::size_t>(a.width) * 6]);
    }
    return out;
}

template <typename T>
RunSummary run_impl(const ExperimentConfig& cfg, const RunOverrides& ov,
                    const std::string& hash) {
    const fs::path out_dir(cfg.output_dir);
    fs::create_directories(out_dir);

    {
        std::ofstream f(out_dir / "config_resolved.json");
        f << config_to_json(cfg).dump(2) << "\n";
    }

    std::ofstream log(out_dir / "log.jsonl", std::ios::trunc);
    auto log_line = [&log](const json& j) { log << j.dump() << "\n"; };
    log_line({{"event", "run_start"},
              {"timestamp", iso_timestamp()},
              {"config_hash", hash},
              {"precision", cfg.precision},
              {"seed", cfg.seed}});

    const ConvBackend backend =
        cfg.conv_backend == "naive" ? ConvBackend::naive : ConvBackend::im2col;

    RestorationNet<T> net(cfg.network);
    std::vector<ReportEntry> prior;
    if (!ov.resume_archive.empty()) {
        auto [meta, restored] = load_archive<T>(ov.resume_archive);
        if (meta.config_hash != hash && !ov.force_resume)
            throw ConfigError("resume: archive was written for config " + meta.config_hash +
                              " but the current config hashes to " + hash +
                              " (use --force to override)");
        if (meta.seed != cfg.seed)
            throw ConfigError("resume: archive seed " + std::to_string(meta.seed) +
                              " differs from configured seed " + std::to_string(cfg.seed));
        net = std::move(restored);
        prior = meta.report;
        log_line({{"event", "resume"},
                  {"archive", ov.resume_archive},
                  {"frozen_through", net.frozen_through()}});
    }

    Trainer<T> trainer(net, cfg.tasks, cfg.schedule, cfg.data, cfg.seed, backend);
    trainer.restore_matrix(prior);
    if (ov.stop_after_task > 0) trainer.set_stop_after(ov.stop_after_task);

    const std::string archive_path = (out_dir / "knowledge_base.kb").string();
    std::vector<ReportEntry> matrix_so_far = prior;

    typename Trainer<T>::Hooks hooks;
    hooks.on_task_start = [&](const TaskSpec& spec) {
        log_line({{"event", "task_start"},
                  {"task", spec.task_id},
                  {"name", spec.name},
                  {"fraction", spec.fraction},
                  {"knowledge_sharing", spec.knowledge_sharing}});
    };
    hooks.on_epoch = [&](const TaskSpec& spec, const EpochMetrics& em) {
        log_line({{"event", "epoch"},
                  {"task", spec.task_id},
                  {"epoch", em.epoch},
                  {"lr", em.lr},
                  {"loss", em.mean_loss},
                  {"eval_psnr", em.eval_psnr},
                  {"eval_ssim", em.eval_ssim}});
    };
    hooks.on_matrix_entry = [&](const ReportEntry& e) {
        matrix_so_far.push_back(e);
        log_line({{"event", "matrix"},
                  {"task", e.task_id},
                  {"after_task", e.after_task},
                  {"psnr", e.psnr},
                  {"ssim", e.ssim}});
    };
    hooks.after_freeze = [&](const TaskSpec& spec, const TaskResult& res) {
        log_line({{"event", "task_frozen"},
                  {"task", spec.task_id},
                  {"identity_psnr", res.identity_psnr},
                  {"final_psnr", res.final_psnr()}});
    };
    // Archive once the frozen-task evaluation column is complete, so a resume
    // has every at-freeze metric it must reproduce.
    hooks.after_column = [&](int) {
        ArchiveMeta meta;
        meta.config_hash = hash;
        meta.seed = cfg.seed;
        meta.precision = cfg.precision;
        meta.geometry = cfg.network;
        meta.frozen_through = net.frozen_through();
        for (const TaskSpec& s : cfg.tasks) {
            if (s.task_id > net.frozen_through()) break;
            meta.tasks.push_back({s.task_id, s.name, s.knowledge_sharing});
        }
        meta.report = matrix_so_far;
        save_archive(archive_path, net, meta);
    };
    const bool dump = ov.dump_images.value_or(cfg.dump_images);
    if (dump) {
        hooks.dump_triptych = [&](int task_id, const Tensor4<T>& degraded,
                                  const Tensor4<T>& restored, const Tensor4<T>& clean) {
            const ImageU8 img = triptych(degraded, restored, clean);
            write_png((out_dir / ("task" + std::to_string(task_id) + "_triptych.png")).string(),
                      img);
        };
    }
    trainer.set_hooks(std::move(hooks));

    RunSummary summary;
    summary.report = trainer.run_sequence();
    summary.output_dir = out_dir.string();
    summary.archive_path = archive_path;
    summary.config_hash = hash;

    summary.report_csv_path = (out_dir / "report.csv").string();
    {
        std::ofstream f(summary.report_csv_path, std::ios::trunc);
        f << report_matrix_csv(cfg.tasks, summary.report);
    }
    log_line({{"event", "run_end"}, {"tasks_trained", summary.report.tasks.size()}});
    return summary;
}

}  // namespace

std::string report_matrix_csv(const std::vector<TaskSpec>& specs, const SequenceReport& report) {
    std::string csv = "task_id,task_name";
    for (const TaskSpec& s : specs) csv += ",after_task_" + std::to_string(s.task_id);
    csv += "\n";
    char cell[64];
    for (const TaskSpec& s : specs) {
        csv += std::to_string(s.task_id) + "," + s.name;
        for (const TaskSpec& after : specs) {
            const ReportEntry* e = report.find(s.task_id, after.task_id);
            if (e) {
                std::snprintf(cell, sizeof(cell), ",%.4f", e->psnr);
                csv += cell;
            } else {
                csv += ",";
            }
        }
        csv += "\n";
    }
    return csv;
}

RunSummary run_experiment(ExperimentConfig config, const RunOverrides& ov) {
    if (ov.seed) config.seed = *ov.seed;
    if (ov.output_dir) config.output_dir = *ov.output_dir;
    if (ov.flip_sharing)
        for (TaskSpec& t : config.tasks) t.knowledge_sharing = !t.knowledge_sharing;
    if (ov.dump_images) config.dump_images = *ov.dump_images;
    const std::string hash = config_hash(config);
    if (config.precision == "float64") return run_impl<double>(config, ov, hash);
    return run_impl<float>(config, ov, hash);
}

}  // namespace cmc
