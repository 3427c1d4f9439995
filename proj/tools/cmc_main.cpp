// SPDX-License-Identifier: Apache-2.0
//
// cmc: experiment CLI.
//   cmc run --config cfg.json [--resume kb] [--no-sharing] [--seed N] [--output DIR]
//   cmc bench [--shape k_in,k_out,n,H,W] [--strategies list] [--repeats N]

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <vector>

#include <CLI11.hpp>

#include "cmc/cost_model.hpp"
#include "cmc/experiment.hpp"

namespace {

int run_command(const std::string& config_path, const std::string& resume,
                bool no_sharing, bool force, std::int64_t seed, const std::string& output,
                bool dump_images, int stop_after) {
    cmc::ExperimentConfig cfg = cmc::load_config_file(config_path);
    cmc::RunOverrides ov;
    if (seed >= 0) ov.seed = static_cast<std::uint64_t>(seed);
    if (!output.empty()) ov.output_dir = output;
    ov.flip_sharing = no_sharing;
    ov.resume_archive = resume;
    ov.force_resume = force;
    if (dump_images) ov.dump_images = true;
    ov.stop_after_task = stop_after;

    const cmc::RunSummary summary = cmc::run_experiment(cfg, ov);
    std::cout << "run complete: " << summary.report.matrix.size() << " matrix entries\n";
    std::cout << "  report : " << summary.report_csv_path << "\n";
    std::cout << "  archive: " << summary.archive_path << "\n";
    for (const cmc::TaskResult& t : summary.report.tasks)
        std::printf("  task %d (%s): identity %.2f dB -> final %.2f dB\n", t.task_id,
                    t.name.c_str(), t.identity_psnr, t.final_psnr());
    return 0;
}

std::vector<cmc::LayerCostModel> bench_variants(const cmc::LayerCostModel& base,
                                                const std::string& strategy) {
    std::vector<cmc::LayerCostModel> out;
    cmc::LayerCostModel m = base;
    if (strategy == "plain") {
        m.strategy = cmc::Strategy::plain;
        out.push_back(m);
    } else if (strategy == "type1") {
        m.strategy = cmc::Strategy::type1;
        for (int n : {4, 6}) {
            m.type1_kernel = n;
            out.push_back(m);
        }
    } else if (strategy == "type2") {
        m.strategy = cmc::Strategy::type2;
        for (int extra : {1, 3}) {
            m.type2_extra = extra;
            out.push_back(m);
        }
    } else if (strategy == "cmc") {
        m.strategy = cmc::Strategy::cmc;
        for (int t : {5, 10, 20}) {
            m.cmc_t = t;
            out.push_back(m);
        }
    } else {
        throw CLI::ValidationError("--strategies", "unknown strategy '" + strategy +
                                       "' (expected plain, type1, type2, cmc)");
    }
    return out;
}

int bench_command(const std::string& shape, const std::string& strategies, int repeats,
                  int measure_spatial, bool no_measure, const std::string& csv_path) {
    cmc::LayerCostModel base;
    {
        std::istringstream ss(shape);
        char comma;
        if (!(ss >> base.k_in >> comma >> base.k_out >> comma >> base.n >> comma >>
              base.height >> comma >> base.width))
            throw CLI::ValidationError("--shape", "expected k_in,k_out,n,H,W");
    }

    std::vector<cmc::BenchReport> rows;
    std::istringstream ss(strategies);
    std::string name;
    while (std::getline(ss, name, ',')) {
        for (const cmc::LayerCostModel& m : bench_variants(base, name)) {
            rows.push_back(no_measure ? cmc::model_cost(m)
                                      : cmc::bench_forward(m, repeats, measure_spatial));
        }
    }

    std::printf("| %-12s | %10s | %8s | %10s | %9s | %11s | %9s |\n", "method", "trainable",
                "kernel", "conv GMac", "MAC ratio", "workset MB", "time ms");
    std::printf("|--------------|------------|----------|------------|-----------|-------------|-----------|\n");
    std::string csv = "method,trainable_ratio,kernel_ratio,conv_gmac,conv_mac_ratio,"
                      "estimation_mac,workset_mb,median_ms\n";
    char line[256];
    for (const cmc::BenchReport& r : rows) {
        if (r.median_ms >= 0)
            std::printf("| %-12s | %9.2fx | %7.2fx | %10.3f | %9.3f | %11.2f | %9.3f |\n",
                        r.label.c_str(), r.trainable_ratio, r.kernel_ratio, r.conv_gmac,
                        r.conv_macs_ratio, r.workset_mb, r.median_ms);
        else
            std::printf("| %-12s | %9.2fx | %7.2fx | %10.3f | %9.3f | %11.2f | %9s |\n",
                        r.label.c_str(), r.trainable_ratio, r.kernel_ratio, r.conv_gmac,
                        r.conv_macs_ratio, r.workset_mb, "-");
        std::snprintf(line, sizeof(line), "%s,%.6f,%.6f,%.6f,%.6f,%.1f,%.3f,%.4f\n",
                      r.label.c_str(), r.trainable_ratio, r.kernel_ratio, r.conv_gmac,
                      r.conv_macs_ratio, r.estimation_macs, r.workset_mb, r.median_ms);
        csv += line;
    }
    if (!csv_path.empty()) {
        std::ofstream f(csv_path, std::ios::trunc);
        if (!f) throw cmc::IoError("bench: cannot write " + csv_path);
        f << csv;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Continual-memory convolution experiments"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "train a task sequence from a config file");
    std::string config_path, resume, output;
    std::int64_t seed = -1;
    bool no_sharing = false, force = false, dump_images = false;
    run->add_option("--config", config_path, "experiment config (JSON)")->required();
    run->add_option("--resume", resume, "knowledge-base archive to continue from");
    run->add_flag("--no-sharing", no_sharing, "invert every task's knowledge_sharing flag");
    run->add_flag("--force", force, "resume even if the config hash differs");
    run->add_option("--seed", seed, "override the config seed");
    run->add_option("--output", output, "override the output directory");
    run->add_flag("--dump-images", dump_images, "write degraded/restored/clean triptych PNGs");
    int stop_after = 0;
    run->add_option("--stop-after", stop_after, "stop once this task is frozen and evaluated");

    auto* bench = app.add_subcommand("bench", "complexity comparison of expansion strategies");
    std::string shape = "64,64,3,1000,1000";
    std::string strategies = "plain,type1,type2,cmc";
    std::string csv_path;
    int repeats = 9, measure_spatial = 64;
    bool no_measure = false;
    bench->add_option("--shape", shape, "k_in,k_out,n,H,W for the analytic columns");
    bench->add_option("--strategies", strategies, "comma list: plain,type1,type2,cmc");
    bench->add_option("--repeats", repeats, "timing repeats (median reported)");
    bench->add_option("--measure-spatial", measure_spatial,
                      "spatial size for measured timings (0 = use the full shape)");
    bench->add_flag("--no-measure", no_measure, "analytic columns only");
    bench->add_option("--csv", csv_path, "also write the table as CSV");

    try {
        app.parse(argc, argv);
        if (run->parsed())
            return run_command(config_path, resume, no_sharing, force, seed, output, dump_images,
                               stop_after);
        return bench_command(shape, strategies, repeats, measure_spatial, no_measure, csv_path);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    } catch (const CLI::Error& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const cmc::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const cmc::CapacityExhausted& e) {
        std::cerr << "capacity error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
