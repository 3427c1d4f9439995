// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>

#include "cmc/config.hpp"
#include "cmc/trainer.hpp"

namespace cmc {

struct RunOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> output_dir;
    bool flip_sharing = false;        // invert every task's knowledge_sharing
    std::string resume_archive;       // continue from this knowledge base
    bool force_resume = false;        // accept a config-hash mismatch
    std::optional<bool> dump_images;
    int stop_after_task = 0;          // 0 = run the full sequence
};

struct RunSummary {
    SequenceReport report;
    std::string output_dir;
    std::string archive_path;
    std::string report_csv_path;
    std::string config_hash;
};

/// Execute a full sequential experiment: writes the resolved config, a JSONL
/// log (timestamp only in the header line), the task x after-task PSNR matrix
/// as CSV, and the knowledge-base archive after every task freeze.
RunSummary run_experiment(ExperimentConfig config, const RunOverrides& overrides = {});

/// The CSV text for a report matrix (stable formatting; used by run and tests).
std::string report_matrix_csv(const std::vector<TaskSpec>& specs, const SequenceReport& report);

}  // namespace cmc
