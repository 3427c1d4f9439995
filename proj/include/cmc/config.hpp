// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "cmc/net.hpp"
#include "cmc/trainer.hpp"

namespace cmc {

/// Full experiment description. Parsed from JSON with unknown keys rejected;
/// the resolved form (all defaults filled in) is written next to the outputs
/// for provenance.
struct ExperimentConfig {
    std::uint64_t seed = 1;
    std::string precision = "float32";  // "float32" | "float64"
    std::string conv_backend = "im2col";  // "im2col" | "naive"
    std::string output_dir = "out";
    bool dump_images = false;
    NetGeometry network;
    TrainSchedule schedule;
    DataConfig data;
    std::vector<TaskSpec> tasks;
};

ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config_file(const std::string& path);
nlohmann::json config_to_json(const ExperimentConfig& c);

/// FNV-1a 64 hash of the canonical resolved-config dump, as hex.
std::string config_hash(const ExperimentConfig& c);

std::uint64_t fnv1a64(const void* data, std::size_t len);

}  // namespace cmc
