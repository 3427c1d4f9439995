// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cmc/net.hpp"
#include "cmc/trainer.hpp"

namespace cmc {

struct TaskRegistryEntry {
    int task_id = 0;
    std::string name;
    bool knowledge_sharing = true;
};

struct ArchiveMeta {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string precision;  // "float32" | "float64"
    NetGeometry geometry;
    int frozen_through = 0;
    std::vector<TaskRegistryEntry> tasks;
    std::vector<ReportEntry> report;  // evaluation matrix accumulated so far
};

/// Single-file knowledge-base container: fixed header (magic, version,
/// payload size, FNV-1a checksum), a JSON metadata block, then per layer the
/// raw memory matrix, packed mask bitmaps, task vectors and biases in native
/// IEEE-754 little-endian. Round trips are bit-exact; writes go through a
/// temp file + rename.
template <typename T>
void save_archive(const std::string& path, const RestorationNet<T>& net, const ArchiveMeta& meta);

/// Verify and read the metadata block only.
ArchiveMeta peek_archive_meta(const std::string& path);

/// Verify, read, and rebuild the full network state. The requested scalar
/// type must match the archived precision.
template <typename T>
std::pair<ArchiveMeta, RestorationNet<T>> load_archive(const std::string& path);

}  // namespace cmc
