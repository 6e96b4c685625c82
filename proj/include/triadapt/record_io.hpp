// SPDX-License-Identifier: Apache-2.0
//
// On-disk run record, one directory per seed:
//
//   config.yaml         the single-seed config that reproduces the run
//   record.json         run id, status, losses, budget, counters, final ranks
//   metrics.tsv         t loss task_loss orth lr budget
//   scores.tsv          t site rank norm normalized score
//   growth.tsv          t k s_theta selected budget_before budget_after
//   checkpoints/*.json  adapter records at init, every evaluation, and the end
//   timing.json         wall-clock seconds (kept apart so the rest is reproducible)
//
// Every double is written in shortest round-trip form.

#pragma once

#include <filesystem>
#include <string>

#include "triadapt/experiment.hpp"
#include "triadapt/trainer.hpp"

namespace triadapt {

struct LoadedRun {
    ExperimentConfig config;
    std::string run_id;
    std::uint64_t seed = 0;
    std::string method;
    RunRecord record;
};

/// Writes (or overwrites) the record directory. Throws IoError.
void write_run_record(const std::filesystem::path& dir, const ExperimentConfig& config, const RunRecord& record);

/// Reads everything back. Throws IoError for missing or malformed files.
LoadedRun read_run_record(const std::filesystem::path& dir);

/// A double as written to the record files.
std::string format_double(double v);

}  // namespace triadapt
