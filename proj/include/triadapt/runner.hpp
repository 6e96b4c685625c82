// SPDX-License-Identifier: Apache-2.0
//
// Multi-seed execution of an experiment config. Each seed gets its own base
// model, planted task and training run, written to output_dir/seed_<s>/, and
// summary.tsv aggregates mean and sample std per metric over completed seeds.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "triadapt/experiment.hpp"
#include "triadapt/trainer.hpp"

namespace triadapt {

struct SeedRun {
    std::uint64_t seed = 0;
    std::filesystem::path dir;
    RunRecord record;
    bool numerical_failure = false;
};

struct ExperimentResult {
    std::vector<SeedRun> runs;
    std::filesystem::path summary;

    bool all_complete() const noexcept;
};

/// Runs one seed in memory; throws TrainingFailure like run_training.
RunRecord run_seed(const ExperimentConfig& config, std::uint64_t seed);

/// Runs every seed and writes the records. A failing seed still leaves its
/// partial record; the remaining seeds run regardless.
ExperimentResult run_experiment(const ExperimentConfig& config);

struct MetricSummary {
    std::string metric;
    double mean = 0.0;
    double std = 0.0;
    int n = 0;
};

std::vector<MetricSummary> summarize(const std::vector<RunRecord>& records);

std::filesystem::path seed_dir(const ExperimentConfig& config, std::uint64_t seed);

}  // namespace triadapt
