// SPDX-License-Identifier: Apache-2.0
//
// Small experiment configs shared by the trainer, CLI and acceptance tests.

#pragma once

#include <filesystem>
#include <string>

#include "triadapt/experiment.hpp"

namespace fixture {

/// A run that grows a few times in well under a second.
inline triadapt::ExperimentConfig small_run(triadapt::Topology topology = triadapt::Topology::mlp) {
    using namespace triadapt;
    ExperimentConfig c;
    c.seeds = {1};
    c.model.topology = topology;
    c.model.dim = 6;
    c.model.layers = 3;
    c.task.train_samples = 64;
    c.task.eval_samples = 32;
    c.task.tokens = topology == Topology::mlp ? 1 : 3;
    c.task.planted_rank = 2;
    c.task.planted_sites = 2;
    c.train.schedule = {.mode = ThresholdMode::linear, .warmup_steps = 10, .total_steps = 60, .k_fixed = 1,
                        .incre_interval = 10};
    c.train.reference_rank = 3;
    c.train.batch_size = 8;
    c.train.learning_rate = 0.05;
    c.train.seed = 1;
    return c;
}

/// A fresh, empty scratch directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("triadapt_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace fixture
