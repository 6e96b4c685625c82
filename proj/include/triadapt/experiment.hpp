// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration file. YAML with six sections; every key is
// optional and falls back to the defaults of the underlying structs, but an
// unknown key anywhere is a SchemaError naming its dotted path.
//
//   run:      seeds, output_dir
//   model:    topology, dim, layers, activation, base_std
//   task:     kind, train_samples, eval_samples, tokens, noise_std,
//             planted_rank, planted_sites, planted_scale
//   adapter:  method, alpha, epsilon, init_std, init_policy, lora_rank, dropout
//   schedule: mode, warmup_steps, total_steps, incre_interval, incre_rank,
//             reference_rank, k_fixed, norm_variant
//   train:    optimizer, learning_rate, weight_decay, beta1, beta2,
//             adam_epsilon, batch_size, orth_coefficient, orth_enabled

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "triadapt/model.hpp"
#include "triadapt/task.hpp"
#include "triadapt/trainer.hpp"

namespace triadapt {

struct ExperimentConfig {
    std::vector<std::uint64_t> seeds{0};
    std::string output_dir = "runs";
    ModelSpec model;
    TaskSpec task;
    TrainConfig train;  ///< train.seed is overwritten per run

    void validate() const;

    bool operator==(const ExperimentConfig&) const = default;
};

/// Throws SchemaError for unknown keys or ill-typed values, ConfigError for bad values.
ExperimentConfig parse_config(std::string_view yaml);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Every field, doubles in shortest round-trip form: parse_config(emit_config(c)) == c.
std::string emit_config(const ExperimentConfig& config);

/// The config of a single seed's run.
ExperimentConfig single_seed(const ExperimentConfig& config, std::uint64_t seed);

/// 16 hex digits of FNV-1a over the emitted config.
std::string run_id(const ExperimentConfig& config);

}  // namespace triadapt
