// SPDX-License-Identifier: Apache-2.0
//
// Synthetic fine-tuning tasks with a planted low-rank teacher: the teacher is
// the frozen base model with a rank-`planted_rank` perturbation added to a few
// of its weight sites, so the "right" adapter rank is known per site.

#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "triadapt/model.hpp"

namespace triadapt {

enum class TaskKind { regression, classification };

std::string_view task_kind_name(TaskKind k) noexcept;
TaskKind parse_task_kind(std::string_view name);

struct TaskSpec {
    TaskKind kind = TaskKind::regression;
    int train_samples = 512;
    int eval_samples = 256;
    int tokens = 1;  ///< rows per sample; the mlp ignores ordering across tokens
    double noise_std = 0.0;
    int planted_rank = 4;
    int planted_sites = 2;  ///< how many sites carry a perturbation, chosen by seed
    double planted_scale = 1.0;

    void validate() const;

    bool operator==(const TaskSpec&) const = default;
};

struct Sample {
    Matrix x;                 ///< tokens x dim
    Matrix y;                 ///< regression target, tokens x dim
    std::vector<int> labels;  ///< classification target, one per token
};

struct SyntheticTask {
    TaskKind kind = TaskKind::regression;
    std::vector<Sample> train;
    std::vector<Sample> eval;
    std::vector<SiteId> planted;  ///< sites whose teacher weight differs from the base
};

/// Builds the teacher from `base` (which must have only frozen sites) and samples data.
SyntheticTask make_planted_task(const ToyModel& base, const TaskSpec& spec, std::uint64_t seed);

/// Mean squared error over all outputs, or mean softmax cross-entropy over tokens.
double sample_loss(TaskKind kind, const Matrix& output, const Sample& sample);

/// dLoss/doutput of sample_loss.
Matrix sample_loss_grad(TaskKind kind, const Matrix& output, const Sample& sample);

/// Mean sample_loss of the model over a data set.
double dataset_loss(const ToyModel& model, TaskKind kind, std::span<const Sample> data);

}  // namespace triadapt
