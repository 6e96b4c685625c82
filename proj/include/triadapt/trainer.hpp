// SPDX-License-Identifier: Apache-2.0
//
// Training loop for the toy hosts. At every rank-update boundary past the
// warm-up, while the rank budget is positive, the loop scores all adapter
// sites, picks k of them by threshold, grows each by delta_r and charges the
// budget; every step then applies one optimizer update with linear LR decay
// and decoupled weight decay.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "triadapt/checkpoint.hpp"
#include "triadapt/errors.hpp"
#include "triadapt/importance.hpp"
#include "triadapt/model.hpp"
#include "triadapt/scheduler.hpp"
#include "triadapt/task.hpp"

namespace triadapt {

/// triadapt: growing L+U adapters. lora: fixed-rank adapters with D = I.
/// full: every weight trained directly. frozen: no trainable parameters.
enum class Method { triadapt, lora, full, frozen };
enum class OptimizerKind { sgd, adamw };

std::string_view method_name(Method m) noexcept;
Method parse_method(std::string_view name);
std::string_view optimizer_name(OptimizerKind k) noexcept;
OptimizerKind parse_optimizer(std::string_view name);

struct TrainConfig {
    Method method = Method::triadapt;
    OptimizerKind optimizer = OptimizerKind::sgd;
    double learning_rate = 1e-2;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    int batch_size = 16;

    double orth_coefficient = 0.1;
    bool orth_enabled = true;
    NormVariant norm_variant = NormVariant::by_rank;
    ScheduleConfig schedule;
    int reference_rank = 8;
    int incre_rank = 1;  ///< delta_r

    double alpha = 16.0;
    double epsilon = 1e-6;
    double init_std = 0.02;
    InitPolicy init_policy = InitPolicy::gaussian;
    int lora_rank = 4;
    double adapter_dropout = 0.0;

    std::uint64_t seed = 0;

    void validate() const;
    long total_steps() const noexcept { return schedule.total_steps; }

    bool operator==(const TrainConfig&) const = default;
};

/// Initial rank of every growing adapter.
inline constexpr int kInitialRank = 1;

/// Replaces the frozen sites of `base` according to config.method. Adapter
/// site i draws its initial factors from Rng(seed XOR i).
ToyModel prepare_model(const ToyModel& base, const TrainConfig& config);

struct LossAndGrads {
    double loss = 0.0;       ///< task + orth_coefficient * orth
    double task_loss = 0.0;  ///< mean over the batch
    double orth = 0.0;       ///< summed penalty over adapter sites (0 when disabled)
    ModelGrads grads;
};

/// Mean task loss over the batch plus the orthogonality term, with gradients
/// for every trainable parameter. `dropout` is optional.
LossAndGrads loss_and_grads(const ToyModel& model, TaskKind kind, std::span<const Sample> batch,
                            const TrainConfig& config, Rng* dropout = nullptr);

/// The scalar that loss_and_grads differentiates, without dropout.
double batch_loss(const ToyModel& model, TaskKind kind, std::span<const Sample> batch, const TrainConfig& config);

/// loss_and_grads for a plain-LoRA model; requires every adapter to have D pinned to I.
LossAndGrads lora_baseline_step(const ToyModel& model, TaskKind kind, std::span<const Sample> batch,
                                const TrainConfig& config, Rng* dropout = nullptr);

/// SGD or AdamW over the trainable parameters of a model, with decoupled weight decay.
class Optimizer {
public:
    Optimizer(const TrainConfig& config, const ToyModel& model);

    void step(ToyModel& model, const ModelGrads& grads, double lr);
    /// Zero-pads the moment buffers of a site after it grew.
    void on_growth(const ToyModel& model, std::size_t site_index);

private:
    struct Moments {
        Matrix m;
        Matrix v;
    };
    void update(Matrix& param, const Matrix& grad, Moments* moments, double lr) const;

    TrainConfig config_;
    long steps_ = 0;
    std::vector<std::vector<Moments>> moments_;  // per site: dense {W} or adapter {A, B, L, U}
};

/// lr0 * (T - t + 1) / T for t in [1, T].
double learning_rate_at(const TrainConfig& config, long t);

struct StepMetrics {
    long t = 0;
    double loss = 0.0;
    double task_loss = 0.0;
    double orth = 0.0;
    double lr = 0.0;
    long budget = 0;
};

struct ScoreSnapshot {
    long t = 0;
    SiteId site;
    int rank = 0;
    double norm = 0.0;
    double normalized = 0.0;
    double score = 0.0;
};

struct Checkpoint {
    long t = 0;
    std::string kind;  ///< "init", "eval" (scored, before growth) or "final"
    std::vector<AdapterRecord> adapters;
};

struct RankEntry {
    SiteId site;
    int rank = 0;
};

struct RunRecord {
    std::vector<StepMetrics> steps;
    std::vector<GrowthEvent> growth;
    std::vector<ScoreSnapshot> scores;
    std::vector<Checkpoint> checkpoints;
    std::vector<RankEntry> final_ranks;
    std::vector<SiteId> planted;

    double initial_eval_loss = 0.0;
    double final_eval_loss = 0.0;
    double final_train_loss = 0.0;
    long budget_initial = 0;
    long budget_final = 0;
    long trainable_params = 0;
    std::uint64_t frozen_hash_before = 0;
    std::uint64_t frozen_hash_after = 0;
    std::uint64_t flops = 0;
    std::uint64_t score_flops = 0;

    bool complete = false;
    long failed_step = 0;
    std::string failed_site;
    std::string failure;
    double wall_seconds = 0.0;
};

/// Carries the partial record of a run that stopped on an error.
class TrainingFailure : public Error {
public:
    TrainingFailure(RunRecord record, const std::string& message, bool numerical)
        : Error(message), record_(std::move(record)), numerical_(numerical) {}

    const RunRecord& record() const noexcept { return record_; }
    bool numerical() const noexcept { return numerical_; }

private:
    RunRecord record_;
    bool numerical_;
};

/// Trains `model` in place for config.total_steps() steps. Throws TrainingFailure.
RunRecord run_training(ToyModel& model, const SyntheticTask& task, const TrainConfig& config);

}  // namespace triadapt
