// SPDX-License-Identifier: Apache-2.0
//
// Global rank budget and the choice of how many sites grow at each
// rank-update boundary.
//
//   R(0)   = r_ref * M
//   R(1)   = R(0) - r_init * M                       first consume_budget call
//   R(t)   = R(t-1) - delta_r * k(t-1)               every later call
//   linear:    k = max(ceil(R * a), 1),   a = (t - t0) / (T - t0)
//   nonlinear: k = max(ceil(exp(a * log R)), 1)
//   fixed_k:   k = k_fixed
//
// k is clamped to the number of sites. Growth stops for good once R <= 0.

#pragma once

#include <functional>
#include <map>
#include <string_view>
#include <vector>

#include "triadapt/importance.hpp"
#include "triadapt/site.hpp"

namespace triadapt {

enum class ThresholdMode { linear, nonlinear, fixed_k };

std::string_view mode_name(ThresholdMode m) noexcept;
ThresholdMode parse_threshold_mode(std::string_view name);

struct ScheduleConfig {
    ThresholdMode mode = ThresholdMode::linear;
    long warmup_steps = 0;  ///< t0
    long total_steps = 1;   ///< T
    int k_fixed = 1;
    long incre_interval = 1;

    /// Throws ConfigError. warmup_steps >= total_steps is legal and disables growth.
    void validate() const;

    bool operator==(const ScheduleConfig&) const = default;
};

/// (t - t0) / (T - t0). Throws ScheduleError for t outside [t0, T] or t0 >= T.
double alpha_fraction(long t, long t0, long T);

/// max(ceil(R * alpha), 1) clamped to `sites`, computed in exact integer arithmetic.
int linear_k(long remaining, long t, long t0, long T, int sites);

/// max(ceil(R^alpha), 1) clamped to `sites`. Requires R >= 1.
int nonlinear_k(long remaining, long t, long t0, long T, int sites);

/// k for the configured mode at step t.
int threshold_k(const ScheduleConfig& config, long remaining, long t, int sites);

/// True when t is a rank-update boundary: t <= T and t - t0 a positive multiple of the interval.
bool is_growth_step(const ScheduleConfig& config, long t) noexcept;

struct GrowthSelection {
    std::vector<SiteId> sites;  ///< by descending score, ties by ascending site id
    double threshold = 0.0;     ///< S_theta: smallest selected score
};

/// The k highest-scoring sites (all of them if k exceeds the count).
GrowthSelection select_growth_set(const std::map<SiteId, double>& scores, int k);
GrowthSelection select_growth_set(const ScoreBoard& board, int k);

struct BudgetState {
    long remaining = 0;  ///< R(t)
    long initial = 0;    ///< R(0) = r_ref * M
    int reference_rank = 0;
    int sites = 0;
    int initial_rank = 1;
    int delta_r = 1;
    int update_index = 0;  ///< completed consume_budget calls

    bool open() const noexcept { return remaining > 0; }
};

BudgetState make_budget(int reference_rank, int sites, int initial_rank, int delta_r);

/// One budget update. The first call deducts r_init * M and ignores k;
/// later calls deduct delta_r * k. Throws ScheduleError when the budget is already spent.
BudgetState consume_budget(BudgetState budget, int k);

struct GrowthEvent {
    long t = 0;
    int k = 0;
    double threshold = 0.0;
    std::vector<SiteId> selected;
    long budget_before = 0;
    long budget_after = 0;

    bool operator==(const GrowthEvent&) const = default;
};

}  // namespace triadapt
