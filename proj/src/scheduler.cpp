// SPDX-License-Identifier: Apache-2.0
#include "triadapt/scheduler.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "triadapt/errors.hpp"

namespace triadapt {

namespace {

void check_window(long t, long t0, long T) {
    if (t0 < 0 || t0 >= T) {
        throw ScheduleError(fmt::format("threshold schedule needs 0 <= t0 < T, got t0 = {}, T = {}", t0, T));
    }
    if (t < t0) {
        throw ScheduleError(fmt::format("growth requested at t = {} inside the warm-up (t0 = {})", t, t0));
    }
    if (t > T) throw ScheduleError(fmt::format("growth requested at t = {} past the horizon T = {}", t, T));
}

void check_sites(int sites) {
    if (sites < 1) throw ScheduleError(fmt::format("threshold needs at least one site, got {}", sites));
}

int clamp_k(long k, int sites) { return static_cast<int>(std::clamp<long>(k, 1, sites)); }

}  // namespace

std::string_view mode_name(ThresholdMode m) noexcept {
    switch (m) {
        case ThresholdMode::linear: return "linear";
        case ThresholdMode::nonlinear: return "nonlinear";
        case ThresholdMode::fixed_k: return "fixed_k";
    }
    return "?";
}

ThresholdMode parse_threshold_mode(std::string_view name) {
    for (auto m : {ThresholdMode::linear, ThresholdMode::nonlinear, ThresholdMode::fixed_k}) {
        if (mode_name(m) == name) return m;
    }
    throw ConfigError(fmt::format("unknown threshold mode '{}' (expected linear, nonlinear or fixed_k)", name));
}

void ScheduleConfig::validate() const {
    if (warmup_steps < 0) throw ConfigError(fmt::format("warmup_steps must be >= 0, got {}", warmup_steps));
    if (total_steps < 1) throw ConfigError(fmt::format("total_steps must be >= 1, got {}", total_steps));
    if (incre_interval < 1) throw ConfigError(fmt::format("incre_interval must be >= 1, got {}", incre_interval));
    if (k_fixed < 1) throw ConfigError(fmt::format("k_fixed must be >= 1, got {}", k_fixed));
}

double alpha_fraction(long t, long t0, long T) {
    check_window(t, t0, T);
    return static_cast<double>(t - t0) / static_cast<double>(T - t0);
}

int linear_k(long remaining, long t, long t0, long T, int sites) {
    check_window(t, t0, T);
    check_sites(sites);
    if (remaining < 0) throw ScheduleError(fmt::format("linear threshold with negative budget {}", remaining));
    // ceil(R (t - t0) / (T - t0)) without rounding error.
    const long num = remaining * (t - t0);
    const long den = T - t0;
    return clamp_k((num + den - 1) / den, sites);
}

int nonlinear_k(long remaining, long t, long t0, long T, int sites) {
    check_window(t, t0, T);
    check_sites(sites);
    if (remaining < 1) {
        throw ScheduleError(fmt::format("nonlinear threshold needs a positive budget, got {}", remaining));
    }
    const double a = alpha_fraction(t, t0, T);
    const double y = std::exp(a * std::log(static_cast<double>(remaining)));
    // exp/log can land a hair above an exact integer power (16^0.5 -> 4.000000000000001).
    const double nearest = std::round(y);
    const double k = std::abs(y - nearest) <= 1e-9 * std::max(1.0, y) ? nearest : std::ceil(y);
    return clamp_k(static_cast<long>(k), sites);
}

int threshold_k(const ScheduleConfig& config, long remaining, long t, int sites) {
    switch (config.mode) {
        case ThresholdMode::linear:
            return linear_k(remaining, t, config.warmup_steps, config.total_steps, sites);
        case ThresholdMode::nonlinear:
            return nonlinear_k(remaining, t, config.warmup_steps, config.total_steps, sites);
        case ThresholdMode::fixed_k:
            check_sites(sites);
            return clamp_k(config.k_fixed, sites);
    }
    throw ScheduleError("unknown threshold mode");
}

bool is_growth_step(const ScheduleConfig& config, long t) noexcept {
    if (t <= config.warmup_steps || t > config.total_steps) return false;
    return (t - config.warmup_steps) % config.incre_interval == 0;
}

GrowthSelection select_growth_set(const std::map<SiteId, double>& scores, int k) {
    if (scores.empty()) throw ScheduleError("cannot select growth sites from an empty score board");
    if (k < 1) throw ScheduleError(fmt::format("growth set size must be >= 1, got {}", k));
    std::vector<std::pair<SiteId, double>> ranked(scores.begin(), scores.end());
    // The map is ordered by site id, so a stable sort on score alone breaks ties by id.
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& x, const auto& y) { return x.second > y.second; });
    const auto take = std::min<std::size_t>(static_cast<std::size_t>(k), ranked.size());
    GrowthSelection sel;
    sel.sites.reserve(take);
    for (std::size_t i = 0; i < take; ++i) sel.sites.push_back(ranked[i].first);
    sel.threshold = ranked[take - 1].second;
    return sel;
}

GrowthSelection select_growth_set(const ScoreBoard& board, int k) { return select_growth_set(board.scores(), k); }

BudgetState make_budget(int reference_rank, int sites, int initial_rank, int delta_r) {
    if (reference_rank < 1) throw ConfigError(fmt::format("reference rank must be >= 1, got {}", reference_rank));
    if (sites < 1) throw ConfigError(fmt::format("budget needs at least one site, got {}", sites));
    if (initial_rank < 1) throw ConfigError(fmt::format("initial rank must be >= 1, got {}", initial_rank));
    if (delta_r < 1) throw ConfigError(fmt::format("rank increment must be >= 1, got {}", delta_r));
    BudgetState b;
    b.initial = static_cast<long>(reference_rank) * sites;
    b.remaining = b.initial;
    b.reference_rank = reference_rank;
    b.sites = sites;
    b.initial_rank = initial_rank;
    b.delta_r = delta_r;
    return b;
}

BudgetState consume_budget(BudgetState budget, int k) {
    if (budget.remaining <= 0) {
        throw ScheduleError(fmt::format("rank budget exhausted (R = {}); no further growth allowed", budget.remaining));
    }
    if (budget.update_index == 0) {
        budget.remaining -= static_cast<long>(budget.initial_rank) * budget.sites;
    } else {
        if (k < 1) throw ScheduleError(fmt::format("budget update with k = {}", k));
        budget.remaining -= static_cast<long>(budget.delta_r) * k;
    }
    ++budget.update_index;
    return budget;
}

}  // namespace triadapt
