// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <algorithm>
#include <numeric>

#include "scheduler_oracle.hpp"
#include "triadapt/errors.hpp"
#include "triadapt/scheduler.hpp"

using namespace triadapt;

namespace {

const SiteId a{0, Role::q}, b{0, Role::k}, c{0, Role::v};

}  // namespace

TEST_CASE("alpha_fraction examples and domain") {
    CHECK(alpha_fraction(2, 2, 10) == 0.0);
    CHECK(alpha_fraction(10, 2, 10) == 1.0);
    CHECK(alpha_fraction(6, 2, 10) == 0.5);
    CHECK_THROWS_AS(alpha_fraction(1, 2, 10), ScheduleError);
    CHECK_THROWS_AS(alpha_fraction(11, 2, 10), ScheduleError);
    CHECK_THROWS_AS(alpha_fraction(5, 5, 5), ScheduleError);
    double last = -1.0;
    for (long t = 2; t <= 10; ++t) {
        const double v = alpha_fraction(t, 2, 10);
        CHECK(v >= last);
        last = v;
    }
}

TEST_CASE("linear_k examples") {
    CHECK(linear_k(10, 2, 2, 12, 100) == 1);   // alpha 0, lower bound
    CHECK(linear_k(10, 7, 2, 12, 100) == 5);   // alpha 0.5
    CHECK(linear_k(7, 3, 0, 10, 100) == 3);    // ceil(2.1)
    CHECK(linear_k(64, 10, 0, 10, 6) == 6);    // clamp to M
    CHECK(linear_k(0, 5, 0, 10, 6) == 1);
    CHECK_THROWS_AS(linear_k(-1, 5, 0, 10, 6), ScheduleError);
}

TEST_CASE("nonlinear_k examples") {
    CHECK(nonlinear_k(37, 4, 4, 20, 100) == 1);   // alpha 0
    CHECK(nonlinear_k(37, 20, 4, 20, 100) == 37); // alpha 1
    CHECK(nonlinear_k(16, 5, 0, 10, 100) == 4);   // 16^0.5
    CHECK(nonlinear_k(16, 10, 0, 10, 6) == 6);
    CHECK_THROWS_AS(nonlinear_k(0, 5, 0, 10, 6), ScheduleError);
}

TEST_CASE("thresholds match the exact oracles on an exhaustive grid") {
    const std::vector<std::pair<long, long>> windows{{0, 1}, {0, 10}, {2, 10}, {3, 50}, {10, 130}};
    for (const auto& [t0, T] : windows) {
        for (long t = t0; t <= T; ++t) {
            for (long R = 1; R <= 64; ++R) {
                for (int sites : {6, 1000}) {
                    CHECK(linear_k(R, t, t0, T, sites) == sched_oracle::linear_k(R, t, t0, T, sites));
                    CHECK(nonlinear_k(R, t, t0, T, sites) == sched_oracle::nonlinear_k(R, t, t0, T, sites));
                }
            }
        }
    }
}

TEST_CASE("threshold endpoints agree across modes") {
    for (long R = 1; R <= 64; ++R) {
        CHECK(linear_k(R, 3, 3, 40, 1000) == 1);
        CHECK(nonlinear_k(R, 3, 3, 40, 1000) == 1);
        CHECK(linear_k(R, 40, 3, 40, 1000) == R);
        CHECK(nonlinear_k(R, 40, 3, 40, 1000) == R);
    }
}

TEST_CASE("threshold_k dispatches on mode") {
    ScheduleConfig cfg{.mode = ThresholdMode::fixed_k, .warmup_steps = 0, .total_steps = 10, .k_fixed = 2,
                       .incre_interval = 1};
    CHECK(threshold_k(cfg, 30, 5, 6) == 2);
    cfg.k_fixed = 9;
    CHECK(threshold_k(cfg, 30, 5, 6) == 6);
    cfg.mode = ThresholdMode::linear;
    CHECK(threshold_k(cfg, 30, 5, 100) == 15);
    cfg.mode = ThresholdMode::nonlinear;
    CHECK(threshold_k(cfg, 36, 5, 100) == 6);
}

TEST_CASE("growth steps") {
    const ScheduleConfig cfg{.mode = ThresholdMode::linear, .warmup_steps = 5, .total_steps = 20, .k_fixed = 1,
                             .incre_interval = 5};
    std::vector<long> steps;
    for (long t = 0; t <= 30; ++t) {
        if (is_growth_step(cfg, t)) steps.push_back(t);
    }
    CHECK(steps == std::vector<long>{10, 15, 20});
}

TEST_CASE("schedule config validation") {
    ScheduleConfig cfg;
    cfg.total_steps = 10;
    cfg.warmup_steps = 10;
    CHECK_NOTHROW(cfg.validate());  // warm-up covering the run simply means no growth
    cfg.incre_interval = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.incre_interval = 1;
    cfg.warmup_steps = -1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.warmup_steps = 0;
    cfg.k_fixed = 0;
    cfg.mode = ThresholdMode::fixed_k;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("select_growth_set examples") {
    SUBCASE("top two") {
        const auto sel = select_growth_set({{a, 0.3}, {b, 0.1}, {c, 0.2}}, 2);
        CHECK(sel.sites == std::vector<SiteId>{a, c});
        CHECK(sel.threshold == 0.2);
    }
    SUBCASE("k = M selects all") {
        const auto sel = select_growth_set({{a, 0.3}, {b, 0.1}, {c, 0.2}}, 3);
        CHECK(sel.sites.size() == 3);
        CHECK(sel.threshold == 0.1);
    }
    SUBCASE("k > M selects all") {
        CHECK(select_growth_set({{a, 0.3}, {b, 0.1}}, 5).sites.size() == 2);
    }
    SUBCASE("tie broken by site id") {
        const auto sel = select_growth_set({{b, 0.2}, {a, 0.2}}, 1);
        CHECK(sel.sites == std::vector<SiteId>{a});
    }
    CHECK_THROWS_AS(select_growth_set(std::map<SiteId, double>{}, 1), ScheduleError);
    CHECK_THROWS_AS(select_growth_set({{a, 1.0}}, 0), ScheduleError);
}

TEST_CASE("select_growth_set matches a brute-force oracle, ties included") {
    Rng rng(77);
    for (int trial = 0; trial < 500; ++trial) {
        std::map<SiteId, double> scores;
        const int m = 1 + static_cast<int>(rng.below(12));
        for (int i = 0; i < m; ++i) {
            // Few distinct values so ties are common.
            scores[SiteId{i / 6, kAttentionRoles[static_cast<std::size_t>(i % 6)]}] =
                static_cast<double>(rng.below(4)) - 1.5;
        }
        const int k = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(m) + 2));
        const auto sel = select_growth_set(scores, k);
        const auto want = sched_oracle::select(scores, k);
        CHECK(sel.sites == want.first);
        CHECK(sel.threshold == want.second);
        for (const auto& s : sel.sites) CHECK(scores.at(s) >= sel.threshold);
    }
}

TEST_CASE("consume_budget examples") {
    BudgetState bud = make_budget(8, 72, 1, 1);
    CHECK(bud.initial == 576);
    CHECK(bud.remaining == 576);
    bud = consume_budget(bud, 99);
    CHECK(bud.remaining == 504);

    BudgetState small = make_budget(10, 1, 1, 4);
    small.remaining = 10;
    small.update_index = 1;
    small = consume_budget(small, 2);
    CHECK(small.remaining == 2);
    small = consume_budget(small, 1);
    CHECK(small.remaining == -2);
    CHECK_FALSE(small.open());
    CHECK_THROWS_AS(consume_budget(small, 1), ScheduleError);
}

TEST_CASE("budget conservation over random schedules") {
    Rng rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        const int m = 1 + static_cast<int>(rng.below(10));
        const int r_ref = 1 + static_cast<int>(rng.below(8));
        const int dr = 1 + static_cast<int>(rng.below(4));
        const auto mode = static_cast<ThresholdMode>(rng.below(3));
        const ScheduleConfig cfg{.mode = mode,
                                 .warmup_steps = static_cast<long>(rng.below(20)),
                                 .total_steps = 30 + static_cast<long>(rng.below(100)),
                                 .k_fixed = 1 + static_cast<int>(rng.below(4)),
                                 .incre_interval = 1 + static_cast<long>(rng.below(10))};
        BudgetState bud = consume_budget(make_budget(r_ref, m, 1, dr), 0);
        long k_sum = 0;
        bool closed = !bud.open();
        for (long t = 1; t <= cfg.total_steps; ++t) {
            if (!is_growth_step(cfg, t)) continue;
            CHECK(t > cfg.warmup_steps);
            if (!bud.open()) {
                closed = true;
                continue;
            }
            CHECK_FALSE(closed);
            const int k = threshold_k(cfg, bud.remaining, t, m);
            const long before = bud.remaining;
            bud = consume_budget(bud, k);
            CHECK(bud.remaining < before);
            k_sum += k;
        }
        CHECK(static_cast<long>(m) + dr * k_sum == bud.initial - bud.remaining);
        CHECK(bud.remaining > -static_cast<long>(dr) * m);
    }
}
