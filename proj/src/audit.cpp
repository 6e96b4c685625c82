// SPDX-License-Identifier: Apache-2.0
#include "triadapt/audit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <fmt/format.h>

#include "triadapt/errors.hpp"

namespace triadapt {

namespace fs = std::filesystem;

namespace {

constexpr double kTolerance = 1e-9;

bool close(double a, double b) { return std::abs(a - b) <= kTolerance * std::max(1.0, std::abs(b)); }

// Deliberately not shared with the trainer: verify recomputes from the raw
// matrices with its own arithmetic.
double brute_norm(const AdapterRecord& a) {
    double total = 0.0;
    for (std::size_t i = 0; i < a.l.rows(); ++i) {
        for (std::size_t j = 0; j < a.l.cols(); ++j) {
            const double v = a.l(i, j) + a.u(i, j);
            total += v * v;
        }
    }
    return std::sqrt(total);
}

double rank_normalized(double norm, int rank, const std::string& variant) {
    if (variant == "by_rank") return norm / rank;
    if (variant == "by_sqrt_rank") return norm / std::sqrt(static_cast<double>(rank));
    return norm;
}

long expected_k(const ScheduleConfig& s, long remaining, long t, int sites) {
    long k = 0;
    if (s.mode == ThresholdMode::fixed_k) return std::min<long>(s.k_fixed, sites);
    const long span = s.total_steps - s.warmup_steps;
    const long done = t - s.warmup_steps;
    if (s.mode == ThresholdMode::linear) {
        k = (remaining * done + span - 1) / span;
    } else {
        const double v = std::pow(static_cast<double>(remaining), static_cast<double>(done) / static_cast<double>(span));
        const double nearest = std::round(v);
        k = std::abs(v - nearest) <= 1e-9 * std::max(1.0, v) ? static_cast<long>(nearest)
                                                                    : static_cast<long>(std::ceil(v));
    }
    return std::clamp<long>(k, 1, sites);
}

std::string ckpt_name(const Checkpoint& c) { return fmt::format("checkpoint t{:06d}_{}", c.t, c.kind); }

class Auditor {
public:
    explicit Auditor(const LoadedRun& run) : run_(run), rec_(run.record), cfg_(run.config.train) {}

    VerifyReport run() {
        check_identity();
        for (const auto& c : rec_.checkpoints) check_structure(c);
        if (rec_.complete) {
            check(rec_.frozen_hash_before == rec_.frozen_hash_after, "record.json",
                  fmt::format("frozen weights changed: hash {:016x} before, {:016x} after", rec_.frozen_hash_before,
                              rec_.frozen_hash_after));
        }
        const Checkpoint* init = find("init", 0);
        if (!check(init != nullptr, "checkpoints", "no init checkpoint")) return std::move(report_);
        if (cfg_.method == Method::triadapt) {
            replay_growth(*init);
        } else {
            check(rec_.growth.empty(), "growth.tsv", "growth events in a run without rank growth");
            check(rec_.scores.empty(), "scores.tsv", "score rows in a run without rank growth");
            std::map<SiteId, int> ranks;
            for (const auto& a : init->adapters) ranks[a.site] = a.r;
            check_final(ranks);
        }
        return std::move(report_);
    }

private:
    bool check(bool ok, std::string location, std::string message) {
        ++report_.checks;
        if (!ok) report_.findings.push_back({std::move(location), std::move(message)});
        return ok;
    }

    const Checkpoint* find(std::string_view kind, long t) const {
        for (const auto& c : rec_.checkpoints) {
            if (c.kind == kind && c.t == t) return &c;
        }
        return nullptr;
    }

    void check_identity() {
        check(run_id(run_.config) == run_.run_id, "record.json",
              fmt::format("run id {} does not match the echoed config ({})", run_.run_id, run_id(run_.config)));
        check(run_.seed == cfg_.seed, "record.json",
              fmt::format("seed {} differs from the config seed {}", run_.seed, cfg_.seed));
    }

    void check_structure(const Checkpoint& c) {
        for (const auto& a : c.adapters) {
            const std::string where = fmt::format("{} {}", ckpt_name(c), to_string(a.site));
            check(a.r <= std::min(a.d, a.n), where, fmt::format("rank {} exceeds min(d, n) = {}", a.r, std::min(a.d, a.n)));
            for (std::size_t i = 0; i < a.l.rows(); ++i) {
                for (std::size_t j = 0; j < a.l.cols(); ++j) {
                    if (j > i) {
                        check(a.l(i, j) == 0.0, where, fmt::format("L({},{}) = {} above the diagonal", i, j, a.l(i, j)));
                    } else {
                        check(a.u(i, j) == 0.0, where, fmt::format("U({},{}) = {} on or below the diagonal", i, j, a.u(i, j)));
                    }
                    if (!a.transform_trainable) {
                        const double want = i == j ? 1.0 : 0.0;
                        check(a.l(i, j) + a.u(i, j) == want, where,
                              fmt::format("pinned transform differs from I at ({},{})", i, j));
                    }
                }
            }
        }
    }

    void replay_growth(const Checkpoint& init) {
        const int sites = static_cast<int>(init.adapters.size());
        const long r0 = static_cast<long>(cfg_.reference_rank) * sites;
        const std::string variant(variant_name(cfg_.norm_variant));
        const auto& sched = cfg_.schedule;
        check(rec_.budget_initial == r0, "record.json",
              fmt::format("budget_initial = {}, expected r_ref * M = {}", rec_.budget_initial, r0));

        struct Track {
            double norm = 0.0;   // at the last evaluation
            int scored_rank = 0;  // rank at the last evaluation
            int rank = 0;         // current rank implied by the growth log
            int cap = 0;
        };
        std::map<SiteId, Track> track;
        long init_rank_sum = 0;
        for (const auto& a : init.adapters) {
            track[a.site] = {brute_norm(a), a.r, a.r, std::min(a.d, a.n)};
            init_rank_sum += a.r;
            check(a.r == kInitialRank, ckpt_name(init) + " " + to_string(a.site),
                  fmt::format("initial rank {}, expected {}", a.r, kInitialRank));
        }
        long remaining = r0 - init_rank_sum;
        long k_sum = 0;

        std::map<long, const GrowthEvent*> events;
        for (const auto& g : rec_.growth) {
            check(events.emplace(g.t, &g).second, fmt::format("growth.tsv t={}", g.t), "duplicate growth event");
        }
        std::map<std::pair<long, SiteId>, const ScoreSnapshot*> score_rows;
        for (const auto& s : rec_.scores) score_rows[{s.t, s.site}] = &s;
        std::set<long> visited;

        const long last = rec_.complete ? sched.total_steps : rec_.failed_step;
        for (long t = sched.warmup_steps + sched.incre_interval; t <= std::min(last, sched.total_steps);
             t += sched.incre_interval) {
            if (remaining <= 0) break;
            if (!rec_.complete && t == rec_.failed_step && !find("eval", t)) break;
            visited.insert(t);
            const Checkpoint* eval = find("eval", t);
            if (!check(eval != nullptr, fmt::format("t={}", t), "missing evaluation checkpoint at a rank-update boundary")) {
                continue;
            }

            std::map<SiteId, double> fresh;
            for (const auto& a : eval->adapters) {
                const std::string where = fmt::format("scores.tsv t={} site={}", t, to_string(a.site));
                auto it = track.find(a.site);
                if (!check(it != track.end(), where, "site not present at init")) continue;
                Track& prev = it->second;
                check(a.r == prev.rank, ckpt_name(*eval) + " " + to_string(a.site),
                      fmt::format("rank {}, growth log implies {}", a.r, prev.rank));
                const double norm = brute_norm(a);
                const double normalized = rank_normalized(norm, a.r, variant);
                const double s = normalized - rank_normalized(prev.norm, prev.scored_rank, variant);
                fresh[a.site] = s;
                check(close(a.norm_record.prev_norm, norm) && a.norm_record.prev_rank == a.r,
                      ckpt_name(*eval) + " " + to_string(a.site), "norm record does not match the checkpoint");
                const auto row = score_rows.find({t, a.site});
                if (check(row != score_rows.end(), where, "score row missing")) {
                    const ScoreSnapshot& got = *row->second;
                    check(got.rank == a.r, where, fmt::format("rank recorded {}, checkpoint has {}", got.rank, a.r));
                    check(close(got.norm, norm), where,
                          fmt::format("norm recorded {}, recomputed {}", format_double(got.norm), format_double(norm)));
                    check(close(got.normalized, normalized), where,
                          fmt::format("normalized norm recorded {}, recomputed {}", format_double(got.normalized),
                                      format_double(normalized)));
                    check(close(got.score, s), where,
                          fmt::format("score recorded {}, recomputed {}", format_double(got.score), format_double(s)));
                    score_rows.erase(row);
                }
                prev.norm = norm;
                prev.scored_rank = a.r;
            }

            std::vector<std::pair<double, SiteId>> eligible;
            for (const auto& [site, s] : fresh) {
                if (track[site].rank + cfg_.incre_rank <= track[site].cap) eligible.push_back({s, site});
            }
            const auto ev = events.find(t);
            const std::string where = fmt::format("growth.tsv event t={}", t);
            if (eligible.empty()) {
                check(ev == events.end(), where, "growth event although every site is at its rank cap");
                continue;
            }
            const long k = std::min<long>(expected_k(sched, remaining, t, sites), static_cast<long>(eligible.size()));
            std::sort(eligible.begin(), eligible.end(), [](const auto& x, const auto& y) {
                return x.first != y.first ? x.first > y.first : x.second < y.second;
            });
            std::vector<SiteId> chosen;
            for (long i = 0; i < k; ++i) chosen.push_back(eligible[static_cast<std::size_t>(i)].second);
            const double threshold = eligible[static_cast<std::size_t>(k - 1)].first;

            if (check(ev != events.end(), where, "missing growth event")) {
                const GrowthEvent& g = *ev->second;
                check(g.k == k, where, fmt::format("k = {}, recomputed {} from R = {}", g.k, k, remaining));
                check(g.budget_before == remaining, where,
                      fmt::format("budget_before = {}, replay gives {}", g.budget_before, remaining));
                check(g.budget_after == g.budget_before - static_cast<long>(cfg_.incre_rank) * g.k, where,
                      fmt::format("budget_after = {}, expected {} - {} * {}", g.budget_after, g.budget_before,
                                  cfg_.incre_rank, g.k));
                check(g.selected == chosen, where,
                      fmt::format("selected sites differ from the top-{} by recomputed score", k));
                check(close(g.threshold, threshold), where,
                      fmt::format("S_theta recorded {}, recomputed {}", format_double(g.threshold),
                                  format_double(threshold)));
                k_sum += g.k;
                events.erase(ev);
            }
            for (const auto& site : chosen) track[site].rank += cfg_.incre_rank;
            remaining -= static_cast<long>(cfg_.incre_rank) * k;
        }

        for (const auto& [t, g] : events) {
            check(false, fmt::format("growth.tsv event t={}", t), "growth event outside an open rank-update boundary");
        }
        for (const auto& [key, s] : score_rows) {
            check(false, fmt::format("scores.tsv t={} site={}", key.first, to_string(key.second)),
                  "score row outside an evaluation");
        }
        for (const auto& c : rec_.checkpoints) {
            if (c.kind == "eval" && !visited.contains(c.t)) {
                check(false, ckpt_name(c), "evaluation outside an open rank-update boundary");
            }
        }

        check(rec_.budget_final == remaining, "record.json",
              fmt::format("budget_final = {}, replay gives {}", rec_.budget_final, remaining));
        check(r0 - rec_.budget_final == init_rank_sum + static_cast<long>(cfg_.incre_rank) * k_sum, "record.json",
              fmt::format("budget not conserved: R0 - R_final = {}, r_init * M + delta_r * sum k = {}",
                          r0 - rec_.budget_final, init_rank_sum + static_cast<long>(cfg_.incre_rank) * k_sum));
        std::map<SiteId, int> ranks;
        for (const auto& [site, tr] : track) ranks[site] = tr.rank;
        check_final(ranks);
    }

    void check_final(const std::map<SiteId, int>& ranks) {
        if (!rec_.complete) return;
        const Checkpoint* final = nullptr;
        for (const auto& c : rec_.checkpoints) {
            if (c.kind == "final") final = &c;
        }
        if (!check(final != nullptr, "checkpoints", "no final checkpoint")) return;
        for (const auto& a : final->adapters) {
            const auto it = ranks.find(a.site);
            check(it != ranks.end() && it->second == a.r, ckpt_name(*final) + " " + to_string(a.site),
                  fmt::format("final rank {}, growth log implies {}", a.r, it == ranks.end() ? 0 : it->second));
        }
        std::map<SiteId, int> listed;
        for (const auto& e : rec_.final_ranks) listed[e.site] = e.rank;
        check(listed == ranks, "record.json", "final_ranks disagree with the replayed growth log");
    }

    const LoadedRun& run_;
    const RunRecord& rec_;
    const TrainConfig& cfg_;
    VerifyReport report_;
};

}  // namespace

std::string VerifyReport::format() const {
    std::string out;
    for (const auto& f : findings) out += fmt::format("MISMATCH {}: {}\n", f.location, f.message);
    out += passed() ? fmt::format("PASS ({} checks)\n", checks)
                    : fmt::format("FAIL ({} of {} checks failed)\n", findings.size(), checks);
    return out;
}

VerifyReport verify_run(const LoadedRun& run) { return Auditor(run).run(); }

VerifyReport verify_record(const fs::path& dir) {
    if (!fs::is_directory(dir) || !fs::exists(dir / "record.json")) {
        throw IoError(fmt::format("no record at {}", dir.string()));
    }
    LoadedRun run;
    try {
        run = read_run_record(dir);
    } catch (const IoError& e) {
        VerifyReport report;
        report.checks = 1;
        report.findings.push_back({dir.string(), fmt::format("unreadable record: {}", e.what())});
        return report;
    }
    return verify_run(run);
}

RankTable rank_table(const std::vector<RankEntry>& ranks) {
    RankTable table;
    std::set<int> layers;
    std::set<Role> roles;
    for (const auto& e : ranks) {
        layers.insert(e.site.layer);
        roles.insert(e.site.role);
        table.cells[{e.site.layer, e.site.role}] = e.rank;
    }
    table.layers.assign(layers.begin(), layers.end());
    for (Role r : kAllRoles) {
        if (roles.contains(r)) table.roles.push_back(r);
    }
    return table;
}

std::string RankTable::wide() const {
    std::string out = "layer";
    for (Role r : roles) out += fmt::format("\t{}", role_name(r));
    out += '\n';
    for (int layer : layers) {
        out += fmt::format("{}", layer);
        for (Role r : roles) {
            const auto it = cells.find({layer, r});
            out += it == cells.end() ? std::string("\t-") : fmt::format("\t{}", it->second);
        }
        out += '\n';
    }
    return out;
}

std::string RankTable::long_form() const {
    std::string out = "layer\trole\trank\n";
    for (const auto& [key, rank] : cells) out += fmt::format("{}\t{}\t{}\n", key.first, role_name(key.second), rank);
    return out;
}

long RankTable::total() const {
    long sum = 0;
    for (const auto& [key, rank] : cells) sum += rank;
    return sum;
}

RankTable export_rank_table(const fs::path& record_dir, const fs::path& out_dir) {
    const LoadedRun run = read_run_record(record_dir);
    if (!run.record.complete) throw IoError(fmt::format("{} is a partial record; no final ranks", record_dir.string()));
    RankTable table = rank_table(run.record.final_ranks);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    for (const auto& [name, text] : {std::pair{"rank_table.tsv", table.wide()}, {"rank_table_long.tsv", table.long_form()}}) {
        std::ofstream out(out_dir / name, std::ios::binary | std::ios::trunc);
        if (!(out << text)) throw IoError(fmt::format("cannot write {}", (out_dir / name).string()));
    }
    return table;
}

}  // namespace triadapt
