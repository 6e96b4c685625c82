// SPDX-License-Identifier: Apache-2.0
#include "triadapt/importance.hpp"

#include <cmath>

#include <fmt/format.h>

#include "triadapt/errors.hpp"

namespace triadapt {

std::string_view variant_name(NormVariant v) noexcept {
    switch (v) {
        case NormVariant::by_rank: return "by_rank";
        case NormVariant::by_sqrt_rank: return "by_sqrt_rank";
        case NormVariant::none: return "none";
    }
    return "?";
}

NormVariant parse_norm_variant(std::string_view name) {
    for (auto v : {NormVariant::by_rank, NormVariant::by_sqrt_rank, NormVariant::none}) {
        if (variant_name(v) == name) return v;
    }
    throw ConfigError(fmt::format("unknown norm variant '{}' (expected by_rank, by_sqrt_rank or none)", name));
}

double normalize(double norm, int rank, NormVariant variant) {
    if (rank < 1) throw ConfigError(fmt::format("normalize: rank must be positive, got {}", rank));
    switch (variant) {
        case NormVariant::by_rank: return norm / rank;
        case NormVariant::by_sqrt_rank: return norm / std::sqrt(static_cast<double>(rank));
        case NormVariant::none: return norm;
    }
    return norm;
}

double transform_norm(const AdapterState& state) {
    // L and U have disjoint supports, so ||L + U||^2 = ||L||^2 + ||U||^2.
    const double nl = frobenius_norm(state.l);
    const double nu = frobenius_norm(state.u);
    return std::sqrt(nl * nl + nu * nu);
}

double normalized_norm(const AdapterState& state, NormVariant variant) {
    return normalize(transform_norm(state), state.rank, variant);
}

void ScoreBoard::register_site(const AdapterState& state) {
    Entry e;
    e.prev_norm = state.norm_record.prev_norm;
    e.prev_rank = state.norm_record.prev_rank;
    e.norm = e.prev_norm;
    e.rank = e.prev_rank;
    entries_[state.site] = e;
}

const ScoreBoard::Entry& ScoreBoard::at(const SiteId& site) const {
    auto it = entries_.find(site);
    if (it == entries_.end()) throw ScheduleError(fmt::format("site {} is not on the score board", to_string(site)));
    return it->second;
}

std::map<SiteId, double> ScoreBoard::scores() const {
    std::map<SiteId, double> out;
    for (const auto& [site, e] : entries_) out.emplace(site, e.score);
    return out;
}

double score(ScoreBoard& board, const AdapterState& state, NormVariant variant) {
    if (!board.contains(state.site)) board.register_site(state);
    auto& e = board.entries_.at(state.site);
    // The latest evaluation becomes the reference for this one.
    e.prev_norm = e.norm;
    e.prev_rank = e.rank;
    e.norm = transform_norm(state);
    e.rank = state.rank;
    e.prev_normalized = normalize(e.prev_norm, e.prev_rank, variant);
    e.normalized = normalize(e.norm, e.rank, variant);
    e.score = e.normalized - e.prev_normalized;
    return e.score;
}

}  // namespace triadapt
