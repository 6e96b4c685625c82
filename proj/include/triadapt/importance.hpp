// SPDX-License-Identifier: Apache-2.0
//
// Importance of an adapter site is the change, between two consecutive
// rank-update boundaries, of ||L + U||_F normalised by the site's rank.
// Only the r x r transform is read, so scoring M sites costs O(sum r_m^2)
// regardless of the base matrices' size.

#pragma once

#include <map>
#include <optional>
#include <string_view>
#include <vector>

#include "triadapt/adapter.hpp"

namespace triadapt {

enum class NormVariant { by_rank, by_sqrt_rank, none };

std::string_view variant_name(NormVariant v) noexcept;
NormVariant parse_norm_variant(std::string_view name);

/// norm / r, norm / sqrt(r) or norm, per variant.
double normalize(double norm, int rank, NormVariant variant);

/// ||L + U||_F of the state, touching only L and U.
double transform_norm(const AdapterState& state);

double normalized_norm(const AdapterState& state, NormVariant variant);

class ScoreBoard {
public:
    struct Entry {
        double prev_norm = 0.0;  ///< raw ||L + U||_F at the previous evaluation
        int prev_rank = 1;
        double norm = 0.0;  ///< raw norm at the latest evaluation
        int rank = 1;
        double normalized = 0.0;
        double prev_normalized = 0.0;
        double score = 0.0;
    };

    /// Seeds the previous record of a site from the adapter's NormRecord.
    void register_site(const AdapterState& state);

    bool contains(const SiteId& site) const { return entries_.contains(site); }
    const Entry& at(const SiteId& site) const;
    const std::map<SiteId, Entry>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }

    long time() const noexcept { return time_; }
    void set_time(long t) noexcept { time_ = t; }

    /// Current score of every site.
    std::map<SiteId, double> scores() const;

private:
    friend double score(ScoreBoard&, const AdapterState&, NormVariant);

    std::map<SiteId, Entry> entries_;
    long time_ = 0;
};

/// S = normalized(now) - normalized(previous evaluation). The latest values
/// become the previous record for the next call. A site that was never
/// registered is seeded from its NormRecord first.
double score(ScoreBoard& board, const AdapterState& state, NormVariant variant);

}  // namespace triadapt
