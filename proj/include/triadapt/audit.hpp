// SPDX-License-Identifier: Apache-2.0
//
// Offline checks and exports over a record directory.

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "triadapt/record_io.hpp"

namespace triadapt {

struct Finding {
    std::string location;  ///< e.g. "growth.tsv t=400" or "checkpoint t000400_eval L2.dense"
    std::string message;
};

struct VerifyReport {
    std::vector<Finding> findings;
    int checks = 0;

    bool passed() const noexcept { return findings.empty(); }
    std::string format() const;
};

/// Recomputes triangularity, norms, scores, k, the selected sets, budget
/// conservation and final ranks from the raw checkpoints. Problems with the
/// record's content are findings; only a missing record directory throws (IoError).
VerifyReport verify_record(const std::filesystem::path& dir);
VerifyReport verify_run(const LoadedRun& run);

/// Sites absent from the record show as "-".
struct RankTable {
    std::vector<int> layers;
    std::vector<Role> roles;  ///< roles present, in canonical order
    std::map<std::pair<int, Role>, int> cells;

    std::string wide() const;  ///< header "layer <roles...>", one row per layer
    std::string long_form() const;  ///< "layer role rank" per site
    long total() const;
};

RankTable rank_table(const std::vector<RankEntry>& ranks);

/// Writes rank_table.tsv and rank_table_long.tsv into out_dir; returns the table.
RankTable export_rank_table(const std::filesystem::path& record_dir, const std::filesystem::path& out_dir);

}  // namespace triadapt
