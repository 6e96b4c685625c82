// SPDX-License-Identifier: Apache-2.0
//
// triadapt run <config.yaml>
// triadapt export-rank-table <record dir> [--out DIR]
// triadapt verify <record dir | experiment output dir>
//
// Exit codes: 0 ok, 1 usage/schema/I-O, 2 numerical failure, 3 verification mismatch.

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"

#include "triadapt/audit.hpp"
#include "triadapt/errors.hpp"
#include "triadapt/experiment.hpp"
#include "triadapt/runner.hpp"

namespace fs = std::filesystem;
using namespace triadapt;

namespace {

enum Exit { kOk = 0, kUsage = 1, kNumerical = 2, kMismatch = 3 };

int cmd_run(const fs::path& config_path) {
    const ExperimentConfig config = load_config(config_path);
    const ExperimentResult result = run_experiment(config);
    int code = kOk;
    for (const auto& run : result.runs) {
        if (run.record.complete) {
            fmt::print("seed {}: eval loss {} -> {}, {} growth events, record {}\n", run.seed,
                       run.record.initial_eval_loss, run.record.final_eval_loss, run.record.growth.size(),
                       run.dir.string());
        } else {
            fmt::print(stderr, "seed {}: {} (partial record in {})\n", run.seed, run.record.failure, run.dir.string());
            code = kNumerical;
        }
    }
    fmt::print("summary: {}\n", result.summary.string());
    return code;
}

int cmd_export(const fs::path& record, const fs::path& out) {
    const RankTable table = export_rank_table(record, out.empty() ? record : out);
    fmt::print("{}", table.wide());
    return kOk;
}

int cmd_verify(const fs::path& path) {
    std::vector<fs::path> dirs;
    if (fs::exists(path / "record.json")) {
        dirs.push_back(path);
    } else if (fs::is_directory(path)) {
        for (const auto& entry : fs::directory_iterator(path)) {
            if (fs::exists(entry.path() / "record.json")) dirs.push_back(entry.path());
        }
        std::sort(dirs.begin(), dirs.end());
    }
    if (dirs.empty()) throw IoError(fmt::format("no record under {}", path.string()));
    bool ok = true;
    for (const auto& dir : dirs) {
        const VerifyReport report = verify_record(dir);
        fmt::print("{}\n{}", dir.string(), report.format());
        ok = ok && report.passed();
    }
    return ok ? kOk : kMismatch;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Triangular-split adaptive-rank adapters on desk-scale toy models"};
    app.require_subcommand(1);

    fs::path config_path;
    auto* run = app.add_subcommand("run", "train every seed of a config and write run records");
    run->add_option("config", config_path, "experiment config (YAML)")->required();

    fs::path record_path;
    fs::path out_dir;
    auto* rank = app.add_subcommand("export-rank-table", "final rank per layer and role");
    rank->add_option("record", record_path, "record directory of one seed")->required();
    rank->add_option("--out", out_dir, "directory for rank_table.tsv (default: the record directory)");

    fs::path verify_path;
    auto* verify = app.add_subcommand("verify", "recompute a record from its checkpoints");
    verify->add_option("record", verify_path, "record directory, or an output dir holding seed_* records")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*run) return cmd_run(config_path);
        if (*rank) return cmd_export(record_path, out_dir);
        if (*verify) return cmd_verify(verify_path);
    } catch (const SchemaError& e) {
        fmt::print(stderr, "config error [{}]: {}\n", e.key(), e.what());
        return kUsage;
    } catch (const TrainingFailure& e) {
        fmt::print(stderr, "{}\n", e.what());
        return kNumerical;
    } catch (const NumericalError& e) {
        fmt::print(stderr, "{}\n", e.what());
        return kNumerical;
    } catch (const Error& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kUsage;
    }
    return kUsage;
}
