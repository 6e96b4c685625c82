// SPDX-License-Identifier: Apache-2.0
#include "triadapt/runner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "triadapt/errors.hpp"
#include "triadapt/record_io.hpp"

namespace triadapt {

namespace fs = std::filesystem;

bool ExperimentResult::all_complete() const noexcept {
    return std::all_of(runs.begin(), runs.end(), [](const SeedRun& r) { return r.record.complete; });
}

fs::path seed_dir(const ExperimentConfig& config, std::uint64_t seed) {
    return fs::path(config.output_dir) / fmt::format("seed_{}", seed);
}

RunRecord run_seed(const ExperimentConfig& config, std::uint64_t seed) {
    const ExperimentConfig one = single_seed(config, seed);
    const ToyModel base = make_base_model(one.model, seed);
    const SyntheticTask task = make_planted_task(base, one.task, seed);
    ToyModel model = prepare_model(base, one.train);
    return run_training(model, task, one.train);
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
    config.validate();
    ExperimentResult result;
    std::vector<RunRecord> complete;
    for (std::uint64_t seed : config.seeds) {
        SeedRun run{seed, seed_dir(config, seed), {}, false};
        try {
            run.record = run_seed(config, seed);
            complete.push_back(run.record);
        } catch (const TrainingFailure& e) {
            run.record = e.record();
            run.numerical_failure = e.numerical();
        }
        write_run_record(run.dir, single_seed(config, seed), run.record);
        result.runs.push_back(std::move(run));
    }

    std::string text = "metric\tmean\tstd\tn\n";
    for (const auto& m : summarize(complete)) {
        text += fmt::format("{}\t{}\t{}\t{}\n", m.metric, format_double(m.mean), format_double(m.std), m.n);
    }
    result.summary = fs::path(config.output_dir) / "summary.tsv";
    std::ofstream out(result.summary, std::ios::binary | std::ios::trunc);
    if (!(out << text)) throw IoError(fmt::format("cannot write {}", result.summary.string()));
    return result;
}

std::vector<MetricSummary> summarize(const std::vector<RunRecord>& records) {
    const std::vector<std::pair<std::string, double (*)(const RunRecord&)>> metrics = {
        {"initial_eval_loss", [](const RunRecord& r) { return r.initial_eval_loss; }},
        {"final_eval_loss", [](const RunRecord& r) { return r.final_eval_loss; }},
        {"final_train_loss", [](const RunRecord& r) { return r.final_train_loss; }},
        {"total_rank",
         [](const RunRecord& r) {
             double sum = 0.0;
             for (const auto& e : r.final_ranks) sum += e.rank;
             return sum;
         }},
        {"trainable_params", [](const RunRecord& r) { return static_cast<double>(r.trainable_params); }},
        {"growth_events", [](const RunRecord& r) { return static_cast<double>(r.growth.size()); }},
        {"budget_final", [](const RunRecord& r) { return static_cast<double>(r.budget_final); }},
    };
    std::vector<MetricSummary> out;
    if (records.empty()) return out;
    const double n = static_cast<double>(records.size());
    for (const auto& [name, get] : metrics) {
        double mean = 0.0;
        for (const auto& r : records) mean += get(r);
        mean /= n;
        double var = 0.0;
        for (const auto& r : records) var += (get(r) - mean) * (get(r) - mean);
        const double sd = records.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
        out.push_back({name, mean, sd, static_cast<int>(records.size())});
    }
    return out;
}

}  // namespace triadapt
