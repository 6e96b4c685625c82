// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "json.hpp"

#include "fixtures.hpp"
#include "scheduler_oracle.hpp"
#include "triadapt/audit.hpp"
#include "triadapt/errors.hpp"
#include "triadapt/record_io.hpp"
#include "triadapt/runner.hpp"

namespace fs = std::filesystem;
using namespace triadapt;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void dump(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::vector<std::vector<std::string>> read_tsv(const fs::path& p) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(slurp(p));
    for (std::string line; std::getline(in, line);) {
        std::vector<std::string> cells;
        std::istringstream ls(line);
        for (std::string c; std::getline(ls, c, '\t');) cells.push_back(c);
        rows.push_back(cells);
    }
    return rows;
}

void write_tsv(const fs::path& p, const std::vector<std::vector<std::string>>& rows) {
    std::string out;
    for (const auto& r : rows) out += fmt::format("{}\n", fmt::join(r, "\t"));
    dump(p, out);
}

/// Runs one seed and writes its record; returns the directory.
fs::path recorded(const ExperimentConfig& config, const std::string& name) {
    const fs::path dir = fixture::scratch(name);
    write_run_record(dir, single_seed(config, config.seeds.front()), run_seed(config, config.seeds.front()));
    return dir;
}

int cli(const std::string& args) {
    const int status = std::system(fmt::format("{} {} > /dev/null 2>&1", TRIADAPT_CLI, args).c_str());
    return WEXITSTATUS(status);
}

bool mentions(const VerifyReport& r, const std::string& a, const std::string& b = "") {
    for (const auto& f : r.findings) {
        if (f.location.find(a) != std::string::npos && f.location.find(b) != std::string::npos) return true;
    }
    return false;
}

}  // namespace

TEST_CASE("config round-trips through the file format") {
    ExperimentConfig c = fixture::small_run(Topology::attention_block);
    c.seeds = {4, 9, 1};
    c.output_dir = "out/x";
    c.train.learning_rate = 0.1 + 0.2;  // not exactly representable in short decimal
    c.train.optimizer = OptimizerKind::adamw;
    c.train.schedule.mode = ThresholdMode::nonlinear;
    c.train.init_policy = InitPolicy::zero_b;
    c.train.norm_variant = NormVariant::by_sqrt_rank;
    c.task.kind = TaskKind::classification;
    c.train.seed = 4;
    const ExperimentConfig back = parse_config(emit_config(c));
    CHECK(back == c);
    CHECK(emit_config(back) == emit_config(c));
    CHECK(run_id(back) == run_id(c));
    CHECK(run_id(single_seed(c, 9)) != run_id(single_seed(c, 4)));
}

TEST_CASE("schema errors name the offending key") {
    try {
        (void)parse_config("schedule:\n  final_warmup: 100\n");
        FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
        CHECK(e.key() == "schedule.final_warmup");
        CHECK(std::string(e.what()).find("final_warmup") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config("nonsense:\n  a: 1\n"), SchemaError);
    try {
        (void)parse_config("schedule:\n  total_steps: lots\n");
        FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
        CHECK(e.key() == "schedule.total_steps");
    }
    CHECK_THROWS_AS(parse_config("schedule:\n  mode: cubic\n"), SchemaError);
    CHECK_THROWS_AS(parse_config("run:\n  seeds: [1, 1]\n"), SchemaError);
    CHECK_THROWS_AS(parse_config("train:\n  learning_rate: -1\n"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/config.yaml"), IoError);
}

TEST_CASE("records round-trip and verify") {
    const ExperimentConfig c = fixture::small_run();
    const fs::path dir = recorded(c, "roundtrip");
    const LoadedRun run = read_run_record(dir);
    const RunRecord fresh = run_seed(c, 1);
    CHECK(run.config == single_seed(c, 1));
    CHECK(run.record.growth == fresh.growth);
    CHECK(run.record.final_eval_loss == fresh.final_eval_loss);
    REQUIRE(run.record.steps.size() == fresh.steps.size());
    for (std::size_t i = 0; i < fresh.steps.size(); ++i) CHECK(run.record.steps[i].loss == fresh.steps[i].loss);
    CHECK(run.record.checkpoints.size() == fresh.checkpoints.size());

    const VerifyReport report = verify_record(dir);
    INFO(report.format());
    CHECK(report.passed());
    CHECK(report.checks > 100);
    CHECK_THROWS_AS(verify_record(dir / "missing"), IoError);
    CHECK_THROWS_AS(read_run_record(dir / "missing"), IoError);
}

TEST_CASE("verify detects a score perturbed by 1e-3") {
    const fs::path dir = recorded(fixture::small_run(), "score_tamper");
    auto rows = read_tsv(dir / "scores.tsv");
    REQUIRE(rows.size() > 3);
    auto& row = rows[3];
    const std::string t = row[0], site = row[1];
    row[5] = format_double(std::stod(row[5]) + 1e-3);
    write_tsv(dir / "scores.tsv", rows);

    const VerifyReport report = verify_record(dir);
    CHECK_FALSE(report.passed());
    CHECK(mentions(report, "t=" + t, "site=" + site));
    CHECK(report.format().find("FAIL") != std::string::npos);
}

TEST_CASE("verify detects a k off by one") {
    const fs::path dir = recorded(fixture::small_run(), "k_tamper");
    auto rows = read_tsv(dir / "growth.tsv");
    REQUIRE(rows.size() > 2);
    const std::string t = rows[1][0];
    rows[1][1] = std::to_string(std::stoi(rows[1][1]) + 1);
    write_tsv(dir / "growth.tsv", rows);

    const VerifyReport report = verify_record(dir);
    CHECK_FALSE(report.passed());
    CHECK(mentions(report, "growth.tsv event t=" + t));
}

TEST_CASE("verify detects a broken triangle in a checkpoint") {
    const fs::path dir = recorded(fixture::small_run(), "tri_tamper");
    fs::path ckpt;
    for (const auto& e : fs::directory_iterator(dir / "checkpoints")) {
        if (e.path().filename().string().find("final") != std::string::npos) ckpt = e.path();
    }
    REQUIRE_FALSE(ckpt.empty());
    nlohmann::json doc = nlohmann::json::parse(slurp(ckpt));
    doc["adapters"][0]["U"]["data"][0] = 0.5;  // U(0,0) is on the diagonal
    const std::string text = doc.dump();
    dump(ckpt, text);
    const VerifyReport report = verify_record(dir);
    CHECK_FALSE(report.passed());
    CHECK(mentions(report, "checkpoint"));
}

TEST_CASE("rank table with uniform growth has equal cells") {
    ExperimentConfig c = fixture::small_run(Topology::attention_block);
    c.train.schedule.mode = ThresholdMode::fixed_k;
    c.train.schedule.k_fixed = 6;
    const fs::path dir = recorded(c, "uniform");
    const RankTable table = export_rank_table(dir, dir);
    REQUIRE(table.cells.size() == 6);
    const int first = table.cells.begin()->second;
    CHECK(first > 1);
    for (const auto& [key, rank] : table.cells) CHECK(rank == first);
    CHECK(fs::exists(dir / "rank_table.tsv"));
    CHECK(fs::exists(dir / "rank_table_long.tsv"));
    CHECK(read_tsv(dir / "rank_table.tsv").front() == std::vector<std::string>{"layer", "q", "k", "v", "a", "m", "o"});
    CHECK(read_tsv(dir / "rank_table_long.tsv").size() == 7);
}

TEST_CASE("rank table sums to the record's total rank") {
    const fs::path dir = recorded(fixture::small_run(), "sum");
    const LoadedRun run = read_run_record(dir);
    long total = 0;
    for (const auto& e : run.record.final_ranks) total += e.rank;
    CHECK(export_rank_table(dir, dir).total() == total);
    CHECK_THROWS_AS(export_rank_table(dir / "nope", dir), IoError);

    const RankTable t = rank_table({{SiteId{0, Role::q}, 2}, {SiteId{1, Role::o}, 3}});
    CHECK(t.wide() == "layer\tq\to\n0\t2\t-\n1\t-\t3\n");
}

TEST_CASE("fixed k of one over three events on six sites") {
    ExperimentConfig c = fixture::small_run(Topology::attention_block);
    c.train.schedule = {.mode = ThresholdMode::fixed_k, .warmup_steps = 10, .total_steps = 40, .k_fixed = 1,
                        .incre_interval = 10};
    const fs::path dir = recorded(c, "fixed1");
    const LoadedRun run = read_run_record(dir);
    REQUIRE(run.record.growth.size() == 3);

    // Replay the growth log into per-site ranks.
    std::map<SiteId, int> replay;
    for (const auto& e : run.record.final_ranks) replay[e.site] = kInitialRank;
    for (const auto& ev : run.record.growth) {
        for (const auto& s : ev.selected) replay[s] += c.train.incre_rank;
    }
    const RankTable table = export_rank_table(dir, dir);
    int above = 0, replay_above = 0;
    for (const auto& [key, rank] : table.cells) {
        CHECK(rank == replay.at(SiteId{key.first, key.second}));
        above += rank > kInitialRank;
    }
    for (const auto& [s, r] : replay) replay_above += r > kInitialRank;
    CHECK(above == replay_above);
    CHECK(above == 3);
}

TEST_CASE("linear and nonlinear runs differ only through their k sequences") {
    ExperimentConfig c = fixture::small_run(Topology::attention_block);
    c.train.reference_rank = 4;
    c.train.schedule = {.mode = ThresholdMode::linear, .warmup_steps = 10, .total_steps = 70, .k_fixed = 1,
                        .incre_interval = 10};
    ExperimentConfig nl = c;
    nl.train.schedule.mode = ThresholdMode::nonlinear;
    const RunRecord lin = run_seed(c, 1);
    const RunRecord non = run_seed(nl, 1);
    REQUIRE_FALSE(lin.growth.empty());
    REQUIRE_FALSE(non.growth.empty());

    const auto& s = c.train.schedule;
    std::vector<int> lin_k, non_k;
    for (const auto& ev : lin.growth) {
        lin_k.push_back(ev.k);
        CHECK(ev.k == sched_oracle::linear_k(ev.budget_before, ev.t, s.warmup_steps, s.total_steps, 6));
    }
    for (const auto& ev : non.growth) {
        non_k.push_back(ev.k);
        CHECK(ev.k == sched_oracle::nonlinear_k(ev.budget_before, ev.t, s.warmup_steps, s.total_steps, 6));
    }
    CHECK(lin_k != non_k);
    // Everything before the first growth event is shared.
    const long first = std::min(lin.growth.front().t, non.growth.front().t);
    for (std::size_t i = 0; i < lin.steps.size() && lin.steps[i].t < first; ++i) CHECK(lin.steps[i].loss == non.steps[i].loss);
    CHECK(lin.growth.front().t == non.growth.front().t);
}

TEST_CASE("cli run, verify and export") {
    const fs::path root = fixture::scratch("cli");
    ExperimentConfig c = fixture::small_run();
    c.seeds = {1, 2};
    c.output_dir = (root / "out").string();
    dump(root / "config.yaml", emit_config(c));

    CHECK(cli(fmt::format("run {}", (root / "config.yaml").string())) == 0);
    for (auto seed : c.seeds) CHECK(fs::exists(seed_dir(c, seed) / "record.json"));
    CHECK(fs::exists(root / "out" / "summary.tsv"));
    CHECK(cli(fmt::format("verify {}", (root / "out").string())) == 0);
    CHECK(cli(fmt::format("verify {}", seed_dir(c, 1).string())) == 0);
    CHECK(cli(fmt::format("export-rank-table {} --out {}", seed_dir(c, 1).string(), root.string())) == 0);
    CHECK(fs::exists(root / "rank_table.tsv"));

    // Re-running reproduces every file except the wall-clock timing.
    std::map<fs::path, std::string> before;
    for (const auto& e : fs::recursive_directory_iterator(root / "out")) {
        if (e.is_regular_file()) before[e.path()] = slurp(e.path());
    }
    CHECK(cli(fmt::format("run {}", (root / "config.yaml").string())) == 0);
    for (const auto& [path, text] : before) {
        if (path.filename() == "timing.json") continue;
        INFO(path.string());
        CHECK(slurp(path) == text);
    }

    dump(root / "bad.yaml", "schedule:\n  final_warmup: 3\n");
    CHECK(cli(fmt::format("run {}", (root / "bad.yaml").string())) == 1);
    CHECK(cli("verify /nonexistent/dir") == 1);
    CHECK(cli("frobnicate") == 1);

    auto rows = read_tsv(seed_dir(c, 2) / "growth.tsv");
    rows[1][1] = std::to_string(std::stoi(rows[1][1]) + 1);
    write_tsv(seed_dir(c, 2) / "growth.tsv", rows);
    CHECK(cli(fmt::format("verify {}", (root / "out").string())) == 3);
}

TEST_CASE("numerical failure leaves a partial record and exit code 2") {
    const fs::path root = fixture::scratch("cli_nan");
    ExperimentConfig c = fixture::small_run();
    c.train.learning_rate = 1e200;
    c.output_dir = (root / "out").string();
    dump(root / "config.yaml", emit_config(c));
    CHECK(cli(fmt::format("run {}", (root / "config.yaml").string())) == 2);
    REQUIRE(fs::exists(seed_dir(c, 1) / "record.json"));
    const LoadedRun run = read_run_record(seed_dir(c, 1));
    CHECK_FALSE(run.record.complete);
    CHECK_FALSE(run.record.failure.empty());
}

TEST_CASE("summary aggregates mean and sample std") {
    RunRecord a, b;
    a.complete = b.complete = true;
    a.final_eval_loss = 1.0;
    b.final_eval_loss = 3.0;
    const auto rows = summarize({a, b});
    const auto it = std::find_if(rows.begin(), rows.end(), [](const auto& m) { return m.metric == "final_eval_loss"; });
    REQUIRE(it != rows.end());
    CHECK(it->mean == 2.0);
    CHECK(it->std == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    CHECK(it->n == 2);
}
