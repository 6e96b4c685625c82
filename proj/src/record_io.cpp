// SPDX-License-Identifier: Apache-2.0
#include "triadapt/record_io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "json.hpp"

#include "triadapt/errors.hpp"

namespace triadapt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
    out << text;
    if (!out) throw IoError(fmt::format("write failed for {}", path.string()));
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot read {}", path.string()));
    std::ostringstream text;
    text << in.rdbuf();
    return text.str();
}

json read_json(const fs::path& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw IoError(fmt::format("{}: {}", path.string(), e.what()));
    }
}

std::string join_sites(const std::vector<SiteId>& sites) {
    if (sites.empty()) return "-";
    std::string out;
    for (const auto& s : sites) {
        if (!out.empty()) out += ',';
        out += to_string(s);
    }
    return out;
}

std::string hex(std::uint64_t v) { return fmt::format("{:016x}", v); }

// Tab-separated table with a fixed header.
struct Table {
    fs::path path;
    std::vector<std::vector<std::string>> rows;

    std::size_t line(std::size_t i) const { return i + 2; }  // 1-based, after the header
};

Table read_table(const fs::path& path, const std::vector<std::string>& header) {
    std::istringstream in(read_file(path));
    Table table{path, {}};
    std::string text;
    if (!std::getline(in, text)) throw IoError(fmt::format("{}: empty file", path.string()));
    auto split = [](const std::string& s) {
        std::vector<std::string> cells;
        std::size_t start = 0;
        for (;;) {
            const auto tab = s.find('\t', start);
            cells.push_back(s.substr(start, tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        return cells;
    };
    if (split(text) != header) throw IoError(fmt::format("{}: unexpected header '{}'", path.string(), text));
    while (std::getline(in, text)) {
        if (text.empty()) continue;
        auto cells = split(text);
        if (cells.size() != header.size()) {
            throw IoError(fmt::format("{}:{}: expected {} columns, found {}", path.string(), table.rows.size() + 2,
                                      header.size(), cells.size()));
        }
        table.rows.push_back(std::move(cells));
    }
    return table;
}

template <typename T>
T parse_cell(const Table& table, std::size_t row, std::size_t col) {
    const std::string& s = table.rows[row][col];
    T value{};
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || end != s.data() + s.size()) {
        throw IoError(fmt::format("{}:{}: cannot parse '{}'", table.path.string(), table.line(row), s));
    }
    return value;
}

SiteId parse_site_cell(const Table& table, std::size_t row, std::size_t col) {
    try {
        return parse_site_id(table.rows[row][col]);
    } catch (const Error& e) {
        throw IoError(fmt::format("{}:{}: {}", table.path.string(), table.line(row), e.what()));
    }
}

const std::vector<std::string> kMetricsHeader{"t", "loss", "task_loss", "orth", "lr", "budget"};
const std::vector<std::string> kScoresHeader{"t", "site", "rank", "norm", "normalized", "score"};
const std::vector<std::string> kGrowthHeader{"t", "k", "s_theta", "selected", "budget_before", "budget_after"};

std::string checkpoint_name(const Checkpoint& c) { return fmt::format("t{:06d}_{}.json", c.t, c.kind); }

}  // namespace

std::string format_double(double v) { return fmt::format("{}", v); }

void write_run_record(const fs::path& dir, const ExperimentConfig& config, const RunRecord& record) {
    std::error_code ec;
    fs::create_directories(dir / "checkpoints", ec);
    if (ec) throw IoError(fmt::format("cannot create {}: {}", dir.string(), ec.message()));
    for (const auto& entry : fs::directory_iterator(dir / "checkpoints")) fs::remove(entry.path());

    const std::string yaml = emit_config(config);
    write_file(dir / "config.yaml", yaml);

    std::string metrics = fmt::format("{}\n", fmt::join(kMetricsHeader, "\t"));
    for (const auto& s : record.steps) {
        metrics += fmt::format("{}\t{}\t{}\t{}\t{}\t{}\n", s.t, format_double(s.loss), format_double(s.task_loss),
                               format_double(s.orth), format_double(s.lr), s.budget);
    }
    write_file(dir / "metrics.tsv", metrics);

    std::string scores = fmt::format("{}\n", fmt::join(kScoresHeader, "\t"));
    for (const auto& s : record.scores) {
        scores += fmt::format("{}\t{}\t{}\t{}\t{}\t{}\n", s.t, to_string(s.site), s.rank, format_double(s.norm),
                              format_double(s.normalized), format_double(s.score));
    }
    write_file(dir / "scores.tsv", scores);

    std::string growth = fmt::format("{}\n", fmt::join(kGrowthHeader, "\t"));
    for (const auto& g : record.growth) {
        growth += fmt::format("{}\t{}\t{}\t{}\t{}\t{}\n", g.t, g.k, format_double(g.threshold), join_sites(g.selected),
                              g.budget_before, g.budget_after);
    }
    write_file(dir / "growth.tsv", growth);

    for (const auto& c : record.checkpoints) {
        json adapters = json::array();
        for (const auto& a : c.adapters) adapters.push_back(to_json(a));
        write_file(dir / "checkpoints" / checkpoint_name(c),
                   json{{"t", c.t}, {"kind", c.kind}, {"adapters", adapters}}.dump() + "\n");
    }

    json ranks = json::array();
    for (const auto& r : record.final_ranks) {
        ranks.push_back({{"site", to_string(r.site)},
                         {"layer", r.site.layer},
                         {"role", std::string(role_name(r.site.role))},
                         {"rank", r.rank}});
    }
    json planted = json::array();
    for (const auto& p : record.planted) planted.push_back(to_string(p));

    const json summary{
        {"run_id", run_id(config)},
        {"seed", config.train.seed},
        {"method", std::string(method_name(config.train.method))},
        {"status", record.complete ? "complete" : "failed"},
        {"failure", record.complete ? json(nullptr)
                                    : json{{"step", record.failed_step},
                                           {"site", record.failed_site},
                                           {"message", record.failure}}},
        {"initial_eval_loss", record.initial_eval_loss},
        {"final_eval_loss", record.final_eval_loss},
        {"final_train_loss", record.final_train_loss},
        {"budget_initial", record.budget_initial},
        {"budget_final", record.budget_final},
        {"trainable_params", record.trainable_params},
        {"frozen_hash_before", hex(record.frozen_hash_before)},
        {"frozen_hash_after", hex(record.frozen_hash_after)},
        {"flops", record.flops},
        {"score_flops", record.score_flops},
        {"steps", record.steps.size()},
        {"growth_events", record.growth.size()},
        {"final_ranks", ranks},
        {"planted", planted},
        {"config", yaml},
    };
    write_file(dir / "record.json", summary.dump(2) + "\n");
    write_file(dir / "timing.json", json{{"wall_seconds", record.wall_seconds}}.dump(2) + "\n");
}

LoadedRun read_run_record(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError(fmt::format("no record directory at {}", dir.string()));
    LoadedRun run;
    const json summary = read_json(dir / "record.json");
    RunRecord& rec = run.record;
    try {
        run.config = parse_config(read_file(dir / "config.yaml"));
        run.run_id = summary.at("run_id").get<std::string>();
        run.seed = summary.at("seed").get<std::uint64_t>();
        run.method = summary.at("method").get<std::string>();
        rec.complete = summary.at("status").get<std::string>() == "complete";
        if (!rec.complete && summary.at("failure").is_object()) {
            const auto& f = summary.at("failure");
            rec.failed_step = f.at("step").get<long>();
            rec.failed_site = f.at("site").get<std::string>();
            rec.failure = f.at("message").get<std::string>();
        }
        rec.initial_eval_loss = summary.at("initial_eval_loss").get<double>();
        rec.final_eval_loss = summary.at("final_eval_loss").get<double>();
        rec.final_train_loss = summary.at("final_train_loss").get<double>();
        rec.budget_initial = summary.at("budget_initial").get<long>();
        rec.budget_final = summary.at("budget_final").get<long>();
        rec.trainable_params = summary.at("trainable_params").get<long>();
        rec.frozen_hash_before = std::stoull(summary.at("frozen_hash_before").get<std::string>(), nullptr, 16);
        rec.frozen_hash_after = std::stoull(summary.at("frozen_hash_after").get<std::string>(), nullptr, 16);
        rec.flops = summary.at("flops").get<std::uint64_t>();
        rec.score_flops = summary.at("score_flops").get<std::uint64_t>();
        for (const auto& r : summary.at("final_ranks")) {
            rec.final_ranks.push_back({parse_site_id(r.at("site").get<std::string>()), r.at("rank").get<int>()});
        }
        for (const auto& p : summary.at("planted")) rec.planted.push_back(parse_site_id(p.get<std::string>()));
    } catch (const json::exception& e) {
        throw IoError(fmt::format("{}: {}", (dir / "record.json").string(), e.what()));
    } catch (const ConfigError& e) {
        throw IoError(fmt::format("{}: {}", dir.string(), e.what()));
    }

    const Table metrics = read_table(dir / "metrics.tsv", kMetricsHeader);
    for (std::size_t i = 0; i < metrics.rows.size(); ++i) {
        rec.steps.push_back({parse_cell<long>(metrics, i, 0), parse_cell<double>(metrics, i, 1),
                             parse_cell<double>(metrics, i, 2), parse_cell<double>(metrics, i, 3),
                             parse_cell<double>(metrics, i, 4), parse_cell<long>(metrics, i, 5)});
    }
    const Table scores = read_table(dir / "scores.tsv", kScoresHeader);
    for (std::size_t i = 0; i < scores.rows.size(); ++i) {
        rec.scores.push_back({parse_cell<long>(scores, i, 0), parse_site_cell(scores, i, 1),
                              parse_cell<int>(scores, i, 2), parse_cell<double>(scores, i, 3),
                              parse_cell<double>(scores, i, 4), parse_cell<double>(scores, i, 5)});
    }
    const Table growth = read_table(dir / "growth.tsv", kGrowthHeader);
    for (std::size_t i = 0; i < growth.rows.size(); ++i) {
        GrowthEvent g;
        g.t = parse_cell<long>(growth, i, 0);
        g.k = parse_cell<int>(growth, i, 1);
        g.threshold = parse_cell<double>(growth, i, 2);
        const std::string& list = growth.rows[i][3];
        if (list != "-") {
            std::size_t start = 0;
            for (;;) {
                const auto comma = list.find(',', start);
                try {
                    g.selected.push_back(parse_site_id(list.substr(start, comma - start)));
                } catch (const Error& e) {
                    throw IoError(fmt::format("{}:{}: {}", growth.path.string(), growth.line(i), e.what()));
                }
                if (comma == std::string::npos) break;
                start = comma + 1;
            }
        }
        g.budget_before = parse_cell<long>(growth, i, 4);
        g.budget_after = parse_cell<long>(growth, i, 5);
        rec.growth.push_back(std::move(g));
    }

    std::vector<fs::path> files;
    if (fs::is_directory(dir / "checkpoints")) {
        for (const auto& entry : fs::directory_iterator(dir / "checkpoints")) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& path : files) {
        const json j = read_json(path);
        Checkpoint c;
        try {
            c.t = j.at("t").get<long>();
            c.kind = j.at("kind").get<std::string>();
            for (const auto& a : j.at("adapters")) c.adapters.push_back(record_from_json(a));
        } catch (const json::exception& e) {
            throw IoError(fmt::format("{}: {}", path.string(), e.what()));
        } catch (const IoError& e) {
            throw IoError(fmt::format("{}: {}", path.string(), e.what()));
        }
        rec.checkpoints.push_back(std::move(c));
    }
    return run;
}

}  // namespace triadapt
