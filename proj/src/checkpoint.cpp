// SPDX-License-Identifier: Apache-2.0
#include "triadapt/checkpoint.hpp"

#include <cmath>

#include <fmt/format.h>

#include "triadapt/errors.hpp"

namespace triadapt {

using nlohmann::json;

AdapterRecord make_record(const AdapterState& state) {
    return {
        .site = state.site,
        .d = static_cast<int>(state.out_dim()),
        .n = static_cast<int>(state.in_dim()),
        .r = state.rank,
        .alpha = state.alpha,
        .epsilon = state.epsilon,
        .a = state.a,
        .b = state.b,
        .l = state.l,
        .u = state.u,
        .norm_record = state.norm_record,
        .transform_trainable = state.transform_trainable,
        .denominator = state.denominator,
    };
}

AdapterState restore(const AdapterRecord& record, Matrix w0) {
    if (static_cast<int>(w0.rows()) != record.d || static_cast<int>(w0.cols()) != record.n) {
        throw DimensionError(fmt::format("restore {}: base weight {} does not match ({} x {})",
                                         to_string(record.site), w0.shape(), record.d, record.n));
    }
    return {
        .site = record.site,
        .w0 = std::move(w0),
        .a = record.a,
        .b = record.b,
        .l = record.l,
        .u = record.u,
        .rank = record.r,
        .alpha = record.alpha,
        .epsilon = record.epsilon,
        .norm_record = record.norm_record,
        .transform_trainable = record.transform_trainable,
        .denominator = record.denominator,
    };
}

json matrix_to_json(const Matrix& m) {
    return {{"rows", m.rows()},
            {"cols", m.cols()},
            {"data", std::vector<double>(m.data().begin(), m.data().end())}};
}

Matrix matrix_from_json(const json& j) {
    try {
        const auto rows = j.at("rows").get<std::size_t>();
        const auto cols = j.at("cols").get<std::size_t>();
        return Matrix(rows, cols, j.at("data").get<std::vector<double>>());
    } catch (const json::exception& e) {
        throw IoError(fmt::format("malformed matrix record: {}", e.what()));
    } catch (const DimensionError& e) {
        throw IoError(fmt::format("malformed matrix record: {}", e.what()));
    }
}

json to_json(const AdapterRecord& record) {
    return {
        {"site_id", to_string(record.site)},
        {"d", record.d},
        {"n", record.n},
        {"r", record.r},
        {"alpha", record.alpha},
        {"epsilon", record.epsilon},
        {"A", matrix_to_json(record.a)},
        {"B", matrix_to_json(record.b)},
        {"L", matrix_to_json(record.l)},
        {"U", matrix_to_json(record.u)},
        {"norm_record", {{"prev_norm", record.norm_record.prev_norm}, {"prev_rank", record.norm_record.prev_rank}}},
        {"transform_trainable", record.transform_trainable},
        {"denominator", record.denominator},
    };
}

AdapterRecord record_from_json(const json& j) {
    AdapterRecord rec;
    try {
        rec.site = parse_site_id(j.at("site_id").get<std::string>());
        rec.d = j.at("d").get<int>();
        rec.n = j.at("n").get<int>();
        rec.r = j.at("r").get<int>();
        rec.alpha = j.at("alpha").get<double>();
        rec.epsilon = j.at("epsilon").get<double>();
        rec.a = matrix_from_json(j.at("A"));
        rec.b = matrix_from_json(j.at("B"));
        rec.l = matrix_from_json(j.at("L"));
        rec.u = matrix_from_json(j.at("U"));
        rec.norm_record.prev_norm = j.at("norm_record").at("prev_norm").get<double>();
        rec.norm_record.prev_rank = j.at("norm_record").at("prev_rank").get<int>();
        rec.transform_trainable = j.value("transform_trainable", true);
        rec.denominator = j.value("denominator", 0.0);
    } catch (const json::exception& e) {
        throw IoError(fmt::format("malformed adapter record: {}", e.what()));
    } catch (const ConfigError& e) {
        throw IoError(fmt::format("malformed adapter record: {}", e.what()));
    }
    const auto r = static_cast<std::size_t>(rec.r);
    const auto n = static_cast<std::size_t>(rec.n);
    const auto d = static_cast<std::size_t>(rec.d);
    const bool shapes = rec.r >= 1 && rec.a.rows() == r && rec.a.cols() == n && rec.b.rows() == d &&
                        rec.b.cols() == r && rec.l.rows() == r && rec.l.cols() == r && rec.u.rows() == r &&
                        rec.u.cols() == r;
    if (!shapes) {
        throw IoError(fmt::format("adapter record {}: factor shapes inconsistent with r = {}, d = {}, n = {}",
                                  to_string(rec.site), rec.r, rec.d, rec.n));
    }
    if (!(rec.denominator >= 0.0) || !std::isfinite(rec.denominator)) {
        throw IoError(fmt::format("adapter record {}: bad denominator {}", to_string(rec.site), rec.denominator));
    }
    return rec;
}

}  // namespace triadapt
