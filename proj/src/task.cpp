// SPDX-License-Identifier: Apache-2.0
#include "triadapt/task.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "triadapt/errors.hpp"

namespace triadapt {

namespace {

constexpr std::uint64_t kTeacherStream = 0x7eac0000ULL;
constexpr std::uint64_t kDataStream = 0xda7a0000ULL;

std::vector<double> softmax_row(std::span<const double> logits) {
    const double peak = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = std::exp(logits[i] - peak);
        total += p[i];
    }
    for (double& v : p) v /= total;
    return p;
}

std::vector<Sample> draw(const ToyModel& teacher, const TaskSpec& spec, int count, Rng& rng) {
    const auto n = static_cast<std::size_t>(teacher.dim());
    const auto tokens = static_cast<std::size_t>(spec.tokens);
    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int s = 0; s < count; ++s) {
        Matrix x = gaussian_matrix(tokens, n, 1.0, rng);
        Matrix y = model_forward(teacher, x);
        std::vector<int> labels;
        if (spec.kind == TaskKind::regression) {
            if (spec.noise_std > 0.0) {
                for (double& v : y.data()) v += spec.noise_std * rng.normal();
            }
        } else {
            for (std::size_t t = 0; t < tokens; ++t) {
                auto row = y.row(t);
                labels.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
            }
        }
        out.push_back({std::move(x), std::move(y), std::move(labels)});
    }
    return out;
}

}  // namespace

std::string_view task_kind_name(TaskKind k) noexcept {
    return k == TaskKind::regression ? "regression" : "classification";
}

TaskKind parse_task_kind(std::string_view name) {
    if (name == "regression") return TaskKind::regression;
    if (name == "classification") return TaskKind::classification;
    throw ConfigError(fmt::format("unknown task kind '{}' (expected regression or classification)", name));
}

void TaskSpec::validate() const {
    if (train_samples < 1) throw ConfigError(fmt::format("train_samples must be >= 1, got {}", train_samples));
    if (eval_samples < 1) throw ConfigError(fmt::format("eval_samples must be >= 1, got {}", eval_samples));
    if (tokens < 1) throw ConfigError(fmt::format("tokens must be >= 1, got {}", tokens));
    if (noise_std < 0.0) throw ConfigError(fmt::format("noise_std must be >= 0, got {}", noise_std));
    if (planted_rank < 1) throw ConfigError(fmt::format("planted_rank must be >= 1, got {}", planted_rank));
    if (planted_sites < 0) throw ConfigError(fmt::format("planted_sites must be >= 0, got {}", planted_sites));
    if (planted_scale < 0.0) throw ConfigError(fmt::format("planted_scale must be >= 0, got {}", planted_scale));
}

SyntheticTask make_planted_task(const ToyModel& base, const TaskSpec& spec, std::uint64_t seed) {
    spec.validate();
    const auto n = static_cast<std::size_t>(base.dim());
    if (spec.planted_rank > base.dim()) {
        throw ConfigError(fmt::format("planted_rank {} exceeds model dim {}", spec.planted_rank, base.dim()));
    }
    const auto site_count = base.sites().size();
    if (static_cast<std::size_t>(spec.planted_sites) > site_count) {
        throw ConfigError(fmt::format("planted_sites {} exceeds the model's {} sites", spec.planted_sites, site_count));
    }

    ToyModel teacher = base;
    Rng rng = Rng::derive(seed, kTeacherStream);

    // Partial Fisher-Yates picks which sites are perturbed.
    std::vector<std::size_t> order(site_count);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = 0; i < static_cast<std::size_t>(spec.planted_sites); ++i) {
        const auto j = i + rng.below(site_count - i);
        std::swap(order[i], order[j]);
    }
    std::vector<std::size_t> chosen(order.begin(), order.begin() + spec.planted_sites);
    std::sort(chosen.begin(), chosen.end());

    SyntheticTask task;
    task.kind = spec.kind;
    const auto rank = static_cast<std::size_t>(spec.planted_rank);
    for (std::size_t idx : chosen) {
        auto& site = teacher.sites()[idx];
        auto* frozen = std::get_if<FrozenLinear>(&site.params);
        if (!frozen) throw ConfigError("planted teacher must be built from an all-frozen base model");
        // P Q has rank `rank` with entries of order planted_scale / sqrt(n).
        const Matrix p = gaussian_matrix(n, rank, 1.0 / std::sqrt(static_cast<double>(rank)), rng);
        const Matrix q = gaussian_matrix(rank, n, 1.0 / std::sqrt(static_cast<double>(n)), rng);
        frozen->w += spec.planted_scale * matmul(p, q);
        task.planted.push_back(site.id);
    }

    Rng data = Rng::derive(seed, kDataStream);
    task.train = draw(teacher, spec, spec.train_samples, data);
    task.eval = draw(teacher, spec, spec.eval_samples, data);
    return task;
}

double sample_loss(TaskKind kind, const Matrix& output, const Sample& sample) {
    if (kind == TaskKind::regression) {
        if (output.rows() != sample.y.rows() || output.cols() != sample.y.cols()) {
            throw DimensionError(fmt::format("prediction {} vs target {}", output.shape(), sample.y.shape()));
        }
        double total = 0.0;
        for (std::size_t i = 0; i < output.size(); ++i) {
            const double e = output.data()[i] - sample.y.data()[i];
            total += e * e;
        }
        return total / static_cast<double>(output.size());
    }
    if (sample.labels.size() != output.rows()) {
        throw DimensionError(fmt::format("{} labels for {} output rows", sample.labels.size(), output.rows()));
    }
    double total = 0.0;
    for (std::size_t t = 0; t < output.rows(); ++t) {
        auto row = output.row(t);
        const double peak = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (double v : row) z += std::exp(v - peak);
        total += peak + std::log(z) - row[static_cast<std::size_t>(sample.labels[t])];
    }
    return total / static_cast<double>(output.rows());
}

Matrix sample_loss_grad(TaskKind kind, const Matrix& output, const Sample& sample) {
    Matrix g(output.rows(), output.cols());
    if (kind == TaskKind::regression) {
        const double scale = 2.0 / static_cast<double>(output.size());
        for (std::size_t i = 0; i < output.size(); ++i) {
            g.data()[i] = scale * (output.data()[i] - sample.y.data()[i]);
        }
        return g;
    }
    const double scale = 1.0 / static_cast<double>(output.rows());
    for (std::size_t t = 0; t < output.rows(); ++t) {
        const auto p = softmax_row(output.row(t));
        auto dst = g.row(t);
        for (std::size_t c = 0; c < p.size(); ++c) dst[c] = scale * p[c];
        dst[static_cast<std::size_t>(sample.labels[t])] -= scale;
    }
    return g;
}

double dataset_loss(const ToyModel& model, TaskKind kind, std::span<const Sample> data) {
    if (data.empty()) throw ConfigError("dataset_loss on an empty data set");
    double total = 0.0;
    for (const auto& s : data) total += sample_loss(kind, model_forward(model, s.x), s);
    return total / static_cast<double>(data.size());
}

}  // namespace triadapt
