// SPDX-License-Identifier: Apache-2.0
#include "triadapt/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

namespace triadapt {

namespace {

constexpr std::uint64_t kBatchStream = 0xba7c0000ULL;
constexpr std::uint64_t kDropoutStream = 0xd7000000ULL;
constexpr std::uint64_t kGrowthStream = 0x67726f7700000000ULL;

bool grads_finite(const SiteGrad& g) {
    if (const auto* m = std::get_if<Matrix>(&g)) return all_finite(*m);
    if (const auto* a = std::get_if<AdapterGrads>(&g)) {
        return all_finite(a->a) && all_finite(a->b) && all_finite(a->l) && all_finite(a->u);
    }
    return true;
}

bool params_finite(const Site& s) {
    if (const auto* d = std::get_if<DenseLinear>(&s.params)) return all_finite(d->w);
    if (const auto* a = std::get_if<AdapterState>(&s.params)) {
        return all_finite(a->a) && all_finite(a->b) && all_finite(a->l) && all_finite(a->u);
    }
    return true;
}

// Name of the first site holding a non-finite parameter or gradient.
std::string first_bad_site(const ToyModel& model, const ModelGrads* grads) {
    for (std::size_t i = 0; i < model.sites().size(); ++i) {
        const bool bad = !params_finite(model.sites()[i]) || (grads && !grads_finite(grads->sites[i]));
        if (bad) return to_string(model.sites()[i].id);
    }
    return "loss";
}

std::vector<AdapterRecord> snapshot(const ToyModel& model) {
    std::vector<AdapterRecord> out;
    for (const auto* a : model.adapters()) out.push_back(make_record(*a));
    return out;
}

}  // namespace

std::string_view method_name(Method m) noexcept {
    switch (m) {
        case Method::triadapt: return "triadapt";
        case Method::lora: return "lora";
        case Method::full: return "full";
        case Method::frozen: return "frozen";
    }
    return "?";
}

Method parse_method(std::string_view name) {
    for (auto m : {Method::triadapt, Method::lora, Method::full, Method::frozen}) {
        if (method_name(m) == name) return m;
    }
    throw ConfigError(fmt::format("unknown method '{}' (expected triadapt, lora, full or frozen)", name));
}

std::string_view optimizer_name(OptimizerKind k) noexcept { return k == OptimizerKind::sgd ? "sgd" : "adamw"; }

OptimizerKind parse_optimizer(std::string_view name) {
    if (name == "sgd") return OptimizerKind::sgd;
    if (name == "adamw") return OptimizerKind::adamw;
    throw ConfigError(fmt::format("unknown optimizer '{}' (expected sgd or adamw)", name));
}

void TrainConfig::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(fmt::format("{} must be positive, got {}", name, v));
    };
    positive(learning_rate, "learning_rate");
    positive(alpha, "alpha");
    positive(init_std, "init_std");
    if (weight_decay < 0.0) throw ConfigError(fmt::format("weight_decay must be >= 0, got {}", weight_decay));
    if (batch_size < 1) throw ConfigError(fmt::format("batch_size must be >= 1, got {}", batch_size));
    if (orth_coefficient < 0.0) {
        throw ConfigError(fmt::format("orth_coefficient must be >= 0, got {}", orth_coefficient));
    }
    if (epsilon < 0.0) throw ConfigError(fmt::format("epsilon must be >= 0, got {}", epsilon));
    if (beta1 < 0.0 || beta1 >= 1.0) throw ConfigError(fmt::format("beta1 must lie in [0, 1), got {}", beta1));
    if (beta2 < 0.0 || beta2 >= 1.0) throw ConfigError(fmt::format("beta2 must lie in [0, 1), got {}", beta2));
    positive(adam_epsilon, "adam_epsilon");
    if (adapter_dropout < 0.0 || adapter_dropout >= 1.0) {
        throw ConfigError(fmt::format("adapter_dropout must lie in [0, 1), got {}", adapter_dropout));
    }
    if (lora_rank < 1) throw ConfigError(fmt::format("lora_rank must be >= 1, got {}", lora_rank));
    if (incre_rank < 1) throw ConfigError(fmt::format("incre_rank must be >= 1, got {}", incre_rank));
    if (reference_rank < kInitialRank) {
        throw ConfigError(fmt::format("reference_rank must be >= {}, got {}", kInitialRank, reference_rank));
    }
    schedule.validate();
}

ToyModel prepare_model(const ToyModel& base, const TrainConfig& config) {
    config.validate();
    ToyModel model = base;
    auto& sites = model.sites();
    for (std::size_t i = 0; i < sites.size(); ++i) {
        auto* frozen = std::get_if<FrozenLinear>(&sites[i].params);
        if (!frozen) throw ConfigError("prepare_model expects an all-frozen base model");
        Rng rng = Rng::derive(config.seed, i);
        switch (config.method) {
            case Method::triadapt:
                sites[i].params = init_adapter(sites[i].id, frozen->w, config.alpha, config.epsilon, config.init_std, rng);
                break;
            case Method::lora:
                sites[i].params = init_lora_adapter(sites[i].id, frozen->w, config.lora_rank, config.alpha,
                                                    config.epsilon, config.init_std, rng);
                break;
            case Method::full: sites[i].params = DenseLinear{frozen->w}; break;
            case Method::frozen: break;
        }
    }
    return model;
}

LossAndGrads loss_and_grads(const ToyModel& model, TaskKind kind, std::span<const Sample> batch,
                            const TrainConfig& config, Rng* dropout) {
    if (batch.empty()) throw ConfigError("loss_and_grads on an empty batch");
    LossAndGrads out;
    out.grads = zero_model_grads(model);
    const double weight = 1.0 / static_cast<double>(batch.size());
    const DropoutPlan plan{config.adapter_dropout, dropout};
    for (const auto& sample : batch) {
        forward_backward(
            model, sample.x,
            [&](const Matrix& y) {
                out.task_loss += sample_loss(kind, y, sample);
                return sample_loss_grad(kind, y, sample);
            },
            weight, out.grads, plan);
    }
    out.task_loss *= weight;

    if (config.orth_enabled && config.orth_coefficient > 0.0) {
        for (std::size_t i = 0; i < model.sites().size(); ++i) {
            const auto* a = std::get_if<AdapterState>(&model.sites()[i].params);
            if (!a) continue;
            out.orth += orth_penalty(*a);
            const OrthGrads og = orth_penalty_grads(*a);
            auto& g = std::get<AdapterGrads>(out.grads.sites[i]);
            g.a += config.orth_coefficient * og.a;
            g.b += config.orth_coefficient * og.b;
        }
    }
    out.loss = out.task_loss + config.orth_coefficient * out.orth;
    if (!std::isfinite(out.loss)) {
        const std::string site = first_bad_site(model, &out.grads);
        throw NumericalError(0, site, fmt::format("non-finite loss {} (first bad site: {})", out.loss, site));
    }
    return out;
}

double batch_loss(const ToyModel& model, TaskKind kind, std::span<const Sample> batch, const TrainConfig& config) {
    if (batch.empty()) throw ConfigError("batch_loss on an empty batch");
    double task = 0.0;
    for (const auto& s : batch) task += sample_loss(kind, model_forward(model, s.x), s);
    task /= static_cast<double>(batch.size());
    double orth = 0.0;
    if (config.orth_enabled && config.orth_coefficient > 0.0) {
        for (const auto* a : model.adapters()) orth += orth_penalty(*a);
    }
    return task + config.orth_coefficient * orth;
}

LossAndGrads lora_baseline_step(const ToyModel& model, TaskKind kind, std::span<const Sample> batch,
                                const TrainConfig& config, Rng* dropout) {
    for (const auto* a : model.adapters()) {
        const bool pinned = !a->transform_trainable && a->l == Matrix::identity(static_cast<std::size_t>(a->rank)) &&
                            max_abs(a->u) == 0.0;
        if (!pinned) {
            throw ConfigError(fmt::format("site {} is not a plain-LoRA adapter (D must be pinned to I)",
                                          to_string(a->site)));
        }
    }
    return loss_and_grads(model, kind, batch, config, dropout);
}

Optimizer::Optimizer(const TrainConfig& config, const ToyModel& model) : config_(config) {
    moments_.resize(model.sites().size());
    if (config_.optimizer != OptimizerKind::adamw) return;
    for (std::size_t i = 0; i < model.sites().size(); ++i) {
        const auto& p = model.sites()[i].params;
        if (const auto* d = std::get_if<DenseLinear>(&p)) {
            moments_[i].push_back({Matrix(d->w.rows(), d->w.cols()), Matrix(d->w.rows(), d->w.cols())});
        } else if (const auto* a = std::get_if<AdapterState>(&p)) {
            for (const Matrix* m : {&a->a, &a->b, &a->l, &a->u}) {
                moments_[i].push_back({Matrix(m->rows(), m->cols()), Matrix(m->rows(), m->cols())});
            }
        }
    }
}

void Optimizer::on_growth(const ToyModel& model, std::size_t site_index) {
    if (config_.optimizer != OptimizerKind::adamw) return;
    const auto* a = std::get_if<AdapterState>(&model.sites().at(site_index).params);
    if (!a) return;
    auto& mom = moments_[site_index];
    const Matrix* params[] = {&a->a, &a->b, &a->l, &a->u};
    for (std::size_t k = 0; k < 4; ++k) {
        mom[k].m = pad(mom[k].m, params[k]->rows(), params[k]->cols());
        mom[k].v = pad(mom[k].v, params[k]->rows(), params[k]->cols());
    }
}

void Optimizer::update(Matrix& param, const Matrix& grad, Moments* moments, double lr) const {
    auto p = param.data();
    auto g = grad.data();
    const double wd = config_.weight_decay;
    if (config_.optimizer == OptimizerKind::sgd) {
        for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * (g[i] + wd * p[i]);
        add_flops(4 * p.size());
        return;
    }
    auto m = moments->m.data();
    auto v = moments->v.data();
    const double b1 = config_.beta1;
    const double b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
    for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        const double dir = (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.adam_epsilon);
        p[i] -= lr * (dir + wd * p[i]);
    }
    add_flops(14 * p.size());
}

void Optimizer::step(ToyModel& model, const ModelGrads& grads, double lr) {
    ++steps_;
    const bool adam = config_.optimizer == OptimizerKind::adamw;
    for (std::size_t i = 0; i < model.sites().size(); ++i) {
        auto& p = model.sites()[i].params;
        if (auto* d = std::get_if<DenseLinear>(&p)) {
            update(d->w, std::get<Matrix>(grads.sites[i]), adam ? &moments_[i][0] : nullptr, lr);
        } else if (auto* a = std::get_if<AdapterState>(&p)) {
            const auto& g = std::get<AdapterGrads>(grads.sites[i]);
            update(a->a, g.a, adam ? &moments_[i][0] : nullptr, lr);
            update(a->b, g.b, adam ? &moments_[i][1] : nullptr, lr);
            if (a->transform_trainable) {
                update(a->l, g.l, adam ? &moments_[i][2] : nullptr, lr);
                update(a->u, g.u, adam ? &moments_[i][3] : nullptr, lr);
            }
        }
    }
}

double learning_rate_at(const TrainConfig& config, long t) {
    const double T = static_cast<double>(config.total_steps());
    return config.learning_rate * (T - static_cast<double>(t) + 1.0) / T;
}

RunRecord run_training(ToyModel& model, const SyntheticTask& task, const TrainConfig& config) {
    config.validate();
    if (task.train.empty() || task.eval.empty()) throw ConfigError("task needs non-empty train and eval sets");
    const bool growing = config.method == Method::triadapt;
    const int sites = model.adapter_count();
    if (growing) {
        if (sites == 0) throw ConfigError("triadapt training needs adapter sites");
        for (const auto* a : model.adapters()) {
            if (!a->transform_trainable) {
                throw ConfigError(fmt::format("site {} has a pinned transform; it cannot grow", to_string(a->site)));
            }
        }
    }

    const auto started = std::chrono::steady_clock::now();
    const FlopScope total_flops;
    RunRecord rec;
    rec.planted = task.planted;
    rec.frozen_hash_before = frozen_hash(model);

    Optimizer optimizer(config, model);
    Rng batch_rng = Rng::derive(config.seed, kBatchStream);
    Rng dropout_rng = Rng::derive(config.seed, kDropoutStream);
    std::vector<Rng> growth_rngs;
    for (std::size_t i = 0; i < model.sites().size(); ++i) {
        growth_rngs.push_back(Rng::derive(config.seed, kGrowthStream | i));
    }

    BudgetState budget;
    ScoreBoard board;
    if (growing) {
        budget = consume_budget(make_budget(config.reference_rank, sites, kInitialRank, config.incre_rank), 0);
        for (const auto* a : model.adapters()) board.register_site(*a);
    }
    rec.budget_initial = budget.initial;
    rec.checkpoints.push_back({0, "init", snapshot(model)});

    const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), task.train.size());
    std::vector<std::size_t> order(task.train.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = order.size();
    std::vector<Sample> current;

    auto grow_step = [&](long t) {
        board.set_time(t);
        const FlopScope score_flops;
        std::map<SiteId, double> eligible;
        for (auto& site : model.sites()) {
            auto* a = std::get_if<AdapterState>(&site.params);
            if (!a) continue;
            const double s = score(board, *a, config.norm_variant);
            const auto& e = board.at(a->site);
            a->norm_record = {e.norm, e.rank};
            rec.scores.push_back({t, a->site, e.rank, e.norm, e.normalized, e.score});
            if (a->rank + config.incre_rank <= a->rank_cap()) eligible.emplace(a->site, s);
        }
        rec.score_flops += score_flops.elapsed();
        rec.checkpoints.push_back({t, "eval", snapshot(model)});
        if (eligible.empty()) return;

        const int k = std::min(threshold_k(config.schedule, budget.remaining, t, sites), static_cast<int>(eligible.size()));
        const GrowthSelection sel = select_growth_set(eligible, k);
        for (const SiteId& id : sel.sites) {
            const std::size_t idx = model.index_of(id);
            auto& state = std::get<AdapterState>(model.sites()[idx].params);
            state = grow_rank(std::move(state), config.incre_rank, config.init_policy, config.init_std, growth_rngs[idx]);
            optimizer.on_growth(model, idx);
        }
        const long before = budget.remaining;
        budget = consume_budget(budget, k);
        rec.growth.push_back({t, k, sel.threshold, sel.sites, before, budget.remaining});
    };

    long t = 0;
    try {
        rec.initial_eval_loss = dataset_loss(model, task.kind, task.eval);
        for (t = 1; t <= config.total_steps(); ++t) {
            if (growing && budget.open() && is_growth_step(config.schedule, t)) grow_step(t);

            if (cursor + batch > order.size()) {
                for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[batch_rng.below(i)]);
                cursor = 0;
            }
            current.clear();
            for (std::size_t i = 0; i < batch; ++i) current.push_back(task.train[order[cursor + i]]);
            cursor += batch;

            LossAndGrads lg = loss_and_grads(model, task.kind, current, config, &dropout_rng);
            const double lr = learning_rate_at(config, t);
            optimizer.step(model, lg.grads, lr);
            rec.steps.push_back({t, lg.loss, lg.task_loss, lg.orth, lr, budget.remaining});
            for (const auto& site : model.sites()) {
                if (!params_finite(site)) {
                    throw NumericalError(t, to_string(site.id), fmt::format("non-finite parameters in site {}",
                                                                            to_string(site.id)));
                }
            }
        }
        rec.final_eval_loss = dataset_loss(model, task.kind, task.eval);
        if (!std::isfinite(rec.final_eval_loss)) {
            throw NumericalError(config.total_steps(), first_bad_site(model, nullptr), "non-finite eval loss");
        }
    } catch (const NumericalError& e) {
        rec.failed_step = e.step() > 0 ? e.step() : t;
        rec.failed_site = e.site();
        rec.failure = fmt::format("numerical failure at step {} in {}: {}", rec.failed_step, e.site(), e.what());
        rec.budget_final = budget.remaining;
        rec.checkpoints.push_back({t, "final", snapshot(model)});
        const std::string message = rec.failure;
        throw TrainingFailure(std::move(rec), message, true);
    } catch (const Error& e) {
        rec.failed_step = t;
        rec.failure = fmt::format("training stopped at step {}: {}", t, e.what());
        rec.budget_final = budget.remaining;
        rec.checkpoints.push_back({t, "final", snapshot(model)});
        const std::string message = rec.failure;
        throw TrainingFailure(std::move(rec), message, false);
    }

    rec.final_train_loss = rec.steps.empty() ? rec.initial_eval_loss : rec.steps.back().task_loss;
    rec.budget_final = budget.remaining;
    rec.checkpoints.push_back({config.total_steps(), "final", snapshot(model)});
    for (const auto& site : model.sites()) {
        if (const auto* a = std::get_if<AdapterState>(&site.params)) rec.final_ranks.push_back({site.id, a->rank});
    }
    rec.trainable_params = trainable_parameters(model);
    rec.frozen_hash_after = frozen_hash(model);
    rec.flops = total_flops.elapsed();
    rec.complete = true;
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return rec;
}

}  // namespace triadapt
