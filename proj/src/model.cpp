// SPDX-License-Identifier: Apache-2.0
#include "triadapt/model.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "triadapt/errors.hpp"

namespace triadapt {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

// One application of a site: its input and, under dropout, the per-coordinate
// keep factors applied to the adapter branch.
struct LinearCall {
    Vector x;
    Vector keep;
};

Vector masked(const Vector& x, const Vector& keep) {
    if (keep.empty()) return x;
    Vector out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * keep[i];
    return out;
}

Vector draw_keep(const Site& site, std::size_t n, const DropoutPlan& plan) {
    if (!plan.active() || !std::holds_alternative<AdapterState>(site.params)) return {};
    Vector keep(n);
    const double kept = 1.0 / (1.0 - plan.rate);
    for (double& k : keep) k = plan.rng->uniform() < plan.rate ? 0.0 : kept;
    return keep;
}

Vector site_apply(const Site& site, const LinearCall& call) {
    return std::visit(overloaded{
                          [&](const FrozenLinear& f) { return matvec(f.w, call.x); },
                          [&](const DenseLinear& f) { return matvec(f.w, call.x); },
                          [&](const AdapterState& s) {
                              Vector h = matvec(s.w0, call.x);
                              const Vector delta = branch_forward(s, masked(call.x, call.keep));
                              for (std::size_t i = 0; i < h.size(); ++i) h[i] += delta[i];
                              return h;
                          },
                      },
                      site.params);
}

// Accumulates parameter gradients and returns dL/dx (empty when not needed).
Vector site_backward(const Site& site, const LinearCall& call, const Vector& g, double weight, SiteGrad& acc,
                     bool need_input) {
    return std::visit(overloaded{
                          [&](const FrozenLinear& f) { return need_input ? matvec_t(f.w, g) : Vector{}; },
                          [&](const DenseLinear& f) {
                              add_outer(std::get<Matrix>(acc), g, call.x, weight);
                              return need_input ? matvec_t(f.w, g) : Vector{};
                          },
                          [&](const AdapterState& s) {
                              const Vector bx = masked(call.x, call.keep);
                              accumulate_grads(s, bx, g, weight, std::get<AdapterGrads>(acc));
                              if (!need_input) return Vector{};
                              Vector gx = matvec_t(s.w0, g);
                              const Vector gb = masked(branch_input_grad(s, g), call.keep);
                              for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gb[i];
                              return gx;
                          },
                      },
                      site.params);
}

void activate(Vector& v, Activation act) {
    if (act == Activation::tanh) {
        for (double& x : v) x = std::tanh(x);
    }
}

// Scales g by act'(z) given the activated value y = act(z).
void activation_backward(Vector& g, const Vector& y, Activation act) {
    if (act == Activation::tanh) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 1.0 - y[i] * y[i];
    }
}

void set_row(Matrix& m, std::size_t i, const Vector& v) { std::copy(v.begin(), v.end(), m.row(i).begin()); }

Vector get_row(const Matrix& m, std::size_t i) { return Vector(m.row(i).begin(), m.row(i).end()); }

void check_input(const ToyModel& model, const Matrix& x) {
    if (x.cols() != static_cast<std::size_t>(model.dim())) {
        throw DimensionError(fmt::format("model input has {} columns, expected {}", x.cols(), model.dim()));
    }
}

// --- MLP -------------------------------------------------------------------

struct MlpTrace {
    // calls[token][layer]; post[token][layer] is the activated output of hidden layers.
    std::vector<std::vector<LinearCall>> calls;
    std::vector<std::vector<Vector>> post;
};

Matrix mlp_forward(const ToyModel& model, const Matrix& x, MlpTrace* trace, const DropoutPlan& dropout) {
    const auto& sites = model.sites();
    const std::size_t layers = sites.size();
    Matrix out(x.rows(), static_cast<std::size_t>(model.dim()));
    if (trace) {
        trace->calls.assign(x.rows(), {});
        trace->post.assign(x.rows(), {});
    }
    for (std::size_t t = 0; t < x.rows(); ++t) {
        Vector h = get_row(x, t);
        for (std::size_t l = 0; l < layers; ++l) {
            LinearCall call{std::move(h), draw_keep(sites[l], static_cast<std::size_t>(model.dim()), dropout)};
            Vector z = site_apply(sites[l], call);
            if (l + 1 < layers) activate(z, model.activation());
            if (trace) {
                trace->calls[t].push_back(std::move(call));
                trace->post[t].push_back(z);
            }
            h = std::move(z);
        }
        set_row(out, t, h);
    }
    return out;
}

void mlp_backward(const ToyModel& model, const MlpTrace& trace, const Matrix& gout, double weight,
                  ModelGrads& grads) {
    const auto& sites = model.sites();
    const std::size_t layers = sites.size();
    for (std::size_t t = 0; t < gout.rows(); ++t) {
        Vector g = get_row(gout, t);
        for (std::size_t l = layers; l-- > 0;) {
            Vector gin = site_backward(sites[l], trace.calls[t][l], g, weight, grads.sites[l], l > 0);
            if (l == 0) break;
            activation_backward(gin, trace.post[t][l - 1], model.activation());
            g = std::move(gin);
        }
    }
}

// --- attention block -------------------------------------------------------

enum AttnSite : std::size_t { kQ = 0, kK, kV, kA, kM, kO };

struct AttentionTrace {
    std::size_t tokens = 0;
    std::vector<LinearCall> q_calls, k_calls, v_calls, a_calls, m_calls, o_calls;
    std::vector<Vector> q, k, v, z, hidden;  // hidden = act(W_m a)
    Matrix probs{1, 1};
};

Matrix attention_run(const ToyModel& model, const Matrix& x, AttentionTrace& tr, const DropoutPlan& dropout) {
    const auto& s = model.sites();
    const auto n = static_cast<std::size_t>(model.dim());
    const std::size_t tokens = x.rows();
    tr.tokens = tokens;
    auto call = [&](std::size_t site, Vector in) { return LinearCall{std::move(in), draw_keep(s[site], n, dropout)}; };

    for (std::size_t i = 0; i < tokens; ++i) {
        tr.q_calls.push_back(call(kQ, get_row(x, i)));
        tr.q.push_back(site_apply(s[kQ], tr.q_calls.back()));
        tr.k_calls.push_back(call(kK, get_row(x, i)));
        tr.k.push_back(site_apply(s[kK], tr.k_calls.back()));
        tr.v_calls.push_back(call(kV, get_row(x, i)));
        tr.v.push_back(site_apply(s[kV], tr.v_calls.back()));
    }

    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(n));
    tr.probs = Matrix(tokens, tokens);
    for (std::size_t i = 0; i < tokens; ++i) {
        auto row = tr.probs.row(i);
        double peak = -INFINITY;
        for (std::size_t j = 0; j < tokens; ++j) {
            double dot = 0.0;
            for (std::size_t c = 0; c < n; ++c) dot += tr.q[i][c] * tr.k[j][c];
            row[j] = dot * inv_sqrt;
            peak = std::max(peak, row[j]);
        }
        double total = 0.0;
        for (double& p : row) {
            p = std::exp(p - peak);
            total += p;
        }
        for (double& p : row) p /= total;
    }
    add_flops(2 * tokens * tokens * n + 3 * tokens * tokens);

    Matrix out(tokens, n);
    for (std::size_t i = 0; i < tokens; ++i) {
        Vector z(n, 0.0);
        for (std::size_t j = 0; j < tokens; ++j) {
            const double p = tr.probs(i, j);
            for (std::size_t c = 0; c < n; ++c) z[c] += p * tr.v[j][c];
        }
        tr.z.push_back(z);
        tr.a_calls.push_back(call(kA, std::move(z)));
        Vector a = site_apply(s[kA], tr.a_calls.back());
        tr.m_calls.push_back(call(kM, std::move(a)));
        Vector hidden = site_apply(s[kM], tr.m_calls.back());
        activate(hidden, model.activation());
        tr.hidden.push_back(hidden);
        tr.o_calls.push_back(call(kO, std::move(hidden)));
        set_row(out, i, site_apply(s[kO], tr.o_calls.back()));
    }
    add_flops(2 * tokens * tokens * n);
    return out;
}

void attention_backward(const ToyModel& model, const AttentionTrace& tr, const Matrix& gout, double weight,
                        ModelGrads& grads) {
    const auto& s = model.sites();
    const auto n = static_cast<std::size_t>(model.dim());
    const std::size_t tokens = tr.tokens;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(n));

    std::vector<Vector> dz(tokens);
    for (std::size_t i = 0; i < tokens; ++i) {
        Vector g = get_row(gout, i);
        Vector dh = site_backward(s[kO], tr.o_calls[i], g, weight, grads.sites[kO], true);
        activation_backward(dh, tr.hidden[i], model.activation());
        Vector da = site_backward(s[kM], tr.m_calls[i], dh, weight, grads.sites[kM], true);
        dz[i] = site_backward(s[kA], tr.a_calls[i], da, weight, grads.sites[kA], true);
    }

    std::vector<Vector> dq(tokens, Vector(n, 0.0)), dk(tokens, Vector(n, 0.0)), dv(tokens, Vector(n, 0.0));
    for (std::size_t i = 0; i < tokens; ++i) {
        // dP_ij = dz_i . v_j, then through the row softmax.
        Vector dp(tokens);
        double mix = 0.0;
        for (std::size_t j = 0; j < tokens; ++j) {
            double dot = 0.0;
            for (std::size_t c = 0; c < n; ++c) dot += dz[i][c] * tr.v[j][c];
            dp[j] = dot;
            mix += tr.probs(i, j) * dot;
        }
        for (std::size_t j = 0; j < tokens; ++j) {
            const double p = tr.probs(i, j);
            const double ds = p * (dp[j] - mix) * inv_sqrt;
            for (std::size_t c = 0; c < n; ++c) {
                dv[j][c] += p * dz[i][c];
                dq[i][c] += ds * tr.k[j][c];
                dk[j][c] += ds * tr.q[i][c];
            }
        }
    }
    add_flops(8 * tokens * tokens * n);

    for (std::size_t i = 0; i < tokens; ++i) {
        site_backward(s[kQ], tr.q_calls[i], dq[i], weight, grads.sites[kQ], false);
        site_backward(s[kK], tr.k_calls[i], dk[i], weight, grads.sites[kK], false);
        site_backward(s[kV], tr.v_calls[i], dv[i], weight, grads.sites[kV], false);
    }
}

}  // namespace

std::string_view topology_name(Topology t) noexcept {
    return t == Topology::mlp ? "mlp" : "attention_block";
}

Topology parse_topology(std::string_view name) {
    if (name == "mlp") return Topology::mlp;
    if (name == "attention_block") return Topology::attention_block;
    throw ConfigError(fmt::format("unknown topology '{}' (expected mlp or attention_block)", name));
}

std::string_view activation_name(Activation a) noexcept { return a == Activation::tanh ? "tanh" : "identity"; }

Activation parse_activation(std::string_view name) {
    if (name == "tanh") return Activation::tanh;
    if (name == "identity") return Activation::identity;
    throw ConfigError(fmt::format("unknown activation '{}' (expected tanh or identity)", name));
}

void ModelSpec::validate() const {
    if (dim < 1) throw ConfigError(fmt::format("model dim must be >= 1, got {}", dim));
    if (topology == Topology::mlp && layers < 1) {
        throw ConfigError(fmt::format("mlp needs at least one layer, got {}", layers));
    }
    if (base_std < 0.0) throw ConfigError(fmt::format("base_std must be >= 0, got {}", base_std));
}

ToyModel::ToyModel(Topology topology, int dim, Activation activation, std::vector<Site> sites)
    : topology_(topology), dim_(dim), activation_(activation), sites_(std::move(sites)) {
    if (topology_ == Topology::attention_block) {
        if (sites_.size() != kAttentionRoles.size()) {
            throw ConfigError(fmt::format("attention block needs 6 sites, got {}", sites_.size()));
        }
        for (std::size_t i = 0; i < sites_.size(); ++i) {
            if (sites_[i].id.role != kAttentionRoles[i]) {
                throw ConfigError(fmt::format("attention block site {} has role {}, expected {}", i,
                                              role_name(sites_[i].id.role), role_name(kAttentionRoles[i])));
            }
        }
    }
    if (sites_.empty()) throw ConfigError("model has no weight sites");
    for (std::size_t i = 0; i < sites_.size(); ++i) {
        for (std::size_t j = i + 1; j < sites_.size(); ++j) {
            if (sites_[i].id == sites_[j].id) {
                throw ConfigError(fmt::format("duplicate site id {}", to_string(sites_[i].id)));
            }
        }
    }
}

std::size_t ToyModel::index_of(const SiteId& id) const {
    for (std::size_t i = 0; i < sites_.size(); ++i) {
        if (sites_[i].id == id) return i;
    }
    throw ConfigError(fmt::format("model has no site {}", to_string(id)));
}

std::vector<const AdapterState*> ToyModel::adapters() const {
    std::vector<const AdapterState*> out;
    for (const auto& s : sites_) {
        if (const auto* a = std::get_if<AdapterState>(&s.params)) out.push_back(a);
    }
    return out;
}

int ToyModel::adapter_count() const noexcept {
    return static_cast<int>(std::count_if(sites_.begin(), sites_.end(), [](const Site& s) {
        return std::holds_alternative<AdapterState>(s.params);
    }));
}

ToyModel make_base_model(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    const auto n = static_cast<std::size_t>(spec.dim);
    const double std = spec.base_std > 0.0 ? spec.base_std : 1.0 / std::sqrt(static_cast<double>(spec.dim));
    Rng rng = Rng::derive(seed, 0xba5e0000ULL);
    std::vector<Site> sites;
    if (spec.topology == Topology::mlp) {
        for (int l = 0; l < spec.layers; ++l) {
            sites.push_back({{l, Role::dense}, FrozenLinear{gaussian_matrix(n, n, std, rng)}});
        }
    } else {
        for (Role role : kAttentionRoles) {
            sites.push_back({{0, role}, FrozenLinear{gaussian_matrix(n, n, std, rng)}});
        }
    }
    return ToyModel(spec.topology, spec.dim, spec.activation, std::move(sites));
}

Matrix effective_weight(const Site& site) {
    return std::visit(overloaded{
                          [](const FrozenLinear& f) { return f.w; },
                          [](const DenseLinear& f) { return f.w; },
                          [](const AdapterState& s) { return s.w0 + delta_weight(s); },
                      },
                      site.params);
}

const Matrix* frozen_weight(const Site& site) noexcept {
    if (const auto* f = std::get_if<FrozenLinear>(&site.params)) return &f->w;
    if (const auto* a = std::get_if<AdapterState>(&site.params)) return &a->w0;
    return nullptr;
}

std::uint64_t frozen_hash(const ToyModel& model) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& s : model.sites()) {
        if (const Matrix* w = frozen_weight(s)) {
            h ^= content_hash(*w);
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

long trainable_parameters(const ToyModel& model) {
    long total = 0;
    for (const auto& s : model.sites()) {
        if (const auto* d = std::get_if<DenseLinear>(&s.params)) total += static_cast<long>(d->w.size());
        if (const auto* a = std::get_if<AdapterState>(&s.params)) {
            total += static_cast<long>(a->a.size() + a->b.size());
            // L and U together own exactly r^2 entries.
            if (a->transform_trainable) total += static_cast<long>(a->rank) * a->rank;
        }
    }
    return total;
}

Matrix model_forward(const ToyModel& model, const Matrix& x) {
    check_input(model, x);
    if (model.topology() == Topology::mlp) return mlp_forward(model, x, nullptr, {});
    AttentionTrace tr;
    return attention_run(model, x, tr, {});
}

Matrix attention_forward(const ToyModel& model, const Matrix& x) {
    if (model.topology() != Topology::attention_block) throw ConfigError("attention_forward on a non-attention model");
    return model_forward(model, x);
}

Matrix attention_probabilities(const ToyModel& model, const Matrix& x) {
    if (model.topology() != Topology::attention_block) {
        throw ConfigError("attention_probabilities on a non-attention model");
    }
    check_input(model, x);
    AttentionTrace tr;
    attention_run(model, x, tr, {});
    return tr.probs;
}

ModelGrads zero_model_grads(const ToyModel& model) {
    ModelGrads g;
    g.sites.reserve(model.sites().size());
    for (const auto& s : model.sites()) {
        std::visit(overloaded{
                       [&](const FrozenLinear&) { g.sites.emplace_back(std::monostate{}); },
                       [&](const DenseLinear& d) { g.sites.emplace_back(Matrix(d.w.rows(), d.w.cols())); },
                       [&](const AdapterState& a) { g.sites.emplace_back(zero_grads(a)); },
                   },
                   s.params);
    }
    return g;
}

Matrix forward_backward(const ToyModel& model, const Matrix& x,
                        const std::function<Matrix(const Matrix&)>& output_grad, double weight,
                        ModelGrads& grads, const DropoutPlan& dropout) {
    check_input(model, x);
    if (grads.sites.size() != model.sites().size()) throw DimensionError("gradient buffer does not match model");
    if (model.topology() == Topology::mlp) {
        MlpTrace tr;
        Matrix out = mlp_forward(model, x, &tr, dropout);
        mlp_backward(model, tr, output_grad(out), weight, grads);
        return out;
    }
    AttentionTrace tr;
    Matrix out = attention_run(model, x, tr, dropout);
    attention_backward(model, tr, output_grad(out), weight, grads);
    return out;
}

}  // namespace triadapt
