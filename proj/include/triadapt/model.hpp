// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale host networks for adapters.
//
//   mlp:             h_l = act(W_l h_{l-1}) for l < L, output W_L h_{L-1}
//   attention_block: one head, d_k = dim, per token x_i
//                      q_i = W_q x_i, k_i = W_k x_i, v_i = W_v x_i
//                      P   = softmax_rows(Q K^T / sqrt(dim))
//                      z_i = sum_j P_ij v_j,   a_i = W_a z_i
//                      o_i = W_o act(W_m a_i)
//
// Every weight site is square (dim x dim). A sample is a tokens x dim matrix;
// the MLP treats each row independently.

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "triadapt/adapter.hpp"

namespace triadapt {

enum class Topology { mlp, attention_block };
enum class Activation { tanh, identity };

std::string_view topology_name(Topology t) noexcept;
Topology parse_topology(std::string_view name);
std::string_view activation_name(Activation a) noexcept;
Activation parse_activation(std::string_view name);

struct FrozenLinear {
    Matrix w;
};

/// Fully trainable weight, used by the full fine-tuning arm.
struct DenseLinear {
    Matrix w;
};

using SiteParams = std::variant<FrozenLinear, DenseLinear, AdapterState>;

struct Site {
    SiteId id;
    SiteParams params;
};

struct ModelSpec {
    Topology topology = Topology::mlp;
    int dim = 16;
    int layers = 6;  ///< mlp only; the attention block always has six sites
    Activation activation = Activation::tanh;
    double base_std = 0.0;  ///< 0 selects 1 / sqrt(dim)

    void validate() const;

    bool operator==(const ModelSpec&) const = default;
};

class ToyModel {
public:
    ToyModel(Topology topology, int dim, Activation activation, std::vector<Site> sites);

    Topology topology() const noexcept { return topology_; }
    int dim() const noexcept { return dim_; }
    Activation activation() const noexcept { return activation_; }

    std::vector<Site>& sites() noexcept { return sites_; }
    const std::vector<Site>& sites() const noexcept { return sites_; }

    std::size_t index_of(const SiteId& id) const;
    Site& site(const SiteId& id) { return sites_[index_of(id)]; }
    const Site& site(const SiteId& id) const { return sites_[index_of(id)]; }

    /// Adapter sites in model order.
    std::vector<const AdapterState*> adapters() const;
    int adapter_count() const noexcept;

private:
    Topology topology_;
    int dim_;
    Activation activation_;
    std::vector<Site> sites_;
};

/// All sites frozen, weights N(0, base_std^2).
ToyModel make_base_model(const ModelSpec& spec, std::uint64_t seed);

/// The current effective weight of a site (W0 + Delta W for adapters).
Matrix effective_weight(const Site& site);
/// Frozen part of a site: W0 of an adapter, the weight of a frozen site. Dense sites have none.
const Matrix* frozen_weight(const Site& site) noexcept;

/// FNV-1a over every frozen matrix, in site order.
std::uint64_t frozen_hash(const ToyModel& model);

long trainable_parameters(const ToyModel& model);

/// Network output for one sample (tokens x dim).
Matrix model_forward(const ToyModel& model, const Matrix& x);

/// Attention block output; throws ConfigError on an mlp model.
Matrix attention_forward(const ToyModel& model, const Matrix& x);

/// Row-stochastic attention matrix of the block for input x.
Matrix attention_probabilities(const ToyModel& model, const Matrix& x);

/// Per-site gradient buffer: nothing for frozen sites, a dense matrix for
/// DenseLinear, adapter factors for AdapterState.
using SiteGrad = std::variant<std::monostate, Matrix, AdapterGrads>;

struct ModelGrads {
    std::vector<SiteGrad> sites;
};

ModelGrads zero_model_grads(const ToyModel& model);

/// Optional inverted-dropout masks on adapter-branch inputs: one value per input
/// coordinate, 0 for dropped and 1/(1-p) for kept.
struct DropoutPlan {
    double rate = 0.0;
    Rng* rng = nullptr;

    bool active() const noexcept { return rate > 0.0 && rng != nullptr; }
};

/// Forward one sample, then accumulate weight * dLoss/dparams given dLoss/doutput.
/// Returns the network output computed on the way.
Matrix forward_backward(const ToyModel& model, const Matrix& x,
                        const std::function<Matrix(const Matrix&)>& output_grad, double weight,
                        ModelGrads& grads, const DropoutPlan& dropout = {});

}  // namespace triadapt
