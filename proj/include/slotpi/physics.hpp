#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "slotpi/attention.hpp"
#include "slotpi/tensor.hpp"

namespace slotpi {

// Generalized coordinates and momenta for one frame, both NxD.
struct PhaseState {
    Tensor q;
    Tensor p;
    int t = 0;
};

// Self-attention over concatenated [Q;P] tokens (width 2D) followed by a
// linear readout through softplus, so every slot energy is positive.
struct EnergyHead {
    AttentionParams att;   // width 2D
    Tensor readout_w;      // 2Dx1
    Tensor readout_b;      // 1x1

    static EnergyHead init(std::size_t dim, std::size_t heads, Rng& rng);
    void collect(const std::string& prefix, ParamList& out) const;
};

enum class Embedding { attention, mlp };

struct HamiltonianConfig {
    double dt = 0.1;
    Embedding embedding = Embedding::attention;
    std::array<int, 3> mlp_depths = {9, 9, 9};  // N_P, N_Q, N_H
};

// Plain MLP stack, hidden width 2*dim, silu between layers.
struct Mlp {
    std::vector<Tensor> weights;
    std::vector<Tensor> biases;

    static Mlp init(std::size_t in, std::size_t hidden, std::size_t out, int depth, Rng& rng);
    Tensor forward(const Tensor& x) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

// MLP replacement for the attention embedding (ablation).
struct MlpEmbedding {
    Mlp p_net;  // concat(S_t, mean history) -> D
    Mlp q_net;  // S_t -> D
    Mlp h_net;  // concat(Q,P) per slot -> 1, softplus, summed

    static MlpEmbedding init(std::size_t dim, const std::array<int, 3>& depths, Rng& rng);
    void collect(const std::string& prefix, ParamList& out) const;
};

struct PhysicsParams {
    AttentionParams p_att;  // corresponding temporal attention for P
    AttentionParams q_att;  // self attention for Q
    EnergyHead head;
    MlpEmbedding mlp;  // only populated when cfg.embedding == mlp
    HamiltonianConfig cfg;

    static PhysicsParams init(std::size_t dim, std::size_t heads, const HamiltonianConfig& cfg,
                              Rng& rng);
    void collect(const std::string& prefix, ParamList& out) const;
};

struct PhysicsOutput {
    Tensor q_hat;
    Tensor p_hat;
    double energy = 0.0;
    double qdot_norm = 0.0;
    double pdot_norm = 0.0;
};

// Eq-by-eq pieces. Empty history at t=0 substitutes {S_t}.
PhaseState compute_phase(const Tensor& s_t, const std::vector<Tensor>& history,
                         const AttentionParams& p_att, const AttentionParams& q_att);

std::pair<Tensor, Tensor> scene_energy(const PhaseState& phase, const EnergyHead& head);  // (SH, H)

// Qdot = dH/dP, Pdot = -dH/dQ, both still differentiable graph nodes.
std::pair<Tensor, Tensor> hamiltonian_rates(const PhaseState& phase, const EnergyHead& head);
std::pair<Tensor, Tensor> hamiltonian_rates_from_energy(const PhaseState& phase, const Tensor& h);

PhaseState euler_advance(const PhaseState& phase, const std::pair<Tensor, Tensor>& rates, double dt);

std::pair<PhaseState, Tensor> mlp_phase_and_energy(const Tensor& s_t,
                                                   const std::vector<Tensor>& history,
                                                   const MlpEmbedding& mlp);

PhysicsOutput physics_forward(const Tensor& s_t, const std::vector<Tensor>& history,
                              const PhysicsParams& params);

}  // namespace slotpi
