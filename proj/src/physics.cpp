#include "slotpi/physics.hpp"

#include <cmath>

#include "slotpi/errors.hpp"

namespace slotpi {

namespace {

double frob_norm(const Tensor& t) {
    double s = 0.0;
    for (double v : t.data()) s += v * v;
    return std::sqrt(s);
}

}  // namespace

EnergyHead EnergyHead::init(std::size_t dim, std::size_t heads, Rng& rng) {
    EnergyHead h;
    h.att = AttentionParams::init(2 * dim, heads, rng);
    std::vector<double> w(2 * dim);
    const double s = 1.0 / std::sqrt(double(2 * dim));
    for (auto& v : w) v = s * rng.normal();
    h.readout_w = Tensor::leaf(2 * dim, 1, std::move(w));
    h.readout_b = Tensor::leaf(1, 1, {0.0});
    return h;
}

void EnergyHead::collect(const std::string& prefix, ParamList& out) const {
    att.collect(prefix + ".att", out);
    out.push_back({prefix + ".readout_w", readout_w});
    out.push_back({prefix + ".readout_b", readout_b});
}

Mlp Mlp::init(std::size_t in, std::size_t hidden, std::size_t out, int depth, Rng& rng) {
    if (depth < 1) throw ConfigError("mlp: depth must be >= 1");
    Mlp m;
    for (int l = 0; l < depth; ++l) {
        std::size_t li = (l == 0) ? in : hidden;
        std::size_t lo = (l == depth - 1) ? out : hidden;
        std::vector<double> w(li * lo);
        const double s = 1.0 / std::sqrt(double(li));
        for (auto& v : w) v = s * rng.normal();
        m.weights.push_back(Tensor::leaf(li, lo, std::move(w)));
        m.biases.push_back(Tensor::leaf(1, lo, std::vector<double>(lo, 0.0)));
    }
    return m;
}

Tensor Mlp::forward(const Tensor& x) const {
    Tensor h = x;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        h = linear(h, weights[l], biases[l]);
        if (l + 1 < weights.size()) h = silu(h);
    }
    return h;
}

void Mlp::collect(const std::string& prefix, ParamList& out) const {
    for (std::size_t l = 0; l < weights.size(); ++l) {
        out.push_back({prefix + ".w" + std::to_string(l), weights[l]});
        out.push_back({prefix + ".b" + std::to_string(l), biases[l]});
    }
}

MlpEmbedding MlpEmbedding::init(std::size_t dim, const std::array<int, 3>& depths, Rng& rng) {
    MlpEmbedding e;
    e.p_net = Mlp::init(2 * dim, 2 * dim, dim, depths[0], rng);
    e.q_net = Mlp::init(dim, 2 * dim, dim, depths[1], rng);
    e.h_net = Mlp::init(2 * dim, 2 * dim, 1, depths[2], rng);
    return e;
}

void MlpEmbedding::collect(const std::string& prefix, ParamList& out) const {
    p_net.collect(prefix + ".p_net", out);
    q_net.collect(prefix + ".q_net", out);
    h_net.collect(prefix + ".h_net", out);
}

PhysicsParams PhysicsParams::init(std::size_t dim, std::size_t heads, const HamiltonianConfig& cfg,
                                  Rng& rng) {
    PhysicsParams p;
    p.cfg = cfg;
    p.p_att = AttentionParams::init(dim, heads, rng);
    p.q_att = AttentionParams::init(dim, heads, rng);
    p.head = EnergyHead::init(dim, heads, rng);
    if (cfg.embedding == Embedding::mlp) p.mlp = MlpEmbedding::init(dim, cfg.mlp_depths, rng);
    return p;
}

void PhysicsParams::collect(const std::string& prefix, ParamList& out) const {
    if (cfg.embedding == Embedding::attention) {
        p_att.collect(prefix + ".p_att", out);
        q_att.collect(prefix + ".q_att", out);
        head.collect(prefix + ".head", out);
    } else {
        mlp.collect(prefix + ".mlp", out);
    }
}

PhaseState compute_phase(const Tensor& s_t, const std::vector<Tensor>& history,
                         const AttentionParams& p_att, const AttentionParams& q_att) {
    // At t=0 the past is empty; a single-key attention over {S_t} is the
    // well-defined degenerate form.
    const std::vector<Tensor>& h = history.empty() ? std::vector<Tensor>{s_t} : history;
    PhaseState ph;
    ph.p = corresponding_temporal_attention(s_t, h, p_att);
    ph.q = self_attention(s_t, q_att);
    return ph;
}

std::pair<Tensor, Tensor> scene_energy(const PhaseState& phase, const EnergyHead& head) {
    Tensor tokens = concat_cols({phase.q, phase.p});  // N x 2D
    Tensor att = self_attention(tokens, head.att);
    Tensor sh = softplus(linear(att, head.readout_w, head.readout_b));  // N x 1
    return {sh, sum_all(sh)};
}

std::pair<Tensor, Tensor> hamiltonian_rates_from_energy(const PhaseState& phase, const Tensor& h) {
    if (!phase.q.requires_grad() || !phase.p.requires_grad())
        throw GraphDetachedError("hamiltonian_rates: phase does not require grad");
    auto grads = backward(h, {phase.p, phase.q}, /*create_graph=*/true);
    return {grads[0], neg(grads[1])};
}

std::pair<Tensor, Tensor> hamiltonian_rates(const PhaseState& phase, const EnergyHead& head) {
    auto [sh, h] = scene_energy(phase, head);
    (void)sh;
    return hamiltonian_rates_from_energy(phase, h);
}

PhaseState euler_advance(const PhaseState& phase, const std::pair<Tensor, Tensor>& rates,
                         double dt) {
    if (dt < 0) throw ConfigError("euler_advance: dt must be >= 0");
    PhaseState next;
    next.q = add(phase.q, scale(rates.first, dt));
    next.p = add(phase.p, scale(rates.second, dt));
    next.t = phase.t + 1;
    return next;
}

std::pair<PhaseState, Tensor> mlp_phase_and_energy(const Tensor& s_t,
                                                   const std::vector<Tensor>& history,
                                                   const MlpEmbedding& mlp) {
    const std::vector<Tensor>& h = history.empty() ? std::vector<Tensor>{s_t} : history;
    Tensor mean = h[0];
    for (std::size_t i = 1; i < h.size(); ++i) mean = add(mean, h[i]);
    mean = scale(mean, 1.0 / double(h.size()));
    PhaseState ph;
    ph.p = mlp.p_net.forward(concat_cols({s_t, mean}));
    ph.q = mlp.q_net.forward(s_t);
    Tensor sh = softplus(mlp.h_net.forward(concat_cols({ph.q, ph.p})));
    return {ph, sum_all(sh)};
}

PhysicsOutput physics_forward(const Tensor& s_t, const std::vector<Tensor>& history,
                              const PhysicsParams& params) {
    PhaseState phase;
    Tensor h;
    if (params.cfg.embedding == Embedding::attention) {
        phase = compute_phase(s_t, history, params.p_att, params.q_att);
        auto [sh, ht] = scene_energy(phase, params.head);
        (void)sh;
        h = ht;
    } else {
        auto [ph, ht] = mlp_phase_and_energy(s_t, history, params.mlp);
        phase = ph;
        h = ht;
    }
    auto rates = hamiltonian_rates_from_energy(phase, h);
    PhaseState next = euler_advance(phase, rates, params.cfg.dt);
    PhysicsOutput out;
    out.q_hat = next.q;
    out.p_hat = next.p;
    out.energy = h.item();
    out.qdot_norm = frob_norm(rates.first);
    out.pdot_norm = frob_norm(rates.second);
    return out;
}

}  // namespace slotpi
