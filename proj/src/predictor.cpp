#include "slotpi/predictor.hpp"

#include <cmath>

#include "slotpi/errors.hpp"

namespace slotpi {

FusionWeight FusionWeight::fixed_weight(double lambda) {
    if (lambda < 0) throw ConfigError("fusion: fixed lambda must be >= 0");
    FusionWeight f;
    f.mode = FusionMode::fixed;
    f.value = lambda;
    return f;
}

FusionWeight FusionWeight::learnable(double init) {
    if (!(init > 0.0 && init < 1.0)) throw ConfigError("fusion: learnable init must be in (0,1)");
    FusionWeight f;
    f.mode = FusionMode::learnable;
    f.raw = Tensor::leaf(1, 1, {std::log(init / (1.0 - init))});
    return f;
}

double FusionWeight::effective() const {
    if (mode == FusionMode::fixed) return value;
    double x = raw.item();
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

void FusionWeight::collect(const std::string& prefix, ParamList& out) const {
    if (mode == FusionMode::learnable) out.push_back({prefix + ".raw", raw});
}

void MemoryBuffer::push(const Tensor& frame) {
    frames_.push_back(frame);
    while (frames_.size() > capacity_) frames_.pop_front();
}

const Tensor& MemoryBuffer::newest() const {
    if (frames_.empty()) throw BufferEmptyError("memory buffer");
    return frames_.back();
}

std::vector<Tensor> MemoryBuffer::frames() const {
    return std::vector<Tensor>(frames_.begin(), frames_.end());
}

std::vector<Tensor> MemoryBuffer::past() const {
    if (frames_.empty()) throw BufferEmptyError("memory buffer");
    return std::vector<Tensor>(frames_.begin(), frames_.end() - 1);
}

PatchCodec PatchCodec::init(std::size_t h, std::size_t w, std::size_t c, std::size_t p,
                            std::size_t dim) {
    if (h % p != 0 || w % p != 0) throw ShapeError("patch codec: grid must divide observation");
    const std::size_t in = p * p * c;
    if (dim < in) throw ConfigError("patch codec: dim must be >= patch elements");
    PatchCodec codec;
    codec.patch = p;
    codec.height = h;
    codec.width = w;
    codec.channels = c;
    // Identity-initialized pair: embed rows orthonormal, readout = embed^T,
    // so unpatchify(patchify(x)) = x before training.
    std::vector<double> e(in * dim, 0.0);
    for (std::size_t i = 0; i < in; ++i) e[i * dim + i] = 1.0;
    std::vector<double> r(dim * in, 0.0);
    for (std::size_t i = 0; i < in; ++i) r[i * in + i] = 1.0;
    codec.embed = Tensor::leaf(in, dim, std::move(e));
    codec.readout = Tensor::leaf(dim, in, std::move(r));
    return codec;
}

void PatchCodec::collect(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".embed", embed});
    out.push_back({prefix + ".readout", readout});
}

ParamList SlotPiModel::parameters() const {
    ParamList out;
    physics.collect("phys", out);
    stm.collect("stm", out);
    fusion.collect("fusion", out);
    if (codec) codec->collect("codec", out);
    return out;
}

std::size_t SlotPiModel::param_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.value.numel();
    return n;
}

PredictResult predict_step(const MemoryBuffer& buffer, const SlotPiModel& model) {
    if (buffer.empty()) throw BufferEmptyError("predict_step");
    const Tensor& s_t = buffer.newest();

    PhysicsOutput phys = physics_forward(s_t, buffer.past(), model.physics);
    Tensor st_pred = st_forward(s_t, buffer.frames(), model.stm);

    PredictResult res;
    if (model.fusion.mode == FusionMode::fixed) {
        // lambda = 0 must reproduce the STM-only model bit-exactly.
        res.s_next = model.fusion.value == 0.0 ? st_pred
                                               : add(scale(phys.q_hat, model.fusion.value), st_pred);
    } else {
        res.s_next = add(mul(phys.q_hat, sigmoid(model.fusion.raw)), st_pred);
    }
    res.diag.energy = phys.energy;
    res.diag.lambda_eff = model.fusion.effective();
    res.diag.qdot_norm = phys.qdot_norm;
    res.diag.pdot_norm = phys.pdot_norm;
    res.diag.p_hat = detach(phys.p_hat);  // diagnostic only, never fed forward
    return res;
}

RolloutResult rollout(const std::vector<Tensor>& burn_in, int steps, const SlotPiModel& model,
                      bool keep_graph) {
    if (burn_in.empty()) throw BufferEmptyError("rollout: burn-in");
    if (steps < 1) throw ConfigError("rollout: steps must be >= 1");

    MemoryBuffer buffer(burn_in.size());
    for (const auto& f : burn_in) buffer.push(f);

    RolloutResult out;
    out.predictions.reserve(steps);
    for (int s = 0; s < steps; ++s) {
        PredictResult r = predict_step(buffer, model);
        out.predictions.push_back(r.s_next);
        out.diagnostics.push_back(std::move(r.diag));
        buffer.push(keep_graph ? r.s_next : detach(r.s_next));
    }
    return out;
}

void set_fusion(SlotPiModel& model, FusionMode mode, double value_or_init) {
    model.fusion = mode == FusionMode::fixed ? FusionWeight::fixed_weight(value_or_init)
                                             : FusionWeight::learnable(value_or_init);
}

}  // namespace slotpi
