#pragma once

#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "slotpi/physics.hpp"
#include "slotpi/stmod.hpp"

namespace slotpi {

enum class FusionMode { fixed, learnable };

// Weight on the physics branch in the final sum. Learnable mode goes through
// a sigmoid so the effective value stays strictly inside (0,1).
struct FusionWeight {
    FusionMode mode = FusionMode::fixed;
    double value = 1.0;  // fixed mode, any value >= 0 (0 = no-physics baseline)
    Tensor raw;          // learnable mode, 1x1 leaf

    static FusionWeight fixed_weight(double lambda);
    static FusionWeight learnable(double init);  // init in (0,1), raw = logit(init)

    double effective() const;
    void collect(const std::string& prefix, ParamList& out) const;
};

// FIFO of the most recent frames of slot states; eviction is oldest-first.
class MemoryBuffer {
public:
    explicit MemoryBuffer(std::size_t capacity) : capacity_(capacity) {}

    void push(const Tensor& frame);
    std::size_t size() const { return frames_.size(); }
    std::size_t capacity() const { return capacity_; }
    bool empty() const { return frames_.empty(); }
    const Tensor& newest() const;
    // All frames oldest-first.
    std::vector<Tensor> frames() const;
    // Frames excluding the newest (the physics branch's history).
    std::vector<Tensor> past() const;

private:
    std::size_t capacity_;
    std::deque<Tensor> frames_;
};

// Patch embedding pair for fluid mode: tokens = patches @ embed,
// fields = tokens @ readout.
struct PatchCodec {
    std::size_t patch = 2;
    std::size_t height = 0, width = 0, channels = 1;
    Tensor embed;    // (p*p*C) x D
    Tensor readout;  // D x (p*p*C)

    static PatchCodec init(std::size_t h, std::size_t w, std::size_t c, std::size_t p,
                           std::size_t dim);
    void collect(const std::string& prefix, ParamList& out) const;
};

struct SlotPiModel {
    std::size_t n_slots = 0;
    std::size_t dim = 16;
    std::size_t heads = 4;
    PhysicsParams physics;
    STStack stm;
    FusionWeight fusion;
    std::optional<PatchCodec> codec;  // fluid mode only

    ParamList parameters() const;
    std::size_t param_count() const;
};

struct StepDiagnostics {
    double energy = 0.0;
    double lambda_eff = 1.0;
    double qdot_norm = 0.0;
    double pdot_norm = 0.0;
    Tensor p_hat;  // diagnostic only, never fed forward
};

struct PredictResult {
    Tensor s_next;
    StepDiagnostics diag;
};

PredictResult predict_step(const MemoryBuffer& buffer, const SlotPiModel& model);

struct RolloutResult {
    std::vector<Tensor> predictions;
    std::vector<StepDiagnostics> diagnostics;
};

// Buffer is seeded with burn-in, capacity = burn-in length. With keep_graph
// the predictions stay attached for training; otherwise each frame is
// detached before re-entering the buffer.
RolloutResult rollout(const std::vector<Tensor>& burn_in, int steps, const SlotPiModel& model,
                      bool keep_graph = false);

void set_fusion(SlotPiModel& model, FusionMode mode, double value_or_init);

}  // namespace slotpi
