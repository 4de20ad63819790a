#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "slotpi/predictor.hpp"
#include "slotpi/synthdata.hpp"

namespace slotpi {

struct TrainConfig {
    int burn_in = 10;    // T_b
    int rollout = 15;    // M
    int epochs = 10;
    int batch_size = 8;
    double lr_peak = 2e-4;
    double warmup_frac = 0.025;
    std::uint64_t seed = 0;
    bool use_image_loss = false;  // fluid mode: image loss only
    double grad_clip = 1.0;
    bool weight_decay = false;  // AdamW (fluid mode), decoupled decay 1e-4
};

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    long step = 0;
    std::map<std::string, std::vector<double>> m;
    std::map<std::string, std::vector<double>> v;
};

// Mean over rollout steps and slots of the squared slot error; note the
// 1/(M*N) normalization (not 1/(M*N*D)).
Tensor slot_loss(const std::vector<Tensor>& pred, const std::vector<Tensor>& truth);

// Plain MSE over all elements.
Tensor image_loss(const Tensor& pred_obs, const Tensor& truth_obs);

// Textbook Adam with bias correction; gradients are clipped to global norm
// grad_clip beforehand by the caller. Throws NaNError on NaN gradients
// without touching parameters.
void adam_step(const ParamList& params, const std::vector<Tensor>& grads, AdamState& state,
               double lr);

// Clip in place to global norm; returns the pre-clip norm.
double clip_global_norm(std::vector<Tensor>& grads, double max_norm);

// Linear warmup to lr_peak over the first warmup_frac of steps, then cosine
// decay to 5% of the peak.
double lr_at(long step, long total_steps, const TrainConfig& cfg);

struct TrainLogRow {
    long step = 0;
    double lr = 0;
    double loss_slots = 0;
    double loss_image = 0;
    double lambda_eff = 0;
    double mean_energy = 0;
};

struct TrainResult {
    std::vector<double> epoch_losses;
    std::vector<TrainLogRow> log;
    std::vector<double> lambda_trace;
};

using EpochCallback = std::function<void(int epoch, const SlotPiModel& model,
                                         const AdamState& state, const Rng& rng)>;

// Rollout training: burn-in fills the buffer, M autoregressive steps are
// predicted with gradients kept, loss per the slot/image objective, Adam step.
TrainResult train(SlotPiModel& model, const TrajectoryDataset& dataset, const TrainConfig& cfg,
                  AdamState* resume_state = nullptr, Rng* resume_rng = nullptr,
                  long start_step = 0, const EpochCallback& on_epoch = nullptr);

}  // namespace slotpi
