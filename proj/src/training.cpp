#include "slotpi/training.hpp"

#include <cmath>
#include <iostream>

#include "slotpi/errors.hpp"

namespace slotpi {

Tensor slot_loss(const std::vector<Tensor>& pred, const std::vector<Tensor>& truth) {
    if (pred.size() != truth.size() || pred.empty())
        throw ShapeError("slot_loss: series length mismatch or empty");
    const std::size_t m = pred.size();
    const std::size_t n = pred[0].rows();
    Tensor acc;
    for (std::size_t k = 0; k < m; ++k) {
        if (pred[k].rows() != truth[k].rows() || pred[k].cols() != truth[k].cols())
            throw ShapeError("slot_loss: frame shape mismatch");
        Tensor d = sub(pred[k], truth[k]);
        Tensor s = sum_all(mul(d, d));
        acc = k == 0 ? s : add(acc, s);
    }
    return scale(acc, 1.0 / double(m * n));
}

Tensor image_loss(const Tensor& pred_obs, const Tensor& truth_obs) {
    return mse(pred_obs, truth_obs);
}

double clip_global_norm(std::vector<Tensor>& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& g : grads)
        for (double v : g.data()) sq += v * v;
    double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        double s = max_norm / norm;
        for (auto& g : grads)
            for (double& v : g.mutable_data()) v *= s;
    }
    return norm;
}

void adam_step(const ParamList& params, const std::vector<Tensor>& grads, AdamState& state,
               double lr) {
    if (params.size() != grads.size()) throw ShapeError("adam_step: params/grads length");
    for (std::size_t i = 0; i < grads.size(); ++i)
        for (double v : grads[i].data())
            if (std::isnan(v)) throw NaNError("gradient for " + params[i].name);

    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, double(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, double(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& name = params[i].name;
        auto& m = state.m[name];
        auto& v = state.v[name];
        auto& w = const_cast<Tensor&>(params[i].value).mutable_data();
        if (m.empty()) m.assign(w.size(), 0.0);
        if (v.empty()) v.assign(w.size(), 0.0);
        if (m.size() != w.size()) throw ShapeError("adam_step: moment shape for " + name);
        const auto& g = grads[i].data();
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
            double mh = m[j] / bc1;
            double vh = v[j] / bc2;
            if (state.weight_decay > 0.0) w[j] -= lr * state.weight_decay * w[j];
            w[j] -= lr * mh / (std::sqrt(vh) + state.eps);
        }
    }
}

double lr_at(long step, long total_steps, const TrainConfig& cfg) {
    if (step < 0 || step > total_steps) throw ConfigError("lr_at: step out of range");
    const long warmup = std::max<long>(1, long(std::llround(cfg.warmup_frac * double(total_steps))));
    if (step <= warmup) return cfg.lr_peak * double(step) / double(warmup);
    const double floor = 0.05 * cfg.lr_peak;
    double frac = double(step - warmup) / double(total_steps - warmup);
    return floor + (cfg.lr_peak - floor) * 0.5 * (1.0 + std::cos(M_PI * frac));
}

namespace {

struct Sample {
    std::size_t traj;
    std::size_t start;
};

}  // namespace

TrainResult train(SlotPiModel& model, const TrajectoryDataset& dataset, const TrainConfig& cfg,
                  AdamState* resume_state, Rng* resume_rng, long start_step,
                  const EpochCallback& on_epoch) {
    if (cfg.rollout < 1 || cfg.burn_in < 1) throw ConfigError("train: burn_in/rollout must be >= 1");
    const std::size_t window = std::size_t(cfg.burn_in + cfg.rollout);
    if (dataset.steps < window)
        throw ConfigError("train: sequences shorter than burn_in + rollout");

    const bool fluid = cfg.use_image_loss && !dataset.has_slots();
    if (cfg.use_image_loss && !dataset.has_observations())
        throw ConfigError("train: image loss requires observations");
    if (fluid && !model.codec) throw ConfigError("train: fluid mode requires a patch codec");

    PatchGrid grid;
    if (model.codec) {
        grid.height = model.codec->height;
        grid.width = model.codec->width;
        grid.channels = model.codec->channels;
        grid.patch = model.codec->patch;
    }

    ParamList params = model.parameters();
    std::vector<Tensor> wrt;
    for (const auto& p : params) wrt.push_back(p.value);

    AdamState local_state;
    AdamState& state = resume_state ? *resume_state : local_state;
    if (cfg.weight_decay) state.weight_decay = 1e-4;
    Rng local_rng(cfg.seed);
    Rng& rng = resume_rng ? *resume_rng : local_rng;

    const long steps_per_epoch =
        std::max<long>(1, long(dataset.num_traj) / std::max(1, cfg.batch_size));
    const long total_steps = long(cfg.epochs) * steps_per_epoch;

    TrainResult result;
    long step = start_step;
    const int start_epoch = int(start_step / steps_per_epoch);
    for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        double epoch_loss = 0.0;
        long epoch_batches = 0;
        for (long b = 0; b < steps_per_epoch; ++b, ++step) {
            // Draw the batch windows first so the RNG stream is independent
            // of graph evaluation.
            std::vector<Sample> batch(std::size_t(cfg.batch_size));
            for (auto& s : batch) {
                s.traj = std::size_t(rng.raw() % dataset.num_traj);
                s.start = std::size_t(rng.raw() % (dataset.steps - window + 1));
            }

            Tensor loss_s, loss_i;
            double mean_h = 0.0;
            for (const auto& s : batch) {
                std::vector<Tensor> burn, truth_slots;
                std::vector<Tensor> truth_obs;
                for (int t = 0; t < cfg.burn_in; ++t) {
                    if (fluid)
                        burn.push_back(patchify(dataset.obs_frame(s.traj, s.start + t), grid,
                                                model.codec->embed));
                    else
                        burn.push_back(dataset.slot_frame(s.traj, s.start + t));
                }
                for (int t = 0; t < cfg.rollout; ++t) {
                    std::size_t idx = s.start + cfg.burn_in + t;
                    if (fluid)
                        truth_obs.push_back(dataset.obs_frame(s.traj, idx));
                    else
                        truth_slots.push_back(dataset.slot_frame(s.traj, idx));
                }

                RolloutResult roll = rollout(burn, cfg.rollout, model, /*keep_graph=*/true);
                for (const auto& d : roll.diagnostics) mean_h += d.energy;

                if (fluid) {
                    Tensor li;
                    for (int t = 0; t < cfg.rollout; ++t) {
                        Tensor dec = unpatchify(roll.predictions[t], grid, model.codec->readout);
                        Tensor l = image_loss(dec, truth_obs[t]);
                        li = t == 0 ? l : add(li, l);
                    }
                    li = scale(li, 1.0 / double(cfg.rollout));
                    loss_i = loss_i.defined() ? add(loss_i, li) : li;
                } else {
                    Tensor ls = slot_loss(roll.predictions, truth_slots);
                    loss_s = loss_s.defined() ? add(loss_s, ls) : ls;
                }
            }
            mean_h /= double(batch.size() * std::size_t(cfg.rollout));

            Tensor total;
            double ls_val = 0.0, li_val = 0.0;
            if (loss_s.defined()) {
                loss_s = scale(loss_s, 1.0 / double(batch.size()));
                ls_val = loss_s.item();
                total = loss_s;
            }
            if (loss_i.defined()) {
                loss_i = scale(loss_i, 1.0 / double(batch.size()));
                li_val = loss_i.item();
                total = total.defined() ? add(total, loss_i) : loss_i;
            }

            auto grads = backward(total, wrt, /*create_graph=*/false);
            clip_global_norm(grads, cfg.grad_clip);
            double lr = lr_at(step + 1, total_steps, cfg);
            adam_step(params, grads, state, lr);

            TrainLogRow row;
            row.step = step;
            row.lr = lr;
            row.loss_slots = ls_val;
            row.loss_image = li_val;
            row.lambda_eff = model.fusion.effective();
            row.mean_energy = mean_h;
            result.log.push_back(row);
            result.lambda_trace.push_back(row.lambda_eff);
            epoch_loss += ls_val + li_val;
            ++epoch_batches;
        }
        result.epoch_losses.push_back(epoch_loss / double(epoch_batches));
        if (on_epoch) on_epoch(epoch, model, state, rng);
    }
    if (result.epoch_losses.size() >= 2 &&
        result.epoch_losses.back() >= result.epoch_losses.front())
        std::cerr << "train: warning, loss did not improve over training\n";
    return result;
}

}  // namespace slotpi
