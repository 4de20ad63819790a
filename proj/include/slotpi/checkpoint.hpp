#pragma once

#include <string>

#include "slotpi/config.hpp"
#include "slotpi/predictor.hpp"
#include "slotpi/training.hpp"

namespace slotpi {

// SLPC0001: magic, length-prefixed JSON header (config, step, RNG state,
// parameter names/shapes), then little-endian 64-bit payloads per parameter
// (value, then Adam moments when present). load(save(m)) reproduces
// evaluation bit-exactly.
struct CheckpointContents {
    RunConfig config;
    long step = 0;
    std::string rng_state;
    AdamState adam;
    bool has_adam = false;
};

void save_checkpoint(const std::string& path, const SlotPiModel& model, const RunConfig& cfg,
                     long step, const std::string& rng_state, const AdamState* adam = nullptr);

// Rebuilds the model from the stored config and overwrites every parameter
// with the stored payload.
CheckpointContents load_checkpoint(const std::string& path, SlotPiModel& model,
                                   const TrajectoryDataset& dataset);

}  // namespace slotpi
