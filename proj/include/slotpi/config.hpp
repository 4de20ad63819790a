#pragma once

#include <string>

#include "json.hpp"
#include "slotpi/predictor.hpp"
#include "slotpi/synthdata.hpp"
#include "slotpi/training.hpp"

namespace slotpi {

// Full run configuration. Every field has a default; unknown keys in a
// config file are rejected.
struct RunConfig {
    // model
    std::size_t n_slots = 0;  // 0 = take from dataset
    std::size_t dim = 16;
    std::size_t heads = 4;
    std::size_t n_blocks = 2;
    std::string embedding = "attention";  // or "mlp"
    std::array<int, 3> mlp_depths = {9, 9, 9};
    bool temporal_full_cross = false;
    // fusion
    std::string fusion_mode = "fixed";  // or "learnable"
    double lambda = 1.0;                // fixed value, or learnable init
    // training
    TrainConfig training;
    // data
    std::string system = "spring";
    std::string data_path;
    double dt = 0.1;
    std::size_t patch = 2;
    std::uint64_t model_seed = 1;

    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig from_file(const std::string& path);
};

// Build a model matching the config and dataset dimensions. Throws
// ConfigError on a config/data mismatch.
SlotPiModel build_model(const RunConfig& cfg, const TrajectoryDataset& dataset);

}  // namespace slotpi
