#include "slotpi/config.hpp"

#include <fstream>
#include <set>

#include "slotpi/errors.hpp"

namespace slotpi {

namespace {

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

nlohmann::json RunConfig::to_json() const {
    return {
        {"model",
         {{"n_slots", n_slots},
          {"dim", dim},
          {"heads", heads},
          {"n_blocks", n_blocks},
          {"embedding", embedding},
          {"mlp_depths", mlp_depths},
          {"temporal_full_cross", temporal_full_cross},
          {"seed", model_seed}}},
        {"fusion", {{"mode", fusion_mode}, {"lambda", lambda}}},
        {"training",
         {{"burn_in", training.burn_in},
          {"rollout", training.rollout},
          {"epochs", training.epochs},
          {"batch_size", training.batch_size},
          {"lr_peak", training.lr_peak},
          {"warmup_frac", training.warmup_frac},
          {"seed", training.seed},
          {"use_image_loss", training.use_image_loss},
          {"grad_clip", training.grad_clip},
          {"weight_decay", training.weight_decay}}},
        {"data", {{"system", system}, {"path", data_path}, {"dt", dt}, {"patch", patch}}}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    RunConfig c;
    check_keys(j, {"model", "fusion", "training", "data"}, "config root");
    if (j.contains("model")) {
        const auto& m = j.at("model");
        check_keys(m,
                   {"n_slots", "dim", "heads", "n_blocks", "embedding", "mlp_depths",
                    "temporal_full_cross", "seed"},
                   "model");
        maybe(m, "n_slots", c.n_slots);
        maybe(m, "dim", c.dim);
        maybe(m, "heads", c.heads);
        maybe(m, "n_blocks", c.n_blocks);
        maybe(m, "embedding", c.embedding);
        maybe(m, "mlp_depths", c.mlp_depths);
        maybe(m, "temporal_full_cross", c.temporal_full_cross);
        maybe(m, "seed", c.model_seed);
    }
    if (j.contains("fusion")) {
        const auto& f = j.at("fusion");
        check_keys(f, {"mode", "lambda"}, "fusion");
        maybe(f, "mode", c.fusion_mode);
        maybe(f, "lambda", c.lambda);
    }
    if (j.contains("training")) {
        const auto& t = j.at("training");
        check_keys(t,
                   {"burn_in", "rollout", "epochs", "batch_size", "lr_peak", "warmup_frac", "seed",
                    "use_image_loss", "grad_clip", "weight_decay"},
                   "training");
        maybe(t, "burn_in", c.training.burn_in);
        maybe(t, "rollout", c.training.rollout);
        maybe(t, "epochs", c.training.epochs);
        maybe(t, "batch_size", c.training.batch_size);
        maybe(t, "lr_peak", c.training.lr_peak);
        maybe(t, "warmup_frac", c.training.warmup_frac);
        maybe(t, "seed", c.training.seed);
        maybe(t, "use_image_loss", c.training.use_image_loss);
        maybe(t, "grad_clip", c.training.grad_clip);
        maybe(t, "weight_decay", c.training.weight_decay);
    }
    if (j.contains("data")) {
        const auto& d = j.at("data");
        check_keys(d, {"system", "path", "dt", "patch"}, "data");
        maybe(d, "system", c.system);
        maybe(d, "path", c.data_path);
        maybe(d, "dt", c.dt);
        maybe(d, "patch", c.patch);
    }
    // validation
    if (c.embedding != "attention" && c.embedding != "mlp")
        throw ConfigError("embedding must be 'attention' or 'mlp'");
    if (c.fusion_mode != "fixed" && c.fusion_mode != "learnable")
        throw ConfigError("fusion mode must be 'fixed' or 'learnable'");
    if (c.dim == 0 || c.heads == 0 || c.dim % c.heads != 0)
        throw ConfigError("dim must be a positive multiple of heads");
    if (c.n_blocks < 1) throw ConfigError("n_blocks must be >= 1");
    if (c.training.rollout < 1 || c.training.burn_in < 1)
        throw ConfigError("burn_in and rollout must be >= 1");
    if (!(c.training.warmup_frac > 0 && c.training.warmup_frac < 1))
        throw ConfigError("warmup_frac must be in (0,1)");
    if (!(c.training.lr_peak > 0)) throw ConfigError("lr_peak must be > 0");
    if (!(c.dt > 0)) throw ConfigError("dt must be > 0");
    for (int d : c.mlp_depths)
        if (d < 1) throw ConfigError("mlp_depths entries must be >= 1");
    return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config parse: " + std::string(e.what()));
    }
    return from_json(j);
}

SlotPiModel build_model(const RunConfig& cfg, const TrajectoryDataset& dataset) {
    SlotPiModel model;
    model.dim = cfg.dim;
    model.heads = cfg.heads;

    const bool fluid = !dataset.has_slots() && dataset.has_observations();
    if (fluid) {
        PatchGrid grid{dataset.obs_h, dataset.obs_w, dataset.obs_c, cfg.patch};
        if (grid.height % grid.patch != 0 || grid.width % grid.patch != 0)
            throw ConfigError("patch size does not divide the observation grid");
        model.n_slots = grid.tokens();
        model.codec =
            PatchCodec::init(grid.height, grid.width, grid.channels, grid.patch, cfg.dim);
    } else {
        if (!dataset.has_slots()) throw ConfigError("dataset has neither slots nor observations");
        if (cfg.n_slots != 0 && cfg.n_slots != dataset.n_slots)
            throw ConfigError("config n_slots does not match dataset");
        if (cfg.dim != dataset.dim) throw ConfigError("config dim does not match dataset");
        model.n_slots = dataset.n_slots;
    }

    HamiltonianConfig hcfg;
    hcfg.dt = cfg.dt;
    hcfg.embedding = cfg.embedding == "mlp" ? Embedding::mlp : Embedding::attention;
    hcfg.mlp_depths = cfg.mlp_depths;

    Rng rng(cfg.model_seed);
    model.physics = PhysicsParams::init(cfg.dim, cfg.heads, hcfg, rng);
    model.stm = STStack::init(cfg.dim, cfg.heads, cfg.n_blocks, cfg.temporal_full_cross, rng);
    model.fusion = cfg.fusion_mode == "learnable" ? FusionWeight::learnable(cfg.lambda)
                                                  : FusionWeight::fixed_weight(cfg.lambda);
    return model;
}

}  // namespace slotpi
