#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "slotpi/checkpoint.hpp"
#include "slotpi/config.hpp"
#include "slotpi/errors.hpp"
#include "slotpi/metrics.hpp"
#include "slotpi/training.hpp"

namespace fs = std::filesystem;
using namespace slotpi;

namespace {

std::uint64_t fnv1a(const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::size_t worker_threads() {
    const char* env = std::getenv("SLOTPI_THREADS");
    if (!env) return 1;
    long n = std::strtol(env, nullptr, 10);
    if (n < 1) return 1;
    return std::min<std::size_t>(std::size_t(n), std::thread::hardware_concurrency());
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, sep)) out.push_back(tok);
    return out;
}

// ---------------------------------------------------------------------------
// gen-data

struct GenFlags {
    std::string system = "spring";
    std::size_t num_traj = 0;
    std::size_t steps = 0;
    double dt = 0.1;
    std::uint64_t seed = 0;
    std::string out;
    std::size_t bodies = 2;
    std::size_t balls = 3;
    double gamma = 0.1;
    std::size_t grid = 16;
    double nu = 0.2;
};

int cmd_gen_data(const GenFlags& f) {
    TrajectoryDataset ds;
    if (f.system == "spring")
        ds = gen_spring_mass(f.num_traj, f.steps, f.bodies, f.dt, f.seed);
    else if (f.system == "damped")
        ds = gen_damped_oscillator(f.num_traj, f.steps, f.dt, f.gamma, f.seed);
    else if (f.system == "balls")
        ds = gen_bouncing_balls(f.num_traj, f.steps, f.balls, f.dt, f.seed);
    else
        ds = gen_diffusion2d(f.num_traj, f.steps, f.grid, f.grid, f.dt, f.nu, f.seed);

    save_dataset(ds, f.out);
    std::uint64_t sum = fnv1a(ds.slots.data(), ds.slots.size() * 4) ^
                        fnv1a(ds.observations.data(), ds.observations.size() * 4);
    std::cout << "wrote " << f.out << " system=" << ds.system << " traj=" << ds.num_traj
              << " steps=" << ds.steps;
    if (ds.has_slots()) std::cout << " slots=[" << ds.n_slots << "x" << ds.dim << "]";
    if (ds.has_observations())
        std::cout << " obs=[" << ds.obs_h << "x" << ds.obs_w << "x" << ds.obs_c << "]";
    std::cout << " checksum=" << std::hex << sum << std::dec << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainFlags {
    std::string config;
    std::string data;
    std::string out = ".";
    std::string resume;
    double lambda_override = -1.0;  // <0 = keep config
    std::string mode_override;
};

void write_train_csv(const std::string& path, const TrainResult& res) {
    std::ofstream f(path);
    f << "step,lr,loss_slots,loss_image,lambda,mean_energy\n";
    f.precision(17);
    for (const auto& r : res.log)
        f << r.step << "," << r.lr << "," << r.loss_slots << "," << r.loss_image << ","
          << r.lambda_eff << "," << r.mean_energy << "\n";
}

void write_lambda_trace(const std::string& path, const std::vector<double>& trace) {
    std::ofstream f(path);
    f << "step,lambda\n";
    f.precision(17);
    for (std::size_t i = 0; i < trace.size(); ++i) f << i << "," << trace[i] << "\n";
}

int cmd_train(const TrainFlags& flags) {
    RunConfig cfg = flags.config.empty() ? RunConfig() : RunConfig::from_file(flags.config);
    if (!flags.mode_override.empty()) cfg.fusion_mode = flags.mode_override;
    if (flags.lambda_override >= 0.0) cfg.lambda = flags.lambda_override;

    TrajectoryDataset ds = load_dataset(flags.data);
    fs::create_directories(flags.out);

    SlotPiModel model;
    AdamState state;
    Rng rng(cfg.training.seed);
    long start_step = 0;
    if (!flags.resume.empty()) {
        CheckpointContents ckpt = load_checkpoint(flags.resume, model, ds);
        cfg = ckpt.config;
        if (ckpt.has_adam) state = ckpt.adam;
        rng.set_state(ckpt.rng_state);
        start_step = ckpt.step;
    } else {
        model = build_model(cfg, ds);
    }

    if (!ds.has_slots()) cfg.training.use_image_loss = true;

    const long steps_per_epoch =
        std::max<long>(1, long(ds.num_traj) / std::max(1, cfg.training.batch_size));
    const std::string out = flags.out;
    auto on_epoch = [&](int epoch, const SlotPiModel& m, const AdamState& st, const Rng& r) {
        long step = (epoch + 1) * steps_per_epoch;
        save_checkpoint(out + "/ckpt_epoch_" + std::to_string(epoch) + ".bin", m, cfg, step,
                        r.state(), &st);
        save_checkpoint(out + "/ckpt_last.bin", m, cfg, step, r.state(), &st);
    };

    TrainResult res = train(model, ds, cfg.training, &state, &rng, start_step, on_epoch);
    write_train_csv(out + "/train_log.csv", res);
    if (cfg.fusion_mode == "learnable") write_lambda_trace(out + "/lambda_trace.csv", res.lambda_trace);

    std::cout << "trained " << res.epoch_losses.size() << " epochs, loss "
              << (res.epoch_losses.empty() ? 0.0 : res.epoch_losses.front()) << " -> "
              << (res.epoch_losses.empty() ? 0.0 : res.epoch_losses.back()) << ", checkpoints in "
              << out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalFlags {
    std::string ckpt;
    std::string data;
    std::string out = ".";
    int burn_in = 10;
    int steps = 15;
    std::string metrics = "rmse,mae,hct,psnr";
    double hct_threshold = 0.8;
    std::string baseline;
};

struct EvalSeries {
    SeriesPair model_pair;
    SeriesPair base_pair;
    std::vector<double> energies;  // per rollout step
};

EvalSeries eval_trajectory(const SlotPiModel& model, const TrajectoryDataset& ds,
                           std::size_t traj, int burn_in, int steps, bool want_baseline) {
    const bool fluid = model.codec.has_value();
    PatchGrid grid;
    if (fluid) {
        grid.height = model.codec->height;
        grid.width = model.codec->width;
        grid.channels = model.codec->channels;
        grid.patch = model.codec->patch;
    }

    std::vector<Tensor> burn;
    std::vector<std::vector<double>> burn_flat;
    for (int t = 0; t < burn_in; ++t) {
        if (fluid) {
            burn.push_back(patchify(ds.obs_frame(traj, std::size_t(t)), grid, model.codec->embed));
            burn_flat.push_back(ds.obs_frame_flat(traj, std::size_t(t)));
        } else {
            Tensor f = ds.slot_frame(traj, std::size_t(t));
            burn.push_back(f);
            burn_flat.push_back(f.data());
        }
    }

    RolloutResult roll = rollout(burn, steps, model);

    EvalSeries out;
    out.model_pair.dt = ds.dt;
    out.base_pair.dt = ds.dt;
    for (int t = 0; t < steps; ++t) {
        std::size_t idx = std::size_t(burn_in + t);
        std::vector<double> truth =
            fluid ? ds.obs_frame_flat(traj, idx) : ds.slot_frame(traj, idx).data();
        std::vector<double> pred =
            fluid ? unpatchify(roll.predictions[std::size_t(t)], grid, model.codec->readout).data()
                  : roll.predictions[std::size_t(t)].data();
        out.model_pair.pred.push_back(std::move(pred));
        out.model_pair.truth.push_back(truth);
        out.energies.push_back(roll.diagnostics[std::size_t(t)].energy);
        if (want_baseline) out.base_pair.truth.push_back(std::move(truth));
    }
    if (want_baseline) out.base_pair.pred = persistence_baseline(burn_flat, steps);
    return out;
}

double truth_range(const SeriesPair& pair) {
    double lo = pair.truth[0][0], hi = lo;
    for (const auto& f : pair.truth)
        for (double v : f) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    return hi > lo ? hi - lo : 1.0;
}

int cmd_eval(const EvalFlags& flags) {
    TrajectoryDataset ds = load_dataset(flags.data);
    if (std::size_t(flags.burn_in + flags.steps) > ds.steps)
        throw ConfigError("eval: burn-in + steps exceeds sequence length");

    SlotPiModel model;
    load_checkpoint(flags.ckpt, model, ds);
    fs::create_directories(flags.out);

    const bool want_baseline = flags.baseline == "persistence";
    std::vector<std::string> wanted = split(flags.metrics, ',');
    auto has = [&](const char* m) {
        return std::find(wanted.begin(), wanted.end(), m) != wanted.end();
    };

    MetricReport rep, base_rep;
    std::ofstream diag(flags.out + "/diagnostics.csv");
    diag << "traj,step,energy\n";
    diag.precision(17);

    double drift_max = 0.0;
    for (std::size_t traj = 0; traj < ds.num_traj; ++traj) {
        EvalSeries es =
            eval_trajectory(model, ds, traj, flags.burn_in, flags.steps, want_baseline);
        double n = double(ds.num_traj);
        if (has("rmse")) rep["rmse"] += rmse(es.model_pair) / n;
        if (has("mae")) rep["mae"] += mae(es.model_pair) / n;
        if (has("hct")) rep["hct_seconds"] += hct(es.model_pair, flags.hct_threshold) / n;
        if (has("psnr")) rep["psnr_db"] += psnr(es.model_pair, truth_range(es.model_pair)) / n;
        if (want_baseline) {
            if (has("rmse")) base_rep["rmse"] += rmse(es.base_pair) / n;
            if (has("mae")) base_rep["mae"] += mae(es.base_pair) / n;
            if (has("hct"))
                base_rep["hct_seconds"] += hct(es.base_pair, flags.hct_threshold) / n;
            if (has("psnr"))
                base_rep["psnr_db"] += psnr(es.base_pair, truth_range(es.base_pair)) / n;
        }
        drift_max = std::max(drift_max, energy_drift(es.energies).second);
        for (std::size_t t = 0; t < es.energies.size(); ++t)
            diag << traj << "," << t << "," << es.energies[t] << "\n";
    }
    rep["energy_drift_max"] = drift_max;

    nlohmann::json report = nlohmann::json::parse(report_json(rep));
    if (want_baseline) report["persistence"] = nlohmann::json::parse(report_json(base_rep));
    {
        std::ofstream jf(flags.out + "/report.json");
        jf << report.dump(2) << "\n";
        std::ofstream cf(flags.out + "/report.csv");
        cf << report_csv(rep);
        if (want_baseline) cf << report_csv(base_rep);
    }
    std::cout << report.dump(2) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// ablate

struct AblateFlags {
    std::string sweep;
    std::string config;
    std::string data;
    std::string out = ".";
    std::uint64_t seed = 1;
};

struct Variant {
    std::string label;
    RunConfig cfg;
};

struct VariantResult {
    std::string label;
    std::size_t params = 0;
    double final_loss = 0.0;
    double test_rmse = 0.0;
    double final_lambda = 0.0;
    std::vector<double> lambda_trace;
};

std::vector<Variant> parse_sweep(const std::string& sweep, const RunConfig& base) {
    auto eq = sweep.find('=');
    if (eq == std::string::npos || eq + 1 >= sweep.size())
        throw CLI::ValidationError("--sweep", "expected axis=value,value,...");
    const std::string axis = sweep.substr(0, eq);
    std::vector<std::string> vals = split(sweep.substr(eq + 1), ',');
    if (vals.empty()) throw CLI::ValidationError("--sweep", "empty sweep");

    std::vector<Variant> out;
    if (axis == "lambda") {
        for (const auto& v : vals) {
            Variant var{"lambda=" + v, base};
            if (v == "learnable") {
                var.cfg.fusion_mode = "learnable";
                var.cfg.lambda = 0.5;
            } else {
                var.cfg.fusion_mode = "fixed";
                var.cfg.lambda = std::stod(v);
            }
            out.push_back(std::move(var));
        }
    } else if (axis == "embedding") {
        // "attention" or "mlp:3,7,9,11" (depth applied to all three nets)
        if (vals[0].rfind("mlp:", 0) == 0) {
            vals[0] = vals[0].substr(4);
            Variant att{"attention", base};
            att.cfg.embedding = "attention";
            out.push_back(std::move(att));
            for (const auto& v : vals) {
                int d = std::stoi(v);
                Variant var{"mlp-depth-" + v, base};
                var.cfg.embedding = "mlp";
                var.cfg.mlp_depths = {d, d, d};
                out.push_back(std::move(var));
            }
        } else {
            for (const auto& v : vals) {
                Variant var{"embedding=" + v, base};
                var.cfg.embedding = v;
                out.push_back(std::move(var));
            }
        }
    } else if (axis == "blocks") {
        for (const auto& v : vals) {
            Variant var{"blocks=" + v, base};
            var.cfg.n_blocks = std::size_t(std::stoul(v));
            out.push_back(std::move(var));
        }
    } else if (axis == "frames") {
        // entries "Tb:M"
        for (const auto& v : vals) {
            auto parts = split(v, ':');
            if (parts.size() != 2) throw CLI::ValidationError("--sweep", "frames entries are Tb:M");
            Variant var{"frames=" + v, base};
            var.cfg.training.burn_in = std::stoi(parts[0]);
            var.cfg.training.rollout = std::stoi(parts[1]);
            out.push_back(std::move(var));
        }
    } else {
        throw CLI::ValidationError("--sweep", "axis must be lambda, embedding, blocks or frames");
    }
    return out;
}

VariantResult run_variant(const Variant& var, const TrajectoryDataset& ds) {
    VariantResult res;
    res.label = var.label;
    SlotPiModel model = build_model(var.cfg, ds);
    res.params = model.param_count();

    TrainConfig tc = var.cfg.training;
    if (!ds.has_slots()) tc.use_image_loss = true;
    TrainResult tr = train(model, ds, tc);
    res.final_loss = tr.epoch_losses.empty() ? 0.0 : tr.epoch_losses.back();
    res.lambda_trace = tr.lambda_trace;
    res.final_lambda = model.fusion.effective();

    // quick rollout rmse on the first trajectory's held-out tail
    const bool fluid = model.codec.has_value();
    if (ds.steps >= std::size_t(tc.burn_in + tc.rollout)) {
        PatchGrid grid;
        if (fluid)
            grid = PatchGrid{model.codec->height, model.codec->width, model.codec->channels,
                             model.codec->patch};
        std::vector<Tensor> burn;
        for (int t = 0; t < tc.burn_in; ++t)
            burn.push_back(fluid ? patchify(ds.obs_frame(0, std::size_t(t)), grid,
                                            model.codec->embed)
                                 : ds.slot_frame(0, std::size_t(t)));
        RolloutResult roll = rollout(burn, tc.rollout, model);
        SeriesPair pair;
        pair.dt = ds.dt;
        for (int t = 0; t < tc.rollout; ++t) {
            std::size_t idx = std::size_t(tc.burn_in + t);
            pair.truth.push_back(fluid ? ds.obs_frame_flat(0, idx)
                                       : ds.slot_frame(0, idx).data());
            pair.pred.push_back(
                fluid ? unpatchify(roll.predictions[std::size_t(t)], grid, model.codec->readout)
                            .data()
                      : roll.predictions[std::size_t(t)].data());
        }
        res.test_rmse = rmse(pair);
    }
    return res;
}

int cmd_ablate(const AblateFlags& flags) {
    RunConfig base = flags.config.empty() ? RunConfig() : RunConfig::from_file(flags.config);
    base.training.seed = flags.seed;  // shared seed across the sweep
    TrajectoryDataset ds = load_dataset(flags.data);
    fs::create_directories(flags.out);

    std::vector<Variant> variants = parse_sweep(flags.sweep, base);
    std::vector<VariantResult> results(variants.size());

    const std::size_t workers = std::min(worker_threads(), variants.size());
    if (workers <= 1) {
        for (std::size_t i = 0; i < variants.size(); ++i) results[i] = run_variant(variants[i], ds);
    } else {
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < variants.size(); i = next++)
                    results[i] = run_variant(variants[i], ds);
            });
        for (auto& t : pool) t.join();
    }

    std::ofstream md(flags.out + "/ablation.md");
    std::ofstream csv(flags.out + "/ablation.csv");
    md << "| variant | params | final loss | test rmse | lambda |\n";
    md << "|---|---|---|---|---|\n";
    csv << "variant,params,final_loss,test_rmse,lambda\n";
    csv.precision(17);
    for (const auto& r : results) {
        md << "| " << r.label << " | " << r.params << " | " << r.final_loss << " | " << r.test_rmse
           << " | " << r.final_lambda << " |\n";
        csv << r.label << "," << r.params << "," << r.final_loss << "," << r.test_rmse << ","
            << r.final_lambda << "\n";
        if (r.label.rfind("lambda=learnable", 0) == 0)
            write_lambda_trace(flags.out + "/lambda_trace.csv", r.lambda_trace);
        std::cout << r.label << ": params=" << r.params << " final_loss=" << r.final_loss
                  << " test_rmse=" << r.test_rmse << "\n";
    }
    std::cout << "tables in " << flags.out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"slot-based physics-informed latent dynamics predictor"};
    app.require_subcommand(1);

    GenFlags gen;
    auto* g = app.add_subcommand("gen-data", "generate a synthetic trajectory dataset");
    g->add_option("--system", gen.system, "spring, damped, balls or diffusion")
        ->check(CLI::IsMember({"spring", "damped", "balls", "diffusion"}));
    g->add_option("--num-traj", gen.num_traj, "number of trajectories")
        ->required()
        ->check(CLI::PositiveNumber);
    g->add_option("--steps", gen.steps, "frames per trajectory")
        ->required()
        ->check(CLI::Range(std::size_t(2), std::size_t(1) << 20));
    g->add_option("--dt", gen.dt, "frame interval")->check(CLI::PositiveNumber);
    g->add_option("--seed", gen.seed, "dataset seed");
    g->add_option("-o,--output", gen.out, "output file")->required();
    g->add_option("--bodies", gen.bodies, "spring: number of oscillators");
    g->add_option("--balls", gen.balls, "balls: disc count");
    g->add_option("--gamma", gen.gamma, "damped: damping ratio in [0,1)");
    g->add_option("--grid", gen.grid, "diffusion: grid side length");
    g->add_option("--nu", gen.nu, "diffusion: diffusivity");

    TrainFlags tr;
    auto* t = app.add_subcommand("train", "train a model and write checkpoints");
    t->add_option("--config", tr.config, "run config JSON");
    t->add_option("--data", tr.data, "dataset file")->required();
    t->add_option("--out", tr.out, "output directory")->required();
    t->add_option("--resume", tr.resume, "checkpoint to resume from");
    t->add_option("--fusion.lambda", tr.lambda_override, "override fusion weight");
    t->add_option("--fusion.mode", tr.mode_override, "override fusion mode")
        ->check(CLI::IsMember({"fixed", "learnable"}));

    EvalFlags ev;
    auto* e = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    e->add_option("--ckpt", ev.ckpt, "checkpoint file")->required();
    e->add_option("--data", ev.data, "dataset file")->required();
    e->add_option("--out", ev.out, "output directory");
    e->add_option("--burn-in", ev.burn_in, "burn-in frames")->check(CLI::PositiveNumber);
    e->add_option("--steps", ev.steps, "rollout steps")->check(CLI::PositiveNumber);
    e->add_option("--metrics", ev.metrics, "comma list: rmse,mae,hct,psnr");
    e->add_option("--hct-threshold", ev.hct_threshold, "correlation threshold");
    e->add_option("--baseline", ev.baseline, "comparison baseline")
        ->check(CLI::IsMember({"persistence"}));

    AblateFlags ab;
    auto* a = app.add_subcommand("ablate", "sweep one configuration axis");
    a->add_option("--sweep", ab.sweep,
                  "lambda=..., embedding=mlp:depths, blocks=..., frames=Tb:M,...")
        ->required();
    a->add_option("--config", ab.config, "base run config JSON");
    a->add_option("--data", ab.data, "dataset file")->required();
    a->add_option("--out", ab.out, "output directory");
    a->add_option("--seed", ab.seed, "shared sweep seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        int code = app.exit(err);
        return code == 0 ? 0 : 2;  // usage errors exit 2
    }

    try {
        if (g->parsed()) return cmd_gen_data(gen);
        if (t->parsed()) return cmd_train(tr);
        if (e->parsed()) return cmd_eval(ev);
        if (a->parsed()) return cmd_ablate(ab);
    } catch (const CLI::ParseError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 2;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 1;
    }
    return 2;
}
