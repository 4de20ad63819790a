#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "slotpi/errors.hpp"
#include "slotpi/training.hpp"
#include "test_util.hpp"

using namespace slotpi;
using namespace slotpi::test;

namespace {

SlotPiModel tiny_model(std::size_t n, std::size_t d, std::uint64_t seed, double lambda = 1.0) {
    Rng rng(seed);
    SlotPiModel m;
    m.n_slots = n;
    m.dim = d;
    m.heads = 2;
    HamiltonianConfig cfg;
    cfg.dt = 0.1;
    m.physics = PhysicsParams::init(d, 2, cfg, rng);
    m.stm = STStack::init(d, 2, 1, false, rng);
    m.fusion = FusionWeight::fixed_weight(lambda);
    return m;
}

}  // namespace

TEST_CASE("slot loss arithmetic for a single frame") {
    // one step, one slot, pred (3,4) vs truth (0,0): sum sq = 25, M*N = 1.
    std::vector<Tensor> pred = {Tensor::constant(1, 2, {3.0, 4.0})};
    std::vector<Tensor> truth = {Tensor::constant(1, 2, {0.0, 0.0})};
    CHECK(slot_loss(pred, truth).item() == doctest::Approx(25.0));

    // two steps, two slots: normalization is 1/(M*N) = 1/4, not 1/(M*N*D)
    std::vector<Tensor> p2 = {Tensor::constant(2, 2, {1, 0, 0, 1}),
                              Tensor::constant(2, 2, {0, 0, 0, 0})};
    std::vector<Tensor> t2 = {Tensor::constant(2, 2, {0, 0, 0, 0}),
                              Tensor::constant(2, 2, {0, 2, 0, 0})};
    // total squared error = (1+1) + 4 = 6, M*N = 4 -> 1.5
    CHECK(slot_loss(p2, t2).item() == doctest::Approx(1.5));

    CHECK_THROWS_AS(slot_loss({}, {}), ShapeError);
    CHECK_THROWS_AS(slot_loss(pred, t2), ShapeError);
}

TEST_CASE("slot loss is differentiable") {
    Tensor p = Tensor::leaf(1, 2, {3.0, 4.0});
    Tensor t = Tensor::constant(1, 2, {1.0, 1.0});
    Tensor l = slot_loss({p}, {t});
    auto g = backward(l, {p}, false);
    // d/dp of (p-t)^2 / 1 = 2(p-t)
    CHECK(g[0].data()[0] == doctest::Approx(4.0));
    CHECK(g[0].data()[1] == doctest::Approx(6.0));
}

TEST_CASE("adam first step moves each weight by about lr") {
    // With zero moments, mhat/(sqrt(vhat)+eps) = g/|g| (+eps), so the first
    // update is lr * sign(g) to within eps.
    Tensor w = Tensor::leaf(1, 3, {1.0, 2.0, 3.0});
    ParamList params = {{"w", w}};
    std::vector<Tensor> grads = {Tensor::constant(1, 3, {0.5, -0.25, 1e-3})};
    AdamState st;
    adam_step(params, grads, st, 0.1);
    CHECK(st.step == 1);
    CHECK(w.data()[0] == doctest::Approx(1.0 - 0.1).epsilon(1e-6));
    CHECK(w.data()[1] == doctest::Approx(2.0 + 0.1).epsilon(1e-6));
    CHECK(w.data()[2] == doctest::Approx(3.0 - 0.1).epsilon(1e-4));
}

TEST_CASE("adam zero gradient leaves weights unchanged") {
    Tensor w = Tensor::leaf(1, 2, {1.0, -1.0});
    ParamList params = {{"w", w}};
    std::vector<Tensor> grads = {Tensor::constant(1, 2, {0.0, 0.0})};
    AdamState st;
    adam_step(params, grads, st, 0.1);
    CHECK(w.data()[0] == 1.0);
    CHECK(w.data()[1] == -1.0);
}

TEST_CASE("adam rejects NaN gradients before touching parameters") {
    Tensor w = Tensor::leaf(1, 2, {1.0, -1.0});
    ParamList params = {{"w", w}};
    std::vector<Tensor> grads = {
        Tensor::constant(1, 2, {0.5, std::numeric_limits<double>::quiet_NaN()})};
    AdamState st;
    CHECK_THROWS_AS(adam_step(params, grads, st, 0.1), NaNError);
    CHECK(w.data()[0] == 1.0);
    CHECK(st.step == 0);
}

TEST_CASE("adam matches a scalar oracle over several steps") {
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8, lr = 0.01;
    Tensor w = Tensor::leaf(1, 1, {2.0});
    ParamList params = {{"w", w}};
    AdamState st;
    double wo = 2.0, mo = 0.0, vo = 0.0;
    std::vector<double> gs = {1.0, -0.5, 0.25, 2.0, -1.0};
    for (std::size_t k = 0; k < gs.size(); ++k) {
        adam_step(params, {Tensor::constant(1, 1, {gs[k]})}, st, lr);
        mo = b1 * mo + (1 - b1) * gs[k];
        vo = b2 * vo + (1 - b2) * gs[k] * gs[k];
        double mh = mo / (1 - std::pow(b1, double(k + 1)));
        double vh = vo / (1 - std::pow(b2, double(k + 1)));
        wo -= lr * mh / (std::sqrt(vh) + eps);
        CHECK(w.item() == doctest::Approx(wo).epsilon(1e-14));
    }
}

TEST_CASE("adamw decoupled decay shrinks weights with zero gradient") {
    Tensor w = Tensor::leaf(1, 1, {10.0});
    ParamList params = {{"w", w}};
    AdamState st;
    st.weight_decay = 1e-4;
    adam_step(params, {Tensor::constant(1, 1, {0.0})}, st, 1.0);
    CHECK(w.item() == doctest::Approx(10.0 * (1.0 - 1e-4)));
}

TEST_CASE("gradient clipping scales to the requested global norm") {
    std::vector<Tensor> grads = {Tensor::constant(1, 2, {3.0, 0.0}),
                                 Tensor::constant(1, 1, {4.0})};
    double pre = clip_global_norm(grads, 1.0);
    CHECK(pre == doctest::Approx(5.0));
    double post = 0.0;
    for (const auto& g : grads)
        for (double v : g.data()) post += v * v;
    CHECK(std::sqrt(post) == doctest::Approx(1.0));
    CHECK(grads[0].data()[0] == doctest::Approx(0.6));

    // below threshold: untouched
    std::vector<Tensor> small = {Tensor::constant(1, 1, {0.5})};
    CHECK(clip_global_norm(small, 1.0) == doctest::Approx(0.5));
    CHECK(small[0].item() == 0.5);
}

TEST_CASE("lr schedule endpoints and shape") {
    TrainConfig cfg;
    cfg.lr_peak = 2e-4;
    cfg.warmup_frac = 0.025;
    const long total = 1000;
    const long warmup = 25;
    CHECK(lr_at(0, total, cfg) == 0.0);
    CHECK(lr_at(warmup, total, cfg) == doctest::Approx(cfg.lr_peak));
    // linear ramp midpoint
    CHECK(lr_at(warmup / 5, total, cfg) == doctest::Approx(cfg.lr_peak / 5.0));
    // end of schedule = 5% floor
    CHECK(lr_at(total, total, cfg) == doctest::Approx(0.05 * cfg.lr_peak));
    // halfway through the cosine: mean of peak and floor
    long mid = warmup + (total - warmup) / 2;
    CHECK(lr_at(mid, total, cfg) ==
          doctest::Approx(0.5 * (cfg.lr_peak + 0.05 * cfg.lr_peak)).epsilon(1e-3));
    // monotone decay after warmup
    for (long s = warmup; s < total; s += 97) CHECK(lr_at(s, total, cfg) >= lr_at(s + 1, total, cfg));
    CHECK_THROWS_AS(lr_at(-1, total, cfg), ConfigError);
    CHECK_THROWS_AS(lr_at(total + 1, total, cfg), ConfigError);
}

TEST_CASE("end-to-end training gradient matches finite differences") {
    // Tiny model, one rollout window; FD over a handful of parameters spread
    // across both branches and the fusion weight.
    SlotPiModel m = tiny_model(2, 4, 101);
    set_fusion(m, FusionMode::learnable, 0.5);
    TrajectoryDataset ds = gen_spring_mass(1, 8, 2, 0.1, 55);
    // reduce the slot dim to the model: take the first 4 columns
    auto window_loss = [&](const SlotPiModel& model) {
        std::vector<Tensor> burn, truth;
        for (int t = 0; t < 3; ++t) {
            Tensor f = ds.slot_frame(0, std::size_t(t));
            burn.push_back(slice_cols(f, 0, 4));
        }
        for (int t = 3; t < 5; ++t) {
            Tensor f = ds.slot_frame(0, std::size_t(t));
            truth.push_back(slice_cols(f, 0, 4));
        }
        RolloutResult roll = rollout(burn, 2, model, true);
        return slot_loss(roll.predictions, truth);
    };

    Tensor loss = window_loss(m);
    ParamList params = m.parameters();
    std::vector<Tensor> wrt;
    for (const auto& p : params) wrt.push_back(p.value);
    auto grads = backward(loss, wrt, false);

    Rng pick(7);
    int checked = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].name != "fusion.raw" && pick.uniform() > 0.25) continue;
        std::size_t j = params[i].value.numel() > 1
                            ? std::size_t(pick.raw() % params[i].value.numel())
                            : 0;
        const double h = 1e-5;
        double orig = params[i].value.data()[j];
        const_cast<Tensor&>(params[i].value).mutable_data()[j] = orig + h;
        double lp = window_loss(m).item();
        const_cast<Tensor&>(params[i].value).mutable_data()[j] = orig - h;
        double lm = window_loss(m).item();
        const_cast<Tensor&>(params[i].value).mutable_data()[j] = orig;
        double fd = (lp - lm) / (2 * h);
        CHECK(rel_err(grads[i].data()[j], fd) < 1e-4);
        ++checked;
    }
    CHECK(checked >= 5);
}

TEST_CASE("training overfits a single short trajectory") {
    SlotPiModel m = tiny_model(1, 16, 202, 1.0);
    TrajectoryDataset ds = gen_damped_oscillator(2, 12, 0.1, 0.05, 33);
    TrainConfig cfg;
    cfg.burn_in = 4;
    cfg.rollout = 4;
    cfg.epochs = 150;
    cfg.batch_size = 2;
    cfg.lr_peak = 3e-3;
    cfg.seed = 1;
    TrainResult res = train(m, ds, cfg);
    REQUIRE(res.epoch_losses.size() == 150);
    double first = res.epoch_losses.front();
    double last = res.epoch_losses.back();
    CHECK(last < first / 100.0);  // at least two orders of magnitude
    // log rows carry monotone step indices and positive energies
    for (std::size_t i = 1; i < res.log.size(); ++i)
        CHECK(res.log[i].step == res.log[i - 1].step + 1);
    for (const auto& row : res.log) CHECK(row.mean_energy > 0.0);
}

TEST_CASE("training is deterministic given the seed") {
    TrajectoryDataset ds = gen_spring_mass(4, 10, 2, 0.1, 11);
    TrainConfig cfg;
    cfg.burn_in = 3;
    cfg.rollout = 3;
    cfg.epochs = 2;
    cfg.batch_size = 2;
    cfg.seed = 9;

    SlotPiModel a = tiny_model(2, 16, 303);
    SlotPiModel b = tiny_model(2, 16, 303);
    TrainResult ra = train(a, ds, cfg);
    TrainResult rb = train(b, ds, cfg);
    CHECK(ra.epoch_losses == rb.epoch_losses);
    ParamList pa = a.parameters(), pb = b.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i)
        for (std::size_t j = 0; j < pa[i].value.numel(); ++j)
            CHECK(pa[i].value.data()[j] == pb[i].value.data()[j]);
}

TEST_CASE("learnable fusion weight actually moves during training") {
    TrajectoryDataset ds = gen_spring_mass(4, 10, 2, 0.1, 12);
    TrainConfig cfg;
    cfg.burn_in = 3;
    cfg.rollout = 3;
    cfg.epochs = 4;
    cfg.batch_size = 2;
    cfg.lr_peak = 1e-2;
    cfg.seed = 4;
    SlotPiModel m = tiny_model(2, 16, 404);
    set_fusion(m, FusionMode::learnable, 0.5);
    TrainResult res = train(m, ds, cfg);
    CHECK(res.lambda_trace.size() == res.log.size());
    CHECK(m.fusion.effective() != doctest::Approx(0.5).epsilon(1e-12));
    for (double l : res.lambda_trace) {
        CHECK(l > 0.0);
        CHECK(l < 1.0);
    }
}

TEST_CASE("fluid mode trains on image loss only") {
    TrajectoryDataset ds = gen_diffusion2d(2, 10, 8, 8, 0.5, 0.2, 21);
    SlotPiModel m = tiny_model(16, 16, 505, 1.0);
    m.n_slots = 16;  // (8/2)^2 tokens
    m.codec = PatchCodec::init(8, 8, 1, 2, 16);

    TrainConfig cfg;
    cfg.burn_in = 3;
    cfg.rollout = 3;
    cfg.epochs = 2;
    cfg.batch_size = 2;
    cfg.seed = 2;
    cfg.use_image_loss = true;
    cfg.weight_decay = true;
    TrainResult res = train(m, ds, cfg);
    for (const auto& row : res.log) {
        CHECK(row.loss_slots == 0.0);  // no slot term in fluid mode
        CHECK(row.loss_image > 0.0);
    }
}

TEST_CASE("train validates its configuration") {
    TrajectoryDataset ds = gen_spring_mass(2, 5, 1, 0.1, 1);
    SlotPiModel m = tiny_model(1, 16, 606);
    TrainConfig cfg;
    cfg.burn_in = 4;
    cfg.rollout = 4;  // window 8 > 5 steps
    CHECK_THROWS_AS(train(m, ds, cfg), ConfigError);
    cfg.rollout = 0;
    CHECK_THROWS_AS(train(m, ds, cfg), ConfigError);
    cfg.burn_in = 2;
    cfg.rollout = 2;
    cfg.use_image_loss = true;  // dataset has no observations
    CHECK_THROWS_AS(train(m, ds, cfg), ConfigError);
}
