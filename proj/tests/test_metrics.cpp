#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "json.hpp"
#include "slotpi/errors.hpp"
#include "slotpi/metrics.hpp"
#include "slotpi/rng.hpp"

using namespace slotpi;

namespace {

SeriesPair random_pair(std::size_t frames, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    SeriesPair pair;
    pair.dt = 0.1;
    for (std::size_t t = 0; t < frames; ++t) {
        std::vector<double> p(n), q(n);
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = rng.uniform(-2.0, 2.0);
            q[i] = rng.uniform(-2.0, 2.0);
        }
        pair.pred.push_back(std::move(p));
        pair.truth.push_back(std::move(q));
    }
    return pair;
}

// Brute-force oracles written independently of the implementation.
double rmse_oracle(const SeriesPair& pair) {
    double s = 0;
    std::size_t n = 0;
    for (std::size_t t = 0; t < pair.pred.size(); ++t)
        for (std::size_t i = 0; i < pair.pred[t].size(); ++i, ++n) {
            double d = pair.pred[t][i] - pair.truth[t][i];
            s += d * d;
        }
    return std::sqrt(s / double(n));
}

double pearson_oracle(const std::vector<double>& a, const std::vector<double>& b) {
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i] / double(a.size());
        mb += b[i] / double(b.size());
    }
    double num = 0, da = 0, db = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - ma) * (b[i] - mb);
        da += (a[i] - ma) * (a[i] - ma);
        db += (b[i] - mb) * (b[i] - mb);
    }
    return num / std::sqrt(da * db);
}

// Build a truth frame plus a prediction whose Pearson correlation with it is
// exactly the requested value, by mixing the truth with an orthogonal,
// mean-free direction.
std::vector<double> frame_with_correlation(const std::vector<double>& truth, double rho) {
    const std::size_t n = truth.size();
    double mt = 0;
    for (double v : truth) mt += v / double(n);
    std::vector<double> c(n);  // centered truth
    for (std::size_t i = 0; i < n; ++i) c[i] = truth[i] - mt;
    // an orthogonal mean-free direction: alternate +1/-1, then project out c
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) g[i] = (i % 2 == 0) ? 1.0 : -1.0;
    double gc = 0, cc = 0;
    for (std::size_t i = 0; i < n; ++i) {
        gc += g[i] * c[i];
        cc += c[i] * c[i];
    }
    for (std::size_t i = 0; i < n; ++i) g[i] -= (gc / cc) * c[i];
    double gm = 0;
    for (double v : g) gm += v / double(n);
    for (auto& v : g) v -= gm;
    double gg = 0;
    for (double v : g) gg += v * v;
    double ccn = std::sqrt(cc), ggn = std::sqrt(gg);
    std::vector<double> out(n);
    double s = std::sqrt(1.0 - rho * rho);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = mt + rho * c[i] + s * (ccn / ggn) * g[i];
    return out;
}

}  // namespace

TEST_CASE("rmse and mae match brute-force oracles, rmse >= mae") {
    SeriesPair pair = random_pair(12, 30, 3);
    CHECK(rmse(pair) == doctest::Approx(rmse_oracle(pair)).epsilon(1e-14));
    double m = 0;
    std::size_t n = 0;
    for (std::size_t t = 0; t < pair.pred.size(); ++t)
        for (std::size_t i = 0; i < pair.pred[t].size(); ++i, ++n)
            m += std::abs(pair.pred[t][i] - pair.truth[t][i]);
    CHECK(mae(pair) == doctest::Approx(m / double(n)).epsilon(1e-14));
    CHECK(rmse(pair) >= mae(pair));

    SeriesPair perfect = pair;
    perfect.pred = perfect.truth;
    CHECK(rmse(perfect) == 0.0);
    CHECK(mae(perfect) == 0.0);
}

TEST_CASE("series shape errors") {
    SeriesPair pair = random_pair(5, 8, 4);
    pair.truth.pop_back();
    CHECK_THROWS_AS(rmse(pair), ShapeError);
    SeriesPair empty;
    CHECK_THROWS_AS(mae(empty), ShapeError);
    SeriesPair ragged = random_pair(3, 8, 5);
    ragged.pred[1].pop_back();
    CHECK_THROWS_AS(rmse(ragged), ShapeError);
}

TEST_CASE("hct on a crafted correlation series") {
    // correlations per frame: 1.0, 0.95, 0.79 -> first drop below 0.8 at
    // index 2, dt = 0.1, so hct = 0.2 seconds.
    Rng rng(9);
    std::vector<double> truth(40);
    for (auto& v : truth) v = rng.uniform(-1.0, 1.0);

    SeriesPair pair;
    pair.dt = 0.1;
    pair.truth = {truth, truth, truth};
    pair.pred = {truth, frame_with_correlation(truth, 0.95),
                 frame_with_correlation(truth, 0.79)};
    // sanity: the construction really hits the requested correlations
    CHECK(pearson_oracle(pair.pred[1], truth) == doctest::Approx(0.95).epsilon(1e-10));
    CHECK(pearson_oracle(pair.pred[2], truth) == doctest::Approx(0.79).epsilon(1e-10));

    CHECK(hct(pair) == doctest::Approx(0.2));
    // never dropping below threshold reports dt * T
    SeriesPair held;
    held.dt = 0.1;
    held.truth = {truth, truth};
    held.pred = {truth, truth};
    CHECK(hct(held) == doctest::Approx(0.2));
    // stricter threshold can only shorten hct
    CHECK(hct(pair, 0.9) <= hct(pair, 0.8));
    CHECK(hct(pair, 0.96) == doctest::Approx(0.1));
    CHECK_THROWS_AS(hct(pair, 0.0), ConfigError);
    CHECK_THROWS_AS(hct(pair, 1.0), ConfigError);
}

TEST_CASE("hct zero-variance convention") {
    SeriesPair pair;
    pair.dt = 0.5;
    pair.truth = {{1.0, 1.0, 1.0}, {1.0, 1.0, 1.0}};
    pair.pred = {{1.0, 1.0, 1.0}, {2.0, 2.0, 2.0}};
    // frame 0: equal constant frames correlate 1; frame 1: unequal -> 0
    CHECK(hct(pair) == doctest::Approx(0.5));
}

TEST_CASE("psnr closed forms and cap") {
    SeriesPair pair;
    pair.truth = {{0.0, 0.0}, {0.0, 0.0}};
    pair.pred = {{0.1, 0.1}, {0.1, 0.1}};
    // mse = 0.01, range = 1 -> 10*log10(1/0.01) = 20 dB
    CHECK(psnr(pair, 1.0) == doctest::Approx(20.0));
    pair.pred = pair.truth;
    CHECK(psnr(pair, 1.0) == 99.0);
    pair.pred = {{1e-8, 0.0}, {0.0, 0.0}};
    CHECK(psnr(pair, 1.0) == 99.0);  // capped
    CHECK_THROWS_AS(psnr(pair, 0.0), ConfigError);
}

TEST_CASE("persistence baseline repeats the last burn-in frame") {
    std::vector<std::vector<double>> burn = {{1.0, 2.0}, {3.0, 4.0}};
    auto base = persistence_baseline(burn, 5);
    CHECK(base.size() == 5);
    for (const auto& f : base) CHECK(f == burn.back());
    CHECK_THROWS_AS(persistence_baseline({}, 3), BufferEmptyError);
}

TEST_CASE("energy drift statistics") {
    std::vector<double> h = {2.0, 2.2, 1.8, 2.0};
    auto [mean, mx] = energy_drift(h);
    CHECK(mx == doctest::Approx(0.1));
    CHECK(mean == doctest::Approx((0.0 + 0.1 + 0.1 + 0.0) / 4.0));
    CHECK_THROWS_AS(energy_drift({}), ConfigError);
    CHECK_THROWS_AS(energy_drift({1.0, -1.0}), ConfigError);
    CHECK_THROWS_AS(energy_drift({0.0}), ConfigError);
}

TEST_CASE("report emitters use fixed keys") {
    MetricReport rep = {{"rmse", 0.5},      {"mae", 0.25},        {"hct_seconds", 1.5},
                        {"psnr_db", 30.0},  {"energy_drift_max", 0.01}};
    auto j = nlohmann::json::parse(report_json(rep));
    CHECK(j["rmse"] == doctest::Approx(0.5));
    CHECK(j["hct_seconds"] == doctest::Approx(1.5));
    CHECK(j["psnr_db"] == doctest::Approx(30.0));
    CHECK(j["energy_drift_max"] == doctest::Approx(0.01));

    std::string csv = report_csv(rep);
    auto nl = csv.find('\n');
    std::string header = csv.substr(0, nl);
    CHECK(header == "energy_drift_max,hct_seconds,mae,psnr_db,rmse");
    // roundtrip the values row at full precision
    std::string row = csv.substr(nl + 1);
    CHECK(row.find("0.5") != std::string::npos);
    CHECK(row.find("30") != std::string::npos);
}
