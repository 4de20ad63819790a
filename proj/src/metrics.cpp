#include "slotpi/metrics.hpp"

#include <cmath>
#include <sstream>

#include "json.hpp"
#include "slotpi/errors.hpp"

namespace slotpi {

namespace {

void check_pair(const SeriesPair& pair) {
    if (pair.pred.size() != pair.truth.size() || pair.pred.empty())
        throw ShapeError("series pair: length mismatch or empty");
    for (std::size_t t = 0; t < pair.pred.size(); ++t)
        if (pair.pred[t].size() != pair.truth[t].size())
            throw ShapeError("series pair: frame size mismatch at t=" + std::to_string(t));
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = a.size();
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= double(n);
    mb /= double(n);
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return a == b ? 1.0 : 0.0;  // zero-variance convention
    return sab / std::sqrt(saa * sbb);
}

}  // namespace

double rmse(const SeriesPair& pair) {
    check_pair(pair);
    double s = 0;
    std::size_t n = 0;
    for (std::size_t t = 0; t < pair.pred.size(); ++t)
        for (std::size_t i = 0; i < pair.pred[t].size(); ++i) {
            double d = pair.pred[t][i] - pair.truth[t][i];
            s += d * d;
            ++n;
        }
    return std::sqrt(s / double(n));
}

double mae(const SeriesPair& pair) {
    check_pair(pair);
    double s = 0;
    std::size_t n = 0;
    for (std::size_t t = 0; t < pair.pred.size(); ++t)
        for (std::size_t i = 0; i < pair.pred[t].size(); ++i) {
            s += std::abs(pair.pred[t][i] - pair.truth[t][i]);
            ++n;
        }
    return s / double(n);
}

double hct(const SeriesPair& pair, double threshold) {
    check_pair(pair);
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("hct: threshold must be in (0,1)");
    for (std::size_t t = 0; t < pair.pred.size(); ++t)
        if (pearson(pair.pred[t], pair.truth[t]) < threshold) return pair.dt * double(t);
    return pair.dt * double(pair.pred.size());
}

double psnr(const SeriesPair& pair, double data_range) {
    check_pair(pair);
    if (!(data_range > 0)) throw ConfigError("psnr: data_range must be > 0");
    double s = 0;
    std::size_t n = 0;
    for (std::size_t t = 0; t < pair.pred.size(); ++t)
        for (std::size_t i = 0; i < pair.pred[t].size(); ++i) {
            double d = pair.pred[t][i] - pair.truth[t][i];
            s += d * d;
            ++n;
        }
    double mse = s / double(n);
    if (mse == 0.0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(data_range * data_range / mse));
}

std::vector<std::vector<double>> persistence_baseline(
    const std::vector<std::vector<double>>& burn_in, int steps) {
    if (burn_in.empty()) throw BufferEmptyError("persistence_baseline: burn-in");
    return std::vector<std::vector<double>>(std::size_t(steps), burn_in.back());
}

std::pair<double, double> energy_drift(const std::vector<double>& h_series) {
    if (h_series.empty()) throw ConfigError("energy_drift: empty series");
    for (double h : h_series)
        if (!(h > 0)) throw ConfigError("energy_drift: H must be positive");
    double mean = 0, mx = 0;
    for (double h : h_series) {
        double d = std::abs(h - h_series[0]) / h_series[0];
        mean += d;
        mx = std::max(mx, d);
    }
    return {mean / double(h_series.size()), mx};
}

std::string report_json(const MetricReport& rep) {
    nlohmann::json j(rep);
    return j.dump(2);
}

std::string report_csv(const MetricReport& rep) {
    std::ostringstream keys, vals;
    bool first = true;
    for (const auto& [k, v] : rep) {
        if (!first) {
            keys << ",";
            vals << ",";
        }
        first = false;
        keys << k;
        vals.precision(17);
        vals << v;
    }
    return keys.str() + "\n" + vals.str() + "\n";
}

}  // namespace slotpi
