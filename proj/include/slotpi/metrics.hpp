#pragma once

#include <map>
#include <string>
#include <vector>

namespace slotpi {

// Aligned prediction/truth series: one flat frame per timestep.
struct SeriesPair {
    std::vector<std::vector<double>> pred;
    std::vector<std::vector<double>> truth;
    double dt = 0.1;
};

double rmse(const SeriesPair& pair);
double mae(const SeriesPair& pair);

// High Correction Time: dt times the index of the first frame whose Pearson
// correlation with truth falls below the threshold; dt*T if it never does.
// Zero-variance frames correlate 1 when equal, else 0.
double hct(const SeriesPair& pair, double threshold = 0.8);

// 10*log10(range^2 / MSE); identical frames report the 99 dB cap.
double psnr(const SeriesPair& pair, double data_range);

// Repeats the last burn-in frame.
std::vector<std::vector<double>> persistence_baseline(
    const std::vector<std::vector<double>>& burn_in, int steps);

// (mean, max) of |H_t - H_0| / H_0. H must be positive throughout.
std::pair<double, double> energy_drift(const std::vector<double>& h_series);

// Fixed-key report emitters (rmse, mae, hct_seconds, psnr_db, energy_drift_max).
using MetricReport = std::map<std::string, double>;
std::string report_json(const MetricReport& rep);
std::string report_csv(const MetricReport& rep);

}  // namespace slotpi
