#pragma once

#include <memory>
#include <string>
#include <vector>

#include "calib/bayes.hpp"
#include "calib/config.hpp"

namespace calib {

/// Bioluminescence readings: n replicates of T hourly values.
struct ReplicateSeries {
    std::vector<std::vector<double>> series;  // [replicate][t]
    std::size_t n() const { return series.size(); }
    std::size_t T() const { return series.empty() ? 0 : series.front().size(); }
};

/// Load the delimited data format (optional leading '#' comment lines, then
/// a `t,rep1..repn` header and T rows). Ragged rows, non-numeric cells and
/// gaps raise data_error naming the offending row/column.
ReplicateSeries load_data(const std::string& path);

/// Per-replicate estimated power spectra (n x K, row-major).
std::vector<double> estimated_spectra(const ReplicateSeries& data, std::size_t K);

/// Assemble the hierarchical model for a data set under the given config
/// (K and T consistency checks, sigma2 estimation unless pinned).
std::unique_ptr<HierarchicalModel> build_model(const ReplicateSeries& data,
                                               const RunConfig& cfg);

struct SimulateResult {
    bool oscillating = true;
    double peak_to_trough = 0.0;
};

/// Integrate theta_true, add iid Gaussian noise and write the data file plus
/// a `<path>.truth.json` sidecar. Non-oscillating truths are written anyway
/// and flagged in the result.
SimulateResult simulate_data(const RunConfig& cfg, const std::string& path);

}  // namespace calib
