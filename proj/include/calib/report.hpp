#pragma once

#include <string>
#include <vector>

#include "calib/gmss.hpp"
#include "calib/intervention.hpp"

namespace calib {

/// Sensitivity grid rows (Fig-5 / Table-A1 content):
/// parameter,alpha,mean,q10,q90,failure_pct,exceed_<d>...
void write_sensitivity_csv(const std::string& path, const FeatureDistribution& dist,
                           std::span<const double> deltas,
                           const std::string& config_hash);

struct HeatmapRecord {
    std::size_t j, j2;  // 1-based for output
    HeatmapCell cell;
};

/// Dense heatmap grid: j,j2,alpha_j,alpha_j2,relative_change.
void write_heatmap_csv(const std::string& path,
                       const std::vector<HeatmapRecord>& records,
                       const std::string& config_hash);

void write_cumhist_csv(const std::string& path, const CumulativeHistogram& hist,
                       const std::string& config_hash);

/// Table-A1-shaped percentages derived from an existing sensitivity grid.
void write_exceedance_csv(const std::string& sensitivity_path,
                          const std::string& out_path,
                          const std::string& config_hash);

/// First-line config hash of any calib output file (empty when absent).
std::string file_config_hash(const std::string& path);

void copy_bytes(const std::string& from, const std::string& to);

}  // namespace calib
