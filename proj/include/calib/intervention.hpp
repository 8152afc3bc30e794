#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "calib/common.hpp"
#include "calib/gmss.hpp"
#include "calib/ode.hpp"

namespace calib {

/// Copy of theta with theta_j scaled by alpha (0-based index).
ThetaVector intervene(const ThetaVector& theta, std::size_t j, double alpha);

struct PeriodSettings {
    double nominal_period = 22.0;  // hours, sets the analysis window length
    double window_cycles = 10.0;
    double dt = 1.0;
    double amp_tol = 1e-3;
};

/// Dominant cycle length in hours: integer-bin spectral peak refined on the
/// continuous spectral power (golden-section around the peak bin, mean
/// removed). nullopt when the series does not clear amp_tol.
std::optional<double> period_from_trajectory(const Trajectory& traj, double amp_tol);

/// Integrate over the long analysis window, then estimate the period.
std::optional<double> period_of(const ThetaVector& theta, const OdeSettings& ode,
                                const PeriodSettings& ps);

enum class Feature { period, frequency };

using FeatureFn = std::function<std::optional<double>(const ThetaVector&)>;

/// The named feature evaluated through the ODE.
FeatureFn make_feature(Feature f, const OdeSettings& ode, const PeriodSettings& ps);

/// Flattened weighted draws of a chain, optionally capped by systematic
/// resampling (seeded; resampled draws carry equal weight).
struct DrawSet {
    std::vector<ThetaVector> theta;
    std::vector<double> weight;
};

DrawSet flatten_draws(std::span<const ChainSample> samples, double c,
                      std::size_t draw_cap, std::uint64_t resample_seed);

struct InterventionSpec {
    std::vector<std::size_t> targets;  // 0-based parameter indices
    std::vector<double> alphas{0.6, 0.8, 1.0, 1.2, 1.4};
    std::vector<double> deltas{0.1, 0.2, 0.3, 0.4};
    bool data_anchored_baseline = false;
    double baseline_value = 0.0;  // used when data_anchored_baseline
    const ParameterBounds* bounds = nullptr;  // scaled draws leaving it count as failures
};

/// One (target, alpha) row of the sensitivity grid.
struct FeatureSummary {
    std::size_t target = 0;
    double alpha = 1.0;
    bool has_stats = false;  // false when every draw failed
    double mean = 0.0;
    double q10 = 0.0;
    double q90 = 0.0;
    double failure = 0.0;        // weighted failure proportion
    std::vector<double> exceed;  // per delta, share of finite pairs above baseline*(1+d)
};

struct FeatureDistribution {
    std::vector<FeatureSummary> rows;
};

FeatureDistribution intervention_estimate(const DrawSet& draws,
                                          const InterventionSpec& spec,
                                          const FeatureFn& feature,
                                          std::size_t workers = 1);

struct HeatmapCell {
    double alpha_j = 1.0;
    double alpha_j2 = 1.0;
    bool has_value = false;
    double relative_change = 0.0;
};

/// Weighted-mean relative feature change against the (1,1) cell, for every
/// pair of scale factors applied to parameters j and j2.
std::vector<HeatmapCell> pairwise_heatmap(const DrawSet& draws, std::size_t j,
                                          std::size_t j2,
                                          std::span<const double> alphas,
                                          const FeatureFn& feature,
                                          const ParameterBounds* bounds = nullptr,
                                          std::size_t workers = 1);

}  // namespace calib
