#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "calib/bayes.hpp"
#include "calib/common.hpp"
#include "calib/gmss.hpp"
#include "calib/intervention.hpp"
#include "calib/ode.hpp"

namespace calib {

struct SweepConfig {
    std::uint64_t N = 1968300;  // 100 batches of the full 3^9 factorial
    std::size_t q = 3;
    std::size_t d0 = 4;
    std::optional<double> l_min;         // absolute threshold; unset = quantile rule
    double l_min_top_fraction = 0.001;   // top share of finite logliks deemed successful
    std::size_t n_min = 0;
    double rho0 = 0.1;
    double rho1 = 1.0;
    std::string design = "iid";  // or "oa-factorial"
    std::optional<double> tau2;  // sweep discrepancy variance; unset = data-driven
    std::uint64_t exact_cell_cap = 1000000;
    std::uint64_t mc_points = 1000000;
    std::uint64_t seed = 101;
};

struct SamplerConfig {
    std::string algorithm = "gmss";  // or "mh"
    std::string instrumental = "prospect";  // or "uniform"
    SamplerSettings settings;
    std::uint64_t checkpoint_interval = 10000;
};

struct InterventionConfig {
    std::vector<std::size_t> targets{1, 2, 3, 4, 5, 6, 7, 8, 9};  // 1-based
    std::vector<double> alphas{0.6, 0.8, 1.0, 1.2, 1.4};
    std::vector<double> deltas{0.1, 0.2, 0.3, 0.4};
    std::string feature = "period";
    std::string baseline = "paired";  // or "data"
    double data_period = 22.0;        // anchor for the data baseline
    std::size_t draw_cap = 2000;
    std::uint64_t resample_seed = 7;
    std::vector<std::array<std::size_t, 2>> pairs;  // 1-based heatmap pairs
    PeriodSettings period;
};

struct SimulateConfig {
    // A reference parameter set with a stable ~21.9 h cycle, well interior
    // to the default bounds.
    std::array<double, 9> theta_true{0.067299, 1.770845, 1.728826,
                                     0.089946, 1.572904, 0.162979,
                                     1.126747, 0.420487, 0.894975};
    double noise_sigma = 0.05;
    std::size_t replicates = 3;
    std::uint64_t seed = 42;
};

struct RunConfig {
    std::string data_path = "data.csv";
    std::size_t K = 5;
    std::optional<double> sigma2_F;  // unset = estimate from the harmonic residuals
    bool sample_sigma2 = false;
    ParameterBounds bounds;
    OdeSettings ode;
    double c = 1.0;
    IgPrior prior_theta, prior_tau2, prior_sigma2;
    SweepConfig sweep;
    SamplerConfig sampler;
    InterventionConfig intervention;
    SimulateConfig simulate;
    std::string output_dir = "out";
    std::size_t workers = 1;
};

/// Parse a JSON config; missing fields take documented defaults, every
/// invalid field is reported with its path in a single config_error.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::string& path);

/// Canonical serialization (all defaults materialized, sorted keys); parsing
/// it back yields the same configuration byte-for-byte.
std::string serialize_config(const RunConfig& cfg);

/// FNV-1a hash of the canonical serialization, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

/// Default bounds used when the config omits them.
ParameterBounds default_bounds();

std::string tool_version();

}  // namespace calib
