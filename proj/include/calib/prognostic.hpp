#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "calib/common.hpp"
#include "calib/rng.hpp"

namespace calib {

/// Level index in {1..q} of a scaled coordinate: ceil(u*q) on (0,1].
std::size_t u_q(double u, std::size_t q);

enum class DesignKind {
    iid,          // independent U(0,1]^p draws
    oa_factorial  // batches covering every q^p cell once, jittered in-cell
};

/// Coordinates of design point `index`; a pure function of (seed, index)
/// so sweeps shard and resume exactly.
std::vector<double> design_point(std::uint64_t seed, std::uint64_t index,
                                 std::size_t p, DesignKind kind = DesignKind::iid,
                                 std::size_t q = 3);

struct DesignEval {
    std::vector<double> u;
    bool ok = false;
    double loglik = kNegInf;
};

struct VolhighSettings {
    std::uint64_t exact_cell_cap = 1000000;  // enumerate q^p cells up to this
    std::uint64_t mc_points = 1000000;       // Monte Carlo fallback size
    std::uint64_t mc_seed = 20230901;
};

/// High/low prospect classification of the q^p factorial space via all
/// d0-dimensional projections, plus the normalized two-level step density.
class ProspectMap {
public:
    ProspectMap() = default;
    ProspectMap(std::size_t p, std::size_t q, std::size_t d0, double rho0, double rho1);

    std::size_t p() const { return p_; }
    std::size_t q() const { return q_; }
    std::size_t d0() const { return d0_; }
    double rho0() const { return rho0_; }
    double rho1() const { return rho1_; }
    double volhigh() const { return volhigh_; }
    double volhigh_se() const { return volhigh_se_; }
    const std::string& volhigh_method() const { return volhigh_method_; }
    double logZ() const { return logZ_; }
    std::size_t marked_count() const { return marked_.size(); }
    const std::vector<std::vector<std::size_t>>& subsets() const { return subsets_; }

    void mark(std::size_t subset_id, std::uint64_t cell_code);
    bool cell_marked(std::size_t subset_id, std::uint64_t cell_code) const;

    bool high_prospect_levels(std::span<const std::size_t> levels) const;
    bool high_prospect(std::span<const double> u) const;

    /// Normalized step density on (0,1]^p: log rho - log Z.
    double log_density_unit(std::span<const double> u) const;

    /// Compute volhigh and logZ (exact cell count or Monte Carlo).
    void finalize(const VolhighSettings& vol = {});

    void save(const std::string& path, const std::string& config_hash) const;
    static ProspectMap load(const std::string& path, std::string* config_hash = nullptr);

    /// Sorted (subset_id, cell_code) pairs, for the map file.
    std::vector<std::pair<std::uint32_t, std::uint64_t>> sorted_cells() const;

private:
    std::size_t p_ = 0, q_ = 0, d0_ = 0;
    double rho0_ = 0.1, rho1_ = 1.0;
    double volhigh_ = 0.0, volhigh_se_ = 0.0, logZ_ = 0.0;
    std::string volhigh_method_ = "exact";
    std::vector<std::vector<std::size_t>> subsets_;  // all size-d0 subsets of {0..p-1}
    std::uint64_t cells_per_subset_ = 0;             // q^d0
    std::unordered_set<std::uint64_t> marked_;       // subset_id * q^d0 + code

    std::uint64_t pack(std::size_t subset_id, std::uint64_t code) const {
        return static_cast<std::uint64_t>(subset_id) * cells_per_subset_ + code;
    }
};

/// Streaming cell-count accumulator for the sweep -> map reduction.
class ProspectClassifier {
public:
    ProspectClassifier(std::size_t p, std::size_t q, std::size_t d0, double l_min,
                       std::size_t n_min);

    void add(std::span<const double> u, double loglik);
    ProspectMap finish(double rho0, double rho1, const VolhighSettings& vol = {}) const;

private:
    std::size_t p_, q_, d0_;
    double l_min_;
    std::size_t n_min_;
    std::vector<std::vector<std::size_t>> subsets_;
    std::uint64_t cells_per_subset_;
    std::unordered_map<std::uint64_t, std::uint64_t> counts_;
};

/// One-shot wrapper over the classifier.
ProspectMap classify_prospects(const std::vector<DesignEval>& evals, std::size_t q,
                               std::size_t d0, double l_min, std::size_t n_min,
                               double rho0, double rho1,
                               const VolhighSettings& vol = {});

/// Threshold leaving the top `fraction` of the finite logliks above it
/// (the sweep's success cut). Empty input yields +inf (nothing succeeds).
double threshold_top_fraction(std::vector<double> finite_logliks, double fraction);

/// All size-d0 subsets of {0..p-1} in lexicographic order.
std::vector<std::vector<std::size_t>> enumerate_subsets(std::size_t p, std::size_t d0);

/// Draw M level vectors of distinct marked high cells (uniform among high
/// cells when enumerable, rejection-sampled otherwise). May return fewer
/// than M when the high region is small or empty.
std::vector<std::vector<std::size_t>> sample_high_cells(const ProspectMap& map,
                                                        std::size_t count, Rng& rng,
                                                        std::uint64_t attempt_budget = 200000);

/// Uniform draw of a scaled point inside a factorial cell given its levels.
std::vector<double> draw_in_cell(std::span<const std::size_t> levels, std::size_t q,
                                 Rng& rng);

}  // namespace calib
