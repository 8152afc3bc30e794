#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "calib/common.hpp"
#include "calib/prognostic.hpp"
#include "calib/rng.hpp"

namespace calib {

/// Latent block of the chain: discrepancy spectra s (n x K, row-major),
/// discrepancy variance tau2, and optionally the sampled data-layer noise
/// variance sigma2 (0 when held fixed).
struct LatentState {
    std::vector<double> s;
    double tau2 = 1.0;
    double sigma2 = 0.0;
};

/// Per-element model evaluation cached inside the multiset.
struct ElementEval {
    std::vector<double> lambda;  // model spectrum; empty for synthetic targets
    bool model_ok = true;
    double log_prior = 0.0;          // log f(theta) (the whole target for toys)
    std::vector<double> rows;        // per-replicate discrepancy logliks
    double theta_factor = kNegInf;   // log_prior + sum(rows); -inf on failure
};

/// Target interface consumed by both samplers; the hierarchical calibration
/// model and the synthetic test targets implement it.
class Problem {
public:
    virtual ~Problem() = default;
    virtual std::size_t dim() const = 0;
    virtual std::size_t replicates() const = 0;  // 0 = no latent layer
    virtual std::size_t bins() const = 0;        // K
    virtual const ParameterBounds& bounds() const = 0;

    /// Everything theta-dependent, evaluated against the current latent
    /// state. Must be deterministic in its inputs.
    virtual void eval_theta(std::span<const double> theta, const LatentState& latent,
                            ElementEval& out) const = 0;

    /// Row term sum_k log f(s_row_k | ., tau2) for an evaluated element.
    virtual double row_loglik(const ElementEval& eval, std::span<const double> s_row,
                              double tau2) const;

    /// Data layer sum_k log f(s_hat_ik | s_row_k) for replicate i.
    virtual double data_row_loglik(std::span<const double> s_row, std::size_t i,
                                   const LatentState& latent) const;

    virtual double log_tau2_prior(double tau2) const;
    virtual double log_sigma2_prior(double sigma2) const;
    virtual void initial_latent(LatentState& out) const;
    virtual void sample_prior(Rng& rng, std::span<double> theta) const = 0;
    virtual double latent_scale() const { return 1.0; }
};

class Instrumental {
public:
    virtual ~Instrumental() = default;
    /// log g(theta) in natural space; finite on the support box.
    virtual double log_density(std::span<const double> theta) const = 0;
};

class UniformInstrumental : public Instrumental {
public:
    explicit UniformInstrumental(const ParameterBounds& b)
        : log_density_(b.log_jacobian_to_unit()) {}
    double log_density(std::span<const double>) const override { return log_density_; }

private:
    double log_density_;
};

/// Two-level step density from the prognostic search, expressed in natural
/// space (scaled-space step value plus the affine Jacobian).
class ProspectInstrumental : public Instrumental {
public:
    ProspectInstrumental(const ProspectMap& map, const ParameterBounds& bounds)
        : map_(&map), bounds_(&bounds), log_jac_(bounds.log_jacobian_to_unit()) {}
    double log_density(std::span<const double> theta) const override;

private:
    const ProspectMap* map_;
    const ParameterBounds* bounds_;
    double log_jac_;
};

struct MultisetElement {
    std::vector<double> theta;
    ElementEval eval;
    double log_g = 0.0;
};

using Multiset = std::vector<MultisetElement>;

struct StepSizes {
    std::vector<double> theta;  // per coordinate
    std::vector<double> s;      // per replicate
    double tau2 = 0.05;
    double sigma2 = 0.01;
};

struct SamplerSettings {
    std::size_t multiset_size = 20;
    std::uint64_t iterations = 200000;
    double burn_in_frac = 0.3;
    std::uint64_t thin = 10;
    std::uint64_t seed = 1;
    double stepsize_theta_frac = 0.05;  // of the box width, per coordinate
    double stepsize_s_frac = 0.10;      // of the latent scale
    double stepsize_tau2_frac = 0.10;
    bool adapt = true;
    double target_accept = 0.25;
    std::size_t adapt_batch = 50;
    bool sample_sigma2 = false;
    double tau2_init = 0.0;  // 0 = derive from the latent scale
    std::size_t init_attempts = 200;
};

struct startup_error : std::runtime_error {
    explicit startup_error(const std::string& w) : std::runtime_error(w) {}
};

/// View of replicate row i inside the flattened latent spectra.
std::span<const double> latent_row(const LatentState& latent, std::size_t i,
                                   std::size_t K);

/// One retained draw: latent snapshot plus per-element theta, joint log f
/// contribution and Theorem-1 weight.
struct ChainSample {
    std::uint64_t iteration = 0;
    double tau2 = 0.0;
    double sigma2 = 0.0;
    std::vector<double> s;
    struct Element {
        std::vector<double> theta;
        double logf = kNegInf;
        double w = 0.0;
    };
    std::vector<Element> elements;
    std::size_t leading = 0;
};

struct AcceptStats {
    std::uint64_t proposals = 0;
    std::uint64_t accepted = 0;
    double rate() const {
        return proposals ? static_cast<double>(accepted) / static_cast<double>(proposals)
                         : 0.0;
    }
};

// Adaptation bookkeeping for one proposal block (frozen after burn-in).
struct AdaptState {
    std::uint64_t batch_count = 0, in_batch = 0, accepted_in_batch = 0;
};

namespace detail {
struct BlockKernel;  // shared proposal/accept plumbing
}

/// Generalized multiset sampler: M parameter copies, mixture sampling
/// density with instrumental densities, Metropolis-within-Gibbs updates of
/// theta coordinates, latent spectra rows and tau2.
class GmssChain {
public:
    GmssChain(const Problem& problem, const Instrumental& instrumental,
              SamplerSettings settings);

    /// Draw the initial multiset (stratified over distinct marked prospect
    /// cells when a map is supplied, prior draws otherwise) and the latent
    /// state. Throws startup_error when no element reaches a finite density.
    void initialize(const ProspectMap* init_map = nullptr);

    void step_theta();
    void step_latent_s();
    void step_tau2();
    void step_sigma2();

    /// One full iteration of the Gibbs scan.
    void iterate();

    std::uint64_t iteration() const { return iteration_; }
    const Multiset& multiset() const { return elements_; }
    const LatentState& latent() const { return latent_; }
    std::size_t leading() const { return leading_; }
    const StepSizes& step_sizes() const { return steps_; }
    StepSizes& step_sizes() { return steps_; }
    Rng& rng() { return rng_; }
    const SamplerSettings& settings() const { return settings_; }

    std::vector<double> weights() const;
    double sampling_log_density() const;
    ChainSample snapshot() const;

    const AcceptStats& theta_stats(std::size_t j) const { return theta_stats_[j]; }
    const AcceptStats& s_stats(std::size_t i) const { return s_stats_[i]; }
    const AcceptStats& tau2_stats() const { return tau2_stats_; }

    /// Optional per-proposal sink: block name, log acceptance ratio,
    /// accepted. Used by the reduction and balance tests.
    std::function<void(const char*, double, bool)> proposal_hook;

    void set_burned_in(bool b) { burned_in_ = b; }
    bool burned_in() const { return burned_in_; }

    // Checkpoint plumbing: raw state access used by chainio.
    struct RawState;
    RawState raw_state() const;
    void restore(const RawState& raw);

private:
    friend struct detail::BlockKernel;
    void rebuild_mix();
    double mixand(std::size_t m, double theta_factor, double log_g,
                  double sum_g) const;

    const Problem* problem_;
    const Instrumental* instrumental_;
    SamplerSettings settings_;
    Rng rng_;
    Multiset elements_;
    LatentState latent_;
    std::vector<double> data_rows_;  // per replicate
    std::vector<double> mix_;        // mu_m = F_m + (sumG - G_m)
    double sum_g_ = 0.0;
    double lse_mix_ = kNegInf;
    std::size_t leading_ = 0;
    std::uint64_t iteration_ = 0;
    bool burned_in_ = false;

    StepSizes steps_;
    std::vector<AcceptStats> theta_stats_, s_stats_;
    AcceptStats tau2_stats_, sigma2_stats_;
    std::vector<AdaptState> theta_adapt_, s_adapt_;
    AdaptState tau2_adapt_, sigma2_adapt_;
};

struct GmssChain::RawState {
    std::uint64_t iteration = 0;
    std::string rng_state;
    std::vector<std::vector<double>> thetas;
    LatentState latent;
    StepSizes steps;
    std::vector<AdaptState> theta_adapt, s_adapt;
    AdaptState tau2_adapt, sigma2_adapt;
    bool burned_in = false;
};

/// Appendix-style Metropolis-within-Gibbs on the same Problem interface:
/// coordinate scan on theta, joint per-replicate s updates, tau2 update and
/// the optional sigma2 update.
class MhChain {
public:
    MhChain(const Problem& problem, SamplerSettings settings);

    void initialize(const ProspectMap* init_map = nullptr);
    void step_theta();
    void step_latent_s();
    void step_tau2();
    void step_sigma2();
    void iterate();

    std::uint64_t iteration() const { return iteration_; }
    const std::vector<double>& theta() const { return theta_; }
    const LatentState& latent() const { return latent_; }
    std::size_t leading() const { return 0; }
    Rng& rng() { return rng_; }
    const SamplerSettings& settings() const { return settings_; }
    const StepSizes& step_sizes() const { return steps_; }
    StepSizes& step_sizes() { return steps_; }

    ChainSample snapshot() const;

    const AcceptStats& theta_stats(std::size_t j) const { return theta_stats_[j]; }

    std::function<void(const char*, double, bool)> proposal_hook;

    void set_burned_in(bool b) { burned_in_ = b; }
    bool burned_in() const { return burned_in_; }

    struct RawState {
        std::uint64_t iteration = 0;
        std::string rng_state;
        std::vector<double> theta;
        LatentState latent;
        StepSizes steps;
        std::vector<AdaptState> theta_adapt, s_adapt;
        AdaptState tau2_adapt, sigma2_adapt;
        bool burned_in = false;
    };
    RawState raw_state() const;
    void restore(const RawState& raw);

private:
    void refresh_eval();

    const Problem* problem_;
    SamplerSettings settings_;
    Rng rng_;
    std::vector<double> theta_;
    ElementEval eval_;
    LatentState latent_;
    std::vector<double> data_rows_;
    std::uint64_t iteration_ = 0;
    bool burned_in_ = false;

    StepSizes steps_;
    std::vector<AcceptStats> theta_stats_, s_stats_;
    AcceptStats tau2_stats_, sigma2_stats_;
    std::vector<AdaptState> theta_adapt_, s_adapt_;
    AdaptState tau2_adapt_, sigma2_adapt_;
};

/// Theorem-1 weights of arbitrary multiset evaluations; softmax of
/// F_m - G_m. Throws when every numerator vanishes.
std::vector<double> compute_weights(std::span<const double> theta_factors,
                                    std::span<const double> log_g);

/// Eq-(8)-style self-normalized estimator over retained samples.
double estimate(const std::function<double(std::span<const double>)>& h,
                std::span<const ChainSample> samples);

/// Mixture sampling log density for an arbitrary multiset configuration,
/// evaluated from scratch (tests and diagnostics).
double gmss_sampling_log_density(const Problem& problem, const Instrumental& g,
                                 const std::vector<std::vector<double>>& thetas,
                                 const LatentState& latent);

struct CumulativeHistogram {
    std::vector<double> edges;  // nbins+1 relative positions within the bounds box
    std::vector<std::vector<std::vector<double>>> snapshots;  // [checkpoint][param][bin]
    std::vector<std::uint64_t> checkpoints;
    std::vector<bool> stationary;  // per parameter, last pair of snapshots
    bool all_stationary = false;
};

/// Weighted cumulative histograms of each theta coordinate at the given
/// iteration checkpoints; flags stationarity when successive snapshots agree
/// within the total-variation threshold.
CumulativeHistogram cumulative_histogram_diagnostic(std::span<const ChainSample> samples,
                                                    std::vector<std::uint64_t> checkpoints,
                                                    const ParameterBounds& bounds,
                                                    std::size_t nbins = 30,
                                                    double tv_threshold = 0.02);

struct RunPlan {
    std::uint64_t iterations = 0;
    std::uint64_t burn_in = 0;
    std::uint64_t thin = 1;
    std::uint64_t checkpoint_interval = 0;  // 0 = end of run only
};

inline bool retained(const RunPlan& plan, std::uint64_t iter) {
    return iter > plan.burn_in && (iter - plan.burn_in) % plan.thin == 0;
}

/// Drive an initialized chain to plan.iterations, feeding retained samples,
/// the per-iteration leading trace and checkpoints to the sinks.
template <class Chain>
void run_chain(Chain& chain, const RunPlan& plan,
               const std::function<void(const ChainSample&)>& sample_sink,
               const std::function<void(std::uint64_t, std::size_t,
                                        std::span<const double>)>& trace_sink,
               const std::function<void(const Chain&)>& checkpoint_sink) {
    while (chain.iteration() < plan.iterations) {
        if (chain.iteration() == plan.burn_in) chain.set_burned_in(true);
        chain.iterate();
        const std::uint64_t it = chain.iteration();
        if (trace_sink) {
            const ChainSample snap = chain.snapshot();
            trace_sink(it, snap.leading, snap.elements[snap.leading].theta);
            if (sample_sink && retained(plan, it)) sample_sink(snap);
        } else if (sample_sink && retained(plan, it)) {
            sample_sink(chain.snapshot());
        }
        if (checkpoint_sink && plan.checkpoint_interval &&
            it % plan.checkpoint_interval == 0 && it < plan.iterations)
            checkpoint_sink(chain);
    }
    if (chain.iteration() >= plan.burn_in) chain.set_burned_in(true);
    if (checkpoint_sink) checkpoint_sink(chain);
}

}  // namespace calib
