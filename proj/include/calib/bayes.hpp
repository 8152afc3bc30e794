#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <unordered_map>
#include <vector>

#include "calib/ode.hpp"
#include "calib/spectral.hpp"

namespace calib {

/// log N+(s | lambda, tau2): normal truncated to s > 0,
///   -0.5 log(2 pi tau2) - (s-lambda)^2/(2 tau2) - log Phi(lambda/tau).
/// Returns -inf for s <= 0.
double log_truncnormal_plus(double s, double lambda, double tau2);

/// Inverse gamma log density, shape a / scale b:
///   a log b - log Gamma(a) - (a+1) log x - b/x;  -inf for x <= 0.
double log_ig(double x, double a, double b);

struct IgPrior {
    double a = 1.0;
    double b = 1.0;
};

/// Latent spectra s_ik (row-major n x K) and discrepancy variance tau2.
struct LatentSpectra {
    std::vector<double> s;
    double tau2 = 1.0;

    std::span<const double> row(std::size_t i, std::size_t K) const {
        return {s.data() + i * K, K};
    }
};

/// The hierarchical model evaluated for a single theta: spectral data layer,
/// truncated-normal discrepancy layer and IG priors. Model spectra are
/// memoized on the bits of theta.
class HierarchicalModel {
public:
    HierarchicalModel(std::vector<double> s_hat, std::size_t n, std::size_t K,
                      double sigma2_F, IgPrior prior_theta, IgPrior prior_tau2,
                      OdeSettings ode);

    std::size_t n() const { return n_; }
    std::size_t K() const { return K_; }
    double V() const { return noise_.V; }
    double sigma2_F() const { return noise_.sigma2_F; }
    const OdeSettings& ode() const { return ode_; }
    const std::vector<double>& s_hat() const { return s_hat_; }
    std::span<const double> s_hat_row(std::size_t i) const {
        return {s_hat_.data() + i * K_, K_};
    }
    const IgPrior& prior_theta() const { return prior_theta_; }
    const IgPrior& prior_tau2() const { return prior_tau2_; }
    const IgPrior& prior_sigma2() const { return prior_sigma2_; }
    void set_prior_sigma2(IgPrior p) { prior_sigma2_ = p; }

    /// Replace the data-layer noise variance (appendix-style sigma2 sampling).
    void set_sigma2(double sigma2_F) { noise_ = make_noise_scale(sigma2_F, T_); }
    std::size_t T() const { return T_; }

    void set_cache_enabled(bool on);
    void set_cache_capacity(std::size_t entries) { cache_capacity_ = entries; }

    /// Memoized lambda(theta); thread-safe.
    SpectrumResult lambda(const ThetaVector& theta) const;

    double log_prior_theta(const ThetaVector& theta) const;
    double log_prior_tau2(double tau2) const;

    /// Sum over k of log N+(s_ik | lambda_k, tau2) for one replicate row.
    double row_loglik(std::span<const double> lambda, std::span<const double> s_row,
                      double tau2) const;

    /// Sum over k of log f(s_hat_ik | s_ik) for one replicate row.
    double data_row_loglik(std::span<const double> s_row, std::size_t i) const;

    std::uint64_t ode_hash() const { return ode_hash_; }

private:
    std::vector<double> s_hat_;  // n x K row-major
    std::size_t n_, K_, T_;
    NoiseScale noise_;
    IgPrior prior_theta_, prior_tau2_, prior_sigma2_;
    OdeSettings ode_;
    std::uint64_t ode_hash_;

    mutable std::shared_mutex cache_mu_;
    mutable std::unordered_map<std::uint64_t, SpectrumResult> cache_;
    bool cache_enabled_ = true;
    std::size_t cache_capacity_ = 1u << 18;
};

/// Unnormalized joint log posterior of Eq-style hierarchical model for one
/// theta; ODE failures and out-of-support latents map to -inf.
double joint_log_posterior(const ThetaVector& theta, const LatentSpectra& latent,
                           const HierarchicalModel& model);

}  // namespace calib
