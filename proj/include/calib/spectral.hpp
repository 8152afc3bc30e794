#pragma once

#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include "calib/ode.hpp"

namespace calib {

/// Cosine/sine coefficients of the harmonic fit at frequencies k/T,
/// k = 1..K (no constant term; the basis is orthogonal to constants).
struct HarmonicCoefficients {
    std::vector<double> a;
    std::vector<double> b;
    std::size_t T = 0;
};

struct PowerSpectrum {
    std::vector<double> s;  // s_k = a_k^2 + b_k^2, k = 1..K
};

/// Variance scale of the spectral data layer: V = T * sigma2 / 2.
struct NoiseScale {
    double sigma2_F = 0.0;
    double V = 0.0;
};

NoiseScale make_noise_scale(double sigma2_F, std::size_t T);

inline std::size_t max_harmonics(std::size_t T) { return (T - 1) / 2; }

/// Least-squares harmonic coefficients:
///   a_k = (2/T) sum_t y_t cos(2 pi k t / T), likewise b_k with sin.
/// Requires 1 <= K <= floor((T-1)/2).
HarmonicCoefficients harmonic_coefficients(std::span<const double> series,
                                           std::size_t K);

PowerSpectrum power_spectrum(const HarmonicCoefficients& coef);

using SpectrumResult = std::variant<PowerSpectrum, IntegrationFailure>;

inline bool spectrum_failed(const SpectrumResult& r) {
    return std::holds_alternative<IntegrationFailure>(r);
}

/// Model spectrum lambda_k(theta): integrate the oscillator, then decompose
/// the recorded trajectory. Integration failures propagate as values.
SpectrumResult model_spectrum(const ThetaVector& theta, std::size_t K,
                              const OdeSettings& settings);

/// log density of s_hat where s_hat/V ~ noncentral chi^2 with 2 degrees of
/// freedom and noncentrality s/V:
///   log f = -log(2V) - (s_hat+s)/(2V) + log I0(sqrt(s_hat*s)/V).
double log_density_shat_given_s(double s_hat, double s, double V);

/// log I0(x) for x >= 0, exact series below the overflow point and the
/// corrected asymptotic expansion above it.
double log_bessel_i0(double x);

/// Pooled physical-noise variance: residual variance of the per-replicate
/// harmonic fit (sample mean plus floor((T-2)/2) harmonics), pooled over
/// replicates.
double estimate_sigma2(const std::vector<std::vector<double>>& replicates);

}  // namespace calib
