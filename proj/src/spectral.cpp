#include "calib/spectral.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>

#include "calib/common.hpp"

namespace calib {

namespace {

// Basis tables keyed by (T, K); grown on demand, never evicted.
struct TrigTable {
    std::vector<double> cosv;  // [k-1][t], row-major K x T
    std::vector<double> sinv;
    std::size_t T = 0, K = 0;
};

const TrigTable& trig_table(std::size_t T, std::size_t K) {
    static std::mutex mu;
    static std::map<std::pair<std::size_t, std::size_t>, TrigTable> cache;
    std::lock_guard lock(mu);
    auto [it, inserted] = cache.try_emplace({T, K});
    TrigTable& tab = it->second;
    if (inserted) {
        tab.T = T;
        tab.K = K;
        tab.cosv.resize(K * T);
        tab.sinv.resize(K * T);
        for (std::size_t k = 1; k <= K; ++k) {
            for (std::size_t t = 0; t < T; ++t) {
                double phase = 2.0 * std::numbers::pi *
                               static_cast<double>(k * t % T) / static_cast<double>(T);
                tab.cosv[(k - 1) * T + t] = std::cos(phase);
                tab.sinv[(k - 1) * T + t] = std::sin(phase);
            }
        }
    }
    return tab;
}

}  // namespace

NoiseScale make_noise_scale(double sigma2_F, std::size_t T) {
    if (!(sigma2_F > 0.0)) throw std::invalid_argument("sigma2_F must be positive");
    return NoiseScale{sigma2_F, static_cast<double>(T) * sigma2_F / 2.0};
}

HarmonicCoefficients harmonic_coefficients(std::span<const double> series,
                                           std::size_t K) {
    const std::size_t T = series.size();
    if (T < 3) throw std::invalid_argument("harmonic_coefficients: series too short");
    if (K < 1 || K > max_harmonics(T))
        throw std::invalid_argument("harmonic_coefficients: K out of range");

    const TrigTable& tab = trig_table(T, K);
    HarmonicCoefficients coef;
    coef.T = T;
    coef.a.resize(K);
    coef.b.resize(K);
    const double scale = 2.0 / static_cast<double>(T);
    for (std::size_t k = 0; k < K; ++k) {
        const double* cr = &tab.cosv[k * T];
        const double* sr = &tab.sinv[k * T];
        double sa = 0.0, sb = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            sa += series[t] * cr[t];
            sb += series[t] * sr[t];
        }
        coef.a[k] = scale * sa;
        coef.b[k] = scale * sb;
    }
    return coef;
}

PowerSpectrum power_spectrum(const HarmonicCoefficients& coef) {
    PowerSpectrum sp;
    sp.s.resize(coef.a.size());
    for (std::size_t k = 0; k < coef.a.size(); ++k)
        sp.s[k] = coef.a[k] * coef.a[k] + coef.b[k] * coef.b[k];
    return sp;
}

SpectrumResult model_spectrum(const ThetaVector& theta, std::size_t K,
                              const OdeSettings& settings) {
    TrajectoryResult r = integrate(theta, settings);
    if (auto* fail = std::get_if<IntegrationFailure>(&r)) return *fail;
    const Trajectory& traj = std::get<Trajectory>(r);
    return power_spectrum(harmonic_coefficients(traj.values, K));
}

double log_bessel_i0(double x) {
    if (x < 0.0) x = -x;
    if (!std::isfinite(x)) throw std::invalid_argument("log_bessel_i0: non-finite");
    if (x <= 700.0) {
        // All-positive series; I0(700) is still representable.
        const double q = 0.25 * x * x;
        double term = 1.0, sum = 1.0;
        for (int j = 1; j < 2000; ++j) {
            term *= q / (static_cast<double>(j) * static_cast<double>(j));
            sum += term;
            if (term < sum * 1e-17) break;
        }
        return std::log(sum);
    }
    // I0(x) ~ e^x / sqrt(2 pi x) * (1 + 1/(8x) + 9/(128x^2) + ...)
    const double ix = 1.0 / x;
    double corr = 1.0 + ix * (0.125 + ix * (0.0703125 + ix * (0.0732421875 +
                                                              ix * 0.112152099609375)));
    return x - 0.5 * std::log(2.0 * std::numbers::pi * x) + std::log(corr);
}

double log_density_shat_given_s(double s_hat, double s, double V) {
    if (!(V > 0.0)) throw std::invalid_argument("log_density_shat_given_s: V <= 0");
    if (s_hat < 0.0 || s < 0.0)
        throw std::invalid_argument("log_density_shat_given_s: negative spectrum");
    return -std::log(2.0 * V) - (s_hat + s) / (2.0 * V) +
           log_bessel_i0(std::sqrt(s_hat * s) / V);
}

double estimate_sigma2(const std::vector<std::vector<double>>& replicates) {
    if (replicates.empty()) throw std::invalid_argument("estimate_sigma2: no data");
    const std::size_t T = replicates.front().size();
    const std::size_t K = (T - 2) / 2;
    if (K < 1 || T < 4) throw std::invalid_argument("estimate_sigma2: series too short");
    const long dof_per = static_cast<long>(T) - 1 - 2 * static_cast<long>(K);

    double rss = 0.0;
    for (const auto& series : replicates) {
        if (series.size() != T)
            throw std::invalid_argument("estimate_sigma2: ragged replicates");
        double mean = 0.0;
        for (double v : series) mean += v;
        mean /= static_cast<double>(T);

        HarmonicCoefficients coef = harmonic_coefficients(series, K);
        const TrigTable& tab = trig_table(T, K);
        for (std::size_t t = 0; t < T; ++t) {
            double fit = mean;
            for (std::size_t k = 0; k < K; ++k)
                fit += coef.a[k] * tab.cosv[k * T + t] + coef.b[k] * tab.sinv[k * T + t];
            double r = series[t] - fit;
            rss += r * r;
        }
    }
    return rss / (static_cast<double>(dof_per) * static_cast<double>(replicates.size()));
}

}  // namespace calib
