#include "calib/bayes.hpp"

#include <cmath>
#include <cstring>
#include <mutex>
#include <numbers>
#include <stdexcept>

#include "calib/common.hpp"

namespace calib {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log sqrt(2 pi)

inline double log_phi_nonneg(double x) {
    // log Phi(x) for x >= 0; Phi >= 1/2 so the direct form is stable.
    return std::log(0.5 * std::erfc(-x * std::numbers::sqrt2 / 2.0));
}

std::uint64_t hash_ode(const OdeSettings& o) {
    std::vector<double> v{o.initial_state[0], o.initial_state[1], o.initial_state[2],
                          o.transient_hours, static_cast<double>(o.sample_count),
                          o.dt_out, o.abs_tol, o.rel_tol, o.max_step, o.init_step,
                          o.overflow_guard, static_cast<double>(o.hill_exponent_eq3)};
    return fnv1a64(std::span<const unsigned char>(
        reinterpret_cast<const unsigned char*>(v.data()), v.size() * sizeof(double)));
}

std::uint64_t hash_theta(const ThetaVector& t, std::uint64_t seed) {
    unsigned char bytes[sizeof(t.theta) + sizeof(double)];
    std::memcpy(bytes, t.theta.data(), sizeof(t.theta));
    std::memcpy(bytes + sizeof(t.theta), &t.c, sizeof(double));
    return fnv1a64(std::span<const unsigned char>(bytes, sizeof(bytes)), seed);
}

}  // namespace

double log_truncnormal_plus(double s, double lambda, double tau2) {
    if (!(tau2 > 0.0)) throw std::invalid_argument("log_truncnormal_plus: tau2 <= 0");
    if (lambda < 0.0) throw std::invalid_argument("log_truncnormal_plus: lambda < 0");
    if (s <= 0.0) return kNegInf;
    const double tau = std::sqrt(tau2);
    const double z = (s - lambda) / tau;
    return -kLogSqrt2Pi - std::log(tau) - 0.5 * z * z - log_phi_nonneg(lambda / tau);
}

double log_ig(double x, double a, double b) {
    if (!(a > 0.0) || !(b > 0.0)) throw std::invalid_argument("log_ig: bad shape/scale");
    if (x <= 0.0) return kNegInf;
    return a * std::log(b) - std::lgamma(a) - (a + 1.0) * std::log(x) - b / x;
}

HierarchicalModel::HierarchicalModel(std::vector<double> s_hat, std::size_t n,
                                     std::size_t K, double sigma2_F,
                                     IgPrior prior_theta, IgPrior prior_tau2,
                                     OdeSettings ode)
    : s_hat_(std::move(s_hat)),
      n_(n),
      K_(K),
      T_(ode.sample_count),
      noise_(make_noise_scale(sigma2_F, ode.sample_count)),
      prior_theta_(prior_theta),
      prior_tau2_(prior_tau2),
      ode_(ode),
      ode_hash_(hash_ode(ode)) {
    if (n_ < 1 || K_ < 1) throw std::invalid_argument("HierarchicalModel: n, K >= 1");
    if (s_hat_.size() != n_ * K_)
        throw std::invalid_argument("HierarchicalModel: s_hat size mismatch");
    for (double v : s_hat_)
        if (!(v >= 0.0)) throw std::invalid_argument("HierarchicalModel: s_hat < 0");
    if (!(prior_theta_.a > 0 && prior_theta_.b > 0 && prior_tau2_.a > 0 &&
          prior_tau2_.b > 0))
        throw std::invalid_argument("HierarchicalModel: hyperparameters must be > 0");
    if (K_ > max_harmonics(T_))
        throw std::invalid_argument("HierarchicalModel: K beyond Nyquist");
}

void HierarchicalModel::set_cache_enabled(bool on) {
    std::unique_lock lock(cache_mu_);
    cache_enabled_ = on;
    cache_.clear();
}

SpectrumResult HierarchicalModel::lambda(const ThetaVector& theta) const {
    if (!cache_enabled_) return model_spectrum(theta, K_, ode_);
    const std::uint64_t key = hash_theta(theta, ode_hash_);
    {
        std::shared_lock lock(cache_mu_);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
    }
    SpectrumResult r = model_spectrum(theta, K_, ode_);
    {
        std::unique_lock lock(cache_mu_);
        if (cache_.size() >= cache_capacity_) cache_.clear();
        cache_.emplace(key, r);
    }
    return r;
}

double HierarchicalModel::log_prior_theta(const ThetaVector& theta) const {
    double acc = 0.0;
    for (double v : theta.theta) {
        acc += log_ig(v, prior_theta_.a, prior_theta_.b);
        if (acc == kNegInf) return kNegInf;
    }
    return acc;
}

double HierarchicalModel::log_prior_tau2(double tau2) const {
    return log_ig(tau2, prior_tau2_.a, prior_tau2_.b);
}

double HierarchicalModel::row_loglik(std::span<const double> lambda,
                                     std::span<const double> s_row,
                                     double tau2) const {
    double acc = 0.0;
    for (std::size_t k = 0; k < K_; ++k) {
        acc += log_truncnormal_plus(s_row[k], lambda[k], tau2);
        if (acc == kNegInf) return kNegInf;
    }
    return acc;
}

double HierarchicalModel::data_row_loglik(std::span<const double> s_row,
                                          std::size_t i) const {
    double acc = 0.0;
    for (std::size_t k = 0; k < K_; ++k)
        acc += log_density_shat_given_s(s_hat_[i * K_ + k], s_row[k], noise_.V);
    return acc;
}

double joint_log_posterior(const ThetaVector& theta, const LatentSpectra& latent,
                           const HierarchicalModel& model) {
    if (latent.s.size() != model.n() * model.K())
        throw std::invalid_argument("joint_log_posterior: latent size mismatch");
    if (!(latent.tau2 > 0.0)) return kNegInf;
    for (double v : latent.s)
        if (!(v > 0.0)) return kNegInf;

    SpectrumResult lr = model.lambda(theta);
    if (spectrum_failed(lr)) return kNegInf;
    const PowerSpectrum& lam = std::get<PowerSpectrum>(lr);

    double acc = model.log_prior_theta(theta) + model.log_prior_tau2(latent.tau2);
    for (std::size_t i = 0; i < model.n(); ++i) {
        auto row = latent.row(i, model.K());
        acc += model.data_row_loglik(row, i);
        acc += model.row_loglik(lam.s, row, latent.tau2);
        if (acc == kNegInf) return kNegInf;
    }
    return acc;
}

}  // namespace calib
