#include "calib/calibration.hpp"

#include <algorithm>
#include <cmath>

namespace calib {

void CalibrationProblem::eval_theta(std::span<const double> theta,
                                    const LatentState& latent,
                                    ElementEval& out) const {
    const std::size_t n = model_->n();
    out.log_prior = model_->log_prior_theta(to_theta_vector(theta));
    out.rows.assign(n, kNegInf);
    out.lambda.clear();
    out.model_ok = false;
    out.theta_factor = kNegInf;
    if (out.log_prior == kNegInf) return;

    SpectrumResult lr = model_->lambda(to_theta_vector(theta));
    if (spectrum_failed(lr)) return;
    out.lambda = std::move(std::get<PowerSpectrum>(lr).s);
    out.model_ok = true;

    double acc = out.log_prior;
    for (std::size_t i = 0; i < n; ++i) {
        out.rows[i] = model_->row_loglik(out.lambda, latent_row(latent, i, model_->K()),
                                         latent.tau2);
        acc += out.rows[i];
    }
    out.theta_factor = acc;
}

double CalibrationProblem::row_loglik(const ElementEval& eval,
                                      std::span<const double> s_row,
                                      double tau2) const {
    if (!eval.model_ok) return kNegInf;
    return model_->row_loglik(eval.lambda, s_row, tau2);
}

double CalibrationProblem::data_row_loglik(std::span<const double> s_row, std::size_t i,
                                           const LatentState& latent) const {
    if (latent.sigma2 > 0.0) {
        const double V = static_cast<double>(model_->T()) * latent.sigma2 / 2.0;
        double acc = 0.0;
        for (std::size_t k = 0; k < model_->K(); ++k)
            acc += log_density_shat_given_s(model_->s_hat_row(i)[k], s_row[k], V);
        return acc;
    }
    return model_->data_row_loglik(s_row, i);
}

double CalibrationProblem::log_sigma2_prior(double sigma2) const {
    return log_ig(sigma2, model_->prior_sigma2().a, model_->prior_sigma2().b);
}

void CalibrationProblem::initial_latent(LatentState& out) const {
    const std::size_t n = model_->n(), K = model_->K();
    out.s.resize(n * K);
    for (std::size_t i = 0; i < n * K; ++i)
        out.s[i] = std::max(model_->s_hat()[i], 1e-8);
    out.tau2 = std::max(0.0625 * scale_ * scale_, 1e-12);
    out.sigma2 = model_->sigma2_F();
}

void CalibrationProblem::sample_prior(Rng& rng, std::span<double> theta) const {
    const IgPrior& pr = model_->prior_theta();
    for (std::size_t j = 0; j < kThetaDim; ++j) {
        double v = 0.0;
        bool ok = false;
        for (int tries = 0; tries < 64; ++tries) {
            v = rng.inverse_gamma(pr.a, pr.b);
            if (bounds_.contains_coord(v, j)) {
                ok = true;
                break;
            }
        }
        theta[j] = ok ? v : bounds_.from_unit(rng.uniform_pos(), j);
    }
}

}  // namespace calib
