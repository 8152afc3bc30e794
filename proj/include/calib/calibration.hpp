#pragma once

#include "calib/bayes.hpp"
#include "calib/gmss.hpp"

namespace calib {

/// Hierarchical calibration model exposed through the sampler's Problem
/// interface. Theta proposals live in natural space; the instrumental
/// densities handle the scaled-space view.
class CalibrationProblem : public Problem {
public:
    CalibrationProblem(const HierarchicalModel& model, ParameterBounds bounds)
        : model_(&model), bounds_(std::move(bounds)) {
        double acc = 0.0;
        for (double v : model_->s_hat()) acc += std::abs(v);
        scale_ = std::max(acc / static_cast<double>(model_->s_hat().size()), 1e-12);
    }

    std::size_t dim() const override { return kThetaDim; }
    std::size_t replicates() const override { return model_->n(); }
    std::size_t bins() const override { return model_->K(); }
    const ParameterBounds& bounds() const override { return bounds_; }
    const HierarchicalModel& model() const { return *model_; }

    void eval_theta(std::span<const double> theta, const LatentState& latent,
                    ElementEval& out) const override;
    double row_loglik(const ElementEval& eval, std::span<const double> s_row,
                      double tau2) const override;
    double data_row_loglik(std::span<const double> s_row, std::size_t i,
                           const LatentState& latent) const override;
    double log_tau2_prior(double tau2) const override {
        return model_->log_prior_tau2(tau2);
    }
    double log_sigma2_prior(double sigma2) const override;
    void initial_latent(LatentState& out) const override;
    void sample_prior(Rng& rng, std::span<double> theta) const override;
    double latent_scale() const override { return scale_; }

    ThetaVector to_theta_vector(std::span<const double> theta) const {
        ThetaVector tv;
        for (std::size_t j = 0; j < kThetaDim; ++j) tv.theta[j] = theta[j];
        tv.c = c_;
        return tv;
    }

    void set_c(double c) { c_ = c; }
    double c() const { return c_; }

private:
    const HierarchicalModel* model_;
    ParameterBounds bounds_;
    double scale_ = 1.0;
    double c_ = 1.0;
};

}  // namespace calib
