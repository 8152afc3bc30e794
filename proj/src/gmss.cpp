#include "calib/gmss.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace calib {

double Problem::row_loglik(const ElementEval&, std::span<const double>, double) const {
    return 0.0;
}
double Problem::data_row_loglik(std::span<const double>, std::size_t,
                                const LatentState&) const {
    return 0.0;
}
double Problem::log_tau2_prior(double) const { return 0.0; }
double Problem::log_sigma2_prior(double) const { return 0.0; }
void Problem::initial_latent(LatentState& out) const {
    out.s.clear();
    out.tau2 = 1.0;
    out.sigma2 = 0.0;
}

std::span<const double> latent_row(const LatentState& latent, std::size_t i,
                                   std::size_t K) {
    return {latent.s.data() + i * K, K};
}

double ProspectInstrumental::log_density(std::span<const double> theta) const {
    if (!bounds_->contains(theta)) return kNegInf;
    std::vector<double> u(theta.size());
    bounds_->to_unit(theta, u);
    return map_->log_density_unit(u) + log_jac_;
}

namespace {

void adapt_step(AdaptState& ad, double& step, bool accepted, double lo, double hi,
                const SamplerSettings& st) {
    ++ad.in_batch;
    if (accepted) ++ad.accepted_in_batch;
    if (ad.in_batch < st.adapt_batch) return;
    ++ad.batch_count;
    const double rate = static_cast<double>(ad.accepted_in_batch) /
                        static_cast<double>(ad.in_batch);
    const double delta =
        std::min(0.25, 1.0 / std::sqrt(static_cast<double>(ad.batch_count)));
    step *= std::exp(rate > st.target_accept ? delta : -delta);
    step = std::clamp(step, lo, hi);
    ad.in_batch = 0;
    ad.accepted_in_batch = 0;
}

}  // namespace

GmssChain::GmssChain(const Problem& problem, const Instrumental& instrumental,
                     SamplerSettings settings)
    : problem_(&problem),
      instrumental_(&instrumental),
      settings_(settings),
      rng_(settings.seed) {
    if (settings_.multiset_size < 1)
        throw std::invalid_argument("GmssChain: multiset size must be >= 1");
}

double GmssChain::mixand(std::size_t, double theta_factor, double log_g,
                         double sum_g) const {
    if (theta_factor == kNegInf) return kNegInf;
    return theta_factor + (sum_g - log_g);
}

void GmssChain::rebuild_mix() {
    const std::size_t M = elements_.size();
    sum_g_ = 0.0;
    for (const auto& el : elements_) sum_g_ += el.log_g;
    mix_.resize(M);
    for (std::size_t m = 0; m < M; ++m)
        mix_[m] = mixand(m, elements_[m].eval.theta_factor, elements_[m].log_g, sum_g_);
    lse_mix_ = log_sum_exp(mix_);
    leading_ = static_cast<std::size_t>(
        std::max_element(mix_.begin(), mix_.end()) - mix_.begin());
}

void GmssChain::initialize(const ProspectMap* init_map) {
    const std::size_t p = problem_->dim();
    const std::size_t M = settings_.multiset_size;
    const ParameterBounds& bounds = problem_->bounds();
    if (bounds.dim() != p) throw startup_error("bounds dimension does not match target");

    problem_->initial_latent(latent_);
    if (settings_.tau2_init > 0.0) latent_.tau2 = settings_.tau2_init;
    if (!settings_.sample_sigma2) latent_.sigma2 = 0.0;

    std::vector<std::vector<std::size_t>> cells;
    if (init_map && init_map->marked_count() > 0)
        cells = sample_high_cells(*init_map, M, rng_);

    elements_.assign(M, MultisetElement{});
    bool any_finite = false;
    for (std::size_t m = 0; m < M; ++m) {
        MultisetElement& el = elements_[m];
        el.theta.assign(p, 0.0);
        bool finite = false;
        for (std::size_t attempt = 0; attempt < settings_.init_attempts; ++attempt) {
            if (!cells.empty()) {
                const auto& cell = cells[(m + attempt) % cells.size()];
                std::vector<double> u = draw_in_cell(cell, init_map->q(), rng_);
                bounds.from_unit(u, el.theta);
            } else {
                problem_->sample_prior(rng_, el.theta);
                if (!bounds.contains(el.theta)) continue;
            }
            problem_->eval_theta(el.theta, latent_, el.eval);
            if (el.eval.theta_factor != kNegInf) {
                finite = true;
                break;
            }
        }
        el.log_g = instrumental_->log_density(el.theta);
        any_finite = any_finite || finite;
    }
    if (!any_finite)
        throw startup_error(
            "no multiset element reached a finite posterior density within "
            "init_attempts; check bounds, data scale and the prospect map");

    const std::size_t n = problem_->replicates();
    data_rows_.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        data_rows_[i] =
            problem_->data_row_loglik(latent_row(latent_, i, problem_->bins()), i,
                                      latent_);

    steps_.theta.assign(p, 0.0);
    for (std::size_t j = 0; j < p; ++j)
        steps_.theta[j] = settings_.stepsize_theta_frac * (bounds.hi[j] - bounds.lo[j]);
    const double scale = problem_->latent_scale();
    steps_.s.assign(n, settings_.stepsize_s_frac * scale);
    steps_.tau2 = settings_.stepsize_tau2_frac * std::max(latent_.tau2, 0.01 * scale);
    steps_.sigma2 = 0.3 * std::max(latent_.sigma2, 1e-12);

    theta_stats_.assign(p, AcceptStats{});
    s_stats_.assign(n, AcceptStats{});
    tau2_stats_ = AcceptStats{};
    sigma2_stats_ = AcceptStats{};
    theta_adapt_.assign(p, AdaptState{});
    s_adapt_.assign(n, AdaptState{});
    tau2_adapt_ = AdaptState{};
    sigma2_adapt_ = AdaptState{};
    iteration_ = 0;
    burned_in_ = false;
    rebuild_mix();
    if (lse_mix_ == kNegInf)
        throw startup_error("initial multiset has zero sampling density");
}

void GmssChain::step_theta() {
    const std::size_t p = problem_->dim();
    const std::size_t M = elements_.size();
    const ParameterBounds& bounds = problem_->bounds();
    std::vector<double> prop_theta(p);
    std::vector<double> prop_mix(M);
    ElementEval prop_eval;

    for (std::size_t m = 0; m < M; ++m) {
        for (std::size_t j = 0; j < p; ++j) {
            const bool lead = m == leading_;
            const double z = rng_.normal();
            const double prop = elements_[m].theta[j] + steps_.theta[j] * z;
            bool accepted = false;
            double logratio = kNegInf;
            if (bounds.contains_coord(prop, j)) {
                prop_theta = elements_[m].theta;
                prop_theta[j] = prop;
                problem_->eval_theta(prop_theta, latent_, prop_eval);
                const double gq = instrumental_->log_density(prop_theta);
                const double sum_g_q = sum_g_ - elements_[m].log_g + gq;
                for (std::size_t l = 0; l < M; ++l)
                    prop_mix[l] =
                        l == m ? mixand(l, prop_eval.theta_factor, gq, sum_g_q)
                               : mixand(l, elements_[l].eval.theta_factor,
                                        elements_[l].log_g, sum_g_q);
                logratio = log_sum_exp(prop_mix) - lse_mix_;
                const double u = rng_.uniform_pos();
                accepted = logratio >= 0.0 || std::log(u) < logratio;
                if (accepted) {
                    elements_[m].theta[j] = prop;
                    std::swap(elements_[m].eval, prop_eval);
                    elements_[m].log_g = gq;
                    rebuild_mix();
                }
            }
            ++theta_stats_[j].proposals;
            if (accepted) ++theta_stats_[j].accepted;
            if (proposal_hook) proposal_hook("theta", logratio, accepted);
            if (lead && settings_.adapt && !burned_in_)
                adapt_step(theta_adapt_[j], steps_.theta[j], accepted,
                           1e-9 * (bounds.hi[j] - bounds.lo[j]),
                           bounds.hi[j] - bounds.lo[j], settings_);
        }
    }
}

void GmssChain::step_latent_s() {
    const std::size_t n = problem_->replicates();
    if (n == 0) return;
    const std::size_t K = problem_->bins();
    const std::size_t M = elements_.size();
    std::vector<double> prop_row(K);
    std::vector<double> prop_mix(M);
    std::vector<double> prop_rows(M);

    for (std::size_t i = 0; i < n; ++i) {
        bool in_support = true;
        for (std::size_t k = 0; k < K; ++k) {
            prop_row[k] = latent_.s[i * K + k] + steps_.s[i] * rng_.normal();
            if (prop_row[k] <= 0.0) in_support = false;
        }
        bool accepted = false;
        double logratio = kNegInf;
        if (in_support) {
            const double data_new = problem_->data_row_loglik(prop_row, i, latent_);
            for (std::size_t m = 0; m < M; ++m) {
                const MultisetElement& el = elements_[m];
                if (el.eval.theta_factor == kNegInf && !el.eval.model_ok) {
                    prop_rows[m] = kNegInf;
                    prop_mix[m] = kNegInf;
                    continue;
                }
                const double row_new =
                    problem_->row_loglik(el.eval, prop_row, latent_.tau2);
                prop_rows[m] = row_new;
                double f_new = el.eval.log_prior;
                for (std::size_t i2 = 0; i2 < n; ++i2)
                    f_new += i2 == i ? row_new : el.eval.rows[i2];
                prop_mix[m] = mixand(m, f_new, el.log_g, sum_g_);
            }
            logratio = (data_new - data_rows_[i]) + (log_sum_exp(prop_mix) - lse_mix_);
            const double u = rng_.uniform_pos();
            accepted = logratio >= 0.0 || std::log(u) < logratio;
            if (accepted) {
                std::copy(prop_row.begin(), prop_row.end(), latent_.s.begin() + i * K);
                data_rows_[i] = data_new;
                for (std::size_t m = 0; m < M; ++m) {
                    MultisetElement& el = elements_[m];
                    if (!el.eval.model_ok) continue;
                    el.eval.rows[i] = prop_rows[m];
                    double f = el.eval.log_prior;
                    for (double r : el.eval.rows) f += r;
                    el.eval.theta_factor = f;
                }
                rebuild_mix();
            }
        }
        ++s_stats_[i].proposals;
        if (accepted) ++s_stats_[i].accepted;
        if (proposal_hook) proposal_hook("latent_s", logratio, accepted);
        if (settings_.adapt && !burned_in_) {
            const double scale = problem_->latent_scale();
            adapt_step(s_adapt_[i], steps_.s[i], accepted, 1e-12 * scale, 100.0 * scale,
                       settings_);
        }
    }
}

void GmssChain::step_tau2() {
    if (problem_->replicates() == 0) return;
    const std::size_t n = problem_->replicates();
    const std::size_t M = elements_.size();
    const double prop = latent_.tau2 + steps_.tau2 * rng_.normal();
    bool accepted = false;
    double logratio = kNegInf;
    std::vector<double> prop_mix(M);
    std::vector<std::vector<double>> prop_rows(M);
    if (prop > 0.0) {
        for (std::size_t m = 0; m < M; ++m) {
            const MultisetElement& el = elements_[m];
            if (!el.eval.model_ok) {
                prop_mix[m] = kNegInf;
                continue;
            }
            prop_rows[m].resize(n);
            double f_new = el.eval.log_prior;
            for (std::size_t i = 0; i < n; ++i) {
                prop_rows[m][i] = problem_->row_loglik(
                    el.eval, latent_row(latent_, i, problem_->bins()), prop);
                f_new += prop_rows[m][i];
            }
            prop_mix[m] = mixand(m, f_new, el.log_g, sum_g_);
        }
        logratio = (log_sum_exp(prop_mix) - lse_mix_) +
                   (problem_->log_tau2_prior(prop) - problem_->log_tau2_prior(latent_.tau2));
        const double u = rng_.uniform_pos();
        accepted = logratio >= 0.0 || std::log(u) < logratio;
        if (accepted) {
            latent_.tau2 = prop;
            for (std::size_t m = 0; m < M; ++m) {
                MultisetElement& el = elements_[m];
                if (!el.eval.model_ok) continue;
                el.eval.rows = prop_rows[m];
                double f = el.eval.log_prior;
                for (double r : el.eval.rows) f += r;
                el.eval.theta_factor = f;
            }
            rebuild_mix();
        }
    }
    ++tau2_stats_.proposals;
    if (accepted) ++tau2_stats_.accepted;
    if (proposal_hook) proposal_hook("tau2", logratio, accepted);
    if (settings_.adapt && !burned_in_) {
        const double scale = problem_->latent_scale();
        adapt_step(tau2_adapt_, steps_.tau2, accepted, 1e-12 * scale * scale,
                   100.0 * scale * scale, settings_);
    }
}

void GmssChain::step_sigma2() {
    if (problem_->replicates() == 0 || latent_.sigma2 <= 0.0) return;
    const std::size_t n = problem_->replicates();
    const double prop = latent_.sigma2 + steps_.sigma2 * rng_.normal();
    bool accepted = false;
    double logratio = kNegInf;
    if (prop > 0.0) {
        LatentState prop_latent = latent_;
        prop_latent.sigma2 = prop;
        std::vector<double> new_rows(n);
        double delta = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            new_rows[i] = problem_->data_row_loglik(
                latent_row(latent_, i, problem_->bins()), i, prop_latent);
            delta += new_rows[i] - data_rows_[i];
        }
        logratio = delta + (problem_->log_sigma2_prior(prop) -
                            problem_->log_sigma2_prior(latent_.sigma2));
        const double u = rng_.uniform_pos();
        accepted = logratio >= 0.0 || std::log(u) < logratio;
        if (accepted) {
            latent_.sigma2 = prop;
            data_rows_ = new_rows;
        }
    }
    ++sigma2_stats_.proposals;
    if (accepted) ++sigma2_stats_.accepted;
    if (proposal_hook) proposal_hook("sigma2", logratio, accepted);
    if (settings_.adapt && !burned_in_)
        adapt_step(sigma2_adapt_, steps_.sigma2, accepted, 1e-16, 1e6, settings_);
}

void GmssChain::iterate() {
    step_theta();
    if (problem_->replicates() > 0) {
        step_latent_s();
        step_tau2();
        if (settings_.sample_sigma2) step_sigma2();
    }
    ++iteration_;
}

std::vector<double> GmssChain::weights() const {
    if (lse_mix_ == kNegInf)
        throw std::runtime_error("weights: all multiset numerators vanish");
    std::vector<double> w(mix_.size());
    double total = 0.0;
    for (std::size_t m = 0; m < mix_.size(); ++m) {
        w[m] = mix_[m] == kNegInf ? 0.0 : std::exp(mix_[m] - lse_mix_);
        total += w[m];
    }
    for (double& v : w) v /= total;
    return w;
}

double GmssChain::sampling_log_density() const {
    double acc = -std::log(static_cast<double>(elements_.size())) + lse_mix_;
    for (double d : data_rows_) acc += d;
    if (problem_->replicates() > 0) acc += problem_->log_tau2_prior(latent_.tau2);
    if (latent_.sigma2 > 0.0) acc += problem_->log_sigma2_prior(latent_.sigma2);
    return acc;
}

ChainSample GmssChain::snapshot() const {
    ChainSample out;
    out.iteration = iteration_;
    out.tau2 = latent_.tau2;
    out.sigma2 = latent_.sigma2;
    out.s = latent_.s;
    out.leading = leading_;
    double shared = 0.0;
    for (double d : data_rows_) shared += d;
    if (problem_->replicates() > 0) shared += problem_->log_tau2_prior(latent_.tau2);
    if (latent_.sigma2 > 0.0) shared += problem_->log_sigma2_prior(latent_.sigma2);
    std::vector<double> w = weights();
    out.elements.resize(elements_.size());
    for (std::size_t m = 0; m < elements_.size(); ++m) {
        out.elements[m].theta = elements_[m].theta;
        out.elements[m].logf = elements_[m].eval.theta_factor == kNegInf
                                   ? kNegInf
                                   : shared + elements_[m].eval.theta_factor;
        out.elements[m].w = w[m];
    }
    return out;
}

GmssChain::RawState GmssChain::raw_state() const {
    RawState raw;
    raw.iteration = iteration_;
    raw.rng_state = rng_.save_state();
    raw.thetas.reserve(elements_.size());
    for (const auto& el : elements_) raw.thetas.push_back(el.theta);
    raw.latent = latent_;
    raw.steps = steps_;
    raw.theta_adapt = theta_adapt_;
    raw.s_adapt = s_adapt_;
    raw.tau2_adapt = tau2_adapt_;
    raw.sigma2_adapt = sigma2_adapt_;
    raw.burned_in = burned_in_;
    return raw;
}

void GmssChain::restore(const RawState& raw) {
    latent_ = raw.latent;
    elements_.assign(raw.thetas.size(), MultisetElement{});
    for (std::size_t m = 0; m < elements_.size(); ++m) {
        elements_[m].theta = raw.thetas[m];
        problem_->eval_theta(elements_[m].theta, latent_, elements_[m].eval);
        elements_[m].log_g = instrumental_->log_density(elements_[m].theta);
    }
    const std::size_t n = problem_->replicates();
    data_rows_.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        data_rows_[i] = problem_->data_row_loglik(
            latent_row(latent_, i, problem_->bins()), i, latent_);
    steps_ = raw.steps;
    theta_adapt_ = raw.theta_adapt;
    s_adapt_ = raw.s_adapt;
    tau2_adapt_ = raw.tau2_adapt;
    sigma2_adapt_ = raw.sigma2_adapt;
    theta_stats_.assign(problem_->dim(), AcceptStats{});
    s_stats_.assign(n, AcceptStats{});
    tau2_stats_ = AcceptStats{};
    sigma2_stats_ = AcceptStats{};
    iteration_ = raw.iteration;
    burned_in_ = raw.burned_in;
    rng_.restore_state(raw.rng_state);
    rebuild_mix();
}

// ---------------------------------------------------------------------------
// Appendix-style Metropolis-within-Gibbs.

MhChain::MhChain(const Problem& problem, SamplerSettings settings)
    : problem_(&problem), settings_(settings), rng_(settings.seed) {}

void MhChain::refresh_eval() { problem_->eval_theta(theta_, latent_, eval_); }

void MhChain::initialize(const ProspectMap* init_map) {
    const std::size_t p = problem_->dim();
    const ParameterBounds& bounds = problem_->bounds();
    problem_->initial_latent(latent_);
    if (settings_.tau2_init > 0.0) latent_.tau2 = settings_.tau2_init;
    if (!settings_.sample_sigma2) latent_.sigma2 = 0.0;

    std::vector<std::vector<std::size_t>> cells;
    if (init_map && init_map->marked_count() > 0)
        cells = sample_high_cells(*init_map, 1, rng_);

    theta_.assign(p, 0.0);
    bool finite = false;
    for (std::size_t attempt = 0; attempt < settings_.init_attempts; ++attempt) {
        if (!cells.empty()) {
            std::vector<double> u = draw_in_cell(cells[0], init_map->q(), rng_);
            bounds.from_unit(u, theta_);
        } else {
            problem_->sample_prior(rng_, theta_);
            if (!bounds.contains(theta_)) continue;
        }
        refresh_eval();
        if (eval_.theta_factor != kNegInf) {
            finite = true;
            break;
        }
    }
    if (!finite)
        throw startup_error(
            "MH initialization found no finite-density start within init_attempts");

    const std::size_t n = problem_->replicates();
    data_rows_.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        data_rows_[i] = problem_->data_row_loglik(
            latent_row(latent_, i, problem_->bins()), i, latent_);

    steps_.theta.assign(p, 0.0);
    for (std::size_t j = 0; j < p; ++j)
        steps_.theta[j] = settings_.stepsize_theta_frac * (bounds.hi[j] - bounds.lo[j]);
    const double scale = problem_->latent_scale();
    steps_.s.assign(n, settings_.stepsize_s_frac * scale);
    steps_.tau2 = settings_.stepsize_tau2_frac * std::max(latent_.tau2, 0.01 * scale);
    steps_.sigma2 = 0.3 * std::max(latent_.sigma2, 1e-12);

    theta_stats_.assign(p, AcceptStats{});
    s_stats_.assign(n, AcceptStats{});
    tau2_stats_ = AcceptStats{};
    sigma2_stats_ = AcceptStats{};
    theta_adapt_.assign(p, AdaptState{});
    s_adapt_.assign(n, AdaptState{});
    tau2_adapt_ = AdaptState{};
    sigma2_adapt_ = AdaptState{};
    iteration_ = 0;
    burned_in_ = false;
}

void MhChain::step_theta() {
    const std::size_t p = problem_->dim();
    const ParameterBounds& bounds = problem_->bounds();
    std::vector<double> prop_theta(p);
    ElementEval prop_eval;
    for (std::size_t j = 0; j < p; ++j) {
        const double z = rng_.normal();
        const double prop = theta_[j] + steps_.theta[j] * z;
        bool accepted = false;
        double logratio = kNegInf;
        if (bounds.contains_coord(prop, j)) {
            prop_theta = theta_;
            prop_theta[j] = prop;
            problem_->eval_theta(prop_theta, latent_, prop_eval);
            logratio = prop_eval.theta_factor == kNegInf
                           ? kNegInf
                           : prop_eval.theta_factor - eval_.theta_factor;
            const double u = rng_.uniform_pos();
            accepted = logratio >= 0.0 || std::log(u) < logratio;
            if (accepted) {
                theta_[j] = prop;
                std::swap(eval_, prop_eval);
            }
        }
        ++theta_stats_[j].proposals;
        if (accepted) ++theta_stats_[j].accepted;
        if (proposal_hook) proposal_hook("theta", logratio, accepted);
        if (settings_.adapt && !burned_in_)
            adapt_step(theta_adapt_[j], steps_.theta[j], accepted,
                       1e-9 * (bounds.hi[j] - bounds.lo[j]), bounds.hi[j] - bounds.lo[j],
                       settings_);
    }
}

void MhChain::step_latent_s() {
    const std::size_t n = problem_->replicates();
    if (n == 0) return;
    const std::size_t K = problem_->bins();
    std::vector<double> prop_row(K);
    for (std::size_t i = 0; i < n; ++i) {
        bool in_support = true;
        for (std::size_t k = 0; k < K; ++k) {
            prop_row[k] = latent_.s[i * K + k] + steps_.s[i] * rng_.normal();
            if (prop_row[k] <= 0.0) in_support = false;
        }
        bool accepted = false;
        double logratio = kNegInf;
        if (in_support) {
            const double data_new = problem_->data_row_loglik(prop_row, i, latent_);
            const double row_new = problem_->row_loglik(eval_, prop_row, latent_.tau2);
            double f_new = eval_.log_prior;
            for (std::size_t i2 = 0; i2 < n; ++i2)
                f_new += i2 == i ? row_new : eval_.rows[i2];
            logratio = (data_new - data_rows_[i]) + (f_new - eval_.theta_factor);
            const double u = rng_.uniform_pos();
            accepted = logratio >= 0.0 || std::log(u) < logratio;
            if (accepted) {
                std::copy(prop_row.begin(), prop_row.end(), latent_.s.begin() + i * K);
                data_rows_[i] = data_new;
                eval_.rows[i] = row_new;
                eval_.theta_factor = f_new;
            }
        }
        ++s_stats_[i].proposals;
        if (accepted) ++s_stats_[i].accepted;
        if (proposal_hook) proposal_hook("latent_s", logratio, accepted);
        if (settings_.adapt && !burned_in_) {
            const double scale = problem_->latent_scale();
            adapt_step(s_adapt_[i], steps_.s[i], accepted, 1e-12 * scale, 100.0 * scale,
                       settings_);
        }
    }
}

void MhChain::step_tau2() {
    if (problem_->replicates() == 0) return;
    const std::size_t n = problem_->replicates();
    const double prop = latent_.tau2 + steps_.tau2 * rng_.normal();
    bool accepted = false;
    double logratio = kNegInf;
    if (prop > 0.0) {
        std::vector<double> new_rows(n);
        double f_new = eval_.log_prior;
        for (std::size_t i = 0; i < n; ++i) {
            new_rows[i] = problem_->row_loglik(
                eval_, latent_row(latent_, i, problem_->bins()), prop);
            f_new += new_rows[i];
        }
        logratio = (f_new - eval_.theta_factor) +
                   (problem_->log_tau2_prior(prop) - problem_->log_tau2_prior(latent_.tau2));
        const double u = rng_.uniform_pos();
        accepted = logratio >= 0.0 || std::log(u) < logratio;
        if (accepted) {
            latent_.tau2 = prop;
            eval_.rows = new_rows;
            eval_.theta_factor = f_new;
        }
    }
    ++tau2_stats_.proposals;
    if (accepted) ++tau2_stats_.accepted;
    if (proposal_hook) proposal_hook("tau2", logratio, accepted);
    if (settings_.adapt && !burned_in_) {
        const double scale = problem_->latent_scale();
        adapt_step(tau2_adapt_, steps_.tau2, accepted, 1e-12 * scale * scale,
                   100.0 * scale * scale, settings_);
    }
}

void MhChain::step_sigma2() {
    if (problem_->replicates() == 0 || latent_.sigma2 <= 0.0) return;
    const std::size_t n = problem_->replicates();
    const double prop = latent_.sigma2 + steps_.sigma2 * rng_.normal();
    bool accepted = false;
    double logratio = kNegInf;
    if (prop > 0.0) {
        LatentState prop_latent = latent_;
        prop_latent.sigma2 = prop;
        std::vector<double> new_rows(n);
        double delta = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            new_rows[i] = problem_->data_row_loglik(
                latent_row(latent_, i, problem_->bins()), i, prop_latent);
            delta += new_rows[i] - data_rows_[i];
        }
        logratio = delta + (problem_->log_sigma2_prior(prop) -
                            problem_->log_sigma2_prior(latent_.sigma2));
        const double u = rng_.uniform_pos();
        accepted = logratio >= 0.0 || std::log(u) < logratio;
        if (accepted) {
            latent_.sigma2 = prop;
            data_rows_ = new_rows;
        }
    }
    ++sigma2_stats_.proposals;
    if (accepted) ++sigma2_stats_.accepted;
    if (proposal_hook) proposal_hook("sigma2", logratio, accepted);
    if (settings_.adapt && !burned_in_)
        adapt_step(sigma2_adapt_, steps_.sigma2, accepted, 1e-16, 1e6, settings_);
}

void MhChain::iterate() {
    step_theta();
    if (problem_->replicates() > 0) {
        step_latent_s();
        step_tau2();
        if (settings_.sample_sigma2) step_sigma2();
    }
    ++iteration_;
}

ChainSample MhChain::snapshot() const {
    ChainSample out;
    out.iteration = iteration_;
    out.tau2 = latent_.tau2;
    out.sigma2 = latent_.sigma2;
    out.s = latent_.s;
    out.leading = 0;
    double shared = 0.0;
    for (double d : data_rows_) shared += d;
    if (problem_->replicates() > 0) shared += problem_->log_tau2_prior(latent_.tau2);
    if (latent_.sigma2 > 0.0) shared += problem_->log_sigma2_prior(latent_.sigma2);
    out.elements.resize(1);
    out.elements[0].theta = theta_;
    out.elements[0].logf =
        eval_.theta_factor == kNegInf ? kNegInf : shared + eval_.theta_factor;
    out.elements[0].w = 1.0;
    return out;
}

MhChain::RawState MhChain::raw_state() const {
    RawState raw;
    raw.iteration = iteration_;
    raw.rng_state = rng_.save_state();
    raw.theta = theta_;
    raw.latent = latent_;
    raw.steps = steps_;
    raw.theta_adapt = theta_adapt_;
    raw.s_adapt = s_adapt_;
    raw.tau2_adapt = tau2_adapt_;
    raw.sigma2_adapt = sigma2_adapt_;
    raw.burned_in = burned_in_;
    return raw;
}

void MhChain::restore(const RawState& raw) {
    latent_ = raw.latent;
    theta_ = raw.theta;
    refresh_eval();
    const std::size_t n = problem_->replicates();
    data_rows_.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        data_rows_[i] = problem_->data_row_loglik(
            latent_row(latent_, i, problem_->bins()), i, latent_);
    steps_ = raw.steps;
    theta_adapt_ = raw.theta_adapt;
    s_adapt_ = raw.s_adapt;
    tau2_adapt_ = raw.tau2_adapt;
    sigma2_adapt_ = raw.sigma2_adapt;
    theta_stats_.assign(problem_->dim(), AcceptStats{});
    s_stats_.assign(n, AcceptStats{});
    tau2_stats_ = AcceptStats{};
    sigma2_stats_ = AcceptStats{};
    iteration_ = raw.iteration;
    burned_in_ = raw.burned_in;
    rng_.restore_state(raw.rng_state);
}

// ---------------------------------------------------------------------------

std::vector<double> compute_weights(std::span<const double> theta_factors,
                                    std::span<const double> log_g) {
    const std::size_t M = theta_factors.size();
    std::vector<double> mix(M);
    for (std::size_t m = 0; m < M; ++m)
        mix[m] = theta_factors[m] == kNegInf ? kNegInf : theta_factors[m] - log_g[m];
    const double lse = log_sum_exp(mix);
    if (lse == kNegInf)
        throw std::runtime_error("compute_weights: all numerators are zero");
    std::vector<double> w(M);
    double total = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
        w[m] = mix[m] == kNegInf ? 0.0 : std::exp(mix[m] - lse);
        total += w[m];
    }
    for (double& v : w) v /= total;
    return w;
}

double estimate(const std::function<double(std::span<const double>)>& h,
                std::span<const ChainSample> samples) {
    if (samples.empty()) throw std::invalid_argument("estimate: no retained samples");
    double acc = 0.0;
    for (const ChainSample& s : samples) {
        double inner = 0.0;
        for (const auto& el : s.elements) inner += el.w * h(el.theta);
        acc += inner;
    }
    return acc / static_cast<double>(samples.size());
}

double gmss_sampling_log_density(const Problem& problem, const Instrumental& g,
                                 const std::vector<std::vector<double>>& thetas,
                                 const LatentState& latent) {
    const std::size_t M = thetas.size();
    if (M == 0) throw std::invalid_argument("gmss_sampling_log_density: empty multiset");
    std::vector<double> F(M), G(M);
    ElementEval ev;
    for (std::size_t m = 0; m < M; ++m) {
        problem.eval_theta(thetas[m], latent, ev);
        F[m] = ev.theta_factor;
        G[m] = g.log_density(thetas[m]);
    }
    double sum_g = 0.0;
    for (double v : G) sum_g += v;
    std::vector<double> mix(M);
    for (std::size_t m = 0; m < M; ++m)
        mix[m] = F[m] == kNegInf ? kNegInf : F[m] + (sum_g - G[m]);
    double acc = -std::log(static_cast<double>(M)) + log_sum_exp(mix);
    for (std::size_t i = 0; i < problem.replicates(); ++i)
        acc += problem.data_row_loglik(latent_row(latent, i, problem.bins()), i, latent);
    if (problem.replicates() > 0) acc += problem.log_tau2_prior(latent.tau2);
    if (latent.sigma2 > 0.0) acc += problem.log_sigma2_prior(latent.sigma2);
    return acc;
}

CumulativeHistogram cumulative_histogram_diagnostic(std::span<const ChainSample> samples,
                                                    std::vector<std::uint64_t> checkpoints,
                                                    const ParameterBounds& bounds,
                                                    std::size_t nbins,
                                                    double tv_threshold) {
    CumulativeHistogram out;
    const std::size_t p = bounds.dim();
    out.checkpoints = std::move(checkpoints);
    std::sort(out.checkpoints.begin(), out.checkpoints.end());
    out.edges.resize(nbins + 1);
    for (std::size_t i = 0; i <= nbins; ++i)
        out.edges[i] = static_cast<double>(i) / static_cast<double>(nbins);

    std::vector<std::vector<double>> acc(p, std::vector<double>(nbins, 0.0));
    std::size_t cursor = 0;
    for (std::uint64_t cp : out.checkpoints) {
        while (cursor < samples.size() && samples[cursor].iteration <= cp) {
            const ChainSample& s = samples[cursor];
            for (const auto& el : s.elements) {
                for (std::size_t j = 0; j < p; ++j) {
                    const double w = bounds.hi[j] - bounds.lo[j];
                    double rel = (el.theta[j] - bounds.lo[j]) / w;
                    auto bin = static_cast<long>(std::floor(rel * static_cast<double>(nbins)));
                    bin = std::clamp<long>(bin, 0, static_cast<long>(nbins) - 1);
                    acc[j][static_cast<std::size_t>(bin)] += el.w;
                }
            }
            ++cursor;
        }
        std::vector<std::vector<double>> snap(p, std::vector<double>(nbins, 0.0));
        for (std::size_t j = 0; j < p; ++j) {
            double total = 0.0;
            for (double v : acc[j]) total += v;
            if (total > 0.0)
                for (std::size_t b = 0; b < nbins; ++b) snap[j][b] = acc[j][b] / total;
        }
        out.snapshots.push_back(std::move(snap));
    }

    out.stationary.assign(p, false);
    if (out.snapshots.size() >= 2) {
        const auto& last = out.snapshots.back();
        const auto& prev = out.snapshots[out.snapshots.size() - 2];
        bool all = true;
        for (std::size_t j = 0; j < p; ++j) {
            double tv = 0.0;
            for (std::size_t b = 0; b < nbins; ++b)
                tv += std::abs(last[j][b] - prev[j][b]);
            tv *= 0.5;
            out.stationary[j] = tv < tv_threshold;
            all = all && out.stationary[j];
        }
        out.all_stationary = all;
    }
    return out;
}

}  // namespace calib
