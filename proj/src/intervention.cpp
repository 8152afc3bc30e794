#include "calib/intervention.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "calib/parallel.hpp"
#include "calib/rng.hpp"
#include "calib/spectral.hpp"

namespace calib {

ThetaVector intervene(const ThetaVector& theta, std::size_t j, double alpha) {
    if (j >= kThetaDim) throw std::invalid_argument("intervene: index out of range");
    if (!(alpha > 0.0)) throw std::invalid_argument("intervene: alpha must be > 0");
    ThetaVector out = theta;
    out.theta[j] = alpha * out.theta[j];
    return out;
}

namespace {

// Continuous spectral power of the mean-removed series at frequency f
// (cycles per window).
double spectral_power(std::span<const double> y, double mean, double f) {
    const double w = 2.0 * std::numbers::pi * f / static_cast<double>(y.size());
    double ca = 0.0, sb = 0.0;
    for (std::size_t t = 0; t < y.size(); ++t) {
        const double v = y[t] - mean;
        ca += v * std::cos(w * static_cast<double>(t));
        sb += v * std::sin(w * static_cast<double>(t));
    }
    const double scale = 2.0 / static_cast<double>(y.size());
    ca *= scale;
    sb *= scale;
    return ca * ca + sb * sb;
}

}  // namespace

std::optional<double> period_from_trajectory(const Trajectory& traj, double amp_tol) {
    if (!detect_oscillation(traj, amp_tol).oscillating) return std::nullopt;
    const std::size_t T = traj.values.size();
    const std::size_t Kmax = max_harmonics(T);
    if (Kmax < 2) return std::nullopt;

    PowerSpectrum sp = power_spectrum(harmonic_coefficients(traj.values, Kmax));
    std::size_t kpeak =
        1 + static_cast<std::size_t>(std::max_element(sp.s.begin(), sp.s.end()) -
                                     sp.s.begin());

    double mean = 0.0;
    for (double v : traj.values) mean += v;
    mean /= static_cast<double>(T);

    // Parabolic seed around the peak bin, then golden-section refinement of
    // the continuous power.
    double lo = std::max(0.75, static_cast<double>(kpeak) - 1.0);
    double hi = std::min(static_cast<double>(Kmax), static_cast<double>(kpeak) + 1.0);
    constexpr double kInvPhi = 0.61803398874989484820;
    double a = lo, b = hi;
    double x1 = b - kInvPhi * (b - a);
    double x2 = a + kInvPhi * (b - a);
    double f1 = spectral_power(traj.values, mean, x1);
    double f2 = spectral_power(traj.values, mean, x2);
    for (int it = 0; it < 80; ++it) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + kInvPhi * (b - a);
            f2 = spectral_power(traj.values, mean, x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - kInvPhi * (b - a);
            f1 = spectral_power(traj.values, mean, x1);
        }
    }
    const double fstar = 0.5 * (a + b);
    if (!(fstar > 0.0)) return std::nullopt;
    return static_cast<double>(T) * traj.dt_out / fstar;
}

std::optional<double> period_of(const ThetaVector& theta, const OdeSettings& ode,
                                const PeriodSettings& ps) {
    OdeSettings window = ode;
    window.dt_out = ps.dt;
    window.sample_count = static_cast<std::size_t>(
        std::ceil(ps.window_cycles * ps.nominal_period / ps.dt));
    TrajectoryResult r = integrate(theta, window);
    if (integration_failed(r)) return std::nullopt;
    return period_from_trajectory(std::get<Trajectory>(r), ps.amp_tol);
}

FeatureFn make_feature(Feature f, const OdeSettings& ode, const PeriodSettings& ps) {
    if (f == Feature::period)
        return [ode, ps](const ThetaVector& t) { return period_of(t, ode, ps); };
    return [ode, ps](const ThetaVector& t) -> std::optional<double> {
        auto p = period_of(t, ode, ps);
        if (!p) return std::nullopt;
        return 1.0 / *p;
    };
}

DrawSet flatten_draws(std::span<const ChainSample> samples, double c,
                      std::size_t draw_cap, std::uint64_t resample_seed) {
    DrawSet all;
    const double bscale = samples.empty() ? 1.0 : 1.0 / static_cast<double>(samples.size());
    for (const ChainSample& s : samples) {
        for (const auto& el : s.elements) {
            if (el.w <= 0.0) continue;
            ThetaVector tv;
            for (std::size_t j = 0; j < kThetaDim && j < el.theta.size(); ++j)
                tv.theta[j] = el.theta[j];
            tv.c = c;
            all.theta.push_back(tv);
            all.weight.push_back(el.w * bscale);
        }
    }
    if (all.theta.empty()) return all;
    if (draw_cap == 0 || all.theta.size() <= draw_cap) return all;

    // Systematic resampling down to draw_cap equally weighted draws.
    double total = 0.0;
    for (double w : all.weight) total += w;
    Rng rng(resample_seed);
    const double stride = total / static_cast<double>(draw_cap);
    double pos = rng.uniform01() * stride;
    DrawSet out;
    out.theta.reserve(draw_cap);
    out.weight.assign(draw_cap, 1.0 / static_cast<double>(draw_cap));
    double acc = 0.0;
    std::size_t idx = 0;
    for (std::size_t r = 0; r < draw_cap; ++r) {
        const double target = pos + stride * static_cast<double>(r);
        while (idx + 1 < all.theta.size() && acc + all.weight[idx] < target)
            acc += all.weight[idx++];
        out.theta.push_back(all.theta[idx]);
    }
    return out;
}

namespace {

struct EvalGrid {
    // features[col][draw]: col 0 is the alpha=1 baseline column
    std::vector<std::vector<std::optional<double>>> cols;
};

bool in_space(const ThetaVector& t, const ParameterBounds* bounds) {
    if (!t.valid()) return false;
    if (bounds) return bounds->contains(std::span<const double>(t.theta));
    return true;
}

}  // namespace

FeatureDistribution intervention_estimate(const DrawSet& draws,
                                          const InterventionSpec& spec,
                                          const FeatureFn& feature,
                                          std::size_t workers) {
    if (draws.theta.empty())
        throw std::invalid_argument("intervention_estimate: empty draw set");
    const std::size_t D = draws.theta.size();

    // Per-draw baseline (identity intervention), shared across targets.
    std::vector<std::optional<double>> baseline(D);
    parallel_map_ordered(
        D, workers,
        [&](std::size_t d) -> std::optional<double> {
            return in_space(draws.theta[d], spec.bounds) ? feature(draws.theta[d])
                                                         : std::nullopt;
        },
        [&](std::size_t d, const std::optional<double>& v) { baseline[d] = v; });

    FeatureDistribution out;
    for (std::size_t target : spec.targets) {
        for (double alpha : spec.alphas) {
            std::vector<std::optional<double>> feat(D);
            if (alpha == 1.0) {
                feat = baseline;  // identical draws, identical values
            } else {
                parallel_map_ordered(
                    D, workers,
                    [&](std::size_t d) -> std::optional<double> {
                        ThetaVector nu = intervene(draws.theta[d], target, alpha);
                        if (!in_space(nu, spec.bounds)) return std::nullopt;
                        return feature(nu);
                    },
                    [&](std::size_t d, const std::optional<double>& v) { feat[d] = v; });
            }

            FeatureSummary row;
            row.target = target;
            row.alpha = alpha;
            double w_total = 0.0, w_fail = 0.0;
            std::vector<WeightedValue> finite;
            for (std::size_t d = 0; d < D; ++d) {
                w_total += draws.weight[d];
                if (feat[d])
                    finite.push_back({*feat[d], draws.weight[d]});
                else
                    w_fail += draws.weight[d];
            }
            row.failure = w_fail / w_total;
            if (!finite.empty()) {
                row.has_stats = true;
                row.mean = weighted_mean(finite);
                row.q10 = weighted_quantile(finite, 0.10);
                row.q90 = weighted_quantile(finite, 0.90);
            }
            row.exceed.assign(spec.deltas.size(), 0.0);
            double w_pairs = 0.0;
            std::vector<double> w_exceed(spec.deltas.size(), 0.0);
            for (std::size_t d = 0; d < D; ++d) {
                if (!feat[d]) continue;
                const double base = spec.data_anchored_baseline
                                        ? spec.baseline_value
                                        : (baseline[d] ? *baseline[d] : kNegInf);
                if (base == kNegInf && !spec.data_anchored_baseline) continue;
                w_pairs += draws.weight[d];
                for (std::size_t t = 0; t < spec.deltas.size(); ++t)
                    if (*feat[d] > base * (1.0 + spec.deltas[t]))
                        w_exceed[t] += draws.weight[d];
            }
            if (w_pairs > 0.0)
                for (std::size_t t = 0; t < spec.deltas.size(); ++t)
                    row.exceed[t] = w_exceed[t] / w_pairs;
            out.rows.push_back(std::move(row));
        }
    }
    return out;
}

std::vector<HeatmapCell> pairwise_heatmap(const DrawSet& draws, std::size_t j,
                                          std::size_t j2,
                                          std::span<const double> alphas,
                                          const FeatureFn& feature,
                                          const ParameterBounds* bounds,
                                          std::size_t workers) {
    if (j == j2) throw std::invalid_argument("pairwise_heatmap: indices must differ");
    if (draws.theta.empty())
        throw std::invalid_argument("pairwise_heatmap: empty draw set");
    const std::size_t D = draws.theta.size();
    const std::size_t A = alphas.size();

    // Evaluate all (cell, draw) features; cell (1,1) is the reference.
    std::vector<std::vector<std::optional<double>>> grid(A * A);
    for (std::size_t ia = 0; ia < A; ++ia) {
        for (std::size_t ib = 0; ib < A; ++ib) {
            auto& col = grid[ia * A + ib];
            col.resize(D);
            parallel_map_ordered(
                D, workers,
                [&](std::size_t d) -> std::optional<double> {
                    ThetaVector nu = intervene(intervene(draws.theta[d], j, alphas[ia]),
                                               j2, alphas[ib]);
                    if (!in_space(nu, bounds)) return std::nullopt;
                    return feature(nu);
                },
                [&](std::size_t d, const std::optional<double>& v) { col[d] = v; });
        }
    }
    // Reference features at (1,1).
    std::vector<std::optional<double>> ref(D);
    parallel_map_ordered(
        D, workers,
        [&](std::size_t d) -> std::optional<double> {
            return in_space(draws.theta[d], bounds) ? feature(draws.theta[d])
                                                    : std::nullopt;
        },
        [&](std::size_t d, const std::optional<double>& v) { ref[d] = v; });

    std::vector<HeatmapCell> out;
    out.reserve(A * A);
    for (std::size_t ia = 0; ia < A; ++ia) {
        for (std::size_t ib = 0; ib < A; ++ib) {
            HeatmapCell cell;
            cell.alpha_j = alphas[ia];
            cell.alpha_j2 = alphas[ib];
            const auto& col = grid[ia * A + ib];
            double w_total = 0.0, acc = 0.0;
            for (std::size_t d = 0; d < D; ++d) {
                if (!col[d] || !ref[d] || *ref[d] == 0.0) continue;
                acc += draws.weight[d] * (*col[d] - *ref[d]) / *ref[d];
                w_total += draws.weight[d];
            }
            if (w_total > 0.0) {
                cell.has_value = true;
                cell.relative_change = acc / w_total;
            }
            out.push_back(cell);
        }
    }
    return out;
}

}  // namespace calib
