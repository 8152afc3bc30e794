#include "calib/ode.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace calib {

namespace {

inline double sq(double x) { return x * x; }

// Per-call constants derived from theta; keeps pow() out of the stage loop.
struct RhsParams {
    double c, th1, th2, th7;
    double inv_th8;
    double sum34, sum56, th6, th4;
    double th9_eq2;  // theta9^4
    double th9_eq3;  // theta9^4 or theta9^2 per the exponent switch
};

inline RhsParams make_params(const ThetaVector& t, int hill_exponent_eq3) {
    RhsParams p;
    p.c = t.c;
    p.th1 = t.theta[0];
    p.th2 = t.theta[1];
    p.sum34 = t.theta[2] + t.theta[3];
    p.th4 = t.theta[3];
    p.sum56 = t.theta[4] + t.theta[5];
    p.th6 = t.theta[5];
    p.th7 = t.theta[6];
    p.inv_th8 = 1.0 / t.theta[7];
    p.th9_eq2 = sq(sq(t.theta[8]));
    p.th9_eq3 = hill_exponent_eq3 == 2 ? sq(t.theta[8]) : sq(sq(t.theta[8]));
    return p;
}

inline void rhs(const RhsParams& p, const SystemState& s, SystemState& d) {
    const double y = s[0], w = s[1], z = s[2];
    const double r8 = sq(sq(sq(z * p.inv_th8)));
    const double z4 = sq(sq(z));
    const double flux = p.th7 * w * z4;
    d[0] = p.c / (1.0 + r8) - p.th1 * y;
    d[1] = p.th2 * y - p.sum34 * w + p.th6 * z - flux / (p.th9_eq2 + z4);
    d[2] = p.th4 * w - p.sum56 * z + flux / (p.th9_eq3 + z4);
}

// Dormand-Prince 5(4) tableau.
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                 b5 = -2187.0 / 6784, b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

constexpr double kMinStep = 1e-10;

}  // namespace

bool ThetaVector::valid() const {
    if (!(std::isfinite(c) && c > 0.0)) return false;
    for (double v : theta)
        if (!(std::isfinite(v) && v > 0.0)) return false;
    return true;
}

SystemState evaluate_rhs(const SystemState& state, const ThetaVector& theta,
                         int hill_exponent_eq3) {
    if (!theta.valid()) throw std::domain_error("evaluate_rhs: invalid theta");
    for (double v : state)
        if (!std::isfinite(v)) throw std::domain_error("evaluate_rhs: non-finite state");
    if (hill_exponent_eq3 != 2 && hill_exponent_eq3 != 4)
        throw std::domain_error("evaluate_rhs: hill exponent must be 2 or 4");
    const RhsParams p = make_params(theta, hill_exponent_eq3);
    SystemState d;
    rhs(p, state, d);
    return d;
}

TrajectoryResult integrate(const ThetaVector& theta, const OdeSettings& cfg) {
    if (!theta.valid()) throw std::domain_error("integrate: invalid theta");
    if (cfg.transient_hours < 0.0) throw std::domain_error("integrate: transient < 0");
    if (cfg.sample_count < 2) throw std::domain_error("integrate: sample_count < 2");

    const RhsParams p = make_params(theta, cfg.hill_exponent_eq3);

    Trajectory traj;
    traj.values.reserve(cfg.sample_count);
    traj.dt_out = cfg.dt_out;
    traj.transient_dropped = cfg.transient_hours;

    SystemState y = cfg.initial_state;
    double t = 0.0;
    std::size_t next_sample = 0;
    double next_sample_t = cfg.transient_hours;

    auto guard = [&](const SystemState& s) -> bool {
        for (double v : s) {
            if (!std::isfinite(v)) return false;
            if (std::abs(v) > cfg.overflow_guard) return false;
        }
        return true;
    };
    if (!guard(y)) return IntegrationFailure{IntegrationFailure::Reason::non_finite, 0.0};

    SystemState k1, k2, k3, k4, k5, k6, k7, tmp, ynew;
    rhs(p, y, k1);

    // t == sample time exactly at the start when transient is zero.
    if (next_sample < cfg.sample_count && t >= next_sample_t) {
        traj.values.push_back(y[0]);
        ++next_sample;
        next_sample_t = cfg.transient_hours + static_cast<double>(next_sample) * cfg.dt_out;
    }

    double h = std::min(cfg.init_step, cfg.max_step);
    while (next_sample < cfg.sample_count) {
        if (h < kMinStep)
            return IntegrationFailure{IntegrationFailure::Reason::step_underflow, t};

        // Clip the attempted step so accepted steps land exactly on sample
        // times; `h` keeps the error-controlled natural size.
        const double target = next_sample_t;
        double hs = h;
        bool clipped = false;
        if (t + hs >= target) {
            hs = target - t;
            clipped = true;
        }

        for (int i = 0; i < 3; ++i) tmp[i] = y[i] + hs * a21 * k1[i];
        rhs(p, tmp, k2);
        for (int i = 0; i < 3; ++i) tmp[i] = y[i] + hs * (a31 * k1[i] + a32 * k2[i]);
        rhs(p, tmp, k3);
        for (int i = 0; i < 3; ++i)
            tmp[i] = y[i] + hs * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
        rhs(p, tmp, k4);
        for (int i = 0; i < 3; ++i)
            tmp[i] = y[i] + hs * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
        rhs(p, tmp, k5);
        for (int i = 0; i < 3; ++i)
            tmp[i] = y[i] +
                     hs * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] +
                           a65 * k5[i]);
        rhs(p, tmp, k6);
        for (int i = 0; i < 3; ++i)
            ynew[i] = y[i] + hs * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] +
                                   b6 * k6[i]);
        rhs(p, ynew, k7);

        double err2 = 0.0;
        for (int i = 0; i < 3; ++i) {
            double e = hs * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] +
                             e6 * k6[i] + e7 * k7[i]);
            double sc = cfg.abs_tol +
                        cfg.rel_tol * std::max(std::abs(y[i]), std::abs(ynew[i]));
            err2 += sq(e / sc);
        }
        double err = std::sqrt(err2 / 3.0);

        if (!std::isfinite(err)) {
            // A stage blew through representable range; shrink hard and let
            // the underflow check terminate truly divergent regions.
            h = 0.1 * hs;
            continue;
        }

        if (err <= 1.0) {
            t = clipped ? target : t + hs;
            y = ynew;
            k1 = k7;  // FSAL
            if (!guard(y))
                return IntegrationFailure{IntegrationFailure::Reason::overflow, t};
            if (clipped) {
                traj.values.push_back(y[0]);
                ++next_sample;
                next_sample_t =
                    cfg.transient_hours + static_cast<double>(next_sample) * cfg.dt_out;
            }
            double factor = err == 0.0 ? 5.0
                                       : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
            double grown = hs * factor;
            h = std::min(clipped ? std::max(h, grown) : grown, cfg.max_step);
        } else {
            h = hs * std::clamp(0.9 * std::pow(err, -0.2), 0.2, 0.9);
        }
    }
    return traj;
}

OscillationCheck detect_oscillation(const Trajectory& traj, double amp_tol) {
    OscillationCheck out;
    if (traj.values.empty()) return out;
    auto [lo, hi] = std::minmax_element(traj.values.begin(), traj.values.end());
    out.peak_to_trough = *hi - *lo;
    out.oscillating = out.peak_to_trough > amp_tol;
    return out;
}

}  // namespace calib
