#pragma once

// Independent reference implementations used only by the tests: quadrature,
// series expansions, dense least squares, KS helpers. None of these may call
// into the code paths they check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "calib/ode.hpp"

namespace oracle {

// Reference oscillating parameter set (stable 21.89 h cycle, interior to the
// default bounds). Used across the suites.
inline calib::ThetaVector reference_theta() {
    calib::ThetaVector th;
    th.theta = {0.067299, 1.770845, 1.728826, 0.089946, 1.572904,
                0.162979, 1.126747, 0.420487, 0.894975};
    th.c = 1.0;
    return th;
}
inline constexpr double kReferencePeriod = 21.889792;

// Adaptive Simpson on [a,b].
inline double simpson_rec(const std::function<double(double)>& f, double a, double b,
                          double fa, double fm, double fb, double whole, double tol,
                          int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol)
        return left + right + (left + right - whole) / 15.0;
    return simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

inline double integrate(const std::function<double(double)>& f, double a, double b,
                        double tol = 1e-11) {
    const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return simpson_rec(f, a, b, fa, fm, fb, whole, tol, 48);
}

// Noncentral chi^2_2 log density of x at noncentrality delta, as a 200-term
// Poisson mixture of central chi^2_{2+2j} densities, summed in log space.
// Returns the log density and, optionally, a rigorous bound on the dropped
// tail (relative to the returned value) for convergence screening.
inline double log_ncx2_series(double x, double delta, int terms = 200,
                              double* tail_bound = nullptr) {
    // log f_j = log Poisson(j; delta/2) + log f_{chi2_{2+2j}}(x)
    std::vector<double> logs(terms);
    double maxlog = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < terms; ++j) {
        double lp = -0.5 * delta;
        if (j > 0) lp += j * std::log(0.5 * delta) - std::lgamma(j + 1.0);
        double lf = j * std::log(x) - 0.5 * x - (1.0 + j) * std::log(2.0) -
                    std::lgamma(j + 1.0);
        logs[j] = lp + lf;
        maxlog = std::max(maxlog, logs[j]);
    }
    double acc = 0.0;
    for (double v : logs) acc += std::exp(v - maxlog);
    const double result = maxlog + std::log(acc);
    if (tail_bound) {
        // Terms decay at least geometrically once j > peak; bound the tail by
        // t_{T} * r / (1 - r) with the last term's growth ratio r.
        const int j = terms;
        const double r = (0.5 * delta) * (0.5 * x) / (static_cast<double>(j) *
                                                      static_cast<double>(j));
        if (r >= 1.0) {
            *tail_bound = std::numeric_limits<double>::infinity();
        } else {
            const double t_last = std::exp(logs[terms - 1] - result);
            *tail_bound = t_last * r / (1.0 - r);
        }
    }
    return result;
}

// Dense least squares fit of y against columns built by `col(k, t)`, via
// Gauss-Jordan on the normal equations.
inline std::vector<double> dense_least_squares(
    const std::vector<double>& y, std::size_t ncols,
    const std::function<double(std::size_t, std::size_t)>& col) {
    const std::size_t T = y.size(), P = ncols;
    std::vector<double> xtx(P * P, 0.0), xty(P, 0.0);
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t i = 0; i < P; ++i) {
            const double ci = col(i, t);
            xty[i] += ci * y[t];
            for (std::size_t k = 0; k < P; ++k) xtx[i * P + k] += ci * col(k, t);
        }
    // Gauss-Jordan with partial pivoting.
    std::vector<std::size_t> piv(P);
    for (std::size_t c = 0; c < P; ++c) {
        std::size_t best = c;
        for (std::size_t r2 = c + 1; r2 < P; ++r2)
            if (std::abs(xtx[r2 * P + c]) > std::abs(xtx[best * P + c])) best = r2;
        for (std::size_t k = 0; k < P; ++k) std::swap(xtx[c * P + k], xtx[best * P + k]);
        std::swap(xty[c], xty[best]);
        const double d = xtx[c * P + c];
        if (d == 0.0) throw std::runtime_error("singular normal equations");
        for (std::size_t k = 0; k < P; ++k) xtx[c * P + k] /= d;
        xty[c] /= d;
        for (std::size_t r2 = 0; r2 < P; ++r2) {
            if (r2 == c) continue;
            const double m = xtx[r2 * P + c];
            if (m == 0.0) continue;
            for (std::size_t k = 0; k < P; ++k) xtx[r2 * P + k] -= m * xtx[c * P + k];
            xty[r2] -= m * xty[c];
        }
    }
    (void)piv;
    return xty;
}

// One-sample / two-sample Kolmogorov-Smirnov p-value (asymptotic).
inline double ks_pvalue(double d, double n_eff) {
    const double lambda = (std::sqrt(n_eff) + 0.12 + 0.11 / std::sqrt(n_eff)) * d;
    double sum = 0.0;
    for (int k = 1; k <= 100; ++k)
        sum += 2.0 * (k % 2 == 1 ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
    return std::clamp(sum, 0.0, 1.0);
}

inline double ks_two_sample_p(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double d = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] <= b[j])
            ++i;
        else
            ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / a.size() -
                                 static_cast<double>(j) / b.size()));
    }
    const double n_eff = static_cast<double>(a.size()) * b.size() /
                         static_cast<double>(a.size() + b.size());
    return ks_pvalue(d, n_eff);
}

inline double ks_uniform_p(std::vector<double> x) {
    std::sort(x.begin(), x.end());
    double d = 0.0;
    const double n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        d = std::max(d, std::abs((i + 1.0) / n - x[i]));
        d = std::max(d, std::abs(x[i] - i / n));
    }
    return ks_pvalue(d, n);
}

}  // namespace oracle
