#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace calib {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Numerically stable log(sum(exp(x_i))). Returns -inf for an empty or
/// all -inf input.
inline double log_sum_exp(std::span<const double> x) {
    double m = kNegInf;
    for (double v : x) m = std::max(m, v);
    if (!std::isfinite(m)) return m;
    double acc = 0.0;
    for (double v : x) acc += std::exp(v - m);
    return m + std::log(acc);
}

inline double log_sum_exp(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

/// Natural-space box for the calibration parameters; the scaled space is
/// the componentwise affine image onto (0,1]^p (lower bound excluded).
struct ParameterBounds {
    std::vector<double> lo;
    std::vector<double> hi;

    std::size_t dim() const { return lo.size(); }

    bool contains(std::span<const double> theta) const {
        for (std::size_t j = 0; j < lo.size(); ++j)
            if (!(theta[j] > lo[j] && theta[j] <= hi[j])) return false;
        return true;
    }
    bool contains_coord(double v, std::size_t j) const {
        return v > lo[j] && v <= hi[j];
    }
    double to_unit(double v, std::size_t j) const { return (v - lo[j]) / (hi[j] - lo[j]); }
    double from_unit(double u, std::size_t j) const { return lo[j] + u * (hi[j] - lo[j]); }
    void to_unit(std::span<const double> theta, std::span<double> u) const {
        for (std::size_t j = 0; j < lo.size(); ++j) u[j] = to_unit(theta[j], j);
    }
    void from_unit(std::span<const double> u, std::span<double> theta) const {
        for (std::size_t j = 0; j < lo.size(); ++j) theta[j] = from_unit(u[j], j);
    }
    /// log |du/dtheta| = -sum log(widths); the scaled-space density picks
    /// this up when expressed in natural space.
    double log_jacobian_to_unit() const {
        double acc = 0.0;
        for (std::size_t j = 0; j < lo.size(); ++j) acc -= std::log(hi[j] - lo[j]);
        return acc;
    }
};

struct WeightedValue {
    double value;
    double weight;
};

/// Weighted quantile over the given draws (weights need not be normalized).
/// Uses the left-continuous inverse of the weighted empirical CDF.
double weighted_quantile(std::vector<WeightedValue> draws, double q);

/// Weighted mean; throws if total weight is not positive.
double weighted_mean(std::span<const WeightedValue> draws);

/// 64-bit FNV-1a, used for config hashes and cache keys.
inline std::uint64_t fnv1a64(std::span<const unsigned char> bytes,
                             std::uint64_t h = 1469598103934665603ull) {
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s) {
    return fnv1a64(std::span<const unsigned char>(
        reinterpret_cast<const unsigned char*>(s.data()), s.size()));
}

/// Shortest-faithful decimal rendering of a double ("%.17g" is canonical
/// for all file output so reruns are byte-identical).
std::string format_full(double v);

/// Errors raised while validating a RunConfig; carries one message per
/// offending field.
class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

class data_error : public std::runtime_error {
public:
    explicit data_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace calib
