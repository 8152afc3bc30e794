#include "calib/common.hpp"

#include <cstdio>

namespace calib {

double weighted_quantile(std::vector<WeightedValue> draws, double q) {
    if (draws.empty()) throw std::invalid_argument("weighted_quantile: empty");
    if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("weighted_quantile: q");
    std::sort(draws.begin(), draws.end(),
              [](const WeightedValue& a, const WeightedValue& b) {
                  return a.value < b.value;
              });
    double total = 0.0;
    for (const auto& d : draws) total += d.weight;
    if (!(total > 0.0)) throw std::invalid_argument("weighted_quantile: zero weight");
    const double target = q * total;
    double acc = 0.0;
    for (const auto& d : draws) {
        acc += d.weight;
        if (acc >= target) return d.value;
    }
    return draws.back().value;
}

double weighted_mean(std::span<const WeightedValue> draws) {
    double total = 0.0, acc = 0.0;
    for (const auto& d : draws) {
        total += d.weight;
        acc += d.weight * d.value;
    }
    if (!(total > 0.0)) throw std::invalid_argument("weighted_mean: zero weight");
    return acc / total;
}

std::string format_full(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace calib
