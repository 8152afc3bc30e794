#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace calib {

/// splitmix64 step; used to derive independent streams from (seed, index).
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Deterministic RNG wrapper. The normal generator is a fixed Box-Muller
/// transform (two uniforms per draw, sine branch discarded) so that draw
/// sequences are fully specified by the seed and the call pattern, not by
/// the standard library's distribution internals.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on [0,1).
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// Uniform on (0,1].
    double uniform_pos() { return 1.0 - uniform01(); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Standard normal via Box-Muller (cosine branch).
    double normal() {
        double u1 = uniform_pos();
        double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    /// Gamma(shape, 1) via Marsaglia-Tsang; shape > 0.
    double gamma(double shape);

    /// Inverse gamma with shape a, scale b.
    double inverse_gamma(double a, double b) { return b / gamma(a); }

    std::uint64_t raw() { return engine_(); }

    /// Serialized engine state (textual), exact for checkpoint/resume.
    std::string save_state() const;
    void restore_state(const std::string& s);

private:
    std::mt19937_64 engine_;
};

}  // namespace calib
