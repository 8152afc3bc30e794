#pragma once

#include <array>
#include <cstddef>
#include <variant>
#include <vector>

namespace calib {

/// The nine free rate/threshold parameters plus the fixed transcription
/// rate c. All entries must be strictly positive.
struct ThetaVector {
    std::array<double, 9> theta{};
    double c = 1.0;

    double operator[](std::size_t j) const { return theta[j]; }
    double& operator[](std::size_t j) { return theta[j]; }

    bool valid() const;
};

inline constexpr std::size_t kThetaDim = 9;

/// State (y, w, z): mRNA, protein, phosphorylated protein.
using SystemState = std::array<double, 3>;

struct OdeSettings {
    SystemState initial_state{0.1, 0.1, 0.1};
    double transient_hours = 200.0;
    std::size_t sample_count = 66;  // T
    double dt_out = 1.0;
    double abs_tol = 1e-8;
    double rel_tol = 1e-8;
    double max_step = 24.0;
    double init_step = 1e-2;
    double overflow_guard = 1e12;
    int hill_exponent_eq3 = 4;  // 4 = symmetric form (default); 2 = literal published text
};

/// Model output y sampled on an equally spaced grid after transient removal.
struct Trajectory {
    std::vector<double> values;
    double dt_out = 1.0;
    double transient_dropped = 0.0;
};

struct IntegrationFailure {
    enum class Reason { overflow, non_finite, step_underflow };
    Reason reason = Reason::overflow;
    double time = 0.0;
};

using TrajectoryResult = std::variant<Trajectory, IntegrationFailure>;

inline bool integration_failed(const TrajectoryResult& r) {
    return std::holds_alternative<IntegrationFailure>(r);
}

/// Right-hand side of the three-variable oscillator. Throws
/// std::domain_error on non-finite input or invalid theta.
SystemState evaluate_rhs(const SystemState& state, const ThetaVector& theta,
                         int hill_exponent_eq3 = 4);

/// Adaptive embedded Runge-Kutta 5(4) integration. Blow-ups (any component
/// beyond the overflow guard), non-finite states and step underflow come
/// back as an IntegrationFailure value, never as an exception.
TrajectoryResult integrate(const ThetaVector& theta, const OdeSettings& settings);

struct OscillationCheck {
    bool oscillating = false;
    double peak_to_trough = 0.0;
};

/// Oscillating iff peak-to-trough amplitude over the recorded window
/// exceeds amp_tol.
OscillationCheck detect_oscillation(const Trajectory& traj, double amp_tol);

}  // namespace calib
