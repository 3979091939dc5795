#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

// Core value types shared by every module: validated physical parameters,
// the five-moment summary of a state, noise increments, and the typed
// error hierarchy.  All reals are double precision; hbar = 1 throughout.
namespace sselab {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Parameter or configuration rejected before any stepping.
struct InvalidParams : Error {
    using Error::Error;
};

struct NonPositiveMass : InvalidParams {
    using InvalidParams::InvalidParams;
};
struct NonPositiveGamma : InvalidParams {
    using InvalidParams::InvalidParams;
};
struct NegativeGammaPrime : InvalidParams {
    using InvalidParams::InvalidParams;
};
struct NonFiniteInput : InvalidParams {
    using InvalidParams::InvalidParams;
};

// Requested box cannot hold the packet (tail mass at the boundary too large).
struct GridTooNarrow : Error {
    using Error::Error;
};

struct NotNormalized : Error {
    using Error::Error;
};

// A stochastic step produced an unusable state.  step_index is the 0-based
// step at which the failure was detected (SIZE_MAX if unknown).
struct StepUnstable : Error {
    std::size_t step_index;
    explicit StepUnstable(const std::string& msg, std::size_t step = SIZE_MAX)
        : Error(msg), step_index(step) {}
};

struct StepTooLarge : Error {
    std::size_t step_index;
    explicit StepTooLarge(const std::string& msg, std::size_t step = SIZE_MAX)
        : Error(msg), step_index(step) {}
};

struct PacketEscaped : Error {
    std::size_t step_index;
    explicit PacketEscaped(const std::string& msg, std::size_t step = SIZE_MAX)
        : Error(msg), step_index(step) {}
};

// Requested phase-space shift is not a whole number of lattice cells.
struct OffLattice : Error {
    using Error::Error;
};

// Too few samples inside the fitting window.
struct WindowTooShort : Error {
    using Error::Error;
};

// mass m, position-measurement strength gamma, momentum-measurement
// strength gamma_prime.  gamma_prime = 0 recovers pure position monitoring.
struct PhysParams {
    double mass = 1.0;
    double gamma = 1.0;
    double gamma_prime = 0.5;

    // Total over finite inputs: every violation maps to a typed error
    // derived from InvalidParams, never UB or a crash.
    static PhysParams validated(double mass, double gamma, double gamma_prime) {
        if (!std::isfinite(mass) || !std::isfinite(gamma) || !std::isfinite(gamma_prime))
            throw NonFiniteInput("parameters must be finite");
        if (mass <= 0.0)
            throw NonPositiveMass("mass must be > 0, got " + std::to_string(mass));
        if (gamma <= 0.0)
            throw NonPositiveGamma("gamma must be > 0, got " + std::to_string(gamma));
        if (gamma_prime < 0.0)
            throw NegativeGammaPrime("gamma_prime must be >= 0, got " +
                                     std::to_string(gamma_prime));
        return PhysParams{mass, gamma, gamma_prime};
    }
};

// First and second moments of a state: <q>, <p>, Var q, Var p and the
// symmetrised covariance R = <{q - <q>, p - <p>}>/2.
struct MomentState {
    double q_mean = 0.0;
    double p_mean = 0.0;
    double var_q = 0.0;
    double var_p = 0.0;
    double covar = 0.0;
};

// 4 var_q var_p - 4 R^2 - 1; zero exactly on pure Gaussian states.
inline double purity_defect(const MomentState& s) {
    return 4.0 * s.var_q * s.var_p - 4.0 * s.covar * s.covar - 1.0;
}

// One step's pair of Wiener increments, already scaled: d_xi has variance
// gamma*dt/2 and d_xi_prime has variance gamma_prime*dt/2.
struct NoiseIncrement {
    double d_xi = 0.0;
    double d_xi_prime = 0.0;
};

struct TrajectoryRecord {
    double time = 0.0;
    MomentState moments;
    double norm_drift = 0.0;  // |  ||psi|| - 1 | of the step ending here; 0 for moment runs
};

// Uniform periodic lattice on [-box_length/2, box_length/2).
struct GridSpec {
    int n_points = 1024;
    double box_length = 0.0;

    static GridSpec validated(int n_points, double box_length) {
        if (n_points < 128 || (n_points & (n_points - 1)) != 0)
            throw InvalidParams("n_points must be a power of two >= 128, got " +
                                std::to_string(n_points));
        if (!std::isfinite(box_length) || box_length <= 0.0)
            throw InvalidParams("box_length must be finite and > 0");
        return GridSpec{n_points, box_length};
    }

    double dq() const { return box_length / n_points; }
    double q(int j) const { return -0.5 * box_length + dq() * j; }
    // Largest resolvable |p| on the momentum lattice (spacing 2*pi/L).
    double p_max() const { return M_PI * n_points / box_length; }
};

struct WaveFunction {
    GridSpec spec;
    Eigen::VectorXcd amp;  // amp[j] = psi(q_j), normalised so sum |amp|^2 dq = 1
};

}  // namespace sselab
