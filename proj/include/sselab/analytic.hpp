#pragma once

#include <array>
#include <complex>

#include "sselab/types.hpp"

// Closed-form stationary solution of the measurement dynamics and its
// local stability.  The stationary packet is a Gaussian whose moments
// solve the coupled stationarity conditions; writing x = m*gamma_prime and
// D = sqrt(x^2+1) - x (evaluated in the cancellation-free form
// 1/(sqrt(x^2+1)+x)):
//
//   var_q  = sqrt(1/(2 m gamma)) * sqrt(x^2+1) * sqrt(D)
//   var_p  = sqrt(m gamma / 2) * sqrt(D)
//   covar  = D / 2
//
// These satisfy 4 var_q var_p = 1 + 4 covar^2 (the packet is pure) and
// var_q var_p >= 1/4 with equality only as m*gamma_prime -> infinity.
namespace sselab {

struct FixedPoint {
    double var_q = 0.0;
    double var_p = 0.0;
    double covar = 0.0;
    double e_prime = 0.0;  // comoving-frame phase rate
    double e = 0.0;        // lab-frame phase constant
};

// Phase rotation rates of the stationary packet: `comoving` is the rate seen
// in the frame following the stochastic centroid, `lab` the full constant
// including the centroid coupling (zero when gamma_prime = 0 and m gamma = 1).
struct PhaseConstants {
    double comoving = 0.0;  // E'
    double lab = 0.0;       // E
};

FixedPoint fixed_point(const PhysParams& p);
PhaseConstants phase_constants(const PhysParams& p, const FixedPoint& fp);

// Linearisation of the covariance flow about the fixed point in the
// coordinates (d var_q, d var_p, d covar); this ordering is part of the
// public contract.
Eigen::Matrix3d stability_matrix(const PhysParams& p, const FixedPoint& fp);

// Eigenvalues in closed form: one real lambda1 = -(2 gamma var_q + 2
// gamma_prime var_p) plus the pair lambda1 +- i * 2 sqrt((gamma var_q -
// gamma_prime var_p)^2 + 4 gamma gamma_prime covar^2).
std::array<std::complex<double>, 3> stability_eigenvalues(const PhysParams& p,
                                                          const FixedPoint& fp);

struct StabilityReport {
    Eigen::Matrix3d matrix;
    std::array<std::complex<double>, 3> closed_form;  // [real, +i omega, -i omega]
    std::array<std::complex<double>, 3> numeric;      // matched to closed_form order
    double max_rel_mismatch = 0.0;
    bool all_damped = false;  // every real part < 0
};

// Numerical eigen-decomposition cross-checked against the closed form;
// throws Error if they disagree beyond 1e-9 relative.
StabilityReport stability_report(const PhysParams& p, const FixedPoint& fp);

// Pure Gaussian wavefunction with given position variance, tilt covar and
// centroid: psi ~ exp{i p_mean q} exp{-(1 - 2i covar)(q - q_mean)^2 / (4 var_q)},
// normalised on the lattice.  Momentum variance is then (1+4 covar^2)/(4 var_q).
// Throws GridTooNarrow if the boundary tail mass exceeds 1e-10.
WaveFunction gaussian_packet(const GridSpec& grid, double var_q, double covar,
                             double q_mean, double p_mean);

// The stationary packet itself, centred at (q_mean, p_mean).
WaveFunction stationary_packet(const PhysParams& p, const FixedPoint& fp,
                               double q_mean, double p_mean, const GridSpec& grid);

}  // namespace sselab
