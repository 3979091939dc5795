#pragma once

#include <vector>

#include "sselab/types.hpp"
#include "sselab/noise.hpp"

// Gaussian-ansatz integrator.  For Gaussian states the second central
// moments evolve along a deterministic flow (their martingale parts are
// proportional to vanishing third central moments), so the covariance
// triple obeys the pathwise ODE implemented in covariance_drift and only
// the centroid sees the noise.
namespace sselab {

// d/dt (var_q, var_p, covar):
//   var_q' = 2 covar / m + gamma_prime/2 - 2 gamma var_q^2 - 2 gamma_prime covar^2
//   var_p' = gamma/2 - 2 gamma covar^2 - 2 gamma_prime var_p^2
//   covar' = var_p / m - 2 gamma var_q covar - 2 gamma_prime var_p covar
Eigen::Vector3d covariance_drift(const MomentState& s, const PhysParams& p);

// Stochastic centroid update over one increment:
//   d<q> = <p>/m dt + 2 var_q d_xi + 2 covar d_xi_prime
//   d<p> =            2 covar d_xi + 2 var_p d_xi_prime
// Returned as (d<q>, d<p>).
Eigen::Vector2d centroid_increment(const MomentState& s, const PhysParams& p,
                                   double dt, const NoiseIncrement& dw);

// One explicit Euler / Euler-Maruyama step.  Throws StepTooLarge if a
// variance is driven to zero or below.
MomentState step(const MomentState& s, const PhysParams& p, double dt,
                 const NoiseIncrement& dw);

// Central-difference Jacobian of covariance_drift at `at` with stencil h.
// Exact up to roundoff (the drift is quadratic), so it doubles as an
// independent check of the closed-form stability matrix.
Eigen::Matrix3d jacobian_fd(const PhysParams& p, const MomentState& at, double h);

struct MomentTrajectory {
    PhysParams params;
    double dt = 0.0;
    std::vector<TrajectoryRecord> records;  // one per step plus the initial state
};

// Integrates over every increment of `path`; records times k*dt for
// k = 0..n_steps.  norm_drift is identically zero for this integrator.
MomentTrajectory simulate(const MomentState& initial, const PhysParams& p,
                          const NoisePath& path);

}  // namespace sselab
