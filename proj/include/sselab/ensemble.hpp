#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sselab/analytic.hpp"
#include "sselab/types.hpp"

// Monte Carlo orchestration: many independent trajectories (moment-closure or
// full grid), aggregated into per-time-point statistics.  Trajectory i always
// uses noise substream i, and aggregation folds results in trajectory-index
// order, so EnsembleStats is a pure function of (config, seed) regardless of
// worker count or completion order.
namespace sselab {

enum class Integrator { Moments, Grid };

// Which eigen-direction of the stability matrix to perturb along.
enum class EigenDirection { Real, ComplexPair };

// Initial-state recipe, resolved against the fixed point of the run's params.
//   FixedPoint:     stationary moments (grid: stationary packet).
//   Squeezed:       var_q scaled by `factor`, covar kept at the stationary
//                   value, var_p set by purity (pure Gaussian), centered.
//   Displaced:      stationary second moments, centroid at (q_offset, p_offset).
//   EigenPerturbed: covariance triple displaced along an eigenvector of the
//                   stability matrix, largest relative component = rel_size.
//                   Moments integrator only (the perturbed triple is not a
//                   pure-state covariance, so no wavefunction realizes it).
struct InitialState {
    enum class Kind { FixedPoint, Squeezed, Displaced, EigenPerturbed } kind =
        Kind::FixedPoint;
    double factor = 1.0;     // Squeezed
    double q_offset = 0.0;   // Displaced
    double p_offset = 0.0;   // Displaced
    EigenDirection direction = EigenDirection::Real;  // EigenPerturbed
    double rel_size = 0.0;                            // EigenPerturbed
};

MomentState initial_moments(const InitialState& init, const PhysParams& params);
WaveFunction initial_wavefunction(const InitialState& init, const PhysParams& params,
                                  const GridSpec& grid);

struct EnsembleConfig {
    PhysParams params;
    Integrator integrator = Integrator::Moments;
    int n_trajectories = 2;
    double dt = 1e-3;
    double t_final = 1.0;
    std::uint64_t seed = 0;
    InitialState initial;
    int record_every = 1;
    int workers = 0;                // 0 = hardware concurrency
    bool permissive = false;        // record failed trajectories instead of aborting
    std::optional<GridSpec> grid;   // required iff integrator == Grid

    EnsembleConfig validated() const;  // throws InvalidParams
    int n_steps() const;               // round(t_final / dt), >= 1
};

// Per-time-point sample mean / unbiased variance / standard error of one
// scalar quantity across trajectories.
struct SeriesStats {
    Eigen::VectorXd mean;
    Eigen::VectorXd variance;
    Eigen::VectorXd std_error;
};

// Rate estimated from per-trajectory increments over the whole run.
struct RateEstimate {
    double rate = 0.0;       // mean or variance of the increment, divided by t_final
    double std_error = 0.0;
    long n = 0;
};

struct EnsembleStats {
    EnsembleConfig config;
    Eigen::VectorXd times;
    long n_samples = 0;  // trajectories aggregated (excludes failed ones)
    long n_failed = 0;   // permissive mode only; otherwise always 0

    SeriesStats q_mean, p_mean, var_q, var_p, covar;
    SeriesStats purity_defect;  // 4 var_q var_p - 4 covar^2 - 1, per trajectory
    SeriesStats norm_drift;     // grid integrator; all zero for moments

    // Var[<q>(T) - <q>(0)] / T and Var[<p>(T) - <p>(0)] / T: the centroid
    // diffusion rates (2 gamma var_q^2 + 2 gamma' covar^2 etc. at the fixed
    // point).  std_error uses the normal-sample variance distribution,
    // SE(Var)/Var = sqrt(2/(n-1)).
    RateEstimate diffusion_q;
    RateEstimate diffusion_p;
    // (E[<p^2>(T)] - E[<p^2>(0)]) / T with <p^2> = var_p + p_mean^2; the
    // measurement heating rate, gamma/2 at the fixed point.
    RateEstimate heating;
};

EnsembleStats run_ensemble(const EnsembleConfig& cfg);

// Decay-rate extraction from the ensemble-mean covariance series.
struct MomentFit {
    bool ok = false;
    double rate = 0.0;      // fitted decay rate (positive = decaying)
    double residual = 0.0;  // rms residual of the log-linear fit
    long n_points = 0;
};

struct ProjectionFit {
    bool ok = false;
    double envelope_rate = 0.0;  // decay rate of |z|, z = left-eigenvector projection
    double frequency = 0.0;      // |d(arg z)/dt| from the unwrapped phase
    double residual = 0.0;
    long n_points = 0;
};

struct RelaxationFit {
    MomentFit var_q, var_p, covar;  // per-moment log-linear fits of |mean - fp|
    ProjectionFit oscillation;      // complex-pair envelope and frequency
};

// Fits log|E[moment](t) - fixed point| over the window where the deviation
// lies in [1%, 5%] of the moment's stationary scale (window bounds are a
// judgment call, tunable in source).  The oscillation fit projects the
// deviation onto the left eigenvector of the complex stability eigenvalue,
// keeping points with |z| >= 20% of the initial projection.  Throws
// WindowTooShort if no fit gets the minimum 10 points.
RelaxationFit relaxation_fit(const EnsembleStats& stats, const FixedPoint& fp);

// Purity-defect series: per-time-point mean and standard deviation of
// 4 var_q var_p - 4 covar^2 - 1 across trajectories.  Diagnostic only.
struct ConstraintSeries {
    Eigen::VectorXd times;
    Eigen::VectorXd mean;
    Eigen::VectorXd spread;  // sqrt of the unbiased variance
};

ConstraintSeries constraint_monitor(const EnsembleStats& stats);

}  // namespace sselab
