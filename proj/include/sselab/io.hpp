#pragma once

#include <string>
#include <vector>

#include "sselab/analytic.hpp"
#include "sselab/ensemble.hpp"
#include "sselab/types.hpp"

// Serialization helpers.  Everything is deterministic byte-for-byte: floats
// are printed with %.17g (round-trip exact for doubles), JSON objects are
// emitted with sorted keys, and files are written to a temp name in the
// destination directory and renamed into place, so readers never observe a
// partial file.
namespace sselab {

std::string format_double(double x);  // %.17g

// Writes content to path atomically (temp file + rename).  Throws Error on
// any filesystem failure.
void atomic_write(const std::string& path, const std::string& content);
void atomic_write(const std::string& path, const std::vector<char>& bytes);

// Trajectory CSV.  Moment runs: t,q_mean,p_mean,var_q,var_p,covar.
// Grid runs add a norm_drift column.
std::string trajectory_csv(const std::vector<TrajectoryRecord>& records,
                           bool with_norm_drift);

// Per-time-point ensemble series: t,n plus mean/variance/std_error triplets
// for the five moments, the purity defect, and norm_drift.
std::string ensemble_csv(const EnsembleStats& stats);

// Ensemble summary (config echo, final-time moments, diffusion and heating
// rates) as JSON.
std::string ensemble_json(const EnsembleStats& stats);

// Fixed point + stability report as JSON.
std::string fixed_point_json(const PhysParams& params, const FixedPoint& fp,
                             const StabilityReport& report);

// Closed-form vs finite-difference Jacobian comparison as JSON.
std::string stability_json(const PhysParams& params, const FixedPoint& fp,
                           const StabilityReport& report,
                           const Eigen::Matrix3d& jacobian_fd);

// Wavefunction snapshot: u64 n_points, f64 box_length, f64 time, then
// n_points interleaved (re, im) f64 pairs, all little-endian.
std::vector<char> snapshot_binary(const WaveFunction& wf, double time);
WaveFunction read_snapshot(const std::string& path, double* time_out = nullptr);

}  // namespace sselab
