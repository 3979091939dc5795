#pragma once

#include <memory>
#include <vector>

#include "sselab/analytic.hpp"
#include "sselab/noise.hpp"
#include "sselab/types.hpp"

// Full wavefunction integrator on a uniform periodic lattice.  Momentum
// operators are applied spectrally (one forward FFT, two inverse FFTs per
// step); position operators act pointwise.
//
// Stepping scheme: first-order Ito-Taylor step with the second-order noise
// terms retained (a simplified Milstein step; the mixed Levy-area remainder
// is dropped, which leaves weak first order intact).  Writing A = q - <q>,
// B = p - <p>:
//
//   dpsi = [ -i p^2/(2m) - (gamma/2)(A^2 - var_q) - (gamma_prime/2)(B^2 - var_p) ] psi dt
//        + A psi dxi + B psi dxi'
//        + (1/2)(A^2 - 2 var_q) psi dxi^2 + (1/2)(B^2 - 2 var_p) psi dxi'^2
//        + (A B - i/2 - 2 covar) psi dxi dxi'
//
// followed by renormalisation.  The dxi^2-type terms carry the quadratic
// variation of the measurement noise; with them the zero-noise flow is the
// measurement-conditioned deterministic drift, whose eigenstate is the
// stationary packet, so a noise-free run holds the packet still instead of
// spreading.  They also cancel the O(dxi^2) norm change, making per-step
// norm drift higher than first order.
namespace sselab {

struct Expectations {
    MomentState moments;
    double norm = 0.0;  // sqrt(sum |psi|^2 dq) before any renormalisation
};

Expectations expectations(const WaveFunction& wf);

struct StepOutcome {
    double norm_drift = 0.0;      // | ||psi'|| - 1 | before renormalising
    MomentState moments_before;   // expectations at the start of the step
};

// Reusable stepper: owns the FFT plan and scratch buffers.
class GridStepper {
  public:
    GridStepper(const GridSpec& grid, const PhysParams& params);
    ~GridStepper();
    GridStepper(GridStepper&&) noexcept;
    GridStepper& operator=(GridStepper&&) noexcept;

    // Advances wf in place by one increment.  Throws StepUnstable if the
    // pre-renormalisation norm drifts from 1 by more than 0.1.
    StepOutcome step(WaveFunction& wf, double dt, const NoiseIncrement& dw);

    // Expectations via the stepper's cached FFT plan.
    Expectations measure(const WaveFunction& wf);

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// One-shot convenience wrapper around GridStepper.
StepOutcome sse_step(WaveFunction& wf, const PhysParams& params, double dt,
                     const NoiseIncrement& dw);

// Exact lattice translation and boost: new packet has (q_mean, p_mean)
// shifted by (-shift_q, -shift_p); second moments are untouched and a
// round trip restores the amplitudes exactly (a symmetric phase convention
// makes shift/boost order immaterial).  Shifts must be whole lattice cells
// (shift_q a multiple of dq, shift_p a multiple of 2 pi / L), else OffLattice.
void recenter(WaveFunction& wf, double shift_q, double shift_p);

enum class ResolutionIssue {
    BoundaryMass,      // box too short for the packet (predicted or measured tail)
    MomentumCoverage,  // momentum lattice does not cover 10 sigma_p plus headroom
    StepSize,          // dt above the stiffness guideline
};

struct ResolutionDiagnostic {
    ResolutionIssue issue;
    double measured = 0.0;
    double limit = 0.0;
    std::string detail;
};

struct ResolutionReport {
    bool ok = true;
    std::vector<ResolutionDiagnostic> issues;
};

// Static adequacy checks for a planned run.  The step-size rule
// dt <= 0.05 / max(p_max^2/(2m), gamma q_max^2, gamma_prime p_max^2) is a
// guideline, not a stability proof: generous for gamma_prime > 0, while
// fine grids with gamma_prime = 0 can need smaller dt than it suggests.
ResolutionReport resolution_check(const GridSpec& grid, const PhysParams& params,
                                  const FixedPoint& fp, double dt,
                                  double q_excursion = 0.0, double p_excursion = 0.0);

// Boundary-amplitude check for a concrete state (ratio of edge amplitude
// to peak amplitude against 1e-8).
ResolutionReport resolution_check(const WaveFunction& wf);

struct GridTrajectory {
    PhysParams params;
    GridSpec grid;
    double dt = 0.0;
    int record_every = 1;
    std::vector<TrajectoryRecord> records;  // centroid includes accumulated recentring offsets
    std::size_t n_recenters = 0;
    WaveFunction final_state;
    double q_offset = 0.0;  // total recentring shifts applied
    double p_offset = 0.0;
};

// Integrates over every increment of `path`, recording every
// `record_every` steps (the initial and final states always included).
// Recentring: whenever |<q>| > L/8 or |<p>| > p_max/4 the packet is
// shifted back to the box centre by a whole number of lattice cells; the
// recorded centroid always includes the accumulated offsets.  Throws
// StepUnstable (norm drift > 0.1) or PacketEscaped (edge amplitude above
// 1e-6 of peak at a record point), each carrying the offending step index.
GridTrajectory simulate(const WaveFunction& initial, const PhysParams& params,
                        const NoisePath& path, int record_every = 1);

}  // namespace sselab
