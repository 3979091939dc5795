#include "sselab/grid.hpp"

#include <cmath>
#include <complex>
#include <string>

#include <unsupported/Eigen/FFT>

namespace sselab {

namespace {
constexpr double kUnstableNormDrift = 0.1;
constexpr double kEscapeAmplitudeRatio = 1e-6;
}  // namespace

struct GridStepper::Impl {
    GridSpec spec;
    PhysParams params;
    double dq;
    Eigen::VectorXd qs;   // lattice positions
    Eigen::VectorXd pl;   // momentum lattice, fftfreq layout
    Eigen::FFT<double> fft;
    Eigen::VectorXcd phi, work, ppsi, p2psi;

    Impl(const GridSpec& g, const PhysParams& p) : spec(g), params(p), dq(g.dq()) {
        const int n = g.n_points;
        qs.resize(n);
        pl.resize(n);
        const double dp = 2.0 * M_PI / g.box_length;
        for (int j = 0; j < n; ++j) {
            qs(j) = g.q(j);
            pl(j) = dp * (j < n / 2 ? j : j - n);
        }
        phi.resize(n);
        work.resize(n);
        ppsi.resize(n);
        p2psi.resize(n);
    }

    // Moments plus the spectral actions p psi, p^2 psi (left in ppsi, p2psi
    // for the caller to reuse).
    Expectations measure_core(const WaveFunction& wf) {
        const int n = spec.n_points;
        Expectations ex;
        ex.norm = std::sqrt(wf.amp.squaredNorm() * dq);

        double qm = 0.0, q2m = 0.0;
        for (int j = 0; j < n; ++j) {
            const double rho = std::norm(wf.amp(j)) * dq;
            qm += qs(j) * rho;
            q2m += qs(j) * qs(j) * rho;
        }

        fft.fwd(phi, wf.amp);
        work = pl.array() * phi.array();
        fft.inv(ppsi, work);
        work = pl.array().square() * phi.array();
        fft.inv(p2psi, work);

        double pm = 0.0, p2m = 0.0, cov = 0.0;
        for (int j = 0; j < n; ++j) {
            const std::complex<double> c = std::conj(wf.amp(j));
            pm += (c * ppsi(j)).real();
            p2m += (c * p2psi(j)).real();
        }
        pm *= dq;
        p2m *= dq;
        for (int j = 0; j < n; ++j) {
            const std::complex<double> centered_p = ppsi(j) - pm * wf.amp(j);
            cov += (std::conj(wf.amp(j)) * (qs(j) - qm) * centered_p).real();
        }
        cov *= dq;

        ex.moments = {qm, pm, q2m - qm * qm, p2m - pm * pm, cov};
        return ex;
    }
};

GridStepper::GridStepper(const GridSpec& grid, const PhysParams& params)
    : impl_(std::make_unique<Impl>(grid.validated(grid.n_points, grid.box_length), params)) {}

GridStepper::~GridStepper() = default;
GridStepper::GridStepper(GridStepper&&) noexcept = default;
GridStepper& GridStepper::operator=(GridStepper&&) noexcept = default;

Expectations GridStepper::measure(const WaveFunction& wf) {
    if (wf.amp.size() != impl_->spec.n_points)
        throw InvalidParams("wavefunction size does not match the stepper's grid");
    Expectations ex = impl_->measure_core(wf);
    if (std::abs(ex.norm - 1.0) > 1e-8)
        throw NotNormalized("norm " + std::to_string(ex.norm) + " deviates beyond 1e-8");
    return ex;
}

StepOutcome GridStepper::step(WaveFunction& wf, double dt, const NoiseIncrement& dw) {
    if (!(dt > 0.0)) throw InvalidParams("step: dt must be > 0");
    if (wf.amp.size() != impl_->spec.n_points)
        throw InvalidParams("wavefunction size does not match the stepper's grid");
    Impl& im = *impl_;
    const int n = im.spec.n_points;
    const double m = im.params.mass, g = im.params.gamma, gp = im.params.gamma_prime;

    const Expectations ex = im.measure_core(wf);
    const double qm = ex.moments.q_mean, pm = ex.moments.p_mean;
    const double s2 = ex.moments.var_q, sp2 = ex.moments.var_p, r = ex.moments.covar;

    const double dxi = dw.d_xi, dxip = dw.d_xi_prime;
    const std::complex<double> ihalf(0.0, 0.5);
    const std::complex<double> kin(0.0, -0.5 / m);  // -i/(2m)

    for (int j = 0; j < n; ++j) {
        const std::complex<double> a = wf.amp(j);
        const double qt = im.qs(j) - qm;
        const std::complex<double> qtpsi = qt * a;
        const std::complex<double> qt2psi = qt * qtpsi;
        const std::complex<double> ptpsi = im.ppsi(j) - pm * a;
        const std::complex<double> pt2psi = im.p2psi(j) - 2.0 * pm * im.ppsi(j) + pm * pm * a;

        // Compensated drift: subtracting the instantaneous variances keeps
        // the norm a martingale and makes the stationary packet an exact
        // eigenvector of the zero-noise flow.
        const std::complex<double> drift = kin * im.p2psi(j) -
                                           0.5 * g * (qt2psi - s2 * a) -
                                           0.5 * gp * (pt2psi - sp2 * a);
        const std::complex<double> dpsi =
            drift * dt + dxi * qtpsi + dxip * ptpsi +
            0.5 * dxi * dxi * (qt2psi - 2.0 * s2 * a) +
            0.5 * dxip * dxip * (pt2psi - 2.0 * sp2 * a) +
            dxi * dxip * (qt * ptpsi - ihalf * a - 2.0 * r * a);
        wf.amp(j) = a + dpsi;
    }

    const double norm = std::sqrt(wf.amp.squaredNorm() * im.dq);
    const double drift_abs = std::abs(norm - 1.0);
    if (!std::isfinite(norm) || drift_abs > kUnstableNormDrift)
        throw StepUnstable("pre-renormalisation norm " + std::to_string(norm) +
                           "; dt too large or grid under-resolved");
    wf.amp /= norm;
    return {drift_abs, ex.moments};
}

Expectations expectations(const WaveFunction& wf) {
    GridStepper stepper(wf.spec, PhysParams{});
    return stepper.measure(wf);
}

StepOutcome sse_step(WaveFunction& wf, const PhysParams& params, double dt,
                     const NoiseIncrement& dw) {
    GridStepper stepper(wf.spec, params);
    return stepper.step(wf, dt, dw);
}

void recenter(WaveFunction& wf, double shift_q, double shift_p) {
    const GridSpec& g = wf.spec;
    const int n = g.n_points;
    const double dq = g.dq();
    const double dp = 2.0 * M_PI / g.box_length;

    const double cells_q = shift_q / dq;
    const double cells_p = shift_p / dp;
    const long long kq = std::llround(cells_q);
    const long long kp = std::llround(cells_p);
    if (std::abs(cells_q - static_cast<double>(kq)) > 1e-9 * std::max(1.0, std::abs(cells_q)))
        throw OffLattice("shift_q = " + std::to_string(shift_q) +
                         " is not a whole number of cells dq = " + std::to_string(dq));
    if (std::abs(cells_p - static_cast<double>(kp)) > 1e-9 * std::max(1.0, std::abs(cells_p)))
        throw OffLattice("shift_p = " + std::to_string(shift_p) +
                         " is not a whole number of cells 2*pi/L = " + std::to_string(dp));
    if (kq == 0 && kp == 0) return;

    // psi'(q) = exp(-i shift_p shift_q / 2) exp(-i shift_p q) psi(q + shift_q).
    // The symmetric half-phase makes recenter(-s, -p) an exact inverse.
    const std::complex<double> ii(0.0, 1.0);
    const std::complex<double> half_phase = std::exp(-ii * (shift_p * shift_q / 2.0));
    Eigen::VectorXcd out(n);
    for (int j = 0; j < n; ++j) {
        const int src = static_cast<int>(((j + kq) % n + n) % n);
        out(j) = half_phase * std::exp(-ii * (shift_p * g.q(j))) * wf.amp(src);
    }
    wf.amp.swap(out);
}

namespace {

void push_issue(ResolutionReport& rep, ResolutionIssue issue, double measured,
                double limit, std::string detail) {
    rep.ok = false;
    rep.issues.push_back({issue, measured, limit, std::move(detail)});
}

}  // namespace

ResolutionReport resolution_check(const GridSpec& grid, const PhysParams& params,
                                  const FixedPoint& fp, double dt,
                                  double q_excursion, double p_excursion) {
    ResolutionReport rep;
    const double sigma = std::sqrt(fp.var_q);
    const double sigma_p = std::sqrt(fp.var_p);
    const double need_box = 20.0 * sigma + 2.0 * q_excursion;
    if (grid.box_length < need_box)
        push_issue(rep, ResolutionIssue::BoundaryMass, grid.box_length, need_box,
                   "box_length below 20 sigma plus excursions");
    const double need_p = 10.0 * sigma_p + p_excursion;
    if (grid.p_max() < need_p)
        push_issue(rep, ResolutionIssue::MomentumCoverage, grid.p_max(), need_p,
                   "momentum lattice does not cover 10 sigma_p plus excursions");
    const double q_max = 0.5 * grid.box_length;
    const double p_max = grid.p_max();
    const double rate = std::max({p_max * p_max / (2.0 * params.mass),
                                  params.gamma * q_max * q_max,
                                  params.gamma_prime * p_max * p_max});
    const double dt_limit = 0.05 / rate;
    if (dt > dt_limit)
        push_issue(rep, ResolutionIssue::StepSize, dt, dt_limit,
                   "dt above the stiffness guideline 0.05/max(p_max^2/2m, gamma q_max^2, "
                   "gamma_prime p_max^2)");
    return rep;
}

ResolutionReport resolution_check(const WaveFunction& wf) {
    ResolutionReport rep;
    const int n = wf.spec.n_points;
    double peak = 0.0;
    for (int j = 0; j < n; ++j) peak = std::max(peak, std::abs(wf.amp(j)));
    const double edge = std::max(std::abs(wf.amp(0)), std::abs(wf.amp(n - 1)));
    const double ratio = peak > 0.0 ? edge / peak : 1.0;
    if (ratio > 1e-8)
        push_issue(rep, ResolutionIssue::BoundaryMass, ratio, 1e-8,
                   "edge amplitude not negligible against the peak");
    return rep;
}

GridTrajectory simulate(const WaveFunction& initial, const PhysParams& params,
                        const NoisePath& path, int record_every) {
    if (record_every < 1) throw InvalidParams("record_every must be >= 1");
    GridTrajectory traj;
    traj.params = params;
    traj.grid = initial.spec;
    traj.dt = path.dt;
    traj.record_every = record_every;

    const std::size_t n_steps = path.increments.size();
    GridStepper stepper(initial.spec, params);
    WaveFunction wf = initial;

    const double trigger_q = initial.spec.box_length / 8.0;
    const double trigger_p = initial.spec.p_max() / 4.0;
    const double dq = initial.spec.dq();
    const double dp = 2.0 * M_PI / initial.spec.box_length;

    double q_off = 0.0, p_off = 0.0;

    auto lattice_recenter = [&](const MomentState& mom) {
        const double sq = dq * std::llround(mom.q_mean / dq);
        const double sp = dp * std::llround(mom.p_mean / dp);
        if (sq == 0.0 && sp == 0.0) return;
        recenter(wf, sq, sp);
        q_off += sq;
        p_off += sp;
        ++traj.n_recenters;
    };

    auto record = [&](double time, const MomentState& mom, double norm_drift) {
        MomentState shifted = mom;
        shifted.q_mean += q_off;
        shifted.p_mean += p_off;
        traj.records.push_back({time, shifted, norm_drift});
    };

    traj.records.reserve(n_steps / record_every + 2);
    record(0.0, stepper.measure(wf).moments, 0.0);

    for (std::size_t k = 0; k < n_steps; ++k) {
        StepOutcome out;
        try {
            out = stepper.step(wf, path.dt, path.increments[k]);
        } catch (const StepUnstable& e) {
            throw StepUnstable(std::string(e.what()) + " (step " + std::to_string(k) + ")", k);
        }
        const bool at_record = ((k + 1) % record_every == 0) || (k + 1 == n_steps);
        if (at_record) {
            const Expectations ex = stepper.measure(wf);
            record(static_cast<double>(k + 1) * path.dt, ex.moments, out.norm_drift);

            double peak = 0.0;
            for (int j = 0; j < wf.spec.n_points; ++j)
                peak = std::max(peak, std::abs(wf.amp(j)));
            const double edge =
                std::max(std::abs(wf.amp(0)), std::abs(wf.amp(wf.spec.n_points - 1)));
            if (edge > kEscapeAmplitudeRatio * peak)
                throw PacketEscaped("edge amplitude ratio " + std::to_string(edge / peak) +
                                        " at step " + std::to_string(k),
                                    k);
            if (std::abs(ex.moments.q_mean) > trigger_q ||
                std::abs(ex.moments.p_mean) > trigger_p)
                lattice_recenter(ex.moments);
        } else if (std::abs(out.moments_before.q_mean) > trigger_q ||
                   std::abs(out.moments_before.p_mean) > trigger_p) {
            // Off-record steps reuse the step's own start-of-step moments for
            // the trigger; one measure refresh gets the post-step centroid.
            lattice_recenter(stepper.measure(wf).moments);
        }
    }
    traj.final_state = std::move(wf);
    traj.q_offset = q_off;
    traj.p_offset = p_off;
    return traj;
}

}  // namespace sselab
