// Acceptance gate: one line per criterion, exit code = number of failures.
// Each criterion pins its tolerances and run configuration in code; the
// checks are property-based against the closed-form stationary solution.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "sselab/analytic.hpp"
#include "sselab/ensemble.hpp"
#include "sselab/grid.hpp"
#include "sselab/io.hpp"
#include "sselab/moments.hpp"
#include "sselab/noise.hpp"

namespace {

using namespace sselab;

struct ParamTriple {
    double mass, gamma, gamma_prime;
};

// Deterministic log-uniform parameter sweep; every tenth triple has
// gamma_prime = 0 so the pure position-measurement branch is covered.
std::vector<ParamTriple> random_triples(int count) {
    std::mt19937_64 rng(12345);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto log_uniform = [&](double lo, double hi) {
        return std::exp(std::log(lo) + u(rng) * (std::log(hi) - std::log(lo)));
    };
    std::vector<ParamTriple> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        ParamTriple t;
        t.mass = log_uniform(1e-3, 1e3);
        t.gamma = log_uniform(1e-3, 1e3);
        t.gamma_prime = (i % 10 == 9) ? 0.0 : log_uniform(1e-3, 1e3);
        out.push_back(t);
    }
    return out;
}

MomentState fp_state(const FixedPoint& fp) {
    return {0.0, 0.0, fp.var_q, fp.var_p, fp.covar};
}

NoisePath zero_path(double dt, std::size_t n_steps) {
    NoisePath path;
    path.dt = dt;
    path.increments.assign(n_steps, NoiseIncrement{0.0, 0.0});
    return path;
}

std::string fmt(const char* format, ...) {
    char buf[512];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buf, sizeof(buf), format, args);
    va_end(args);
    return buf;
}

// ---- criterion bodies ------------------------------------------------

bool crit1_fixed_point_identities(std::string& detail) {
    double worst_constraint = 0.0, worst_bound = 1.0;
    for (const ParamTriple& t : random_triples(1000)) {
        const PhysParams p = PhysParams::validated(t.mass, t.gamma, t.gamma_prime);
        const FixedPoint fp = fixed_point(p);
        const double prod = fp.var_q * fp.var_p;
        const double residual = std::abs(1.0 + 4.0 * fp.covar * fp.covar - 4.0 * prod);
        worst_constraint = std::max(worst_constraint, residual / (1.0 + 4.0 * prod));
        worst_bound = std::min(worst_bound, std::sqrt(prod));
    }
    detail = fmt("worst constraint residual %.2e (tol 1e-10), min sigma*sigma' %.12f",
                 worst_constraint, worst_bound);
    return worst_constraint < 1e-10 && worst_bound >= 0.5 - 1e-12;
}

bool crit2_drift_nulling(std::string& detail) {
    double worst = 0.0;
    for (const ParamTriple& t : random_triples(1000)) {
        const PhysParams p = PhysParams::validated(t.mass, t.gamma, t.gamma_prime);
        const Eigen::Vector3d drift = covariance_drift(fp_state(fixed_point(p)), p);
        worst = std::max(worst, drift.cwiseAbs().maxCoeff());
    }
    detail = fmt("max |drift| at the fixed point %.2e (tol 1e-10)", worst);
    return worst < 1e-10;
}

bool crit3_jacobian_agreement(std::string& detail) {
    double worst_fd = 0.0, worst_eig = 0.0;
    bool damped = true;
    for (const ParamTriple& t : random_triples(1000)) {
        const PhysParams p = PhysParams::validated(t.mass, t.gamma, t.gamma_prime);
        const FixedPoint fp = fixed_point(p);
        const Eigen::Matrix3d a = stability_matrix(p, fp);
        const Eigen::Matrix3d fd = jacobian_fd(p, fp_state(fp), 1e-6);
        worst_fd = std::max(worst_fd, (fd - a).cwiseAbs().maxCoeff());
        const StabilityReport rep = stability_report(p, fp);  // throws above 1e-9
        worst_eig = std::max(worst_eig, rep.max_rel_mismatch);
        damped = damped && rep.all_damped;
    }
    detail = fmt("max |fd - closed form| %.2e (tol 1e-5), eig mismatch %.2e (tol 1e-9)%s",
                 worst_fd, worst_eig, damped ? "" : ", UNDAMPED EIGENVALUE");
    return worst_fd <= 1e-5 && worst_eig <= 1e-9 && damped;
}

bool crit4_stationarity(std::string& detail) {
    const PhysParams p = PhysParams::validated(1.0, 1.0, 0.5);
    const FixedPoint fp = fixed_point(p);
    const GridSpec grid = GridSpec::validated(1024, 64.0);
    const WaveFunction wf0 = stationary_packet(p, fp, 0.0, 0.0, grid);
    const std::size_t n_steps = 10000;  // dt = 1e-4, t = 1
    const GridTrajectory traj =
        simulate(wf0, p, zero_path(1e-4, n_steps), static_cast<int>(n_steps));
    const MomentState& final_m = traj.records.back().moments;
    const double rel_q = std::abs(final_m.var_q - fp.var_q) / fp.var_q;
    const double rel_p = std::abs(final_m.var_p - fp.var_p) / fp.var_p;
    const double rel_r = std::abs(final_m.covar - fp.covar) / fp.covar;
    const double worst = std::max({rel_q, rel_p, rel_r});
    detail = fmt("max relative moment change %.2e over t=1 (tol 5e-3)", worst);
    return worst < 5e-3;
}

bool crit5_localization(std::string& detail) {
    const PhysParams p = PhysParams::validated(1.0, 1.0, 0.5);
    const FixedPoint fp = fixed_point(p);
    const GridSpec grid = GridSpec::validated(512, 31.5);
    // 4x wider packet, purity preserved (covar kept at the stationary value)
    const double var_q0 = 4.0 * fp.var_q;
    const WaveFunction wf0 = gaussian_packet(grid, var_q0, fp.covar, 0.0, 0.0);
    const double lambda1 = 2.0 * p.gamma * fp.var_q + 2.0 * p.gamma_prime * fp.var_p;
    const double t_final = 5.0 / lambda1;
    const double dt = 3e-5;
    const auto n_steps = static_cast<std::size_t>(std::llround(t_final / dt));
    const NoisePath path = make_path(424242, 0, p, dt, n_steps);
    const GridTrajectory traj = simulate(wf0, p, path, static_cast<int>(n_steps));
    const MomentState& final_m = traj.records.back().moments;
    const double rel_q = std::abs(final_m.var_q - fp.var_q) / fp.var_q;
    const double rel_p = std::abs(final_m.var_p - fp.var_p) / fp.var_p;
    const double rel_r = std::abs(final_m.covar - fp.covar) / fp.covar;
    const double worst = std::max({rel_q, rel_p, rel_r});
    detail = fmt("moments within (%.2e, %.2e, %.2e) of the fixed point at t=%.2f (tol 1e-2)",
                 rel_q, rel_p, rel_r, t_final);
    return worst < 1e-2;
}

bool crit6_relaxation(std::string& detail) {
    const PhysParams p = PhysParams::validated(1.0, 1.0, 0.0);
    const FixedPoint fp = fixed_point(p);
    const auto eigs = stability_eigenvalues(p, fp);
    const double rate_true = -eigs[0].real();
    const double freq_true = eigs[1].imag();

    EnsembleConfig cfg;
    cfg.params = p;
    cfg.integrator = Integrator::Moments;
    cfg.n_trajectories = 1000;
    cfg.dt = 1e-3;
    cfg.t_final = 3.0;
    cfg.record_every = 10;
    cfg.initial = {InitialState::Kind::EigenPerturbed, 1.0, 0.0, 0.0,
                   EigenDirection::Real, 0.049};
    cfg.seed = 616;
    const RelaxationFit fit_r = relaxation_fit(run_ensemble(cfg), fp);

    cfg.initial.direction = EigenDirection::ComplexPair;
    cfg.seed = 617;
    const RelaxationFit fit_c = relaxation_fit(run_ensemble(cfg), fp);

    const double err_q = std::abs(fit_r.var_q.rate - rate_true) / rate_true;
    const double err_p = std::abs(fit_r.var_p.rate - rate_true) / rate_true;
    const double err_r = std::abs(fit_r.covar.rate - rate_true) / rate_true;
    const double err_env =
        std::abs(fit_c.oscillation.envelope_rate - rate_true) / rate_true;
    const double err_freq = std::abs(fit_c.oscillation.frequency - freq_true) / freq_true;

    const bool rates_ok = fit_r.var_q.ok && fit_r.var_p.ok && fit_r.covar.ok &&
                          err_q <= 0.10 && err_p <= 0.10 && err_r <= 0.10;
    const bool osc_ok = fit_c.oscillation.ok && err_env <= 0.10 && err_freq <= 0.15;
    detail = fmt("rate errors (%.1f%%, %.1f%%, %.1f%%) tol 10%%; envelope %.1f%% tol 10%%, "
                 "frequency %.1f%% tol 15%%",
                 100 * err_q, 100 * err_p, 100 * err_r, 100 * err_env, 100 * err_freq);
    return rates_ok && osc_ok;
}

bool crit7_centroid_diffusion(std::string& detail) {
    EnsembleConfig cfg;
    cfg.params = PhysParams::validated(1.0, 1.0, 0.0);
    cfg.integrator = Integrator::Moments;
    cfg.n_trajectories = 10000;
    cfg.dt = 1e-3;
    cfg.t_final = 0.01;
    cfg.record_every = 10;
    cfg.seed = 77;
    const EnsembleStats stats = run_ensemble(cfg);
    const double dev_q = std::abs(stats.diffusion_q.rate - 1.0);
    const double dev_p = std::abs(stats.diffusion_p.rate - 0.5);
    detail = fmt("Var[dq]/dt = %.4f (target 1, 3SE %.4f); Var[dp]/dt = %.4f (target 0.5, 3SE %.4f)",
                 stats.diffusion_q.rate, 3 * stats.diffusion_q.std_error,
                 stats.diffusion_p.rate, 3 * stats.diffusion_p.std_error);
    return dev_q <= 3 * stats.diffusion_q.std_error &&
           dev_p <= 3 * stats.diffusion_p.std_error;
}

bool crit8_heating(std::string& detail) {
    EnsembleConfig cfg;
    cfg.params = PhysParams::validated(1.0, 1.0, 0.0);
    cfg.integrator = Integrator::Grid;
    cfg.grid = GridSpec::validated(256, 17.0);
    cfg.n_trajectories = 1600;
    cfg.dt = 1e-5;
    cfg.t_final = 0.01;
    cfg.record_every = 1000;
    cfg.seed = 88;
    const EnsembleStats stats = run_ensemble(cfg);
    const double target = 0.5 * cfg.params.gamma;
    const double dev = std::abs(stats.heating.rate - target);
    detail = fmt("d<p^2>/dt = %.4f +- %.4f (target %.2f, within %.1f SE)",
                 stats.heating.rate, stats.heating.std_error, target,
                 stats.heating.std_error > 0 ? dev / stats.heating.std_error : 99.0);
    return dev <= 3 * stats.heating.std_error;
}

bool crit9_cross_integrator(std::string& detail) {
    const PhysParams p = PhysParams::validated(1.0, 1.0, 0.5);
    const FixedPoint fp = fixed_point(p);
    const GridSpec grid = GridSpec::validated(128, 20.0);
    const std::vector<double> dts = {1e-3, 5e-4, 2.5e-4};
    std::vector<double> devs;
    for (const double dt : dts) {
        const auto n_steps = static_cast<std::size_t>(std::llround(1.0 / dt));
        const NoisePath path = make_path(909, 0, p, dt, n_steps);
        WaveFunction wf = stationary_packet(p, fp, 0.0, 0.0, grid);
        GridStepper stepper(grid, p);
        MomentState ms = fp_state(fp);
        double max_dev = 0.0;
        for (std::size_t k = 0; k < n_steps; ++k) {
            stepper.step(wf, dt, path.increments[k]);
            ms = step(ms, p, dt, path.increments[k]);
            const MomentState gm = stepper.measure(wf).moments;
            max_dev = std::max({max_dev, std::abs(gm.q_mean - ms.q_mean),
                                std::abs(gm.p_mean - ms.p_mean)});
        }
        devs.push_back(max_dev);
    }
    // least-squares slope of log(dev) against log(dt); first order or better
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < dts.size(); ++i) {
        const double x = std::log(dts[i]), y = std::log(devs[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double n = static_cast<double>(dts.size());
    const double slope = (sxy - sx * sy / n) / (sxx - sx * sx / n);
    detail = fmt("max centroid deviations %.2e / %.2e / %.2e, order %.2f (need monotone, >= 0.8)",
                 devs[0], devs[1], devs[2], slope);
    return devs[0] > devs[1] && devs[1] > devs[2] && slope >= 0.8;
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool crit10_determinism(std::string& detail) {
#ifndef SSELAB_CLI_PATH
    detail = "CLI path not compiled in";
    return false;
#else
    namespace fs = std::filesystem;
    const fs::path dir =
        fs::temp_directory_path() / ("sselab_accept_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    const std::string cli = SSELAB_CLI_PATH;
    auto run = [&](const std::string& args) {
        const std::string cmd = cli + " " + args + " > /dev/null 2>&1";
        return std::system(cmd.c_str());
    };
    const std::string g = " simulate-grid --n-points 256 --box-length 20 --dt 2e-5"
                          " --t-final 0.01 --seed 101 --record-every 10 --gamma-prime 0.5";
    const std::string e = " ensemble --n-trajectories 50 --dt 1e-3 --t-final 0.1"
                          " --seed 55 --record-every 10";
    bool ok = true;
    ok &= run("fixed-point --output " + (dir / "f1.json").string()) == 0;
    ok &= run("fixed-point --output " + (dir / "f2.json").string()) == 0;
    ok &= run(g + " --output " + (dir / "g1.csv").string()) == 0;
    ok &= run(g + " --output " + (dir / "g2.csv").string()) == 0;
    ok &= run(e + " --workers 1 --output " + (dir / "e1.json").string() +
              " --csv-output " + (dir / "e1.csv").string()) == 0;
    ok &= run(e + " --workers 4 --output " + (dir / "e2.json").string() +
              " --csv-output " + (dir / "e2.csv").string()) == 0;
    if (!ok) {
        detail = "a CLI invocation failed";
        return false;
    }
    const bool f_same = slurp(dir / "f1.json") == slurp(dir / "f2.json");
    const bool g_same =
        !slurp(dir / "g1.csv").empty() && slurp(dir / "g1.csv") == slurp(dir / "g2.csv");
    const bool e_same = !slurp(dir / "e1.json").empty() &&
                        slurp(dir / "e1.json") == slurp(dir / "e2.json") &&
                        slurp(dir / "e1.csv") == slurp(dir / "e2.csv");
    std::error_code ec;
    fs::remove_all(dir, ec);
    detail = fmt("fixed-point %s, grid CSV %s, ensemble JSON+CSV %s (1 vs 4 workers)",
                 f_same ? "identical" : "DIFFERS", g_same ? "identical" : "DIFFERS",
                 e_same ? "identical" : "DIFFERS");
    return f_same && g_same && e_same;
#endif
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        bool (*run)(std::string&);
    };
    const std::vector<Criterion> criteria = {
        {1, "fixed-point identities over 1000 parameter triples", crit1_fixed_point_identities},
        {2, "covariance drift nulls at the fixed point", crit2_drift_nulling},
        {3, "finite-difference Jacobian and eigenvalues match closed forms", crit3_jacobian_agreement},
        {4, "stationary packet is stationary under zero-noise grid evolution", crit4_stationarity},
        {5, "squeezed packet localizes to the fixed point", crit5_localization},
        {6, "ensemble relaxation recovers the linear rates", crit6_relaxation},
        {7, "centroid diffusion rates match the Ito variances", crit7_centroid_diffusion},
        {8, "grid heating rate is gamma/2", crit8_heating},
        {9, "grid and moment integrators agree pathwise to first order", crit9_cross_integrator},
        {10, "same seed gives byte-identical outputs", crit10_determinism},
    };

    int failures = 0;
    for (const Criterion& c : criteria) {
        std::string detail;
        bool pass = false;
        const auto start = std::chrono::steady_clock::now();
        try {
            pass = c.run(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("%s  %2d  %-66s  %s [%.1fs]\n", pass ? "PASS" : "FAIL", c.id, c.name,
                    detail.c_str(), secs);
        std::fflush(stdout);
        if (!pass) ++failures;
    }
    if (failures == 0)
        std::printf("all %zu acceptance criteria passed\n", criteria.size());
    else
        std::printf("%d acceptance criteria FAILED\n", failures);
    return failures;
}
