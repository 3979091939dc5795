#include "sselab/analytic.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>

#include <Eigen/Eigenvalues>

namespace sselab {

FixedPoint fixed_point(const PhysParams& p) {
    const double x = p.mass * p.gamma_prime;
    const double root = std::sqrt(x * x + 1.0);
    // D = sqrt(x^2+1) - x, rewritten to avoid cancellation for large x
    const double d = 1.0 / (root + x);
    FixedPoint fp;
    fp.var_q = std::sqrt(1.0 / (2.0 * p.mass * p.gamma)) * root * std::sqrt(d);
    fp.var_p = std::sqrt(p.gamma * p.mass / 2.0) * std::sqrt(d);
    fp.covar = 0.5 * d;
    const PhaseConstants pc = phase_constants(p, fp);
    fp.e_prime = pc.comoving;
    fp.e = pc.lab;
    return fp;
}

PhaseConstants phase_constants(const PhysParams& p, const FixedPoint& fp) {
    PhaseConstants pc;
    pc.comoving = (1.0 / (2.0 * fp.var_q)) * (1.0 / (2.0 * p.mass) - p.gamma_prime * fp.covar);
    pc.lab = pc.comoving - p.gamma * fp.var_q * fp.covar - p.gamma_prime * fp.var_p * fp.covar;
    return pc;
}

Eigen::Matrix3d stability_matrix(const PhysParams& p, const FixedPoint& fp) {
    const double g = p.gamma, gp = p.gamma_prime, m = p.mass;
    const double s2 = fp.var_q, sp2 = fp.var_p, r = fp.covar;
    Eigen::Matrix3d a;
    a << -4.0 * g * s2, 0.0, 2.0 / m - 4.0 * gp * r,
        0.0, -4.0 * gp * sp2, -4.0 * g * r,
        -2.0 * g * r, 1.0 / m - 2.0 * gp * r, -2.0 * g * s2 - 2.0 * gp * sp2;
    return a;
}

std::array<std::complex<double>, 3> stability_eigenvalues(const PhysParams& p,
                                                          const FixedPoint& fp) {
    const double g = p.gamma, gp = p.gamma_prime;
    const double lam1 = -(2.0 * g * fp.var_q + 2.0 * gp * fp.var_p);
    const double diff = g * fp.var_q - gp * fp.var_p;
    const double omega = 2.0 * std::sqrt(diff * diff + 4.0 * g * gp * fp.covar * fp.covar);
    return {std::complex<double>(lam1, 0.0), std::complex<double>(lam1, omega),
            std::complex<double>(lam1, -omega)};
}

namespace {

// Parlett-Reinsch balancing with radix-2 factors. The diagonal similarity is
// exact in floating point, and without it the QR iteration loses ~6 digits on
// the badly scaled matrices that arise when m and gamma are both small
// (entries then span five orders of magnitude while the spectrum stays O(1)).
void balance_in_place(Eigen::Matrix3d& a) {
    const double radix = 2.0, sq = radix * radix;
    bool done = false;
    while (!done) {
        done = true;
        for (int i = 0; i < 3; ++i) {
            double col = 0.0, row = 0.0;
            for (int j = 0; j < 3; ++j)
                if (j != i) {
                    col += std::abs(a(j, i));
                    row += std::abs(a(i, j));
                }
            if (col == 0.0 || row == 0.0) continue;
            double target = row / radix, f = 1.0;
            const double before = col + row;
            while (col < target) {
                f *= radix;
                col *= sq;
            }
            target = row * radix;
            while (col > target) {
                f /= radix;
                col /= sq;
            }
            if ((col + row) / f < 0.95 * before) {
                done = false;
                a.row(i) *= 1.0 / f;
                a.col(i) *= f;
            }
        }
    }
}

}  // namespace

StabilityReport stability_report(const PhysParams& p, const FixedPoint& fp) {
    StabilityReport rep;
    rep.matrix = stability_matrix(p, fp);
    rep.closed_form = stability_eigenvalues(p, fp);

    Eigen::Matrix3d balanced = rep.matrix;
    balance_in_place(balanced);
    Eigen::EigenSolver<Eigen::Matrix3d> solver(balanced);
    std::array<std::complex<double>, 3> numeric = {solver.eigenvalues()(0),
                                                   solver.eigenvalues()(1),
                                                   solver.eigenvalues()(2)};
    // Optimal assignment over all 3! pairings; greedy matching misassigns when
    // the oscillation frequency is small and all three eigenvalues nearly agree.
    std::array<int, 3> perm = {0, 1, 2}, best_perm = perm;
    double best_worst = -1.0;
    do {
        double worst = 0.0;
        for (int i = 0; i < 3; ++i) {
            const double scale = std::max(std::abs(rep.closed_form[i]), 1e-300);
            worst = std::max(worst, std::abs(numeric[perm[i]] - rep.closed_form[i]) / scale);
        }
        if (best_worst < 0.0 || worst < best_worst) {
            best_worst = worst;
            best_perm = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    for (int i = 0; i < 3; ++i) rep.numeric[i] = numeric[best_perm[i]];
    rep.max_rel_mismatch = best_worst;

    rep.all_damped = std::all_of(rep.numeric.begin(), rep.numeric.end(),
                                 [](const std::complex<double>& z) { return z.real() < 0.0; });
    if (rep.max_rel_mismatch > 1e-9) {
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "numerical eigenvalues disagree with closed form, rel mismatch %.3e",
                      rep.max_rel_mismatch);
        throw Error(buf);
    }
    return rep;
}

WaveFunction gaussian_packet(const GridSpec& grid, double var_q, double covar,
                             double q_mean, double p_mean) {
    if (!std::isfinite(var_q) || var_q <= 0.0)
        throw InvalidParams("gaussian_packet: var_q must be finite and > 0");
    if (!std::isfinite(covar) || !std::isfinite(q_mean) || !std::isfinite(p_mean))
        throw InvalidParams("gaussian_packet: non-finite argument");

    WaveFunction wf;
    wf.spec = grid;
    wf.amp.resize(grid.n_points);
    const std::complex<double> width(1.0, -2.0 * covar);  // 1 - 2i covar
    const std::complex<double> ii(0.0, 1.0);
    for (int j = 0; j < grid.n_points; ++j) {
        const double q = grid.q(j);
        const double dqc = q - q_mean;
        wf.amp(j) = std::exp(ii * (p_mean * q) - width * (dqc * dqc) / (4.0 * var_q));
    }
    const double dq = grid.dq();
    wf.amp /= std::sqrt(wf.amp.squaredNorm() * dq);

    const double edge_mass =
        (std::norm(wf.amp(0)) + std::norm(wf.amp(grid.n_points - 1))) * dq;
    if (edge_mass > 1e-10)
        throw GridTooNarrow("packet tail mass " + std::to_string(edge_mass) +
                            " at the box edge; widen box_length or recenter");
    return wf;
}

WaveFunction stationary_packet(const PhysParams& /*p*/, const FixedPoint& fp,
                               double q_mean, double p_mean, const GridSpec& grid) {
    return gaussian_packet(grid, fp.var_q, fp.covar, q_mean, p_mean);
}

}  // namespace sselab
