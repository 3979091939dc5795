#include "sselab/moments.hpp"

#include <cmath>
#include <string>

namespace sselab {

Eigen::Vector3d covariance_drift(const MomentState& s, const PhysParams& p) {
    const double g = p.gamma, gp = p.gamma_prime, m = p.mass;
    const double s2 = s.var_q, sp2 = s.var_p, r = s.covar;
    return {2.0 * r / m + 0.5 * gp - 2.0 * g * s2 * s2 - 2.0 * gp * r * r,
            0.5 * g - 2.0 * g * r * r - 2.0 * gp * sp2 * sp2,
            sp2 / m - 2.0 * g * s2 * r - 2.0 * gp * sp2 * r};
}

Eigen::Vector2d centroid_increment(const MomentState& s, const PhysParams& p,
                                   double dt, const NoiseIncrement& dw) {
    return {s.p_mean / p.mass * dt + 2.0 * s.var_q * dw.d_xi + 2.0 * s.covar * dw.d_xi_prime,
            2.0 * s.covar * dw.d_xi + 2.0 * s.var_p * dw.d_xi_prime};
}

MomentState step(const MomentState& s, const PhysParams& p, double dt,
                 const NoiseIncrement& dw) {
    const Eigen::Vector3d drift = covariance_drift(s, p);
    const Eigen::Vector2d dc = centroid_increment(s, p, dt, dw);
    MomentState next;
    next.q_mean = s.q_mean + dc(0);
    next.p_mean = s.p_mean + dc(1);
    next.var_q = s.var_q + dt * drift(0);
    next.var_p = s.var_p + dt * drift(1);
    next.covar = s.covar + dt * drift(2);
    if (!(next.var_q > 0.0) || !(next.var_p > 0.0))
        throw StepTooLarge("covariance update drove a variance to (" +
                           std::to_string(next.var_q) + ", " + std::to_string(next.var_p) +
                           "); reduce dt");
    return next;
}

Eigen::Matrix3d jacobian_fd(const PhysParams& p, const MomentState& at, double h) {
    if (!(h > 0.0)) throw InvalidParams("jacobian_fd: h must be > 0");
    auto bump = [&at](int j, double delta) {
        MomentState s = at;
        if (j == 0) s.var_q += delta;
        if (j == 1) s.var_p += delta;
        if (j == 2) s.covar += delta;
        return s;
    };
    Eigen::Matrix3d jac;
    for (int j = 0; j < 3; ++j) {
        const Eigen::Vector3d plus = covariance_drift(bump(j, h), p);
        const Eigen::Vector3d minus = covariance_drift(bump(j, -h), p);
        jac.col(j) = (plus - minus) / (2.0 * h);
    }
    return jac;
}

MomentTrajectory simulate(const MomentState& initial, const PhysParams& p,
                          const NoisePath& path) {
    MomentTrajectory traj;
    traj.params = p;
    traj.dt = path.dt;
    traj.records.reserve(path.increments.size() + 1);
    traj.records.push_back({0.0, initial, 0.0});

    MomentState s = initial;
    for (std::size_t k = 0; k < path.increments.size(); ++k) {
        try {
            s = step(s, p, path.dt, path.increments[k]);
        } catch (const StepTooLarge& e) {
            throw StepTooLarge(std::string(e.what()) + " (step " + std::to_string(k) + ")", k);
        }
        traj.records.push_back({static_cast<double>(k + 1) * path.dt, s, 0.0});
    }
    return traj;
}

}  // namespace sselab
