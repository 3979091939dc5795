#include "sselab/ensemble.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <string>
#include <thread>
#include <utility>

#include <Eigen/Eigenvalues>

#include "sselab/grid.hpp"
#include "sselab/moments.hpp"
#include "sselab/noise.hpp"

namespace sselab {

namespace {

// Orient an eigen-direction and scale it so its largest component relative
// to the stationary scale equals rel_size.
Eigen::Vector3d scaled_direction(Eigen::Vector3d v, const FixedPoint& fp, double rel_size) {
    const Eigen::Vector3d scale(fp.var_q, fp.var_p, fp.covar);
    int dominant = 0;
    double worst = 0.0;
    for (int i = 0; i < 3; ++i) {
        const double rel = std::abs(v(i)) / scale(i);
        if (rel > worst) {
            worst = rel;
            dominant = i;
        }
    }
    if (worst == 0.0) throw Error("degenerate eigenvector");
    if (v(dominant) < 0.0) v = -v;  // deterministic orientation
    return v * (rel_size / worst);
}

Eigen::Vector3d eigen_perturbation(const PhysParams& params, const FixedPoint& fp,
                                   EigenDirection direction, double rel_size) {
    const Eigen::Matrix3d a = stability_matrix(params, fp);
    Eigen::EigenSolver<Eigen::Matrix3d> solver(a);
    int pick = 0;
    for (int i = 1; i < 3; ++i) {
        const bool want_real = direction == EigenDirection::Real;
        const double key = want_real ? -std::abs(solver.eigenvalues()(i).imag())
                                     : solver.eigenvalues()(i).imag();
        const double best = want_real ? -std::abs(solver.eigenvalues()(pick).imag())
                                      : solver.eigenvalues()(pick).imag();
        if (key > best) pick = i;
    }
    Eigen::Vector3cd vec = solver.eigenvectors().col(pick);
    Eigen::Vector3d real_part = vec.real();
    if (direction == EigenDirection::Real) {
        // the real eigenvalue's eigenvector is real up to normalisation
        if (real_part.norm() < 1e-12) real_part = vec.imag();
    }
    return scaled_direction(real_part, fp, rel_size);
}

}  // namespace

MomentState initial_moments(const InitialState& init, const PhysParams& params) {
    const FixedPoint fp = fixed_point(params);
    MomentState s{0.0, 0.0, fp.var_q, fp.var_p, fp.covar};
    switch (init.kind) {
        case InitialState::Kind::FixedPoint:
            return s;
        case InitialState::Kind::Squeezed: {
            if (!(init.factor > 0.0) || !std::isfinite(init.factor))
                throw InvalidParams("squeezed factor must be finite and > 0");
            s.var_q = init.factor * fp.var_q;
            s.covar = fp.covar;
            // purity-preserving width change: the packet stays a pure Gaussian
            s.var_p = (1.0 + 4.0 * s.covar * s.covar) / (4.0 * s.var_q);
            return s;
        }
        case InitialState::Kind::Displaced:
            s.q_mean = init.q_offset;
            s.p_mean = init.p_offset;
            return s;
        case InitialState::Kind::EigenPerturbed: {
            if (!(init.rel_size >= 0.0) || !std::isfinite(init.rel_size))
                throw InvalidParams("eigen perturbation size must be finite and >= 0");
            if (init.rel_size > 0.0) {
                const Eigen::Vector3d x0 =
                    eigen_perturbation(params, fp, init.direction, init.rel_size);
                s.var_q += x0(0);
                s.var_p += x0(1);
                s.covar += x0(2);
            }
            return s;
        }
    }
    throw InvalidParams("unknown initial state kind");
}

WaveFunction initial_wavefunction(const InitialState& init, const PhysParams& params,
                                  const GridSpec& grid) {
    if (init.kind == InitialState::Kind::EigenPerturbed)
        throw InvalidParams(
            "eigen-perturbed starts are moment-integrator only (the perturbed "
            "covariance triple is not realised by any pure Gaussian)");
    const MomentState s = initial_moments(init, params);
    return gaussian_packet(grid, s.var_q, s.covar, s.q_mean, s.p_mean);
}

EnsembleConfig EnsembleConfig::validated() const {
    PhysParams::validated(params.mass, params.gamma, params.gamma_prime);
    if (n_trajectories < 2) throw InvalidParams("n_trajectories must be >= 2");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidParams("dt must be finite and > 0");
    if (!(t_final >= dt) || !std::isfinite(t_final))
        throw InvalidParams("t_final must be finite and >= dt");
    if (record_every < 1) throw InvalidParams("record_every must be >= 1");
    if (workers < 0) throw InvalidParams("workers must be >= 0");
    if (integrator == Integrator::Grid) {
        if (!grid) throw InvalidParams("grid integrator requires a GridSpec");
        GridSpec::validated(grid->n_points, grid->box_length);
        if (initial.kind == InitialState::Kind::EigenPerturbed)
            throw InvalidParams("eigen-perturbed starts are moment-integrator only");
    }
    return *this;
}

int EnsembleConfig::n_steps() const {
    return std::max(1, static_cast<int>(std::llround(t_final / dt)));
}

namespace {

struct Welford {
    long n = 0;
    double mean = 0.0;
    double m2 = 0.0;
    void push(double x) {
        ++n;
        const double d = x - mean;
        mean += d / n;
        m2 += d * (x - mean);
    }
    double variance() const { return n > 1 ? m2 / (n - 1) : 0.0; }
    double std_error() const { return n > 1 ? std::sqrt(variance() / n) : 0.0; }
};

enum class FailKind { None, Unstable, TooLarge, Escaped, Other };

struct TrajResult {
    FailKind fail = FailKind::None;
    std::string error;
    std::size_t fail_step = SIZE_MAX;
    std::vector<TrajectoryRecord> records;
};

// Indices 0, record_every, 2*record_every, ..., plus the final step.
std::vector<std::size_t> record_steps(std::size_t n_steps, int record_every) {
    std::vector<std::size_t> idx{0};
    for (std::size_t k = record_every; k < n_steps; k += record_every) idx.push_back(k);
    idx.push_back(n_steps);
    return idx;
}

TrajResult run_one(const EnsembleConfig& cfg, const WaveFunction* wf0,
                   const MomentState& m0, int index) {
    TrajResult res;
    try {
        const NoisePath path = make_path(cfg.seed, static_cast<std::uint64_t>(index),
                                         cfg.params, cfg.dt,
                                         static_cast<std::size_t>(cfg.n_steps()));
        if (cfg.integrator == Integrator::Moments) {
            const MomentTrajectory traj = simulate(m0, cfg.params, path);
            for (std::size_t k : record_steps(path.increments.size(), cfg.record_every))
                res.records.push_back(traj.records[k]);
        } else {
            const GridTrajectory traj = simulate(*wf0, cfg.params, path, cfg.record_every);
            res.records = traj.records;
        }
    } catch (const StepUnstable& e) {
        res.fail = FailKind::Unstable;
        res.error = e.what();
        res.fail_step = e.step_index;
    } catch (const StepTooLarge& e) {
        res.fail = FailKind::TooLarge;
        res.error = e.what();
        res.fail_step = e.step_index;
    } catch (const PacketEscaped& e) {
        res.fail = FailKind::Escaped;
        res.error = e.what();
        res.fail_step = e.step_index;
    } catch (const std::exception& e) {
        res.fail = FailKind::Other;
        res.error = e.what();
    }
    return res;
}

[[noreturn]] void rethrow(const TrajResult& res, int index) {
    const std::string msg = "trajectory " + std::to_string(index) + ": " + res.error;
    switch (res.fail) {
        case FailKind::Unstable: throw StepUnstable(msg, res.fail_step);
        case FailKind::TooLarge: throw StepTooLarge(msg, res.fail_step);
        case FailKind::Escaped: throw PacketEscaped(msg, res.fail_step);
        default: throw Error(msg);
    }
}

struct SeriesAccum {
    std::vector<Welford> q_mean, p_mean, var_q, var_p, covar, defect, norm_drift;
    explicit SeriesAccum(std::size_t n)
        : q_mean(n), p_mean(n), var_q(n), var_p(n), covar(n), defect(n), norm_drift(n) {}
    void push(const std::vector<TrajectoryRecord>& records) {
        for (std::size_t r = 0; r < records.size(); ++r) {
            const MomentState& s = records[r].moments;
            q_mean[r].push(s.q_mean);
            p_mean[r].push(s.p_mean);
            var_q[r].push(s.var_q);
            var_p[r].push(s.var_p);
            covar[r].push(s.covar);
            defect[r].push(purity_defect(s));
            norm_drift[r].push(records[r].norm_drift);
        }
    }
};

SeriesStats to_series(const std::vector<Welford>& w) {
    SeriesStats s;
    const auto n = static_cast<Eigen::Index>(w.size());
    s.mean.resize(n);
    s.variance.resize(n);
    s.std_error.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        s.mean(i) = w[i].mean;
        s.variance(i) = w[i].variance();
        s.std_error(i) = w[i].std_error();
    }
    return s;
}

// Single-producer single-consumer ordered queue with backpressure; one per
// worker, drained round-robin so the fold order is the trajectory index.
struct WorkerQueue {
    std::mutex mu;
    std::condition_variable can_push, can_pop;
    std::deque<std::pair<int, TrajResult>> items;
    static constexpr std::size_t kCapacity = 8;
};

}  // namespace

EnsembleStats run_ensemble(const EnsembleConfig& raw) {
    const EnsembleConfig cfg = raw.validated();
    const std::size_t n_steps = static_cast<std::size_t>(cfg.n_steps());
    const double t_total = static_cast<double>(n_steps) * cfg.dt;

    MomentState m0;
    WaveFunction wf0;
    if (cfg.integrator == Integrator::Moments) {
        m0 = initial_moments(cfg.initial, cfg.params);
    } else {
        const FixedPoint fp = fixed_point(cfg.params);
        const ResolutionReport res = resolution_check(*cfg.grid, cfg.params, fp, cfg.dt);
        if (!res.ok) {
            std::string msg = "grid resolution check failed:";
            for (const ResolutionDiagnostic& d : res.issues) msg += " " + d.detail + ";";
            throw InvalidParams(msg);
        }
        wf0 = initial_wavefunction(cfg.initial, cfg.params, *cfg.grid);
    }

    const std::vector<std::size_t> rec_idx = record_steps(n_steps, cfg.record_every);
    SeriesAccum series(rec_idx.size());
    Welford inc_q, inc_p, inc_p2;
    long n_failed = 0;

    auto fold = [&](const TrajResult& res, int index) {
        if (res.fail != FailKind::None) {
            if (!cfg.permissive) rethrow(res, index);
            ++n_failed;
            return;
        }
        series.push(res.records);
        const MomentState& first = res.records.front().moments;
        const MomentState& last = res.records.back().moments;
        inc_q.push(last.q_mean - first.q_mean);
        inc_p.push(last.p_mean - first.p_mean);
        const double p2_first = first.var_p + first.p_mean * first.p_mean;
        const double p2_last = last.var_p + last.p_mean * last.p_mean;
        inc_p2.push(p2_last - p2_first);
    };

    const int hw = static_cast<int>(std::thread::hardware_concurrency());
    const int n_workers =
        std::min(cfg.workers > 0 ? cfg.workers : std::max(1, hw), cfg.n_trajectories);

    if (n_workers <= 1) {
        for (int i = 0; i < cfg.n_trajectories; ++i) fold(run_one(cfg, &wf0, m0, i), i);
    } else {
        std::vector<WorkerQueue> queues(n_workers);
        std::atomic<bool> abort{false};
        std::vector<std::thread> workers;
        workers.reserve(n_workers);
        for (int w = 0; w < n_workers; ++w) {
            workers.emplace_back([&, w] {
                for (int i = w; i < cfg.n_trajectories; i += n_workers) {
                    if (abort.load()) return;
                    TrajResult res = run_one(cfg, &wf0, m0, i);
                    std::unique_lock<std::mutex> lock(queues[w].mu);
                    queues[w].can_push.wait(lock, [&] {
                        return queues[w].items.size() < WorkerQueue::kCapacity || abort.load();
                    });
                    if (abort.load()) return;
                    queues[w].items.emplace_back(i, std::move(res));
                    queues[w].can_pop.notify_one();
                }
            });
        }
        try {
            for (int i = 0; i < cfg.n_trajectories; ++i) {
                WorkerQueue& q = queues[i % n_workers];
                std::pair<int, TrajResult> item;
                {
                    std::unique_lock<std::mutex> lock(q.mu);
                    q.can_pop.wait(lock, [&] { return !q.items.empty(); });
                    item = std::move(q.items.front());
                    q.items.pop_front();
                    q.can_push.notify_one();
                }
                fold(item.second, item.first);
            }
        } catch (...) {
            abort.store(true);
            for (WorkerQueue& q : queues) {
                std::lock_guard<std::mutex> lock(q.mu);
                q.can_push.notify_all();
            }
            for (std::thread& t : workers) t.join();
            throw;
        }
        for (std::thread& t : workers) t.join();
    }

    EnsembleStats stats;
    stats.config = cfg;
    stats.times.resize(static_cast<Eigen::Index>(rec_idx.size()));
    for (std::size_t r = 0; r < rec_idx.size(); ++r)
        stats.times(static_cast<Eigen::Index>(r)) = static_cast<double>(rec_idx[r]) * cfg.dt;
    stats.n_samples = inc_q.n;
    stats.n_failed = n_failed;
    stats.q_mean = to_series(series.q_mean);
    stats.p_mean = to_series(series.p_mean);
    stats.var_q = to_series(series.var_q);
    stats.var_p = to_series(series.var_p);
    stats.covar = to_series(series.covar);
    stats.purity_defect = to_series(series.defect);
    stats.norm_drift = to_series(series.norm_drift);

    const long n = inc_q.n;
    stats.diffusion_q = {inc_q.variance() / t_total,
                         n > 1 ? inc_q.variance() / t_total * std::sqrt(2.0 / (n - 1)) : 0.0,
                         n};
    stats.diffusion_p = {inc_p.variance() / t_total,
                         n > 1 ? inc_p.variance() / t_total * std::sqrt(2.0 / (n - 1)) : 0.0,
                         n};
    stats.heating = {inc_p2.mean / t_total, inc_p2.std_error() / t_total, n};
    return stats;
}

namespace {

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double rms = 0.0;
};

LineFit fit_line(const std::vector<double>& xs, const std::vector<double>& ys) {
    const std::size_t n = xs.size();
    double sx = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sx += xs[i];
        sy += ys[i];
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    LineFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = ys[i] - (fit.intercept + fit.slope * xs[i]);
        ss += r * r;
    }
    fit.rms = std::sqrt(ss / n);
    return fit;
}

constexpr double kWindowLow = 0.01;   // fit window in units of the stationary scale
constexpr double kWindowHigh = 0.05;
constexpr long kMinWindowPoints = 10;

MomentFit fit_moment(const Eigen::VectorXd& times, const Eigen::VectorXd& mean,
                     double target, double scale) {
    std::vector<double> ts, ys;
    for (Eigen::Index i = 0; i < times.size(); ++i) {
        const double dev = std::abs(mean(i) - target);
        if (dev >= kWindowLow * scale && dev <= kWindowHigh * scale) {
            ts.push_back(times(i));
            ys.push_back(std::log(dev));
        }
    }
    MomentFit mf;
    mf.n_points = static_cast<long>(ts.size());
    if (mf.n_points < kMinWindowPoints) return mf;
    const LineFit lf = fit_line(ts, ys);
    mf.ok = true;
    mf.rate = -lf.slope;
    mf.residual = lf.rms;
    return mf;
}

}  // namespace

RelaxationFit relaxation_fit(const EnsembleStats& stats, const FixedPoint& fp) {
    RelaxationFit out;
    out.var_q = fit_moment(stats.times, stats.var_q.mean, fp.var_q, fp.var_q);
    out.var_p = fit_moment(stats.times, stats.var_p.mean, fp.var_p, fp.var_p);
    out.covar = fit_moment(stats.times, stats.covar.mean, fp.covar, fp.covar);

    // Projection onto the left eigenvector of the +i omega eigenvalue turns
    // the spiral into a single rotating complex exponential: log|z| gives the
    // envelope, the unwrapped phase gives the frequency.
    const Eigen::Matrix3d a = stability_matrix(stats.config.params, fp);
    Eigen::EigenSolver<Eigen::Matrix3d> solver(a.transpose());
    int pick = 0;
    for (int i = 1; i < 3; ++i)
        if (solver.eigenvalues()(i).imag() > solver.eigenvalues()(pick).imag()) pick = i;
    const Eigen::Vector3cd wl = solver.eigenvectors().col(pick);

    const Eigen::Index n = stats.times.size();
    std::vector<std::complex<double>> z(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Vector3cd dev(stats.var_q.mean(i) - fp.var_q,
                                   stats.var_p.mean(i) - fp.var_p,
                                   stats.covar.mean(i) - fp.covar);
        z[i] = wl.dot(dev);  // conjugate-linear in wl; any fixed convention works
    }
    const double z0 = std::abs(z[0]);
    std::vector<double> ts, envelope, phase;
    double prev_phase = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (std::abs(z[i]) < 0.2 * z0) continue;
        double ph = std::arg(z[i]);
        if (!ts.empty()) {
            while (ph - prev_phase > M_PI) ph -= 2.0 * M_PI;
            while (ph - prev_phase < -M_PI) ph += 2.0 * M_PI;
        }
        prev_phase = ph;
        ts.push_back(stats.times(i));
        envelope.push_back(std::log(std::abs(z[i])));
        phase.push_back(ph);
    }
    out.oscillation.n_points = static_cast<long>(ts.size());
    if (out.oscillation.n_points >= kMinWindowPoints && z0 > 0.0) {
        const LineFit env = fit_line(ts, envelope);
        const LineFit ph = fit_line(ts, phase);
        out.oscillation.ok = true;
        out.oscillation.envelope_rate = -env.slope;
        out.oscillation.frequency = std::abs(ph.slope);
        out.oscillation.residual = env.rms;
    }

    if (!out.var_q.ok && !out.var_p.ok && !out.covar.ok && !out.oscillation.ok)
        throw WindowTooShort(
            "no fit window reached 10 points; the start may be on the fixed point "
            "or the run too short");
    return out;
}

ConstraintSeries constraint_monitor(const EnsembleStats& stats) {
    ConstraintSeries cs;
    cs.times = stats.times;
    cs.mean = stats.purity_defect.mean;
    cs.spread = stats.purity_defect.variance.array().sqrt();
    return cs;
}

}  // namespace sselab
