// Command-line front end: fixed-point and stability reports, single
// trajectories (moment closure or full grid), and Monte Carlo ensembles.
// Exit codes: 0 success, 2 configuration/parameter problems (before any
// stepping), 3 runtime instability (message carries the step index).

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "sselab/analytic.hpp"
#include "sselab/ensemble.hpp"
#include "sselab/grid.hpp"
#include "sselab/io.hpp"
#include "sselab/moments.hpp"
#include "sselab/noise.hpp"

namespace {

using sselab::InvalidParams;

// Tracks which CLI options may also come from the JSON config file; flags
// given on the command line win.  Unknown config keys are rejected.
class ConfigMerger {
  public:
    void bind(const std::string& key, CLI::Option* opt,
              std::function<void(const nlohmann::json&)> apply) {
        entries_[key] = {opt, std::move(apply)};
    }

    void merge(const std::string& path) const {
        if (path.empty()) return;
        std::ifstream in(path);
        if (!in) throw InvalidParams("cannot open config file " + path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw InvalidParams(std::string("config parse error: ") + e.what());
        }
        if (!j.is_object()) throw InvalidParams("config root must be a JSON object");
        for (const auto& [key, value] : j.items()) {
            const auto it = entries_.find(key);
            if (it == entries_.end())
                throw InvalidParams("unknown config key \"" + key + "\"");
            if (it->second.first->count() > 0) continue;  // flag overrides file
            try {
                it->second.second(value);
            } catch (const nlohmann::json::exception& e) {
                throw InvalidParams("config key \"" + key + "\": " + e.what());
            }
        }
    }

  private:
    std::map<std::string, std::pair<CLI::Option*, std::function<void(const nlohmann::json&)>>>
        entries_;
};

template <typename T>
CLI::Option* bind_option(CLI::App* cmd, ConfigMerger& merger, const std::string& flag,
                         T& var, const std::string& desc) {
    CLI::Option* opt = cmd->add_option(flag, var, desc);
    std::string key = flag.substr(2);
    std::replace(key.begin(), key.end(), '-', '_');
    merger.bind(key, opt, [&var](const nlohmann::json& j) { var = j.get<T>(); });
    return opt;
}

CLI::Option* bind_flag(CLI::App* cmd, ConfigMerger& merger, const std::string& flag,
                       bool& var, const std::string& desc) {
    CLI::Option* opt = cmd->add_flag(flag, var, desc);
    std::string key = flag.substr(2);
    std::replace(key.begin(), key.end(), '-', '_');
    merger.bind(key, opt, [&var](const nlohmann::json& j) { var = j.get<bool>(); });
    return opt;
}

sselab::InitialState parse_initial(const std::string& text) {
    sselab::InitialState init;
    const auto colon = text.find(':');
    const std::string head = text.substr(0, colon);
    const std::string tail = colon == std::string::npos ? "" : text.substr(colon + 1);
    try {
        if (head == "fixed-point" && tail.empty()) {
            init.kind = sselab::InitialState::Kind::FixedPoint;
        } else if (head == "squeezed") {
            init.kind = sselab::InitialState::Kind::Squeezed;
            init.factor = std::stod(tail);
        } else if (head == "displaced") {
            init.kind = sselab::InitialState::Kind::Displaced;
            const auto comma = tail.find(',');
            if (comma == std::string::npos) throw InvalidParams("");
            init.q_offset = std::stod(tail.substr(0, comma));
            init.p_offset = std::stod(tail.substr(comma + 1));
        } else if (head == "eigen-real" || head == "eigen-complex") {
            init.kind = sselab::InitialState::Kind::EigenPerturbed;
            init.direction = head == "eigen-real" ? sselab::EigenDirection::Real
                                                  : sselab::EigenDirection::ComplexPair;
            init.rel_size = std::stod(tail);
        } else {
            throw InvalidParams("");
        }
    } catch (const std::exception&) {
        throw InvalidParams(
            "bad --initial \"" + text +
            "\"; expected fixed-point, squeezed:<factor>, displaced:<q>,<p>, "
            "eigen-real:<size> or eigen-complex:<size>");
    }
    return init;
}

void emit(const std::string& output, const std::string& content) {
    if (output.empty()) {
        std::fputs(content.c_str(), stdout);
    } else {
        sselab::atomic_write(output, content);
    }
}

std::vector<std::size_t> record_steps(std::size_t n_steps, int record_every) {
    std::vector<std::size_t> idx{0};
    for (std::size_t k = record_every; k < n_steps; k += record_every) idx.push_back(k);
    idx.push_back(n_steps);
    return idx;
}

struct CommonOpts {
    double mass = 1.0;
    double gamma = 1.0;
    double gamma_prime = 0.5;
    std::string output;
    std::string config;

    sselab::PhysParams params() const {
        return sselab::PhysParams::validated(mass, gamma, gamma_prime);
    }
};

void add_common(CLI::App* cmd, ConfigMerger& merger, CommonOpts& c) {
    bind_option(cmd, merger, "--mass", c.mass, "particle mass m");
    bind_option(cmd, merger, "--gamma", c.gamma, "position measurement strength");
    bind_option(cmd, merger, "--gamma-prime", c.gamma_prime, "momentum measurement strength");
    bind_option(cmd, merger, "--output", c.output, "output file (default: stdout)");
    cmd->add_option("--config", c.config, "JSON config file; flags override its values");
}

struct SimOpts {
    double dt = 1e-3;
    double t_final = 1.0;
    std::uint64_t seed = 0;
    std::uint64_t trajectory_index = 0;
    int record_every = 1;
    std::string initial = "fixed-point";
    std::string noise_dump;
};

void add_sim(CLI::App* cmd, ConfigMerger& merger, SimOpts& s) {
    bind_option(cmd, merger, "--dt", s.dt, "time step");
    bind_option(cmd, merger, "--t-final", s.t_final, "integration horizon");
    bind_option(cmd, merger, "--seed", s.seed, "noise seed");
    bind_option(cmd, merger, "--trajectory-index", s.trajectory_index,
                "noise substream index");
    bind_option(cmd, merger, "--record-every", s.record_every,
                "record every k-th step (initial and final always kept)");
    bind_option(cmd, merger, "--initial", s.initial,
                "fixed-point | squeezed:<factor> | displaced:<q>,<p> | "
                "eigen-real:<size> | eigen-complex:<size>");
    bind_option(cmd, merger, "--noise-dump", s.noise_dump,
                "write the raw noise increments to this file");
}

struct GridOpts {
    int n_points = 1024;
    double box_length = 0.0;  // 0 = auto, 40 sigma_inf
    std::string snapshot_out;
};

void add_grid(CLI::App* cmd, ConfigMerger& merger, GridOpts& g, bool with_snapshot) {
    bind_option(cmd, merger, "--n-points", g.n_points, "lattice size (power of two >= 128)");
    bind_option(cmd, merger, "--box-length", g.box_length,
                "box length L (0 = auto, 40 sigma_inf)");
    if (with_snapshot)
        bind_option(cmd, merger, "--snapshot-out", g.snapshot_out,
                    "write the final wavefunction snapshot to this file");
}

sselab::GridSpec resolve_grid(const GridOpts& g, const sselab::FixedPoint& fp) {
    const double box =
        g.box_length > 0.0 ? g.box_length : 40.0 * std::sqrt(fp.var_q);
    return sselab::GridSpec::validated(g.n_points, box);
}

int n_steps_for(double t_final, double dt) {
    if (!(dt > 0.0) || !(t_final >= dt))
        throw InvalidParams("need dt > 0 and t_final >= dt");
    return std::max(1, static_cast<int>(std::llround(t_final / dt)));
}

int run_fixed_point(const CommonOpts& c) {
    const sselab::PhysParams params = c.params();
    const sselab::FixedPoint fp = sselab::fixed_point(params);
    const sselab::StabilityReport report = sselab::stability_report(params, fp);
    emit(c.output, sselab::fixed_point_json(params, fp, report));
    return 0;
}

int run_stability(const CommonOpts& c, double fd_step) {
    const sselab::PhysParams params = c.params();
    const sselab::FixedPoint fp = sselab::fixed_point(params);
    const sselab::StabilityReport report = sselab::stability_report(params, fp);
    const sselab::MomentState at{0.0, 0.0, fp.var_q, fp.var_p, fp.covar};
    const Eigen::Matrix3d fd = sselab::jacobian_fd(params, at, fd_step);
    emit(c.output, sselab::stability_json(params, fp, report, fd));
    return 0;
}

int run_simulate_moments(const CommonOpts& c, const SimOpts& s) {
    const sselab::PhysParams params = c.params();
    const sselab::InitialState init = parse_initial(s.initial);
    if (s.record_every < 1) throw InvalidParams("record_every must be >= 1");
    const int n = n_steps_for(s.t_final, s.dt);
    const sselab::NoisePath path =
        sselab::make_path(s.seed, s.trajectory_index, params, s.dt,
                          static_cast<std::size_t>(n));
    if (!s.noise_dump.empty()) sselab::write_path(path, s.noise_dump);
    const sselab::MomentState m0 = sselab::initial_moments(init, params);
    const sselab::MomentTrajectory traj = sselab::simulate(m0, params, path);
    std::vector<sselab::TrajectoryRecord> records;
    for (std::size_t k : record_steps(path.increments.size(), s.record_every))
        records.push_back(traj.records[k]);
    emit(c.output, sselab::trajectory_csv(records, /*with_norm_drift=*/false));
    return 0;
}

int run_simulate_grid(const CommonOpts& c, const SimOpts& s, const GridOpts& g) {
    const sselab::PhysParams params = c.params();
    const sselab::InitialState init = parse_initial(s.initial);
    if (s.record_every < 1) throw InvalidParams("record_every must be >= 1");
    const sselab::FixedPoint fp = sselab::fixed_point(params);
    const sselab::GridSpec grid = resolve_grid(g, fp);

    const sselab::ResolutionReport res =
        sselab::resolution_check(grid, params, fp, s.dt);
    if (!res.ok) {
        std::string msg = "resolution check failed:";
        for (const auto& d : res.issues)
            msg += "\n  " + d.detail + " (measured " + sselab::format_double(d.measured) +
                   ", limit " + sselab::format_double(d.limit) + ")";
        throw InvalidParams(msg);
    }

    const int n = n_steps_for(s.t_final, s.dt);
    const sselab::NoisePath path =
        sselab::make_path(s.seed, s.trajectory_index, params, s.dt,
                          static_cast<std::size_t>(n));
    if (!s.noise_dump.empty()) sselab::write_path(path, s.noise_dump);

    const sselab::WaveFunction wf0 = sselab::initial_wavefunction(init, params, grid);
    const sselab::GridTrajectory traj =
        sselab::simulate(wf0, params, path, s.record_every);
    emit(c.output, sselab::trajectory_csv(traj.records, /*with_norm_drift=*/true));
    if (!g.snapshot_out.empty()) {
        const double t_total = static_cast<double>(n) * s.dt;
        sselab::atomic_write(g.snapshot_out,
                             sselab::snapshot_binary(traj.final_state, t_total));
    }
    return 0;
}

struct EnsembleOpts {
    std::string integrator = "moments";
    int n_trajectories = 100;
    int workers = 0;
    bool permissive = false;
    std::string csv_output;
};

int run_ensemble_cmd(const CommonOpts& c, const SimOpts& s, const GridOpts& g,
                     const EnsembleOpts& e) {
    sselab::EnsembleConfig cfg;
    cfg.params = c.params();
    if (e.integrator == "moments") {
        cfg.integrator = sselab::Integrator::Moments;
    } else if (e.integrator == "grid") {
        cfg.integrator = sselab::Integrator::Grid;
        cfg.grid = resolve_grid(g, sselab::fixed_point(cfg.params));
    } else {
        throw InvalidParams("--integrator must be moments or grid");
    }
    cfg.n_trajectories = e.n_trajectories;
    cfg.dt = s.dt;
    cfg.t_final = s.t_final;
    cfg.seed = s.seed;
    cfg.initial = parse_initial(s.initial);
    cfg.record_every = s.record_every;
    cfg.workers = e.workers;
    cfg.permissive = e.permissive;

    const sselab::EnsembleStats stats = sselab::run_ensemble(cfg);
    emit(c.output, sselab::ensemble_json(stats));
    if (!e.csv_output.empty())
        sselab::atomic_write(e.csv_output, sselab::ensemble_csv(stats));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"measurement-driven wave packet laboratory"};
    app.require_subcommand(1);

    ConfigMerger merge_fp, merge_st, merge_sm, merge_sg, merge_en;

    CLI::App* cmd_fp = app.add_subcommand("fixed-point",
                                          "stationary moments, phase constants, stability");
    CommonOpts c_fp;
    add_common(cmd_fp, merge_fp, c_fp);

    CLI::App* cmd_st = app.add_subcommand(
        "stability", "closed-form vs finite-difference linearisation");
    CommonOpts c_st;
    double fd_step = 1e-6;
    add_common(cmd_st, merge_st, c_st);
    bind_option(cmd_st, merge_st, "--fd-step", fd_step, "finite-difference stencil");

    CLI::App* cmd_sm = app.add_subcommand("simulate-moments",
                                          "one Gaussian moment-closure trajectory");
    CommonOpts c_sm;
    SimOpts s_sm;
    add_common(cmd_sm, merge_sm, c_sm);
    add_sim(cmd_sm, merge_sm, s_sm);

    CLI::App* cmd_sg = app.add_subcommand("simulate-grid",
                                          "one full wavefunction trajectory");
    CommonOpts c_sg;
    SimOpts s_sg;
    GridOpts g_sg;
    add_common(cmd_sg, merge_sg, c_sg);
    add_sim(cmd_sg, merge_sg, s_sg);
    add_grid(cmd_sg, merge_sg, g_sg, /*with_snapshot=*/true);

    CLI::App* cmd_en = app.add_subcommand("ensemble", "Monte Carlo over trajectories");
    CommonOpts c_en;
    SimOpts s_en;
    GridOpts g_en;
    EnsembleOpts e_en;
    add_common(cmd_en, merge_en, c_en);
    add_sim(cmd_en, merge_en, s_en);
    add_grid(cmd_en, merge_en, g_en, /*with_snapshot=*/false);
    bind_option(cmd_en, merge_en, "--integrator", e_en.integrator, "moments | grid");
    bind_option(cmd_en, merge_en, "--n-trajectories", e_en.n_trajectories,
                "ensemble size (>= 2)");
    bind_option(cmd_en, merge_en, "--workers", e_en.workers,
                "worker threads (0 = hardware concurrency)");
    bind_option(cmd_en, merge_en, "--csv-output", e_en.csv_output,
                "also write the per-time-point series CSV here");
    bind_flag(cmd_en, merge_en, "--permissive", e_en.permissive,
              "record failed trajectories and continue instead of aborting");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (cmd_fp->parsed()) {
            merge_fp.merge(c_fp.config);
            return run_fixed_point(c_fp);
        }
        if (cmd_st->parsed()) {
            merge_st.merge(c_st.config);
            return run_stability(c_st, fd_step);
        }
        if (cmd_sm->parsed()) {
            merge_sm.merge(c_sm.config);
            return run_simulate_moments(c_sm, s_sm);
        }
        if (cmd_sg->parsed()) {
            merge_sg.merge(c_sg.config);
            return run_simulate_grid(c_sg, s_sg, g_sg);
        }
        if (cmd_en->parsed()) {
            merge_en.merge(c_en.config);
            return run_ensemble_cmd(c_en, s_en, g_en, e_en);
        }
    } catch (const sselab::StepUnstable& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const sselab::StepTooLarge& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const sselab::PacketEscaped& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const sselab::InvalidParams& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const sselab::GridTooNarrow& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const sselab::OffLattice& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const sselab::NotNormalized& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const sselab::WindowTooShort& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
