#include "sselab/io.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace sselab {

std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

namespace {

void atomic_write_impl(const std::string& path, const char* data, std::size_t size) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open " + tmp.string() + " for writing");
        out.write(data, static_cast<std::streamsize>(size));
        if (!out) {
            out.close();
            std::error_code ec;
            fs::remove(tmp, ec);
            throw Error("short write to " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw Error("cannot rename " + tmp.string() + " to " + path + ": " + ec.message());
    }
}

}  // namespace

void atomic_write(const std::string& path, const std::string& content) {
    atomic_write_impl(path, content.data(), content.size());
}

void atomic_write(const std::string& path, const std::vector<char>& bytes) {
    atomic_write_impl(path, bytes.data(), bytes.size());
}

std::string trajectory_csv(const std::vector<TrajectoryRecord>& records,
                           bool with_norm_drift) {
    std::string out = "t,q_mean,p_mean,var_q,var_p,covar";
    if (with_norm_drift) out += ",norm_drift";
    out += "\n";
    for (const TrajectoryRecord& rec : records) {
        out += format_double(rec.time);
        out += ',';
        out += format_double(rec.moments.q_mean);
        out += ',';
        out += format_double(rec.moments.p_mean);
        out += ',';
        out += format_double(rec.moments.var_q);
        out += ',';
        out += format_double(rec.moments.var_p);
        out += ',';
        out += format_double(rec.moments.covar);
        if (with_norm_drift) {
            out += ',';
            out += format_double(rec.norm_drift);
        }
        out += '\n';
    }
    return out;
}

std::string ensemble_csv(const EnsembleStats& stats) {
    static const char* kNames[] = {"q_mean",       "p_mean",     "var_q", "var_p",
                                   "covar",        "purity_defect", "norm_drift"};
    const SeriesStats* series[] = {&stats.q_mean, &stats.p_mean,        &stats.var_q,
                                   &stats.var_p,  &stats.covar,         &stats.purity_defect,
                                   &stats.norm_drift};
    std::string out = "t,n";
    for (const char* name : kNames) {
        out += std::string(",") + name + "_mean," + name + "_var," + name + "_se";
    }
    out += "\n";
    for (Eigen::Index i = 0; i < stats.times.size(); ++i) {
        out += format_double(stats.times(i));
        out += ',' + std::to_string(stats.n_samples);
        for (const SeriesStats* s : series) {
            out += ',';
            out += format_double(s->mean(i));
            out += ',';
            out += format_double(s->variance(i));
            out += ',';
            out += format_double(s->std_error(i));
        }
        out += '\n';
    }
    return out;
}

namespace {

using nlohmann::json;

json params_json(const PhysParams& p) {
    return {{"mass", p.mass}, {"gamma", p.gamma}, {"gamma_prime", p.gamma_prime}};
}

json complex_json(const std::complex<double>& z) {
    return {{"re", z.real()}, {"im", z.imag()}};
}

json matrix_json(const Eigen::Matrix3d& m) {
    json rows = json::array();
    for (int i = 0; i < 3; ++i) {
        json row = json::array();
        for (int j = 0; j < 3; ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

json fp_json(const FixedPoint& fp) {
    return {{"var_q_inf", fp.var_q},
            {"var_p_inf", fp.var_p},
            {"covar_inf", fp.covar},
            {"e_prime", fp.e_prime},
            {"e", fp.e}};
}

std::string initial_name(const InitialState& init) {
    switch (init.kind) {
        case InitialState::Kind::FixedPoint: return "fixed-point";
        case InitialState::Kind::Squeezed: return "squeezed";
        case InitialState::Kind::Displaced: return "displaced";
        case InitialState::Kind::EigenPerturbed: return "eigen-perturbed";
    }
    return "?";
}

json rate_json(const RateEstimate& r) {
    return {{"rate", r.rate}, {"std_error", r.std_error}, {"n", r.n}};
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

}  // namespace

std::string ensemble_json(const EnsembleStats& stats) {
    const EnsembleConfig& cfg = stats.config;
    json config = {{"params", params_json(cfg.params)},
                   {"integrator", cfg.integrator == Integrator::Grid ? "grid" : "moments"},
                   {"n_trajectories", cfg.n_trajectories},
                   {"dt", cfg.dt},
                   {"t_final", cfg.t_final},
                   {"seed", cfg.seed},
                   {"record_every", cfg.record_every},
                   {"initial", initial_name(cfg.initial)}};
    if (cfg.grid)
        config["grid"] = {{"n_points", cfg.grid->n_points},
                          {"box_length", cfg.grid->box_length}};

    const Eigen::Index last = stats.times.size() - 1;
    json final_point = {
        {"time", stats.times(last)},
        {"q_mean", {{"mean", stats.q_mean.mean(last)}, {"std_error", stats.q_mean.std_error(last)}}},
        {"p_mean", {{"mean", stats.p_mean.mean(last)}, {"std_error", stats.p_mean.std_error(last)}}},
        {"var_q", {{"mean", stats.var_q.mean(last)}, {"std_error", stats.var_q.std_error(last)}}},
        {"var_p", {{"mean", stats.var_p.mean(last)}, {"std_error", stats.var_p.std_error(last)}}},
        {"covar", {{"mean", stats.covar.mean(last)}, {"std_error", stats.covar.std_error(last)}}},
        {"purity_defect",
         {{"mean", stats.purity_defect.mean(last)},
          {"std_error", stats.purity_defect.std_error(last)}}}};

    json j = {{"config", config},
              {"n_samples", stats.n_samples},
              {"n_failed", stats.n_failed},
              {"final", final_point},
              {"diffusion_q", rate_json(stats.diffusion_q)},
              {"diffusion_p", rate_json(stats.diffusion_p)},
              {"heating", rate_json(stats.heating)}};
    return dump(j);
}

std::string fixed_point_json(const PhysParams& params, const FixedPoint& fp,
                             const StabilityReport& report) {
    json eigs = json::array();
    for (const auto& z : report.numeric) eigs.push_back(complex_json(z));
    const double constraint =
        1.0 + 4.0 * fp.covar * fp.covar - 4.0 * fp.var_q * fp.var_p;
    json j = {{"params", params_json(params)},
              {"fixed_point", fp_json(fp)},
              {"constraint_residual", constraint},
              {"stability",
               {{"matrix", matrix_json(report.matrix)},
                {"eigenvalues", eigs},
                {"all_damped", report.all_damped},
                {"max_rel_mismatch", report.max_rel_mismatch}}}};
    return dump(j);
}

std::string stability_json(const PhysParams& params, const FixedPoint& fp,
                           const StabilityReport& report,
                           const Eigen::Matrix3d& jacobian_fd) {
    const Eigen::Matrix3d diff = (jacobian_fd - report.matrix).cwiseAbs();
    json eigs = json::array();
    for (const auto& z : report.numeric)
        eigs.push_back({{"re", z.real()}, {"im", z.imag()}, {"damped", z.real() < 0.0}});
    json j = {{"params", params_json(params)},
              {"fixed_point", fp_json(fp)},
              {"closed_form_matrix", matrix_json(report.matrix)},
              {"finite_difference_matrix", matrix_json(jacobian_fd)},
              {"max_abs_difference", diff.maxCoeff()},
              {"eigenvalues", eigs}};
    return dump(j);
}

std::vector<char> snapshot_binary(const WaveFunction& wf, double time) {
    static_assert(std::endian::native == std::endian::little,
                  "snapshots are little-endian");
    const std::uint64_t n = static_cast<std::uint64_t>(wf.spec.n_points);
    std::vector<char> bytes(sizeof(std::uint64_t) + 2 * sizeof(double) +
                            2 * sizeof(double) * n);
    char* out = bytes.data();
    std::memcpy(out, &n, sizeof(n));
    out += sizeof(n);
    std::memcpy(out, &wf.spec.box_length, sizeof(double));
    out += sizeof(double);
    std::memcpy(out, &time, sizeof(double));
    out += sizeof(double);
    for (int j = 0; j < wf.spec.n_points; ++j) {
        const double re = wf.amp(j).real();
        const double im = wf.amp(j).imag();
        std::memcpy(out, &re, sizeof(double));
        std::memcpy(out + sizeof(double), &im, sizeof(double));
        out += 2 * sizeof(double);
    }
    return bytes;
}

WaveFunction read_snapshot(const std::string& path, double* time_out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open snapshot " + path);
    std::uint64_t n = 0;
    double box_length = 0.0, time = 0.0;
    in.read(reinterpret_cast<char*>(&n), sizeof(n));
    in.read(reinterpret_cast<char*>(&box_length), sizeof(box_length));
    in.read(reinterpret_cast<char*>(&time), sizeof(time));
    if (!in || n == 0 || n > (1u << 24))
        throw Error("snapshot " + path + " has a bad header");
    WaveFunction wf;
    wf.spec = GridSpec::validated(static_cast<int>(n), box_length);
    wf.amp.resize(static_cast<Eigen::Index>(n));
    for (std::uint64_t j = 0; j < n; ++j) {
        double re = 0.0, im = 0.0;
        in.read(reinterpret_cast<char*>(&re), sizeof(re));
        in.read(reinterpret_cast<char*>(&im), sizeof(im));
        wf.amp(static_cast<Eigen::Index>(j)) = {re, im};
    }
    if (!in) throw Error("snapshot " + path + " truncated");
    if (time_out) *time_out = time;
    return wf;
}

}  // namespace sselab
