#include "sselab/noise.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <random>

#include "sselab/io.hpp"

namespace sselab {

namespace {

// splitmix64 output function (Steele, Lea, Flood 2014); used only to spread
// (seed, trajectory_index) into well-separated engine seeds.
std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
}

constexpr std::uint64_t kStreamGap = 0x9E3779B97F4A7C15ULL;

// Uniform in (0, 1], 53-bit resolution; never 0 so log() below is safe.
double uniform_open(std::mt19937_64& eng) {
    return static_cast<double>((eng() >> 11) + 1) * 0x1.0p-53;
}

}  // namespace

NoisePath make_path(std::uint64_t seed, std::uint64_t trajectory_index,
                    const PhysParams& params, double dt, std::size_t n_steps) {
    if (!std::isfinite(dt) || dt <= 0.0) throw InvalidParams("make_path: dt must be > 0");
    if (n_steps == 0) throw InvalidParams("make_path: n_steps must be >= 1");

    NoisePath path;
    path.seed = seed;
    path.trajectory_index = trajectory_index;
    path.dt = dt;
    path.increments.resize(n_steps);

    std::mt19937_64 eng(mix64(mix64(seed + kStreamGap * (trajectory_index + 1))));
    const double scale_q = std::sqrt(0.5 * params.gamma * dt);
    const double scale_p = std::sqrt(0.5 * params.gamma_prime * dt);

    for (std::size_t k = 0; k < n_steps; ++k) {
        // One Box-Muller pair per step; both uniforms are always drawn so the
        // d_xi stream does not depend on gamma_prime.
        const double u1 = uniform_open(eng);
        const double u2 = uniform_open(eng);
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        path.increments[k].d_xi = scale_q * (r * std::cos(theta));
        path.increments[k].d_xi_prime =
            scale_p == 0.0 ? 0.0 : scale_p * (r * std::sin(theta));
    }
    return path;
}

void write_path(const NoisePath& path, const std::string& filename) {
    static_assert(std::endian::native == std::endian::little,
                  "raw dumps are little-endian");
    std::vector<char> bytes(path.increments.size() * 2 * sizeof(double));
    char* out = bytes.data();
    for (const NoiseIncrement& inc : path.increments) {
        std::memcpy(out, &inc.d_xi, sizeof(double));
        std::memcpy(out + sizeof(double), &inc.d_xi_prime, sizeof(double));
        out += 2 * sizeof(double);
    }
    atomic_write(filename, bytes);
}

}  // namespace sselab
