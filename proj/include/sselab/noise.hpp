#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sselab/types.hpp"

// Deterministic noise-path generation.  Reproducibility is a contract:
// the same (seed, trajectory_index, params, dt, n_steps) yields the same
// increments bit for bit, on any platform.  To that end the generator and
// the Gaussian transform are both pinned:
//
//   * substream seed = mix(mix(seed + K*(trajectory_index + 1))) where
//     mix is the splitmix64 output function and K = 0x9E3779B97F4A7C15;
//   * engine: std::mt19937_64 (output fully specified by the standard);
//   * uniforms: (x >> 11 + 1) * 2^-53 in (0, 1];
//   * Gaussians: one Box-Muller pair per step, cosine branch -> d_xi,
//     sine branch -> d_xi_prime.
//
// Increments are stored pre-scaled: Var d_xi = gamma dt / 2 and
// Var d_xi_prime = gamma_prime dt / 2 (exactly 0.0 when gamma_prime = 0).
namespace sselab {

struct NoisePath {
    std::uint64_t seed = 0;
    std::uint64_t trajectory_index = 0;
    double dt = 0.0;
    std::vector<NoiseIncrement> increments;
};

NoisePath make_path(std::uint64_t seed, std::uint64_t trajectory_index,
                    const PhysParams& params, double dt, std::size_t n_steps);

// Raw dump: n_steps interleaved (d_xi, d_xi_prime) pairs as little-endian
// 64-bit floats, no header.
void write_path(const NoisePath& path, const std::string& filename);

}  // namespace sselab
