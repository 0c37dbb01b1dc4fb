#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "mfcrowd/forward.hpp"
#include "mfcrowd/grid.hpp"
#include "mfcrowd/kernel.hpp"

namespace mfcrowd {

/// splitmix64; one 8-byte state per particle keeps substreams independent
/// of the order particles are advanced in.
class SplitMix64 {
 public:
    using result_type = std::uint64_t;

    explicit SplitMix64(std::uint64_t state) : state_(state) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        state_ += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30u)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27u)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31u);
    }

 private:
    std::uint64_t state_;
};

/// Seed of particle i's substream, a function of (seed, i) only.
std::uint64_t particle_stream_seed(std::uint64_t seed, std::size_t particle);

/// Particle positions at a subset of time steps. positions[s][i] is
/// particle i at step steps[s]; all values lie in [0, length).
struct ParticleEnsemble {
    std::size_t n_particles = 0;
    std::uint64_t seed = 0;
    std::vector<std::size_t> steps;
    std::vector<std::vector<double>> positions;

    /// Index s with steps[s] == step; throws std::out_of_range if not stored.
    std::size_t stored_index(std::size_t step) const;
    bool has_full_trajectories(const TimeGrid& time) const;
};

/// I.i.d. draws from the cell-wise constant density m0 (cell chosen by
/// inverse CDF, position uniform within the cell).
std::vector<double> sample_initial_positions(std::size_t n, std::span<const double> m0,
                                             const TorusGrid& grid, std::uint64_t seed);

/// Euler-Maruyama for dX = a(t, X) dt + sigma dW with nearest-cell control
/// lookup. Stores every `stride`-th step plus the final one.
ParticleEnsemble simulate_particles(std::size_t n, const ControlField& control,
                                    std::span<const double> m0, const Dynamics& dynamics,
                                    const TorusGrid& grid, const TimeGrid& time,
                                    std::uint64_t seed, std::size_t stride = 1);

/// Discrete risk of particle i:
///   sum_k dt [1/2 a(t_k, X_i)^2 + C/(N-1) sum_{j != i} phi(X_i - X_j)] + Psi(X_i(T))
/// with phi and Psi looked up at nearest cells. Needs full trajectories.
double empirical_risk(std::size_t i, const ParticleEnsemble& ensemble, const ControlField& control,
                      const AversionKernel& kernel, double aversion_weight,
                      std::span<const double> psi, const TorusGrid& grid, const TimeGrid& time);

/// Risks of all particles in one pass; the aversion sum is evaluated on
/// cell counts, which costs O(N + n_x * taps) per step.
std::vector<double> empirical_risks(const ParticleEnsemble& ensemble, const ControlField& control,
                                    const AversionKernel& kernel, double aversion_weight,
                                    std::span<const double> psi, const TorusGrid& grid,
                                    const TimeGrid& time);

struct ParticleRun {
    ParticleEnsemble ensemble;
    std::vector<double> risks;
};

/// simulate_particles and empirical_risks fused, so trajectories need not
/// be kept: only every `stride`-th step is stored.
ParticleRun simulate_with_risk(std::size_t n, const ControlField& control,
                               std::span<const double> m0, const Dynamics& dynamics,
                               const TorusGrid& grid, const TimeGrid& time, std::uint64_t seed,
                               const AversionKernel& kernel, double aversion_weight,
                               std::span<const double> psi, std::size_t stride);

/// Cell counts / (N h) at stored step `step`.
std::vector<double> empirical_histogram(const ParticleEnsemble& ensemble, std::size_t step,
                                        const TorusGrid& grid);
std::vector<double> empirical_histogram(std::span<const double> positions, const TorusGrid& grid);

/// W2 between two equal-size empirical measures on the circle of the given
/// circumference, using geodesic distance. The optimal coupling is a cyclic
/// shift of the sorted samples; all N shifts are tried.
double wasserstein2_torus(std::span<const double> a, std::span<const double> b, double length);

/// N atoms at the (k - 1/2)/N quantiles of a cell-wise constant density.
std::vector<double> density_quantiles(std::span<const double> density, const TorusGrid& grid,
                                      std::size_t n);

/// W2 between samples and a density through its N-point quantile measure.
double wasserstein2_to_density(std::span<const double> samples, std::span<const double> density,
                               const TorusGrid& grid);

}  // namespace mfcrowd
