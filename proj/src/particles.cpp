#include "mfcrowd/particles.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include <boost/random/normal_distribution.hpp>

#include "mfcrowd/errors.hpp"

namespace mfcrowd {

namespace {

struct ParticleStream {
    SplitMix64 engine;
    // ziggurat sampler; the particle loop is dominated by normal draws
    boost::random::normal_distribution<double> normal{0.0, 1.0};

    explicit ParticleStream(std::uint64_t seed) : engine(seed) {}
    double gaussian() { return normal(engine); }
    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine); }
};

void require_particles(std::size_t n) {
    if (n == 0) {
        throw std::invalid_argument("need at least one particle");
    }
}

void require_control_shape(const ControlField& control, const TorusGrid& grid,
                           const TimeGrid& time) {
    if (control.slices() != time.steps() || control.width() != grid.size()) {
        throw DimensionError("control field does not match the grids");
    }
}

void require_nonlocal(const AversionKernel& kernel) {
    if (kernel.is_local()) {
        throw ModeError("particle aversion needs a nonlocal kernel");
    }
}

std::vector<double> cell_cdf(std::span<const double> m0, const TorusGrid& grid) {
    std::vector<double> cdf(m0.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < m0.size(); ++i) {
        acc += m0[i] * grid.h();
        cdf[i] = acc;
    }
    for (double& c : cdf) {
        c /= acc;
    }
    return cdf;
}

double draw_initial(ParticleStream& stream, const std::vector<double>& cdf,
                    const TorusGrid& grid) {
    const double u = stream.uniform();
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const std::size_t cell =
        std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
    const double offset = stream.uniform() - 0.5;
    return grid.wrap_position(grid.node(cell) + offset * grid.h());
}

// Positions stay in [0, L) and a step rarely crosses more than one period.
double wrap_step(double x, const TorusGrid& grid) {
    const double l = grid.length();
    if (x >= 0.0 && x < l) {
        return x;
    }
    if (x >= l && x < 2.0 * l) {
        return x - l;
    }
    if (x < 0.0 && x >= -l) {
        const double r = x + l;
        return r < l ? r : 0.0;
    }
    return grid.wrap_position(x);
}

// nearest_cell for x already in [0, L)
std::size_t cell_of(double x, const TorusGrid& grid) {
    const auto c = static_cast<std::size_t>(x / grid.h() + 0.5);
    return c == grid.size() ? 0 : c;
}

bool stored_step(std::size_t k, std::size_t stride, std::size_t n_t) {
    return k % stride == 0 || k == n_t;
}

// Fills out[i] = (1/(N-1)) sum_{j != i} phi(X_i - X_j) from cell counts.
void aversion_sums(std::span<const double> positions, const AversionKernel& kernel,
                   const TorusGrid& grid, std::vector<std::size_t>& cells,
                   std::vector<double>& counts, std::vector<double>& conv, std::span<double> out) {
    const std::size_t n = positions.size();
    const std::size_t n_x = grid.size();
    std::fill(counts.begin(), counts.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        cells[i] = cell_of(positions[i], grid);
        counts[cells[i]] += 1.0;
    }
    std::fill(conv.begin(), conv.end(), 0.0);
    for (const auto& tap : kernel.taps()) {
        for (std::size_t c = 0; c < n_x; ++c) {
            conv[(c + tap.offset) % n_x] += tap.weight * counts[c];
        }
    }
    if (n == 1) {
        out[0] = 0.0;
        return;
    }
    const double self = kernel.weights()[0];
    const double scale = 1.0 / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = (conv[cells[i]] - self) * scale;
    }
}

}  // namespace

std::uint64_t particle_stream_seed(std::uint64_t seed, std::size_t particle) {
    SplitMix64 mix(seed ^ (0x6a09e667f3bcc909ull * (static_cast<std::uint64_t>(particle) + 1)));
    mix();
    return mix();
}

std::size_t ParticleEnsemble::stored_index(std::size_t step) const {
    const auto it = std::lower_bound(steps.begin(), steps.end(), step);
    if (it == steps.end() || *it != step) {
        throw std::out_of_range("time step not stored in the ensemble");
    }
    return static_cast<std::size_t>(it - steps.begin());
}

bool ParticleEnsemble::has_full_trajectories(const TimeGrid& time) const {
    return steps.size() == time.steps() + 1;
}

std::vector<double> sample_initial_positions(std::size_t n, std::span<const double> m0,
                                             const TorusGrid& grid, std::uint64_t seed) {
    require_particles(n);
    check_initial_density(m0, grid);
    const auto cdf = cell_cdf(m0, grid);
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) {
        ParticleStream stream(particle_stream_seed(seed, i));
        x[i] = draw_initial(stream, cdf, grid);
    }
    return x;
}

ParticleRun simulate_with_risk(std::size_t n, const ControlField& control,
                               std::span<const double> m0, const Dynamics& dynamics,
                               const TorusGrid& grid, const TimeGrid& time, std::uint64_t seed,
                               const AversionKernel& kernel, double aversion_weight,
                               std::span<const double> psi, std::size_t stride) {
    require_particles(n);
    require_control_shape(control, grid, time);
    check_initial_density(m0, grid);
    if (stride == 0) {
        throw std::invalid_argument("stride must be positive");
    }
    const bool with_risk = !psi.empty();
    if (with_risk) {
        if (psi.size() != grid.size()) {
            throw DimensionError("terminal cost length does not match n_x");
        }
        if (aversion_weight != 0.0) {
            require_nonlocal(kernel);
        }
    }

    const std::size_t n_t = time.steps();
    const double dt = time.dt();
    const double noise = dynamics.sigma * std::sqrt(dt);
    const auto cdf = cell_cdf(m0, grid);

    std::vector<ParticleStream> streams;
    streams.reserve(n);
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) {
        streams.emplace_back(particle_stream_seed(seed, i));
        x[i] = draw_initial(streams[i], cdf, grid);
    }

    ParticleRun run;
    run.ensemble.n_particles = n;
    run.ensemble.seed = seed;
    run.risks.assign(with_risk ? n : 0, 0.0);

    std::vector<std::size_t> cells(n);
    std::vector<double> counts(grid.size());
    std::vector<double> conv(grid.size());
    std::vector<double> aversion(n);

    for (std::size_t k = 0;; ++k) {
        if (stored_step(k, stride, n_t)) {
            run.ensemble.steps.push_back(k);
            run.ensemble.positions.push_back(x);
        }
        if (k == n_t) {
            break;
        }
        const auto a = control.slice(k);
        if (with_risk && aversion_weight != 0.0) {
            aversion_sums(x, kernel, grid, cells, counts, conv, aversion);
        } else {
            for (std::size_t i = 0; i < n; ++i) {
                cells[i] = cell_of(x[i], grid);
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            const double drift = a[cells[i]];
            if (with_risk) {
                double running = 0.5 * drift * drift;
                if (aversion_weight != 0.0) {
                    running += aversion_weight * aversion[i];
                }
                run.risks[i] += dt * running;
            }
            x[i] = wrap_step(x[i] + drift * dt + noise * streams[i].gaussian(), grid);
        }
    }
    if (with_risk) {
        for (std::size_t i = 0; i < n; ++i) {
            run.risks[i] += psi[grid.nearest_cell(x[i])];
        }
    }
    return run;
}

ParticleEnsemble simulate_particles(std::size_t n, const ControlField& control,
                                    std::span<const double> m0, const Dynamics& dynamics,
                                    const TorusGrid& grid, const TimeGrid& time,
                                    std::uint64_t seed, std::size_t stride) {
    return simulate_with_risk(n, control, m0, dynamics, grid, time, seed, AversionKernel::local(),
                              0.0, {}, stride)
        .ensemble;
}

double empirical_risk(std::size_t i, const ParticleEnsemble& ensemble, const ControlField& control,
                      const AversionKernel& kernel, double aversion_weight,
                      std::span<const double> psi, const TorusGrid& grid, const TimeGrid& time) {
    if (i >= ensemble.n_particles) {
        throw std::out_of_range("particle index out of range");
    }
    require_nonlocal(kernel);
    require_control_shape(control, grid, time);
    if (!ensemble.has_full_trajectories(time)) {
        throw std::invalid_argument("empirical_risk needs every time step stored");
    }
    if (psi.size() != grid.size()) {
        throw DimensionError("terminal cost length does not match n_x");
    }
    const std::size_t n = ensemble.n_particles;
    const std::size_t n_x = grid.size();
    const auto& w = kernel.weights();
    const double dt = time.dt();
    double risk = 0.0;
    for (std::size_t k = 0; k < time.steps(); ++k) {
        const auto& x = ensemble.positions[k];
        const std::size_t ci = grid.nearest_cell(x[i]);
        const double a = control(k, ci);
        double crowd = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) {
                continue;
            }
            const std::size_t cj = grid.nearest_cell(x[j]);
            crowd += w[(ci + n_x - cj) % n_x];
        }
        if (n > 1) {
            crowd /= static_cast<double>(n - 1);
        }
        risk += dt * (0.5 * a * a + aversion_weight * crowd);
    }
    return risk + psi[grid.nearest_cell(ensemble.positions.back()[i])];
}

std::vector<double> empirical_risks(const ParticleEnsemble& ensemble, const ControlField& control,
                                    const AversionKernel& kernel, double aversion_weight,
                                    std::span<const double> psi, const TorusGrid& grid,
                                    const TimeGrid& time) {
    require_nonlocal(kernel);
    require_control_shape(control, grid, time);
    if (!ensemble.has_full_trajectories(time)) {
        throw std::invalid_argument("empirical_risks needs every time step stored");
    }
    if (psi.size() != grid.size()) {
        throw DimensionError("terminal cost length does not match n_x");
    }
    const std::size_t n = ensemble.n_particles;
    const double dt = time.dt();
    std::vector<std::size_t> cells(n);
    std::vector<double> counts(grid.size());
    std::vector<double> conv(grid.size());
    std::vector<double> aversion(n);
    std::vector<double> risks(n, 0.0);
    for (std::size_t k = 0; k < time.steps(); ++k) {
        const auto& x = ensemble.positions[k];
        aversion_sums(x, kernel, grid, cells, counts, conv, aversion);
        for (std::size_t i = 0; i < n; ++i) {
            const double a = control(k, cells[i]);
            risks[i] += dt * (0.5 * a * a + aversion_weight * aversion[i]);
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        risks[i] += psi[grid.nearest_cell(ensemble.positions.back()[i])];
    }
    return risks;
}

std::vector<double> empirical_histogram(std::span<const double> positions, const TorusGrid& grid) {
    require_particles(positions.size());
    std::vector<double> hist(grid.size(), 0.0);
    const double unit = 1.0 / (static_cast<double>(positions.size()) * grid.h());
    for (double x : positions) {
        hist[grid.nearest_cell(x)] += unit;
    }
    return hist;
}

std::vector<double> empirical_histogram(const ParticleEnsemble& ensemble, std::size_t step,
                                        const TorusGrid& grid) {
    return empirical_histogram(ensemble.positions[ensemble.stored_index(step)], grid);
}

double wasserstein2_torus(std::span<const double> a, std::span<const double> b, double length) {
    if (a.size() != b.size()) {
        throw DimensionError("wasserstein2_torus needs equal sample counts");
    }
    require_particles(a.size());
    const auto wrapped_sorted = [length](std::span<const double> s) {
        std::vector<double> v(s.begin(), s.end());
        for (double& x : v) {
            x -= length * std::floor(x / length);
            if (x >= length) {
                x = 0.0;
            }
        }
        std::sort(v.begin(), v.end());
        return v;
    };
    const auto x = wrapped_sorted(a);
    const auto y = wrapped_sorted(b);
    const std::size_t n = x.size();
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t shift = 0; shift < n; ++shift) {
        double cost = 0.0;
        for (std::size_t i = 0; i < n && cost < best; ++i) {
            double d = std::abs(x[i] - y[(i + shift) % n]);
            d = std::min(d, length - d);
            cost += d * d;
        }
        best = std::min(best, cost);
    }
    return std::sqrt(best / static_cast<double>(n));
}

std::vector<double> density_quantiles(std::span<const double> density, const TorusGrid& grid,
                                      std::size_t n) {
    require_particles(n);
    if (density.size() != grid.size()) {
        throw DimensionError("density length does not match n_x");
    }
    const double h = grid.h();
    double total = 0.0;
    for (double m : density) {
        if (!(m >= 0.0)) {
            throw std::invalid_argument("density must be nonnegative");
        }
        total += m * h;
    }
    if (!(total > 0.0)) {
        throw std::invalid_argument("density has no mass");
    }
    std::vector<double> q(n);
    std::size_t cell = 0;
    double below = 0.0;  // mass of cells before `cell`
    for (std::size_t k = 0; k < n; ++k) {
        const double level = (static_cast<double>(k) + 0.5) / static_cast<double>(n) * total;
        while (cell + 1 < grid.size() && below + density[cell] * h < level) {
            below += density[cell] * h;
            ++cell;
        }
        const double mass = density[cell] * h;
        const double frac = mass > 0.0 ? std::clamp((level - below) / mass, 0.0, 1.0) : 0.5;
        q[k] = grid.wrap_position(grid.node(cell) + (frac - 0.5) * h);
    }
    return q;
}

double wasserstein2_to_density(std::span<const double> samples, std::span<const double> density,
                               const TorusGrid& grid) {
    const auto q = density_quantiles(density, grid, samples.size());
    return wasserstein2_torus(samples, q, grid.length());
}

}  // namespace mfcrowd
