#include "mfcrowd/forward.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "mfcrowd/errors.hpp"

namespace mfcrowd {

double cfl_max_dt(const TorusGrid& grid, const Dynamics& dynamics, double a_max) {
    const double h = grid.h();
    double bound = std::numeric_limits<double>::infinity();
    if (dynamics.sigma > 0.0) {
        bound = std::min(bound, h * h / (dynamics.sigma * dynamics.sigma));
    }
    if (a_max > 0.0) {
        bound = std::min(bound, h / a_max);
    }
    return kCflSafety * bound;
}

void check_cfl(const TorusGrid& grid, const TimeGrid& time, const Dynamics& dynamics,
               double a_max) {
    const double limit = cfl_max_dt(grid, dynamics, a_max);
    if (time.dt() > limit) {
        std::ostringstream msg;
        msg.precision(6);
        msg << "time step dt = " << time.dt() << " exceeds cfl_max_dt = " << limit
            << " (n_x = " << grid.size() << ", sigma = " << dynamics.sigma
            << ", a_max = " << a_max << "); need n_t >= "
            << static_cast<std::size_t>(std::ceil(time.horizon() / limit));
        throw ConfigError(msg.str());
    }
}

void forward_step(std::span<const double> m, std::span<const double> a, const TorusGrid& grid,
                  double dt, const Dynamics& dynamics, std::span<double> out) {
    const std::size_t n = grid.size();
    const double h = grid.h();
    const double diff = 0.5 * dynamics.sigma * dynamics.sigma * dt / (h * h);
    const double lam = dt / h;

    auto flux = [&](std::size_t left, std::size_t right) {
        const double v = 0.5 * (a[left] + a[right]);
        return v > 0.0 ? v * m[left] : v * m[right];
    };

    double flux_in = flux(n - 1, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t ip = i + 1 == n ? 0 : i + 1;
        const std::size_t im = i == 0 ? n - 1 : i - 1;
        const double flux_out = flux(i, ip);
        out[i] = m[i] + diff * (m[ip] - 2.0 * m[i] + m[im]) - lam * (flux_out - flux_in);
        flux_in = flux_out;
    }
}

void forward_step_transposed(std::span<const double> p, std::span<const double> a,
                             const TorusGrid& grid, double dt, const Dynamics& dynamics,
                             std::span<double> out) {
    const std::size_t n = grid.size();
    const double h = grid.h();
    const double diff = 0.5 * dynamics.sigma * dynamics.sigma * dt / (h * h);
    const double lam = dt / h;

    double v_left = 0.5 * (a[n - 1] + a[0]);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t ip = i + 1 == n ? 0 : i + 1;
        const std::size_t im = i == 0 ? n - 1 : i - 1;
        const double v_right = 0.5 * (a[i] + a[ip]);
        double transport = 0.0;
        if (v_right > 0.0) {
            transport += v_right * (p[ip] - p[i]);
        }
        if (v_left < 0.0) {
            transport += v_left * (p[i] - p[im]);
        }
        out[i] = p[i] + diff * (p[ip] - 2.0 * p[i] + p[im]) + lam * transport;
        v_left = v_right;
    }
}

void check_initial_density(std::span<const double> m0, const TorusGrid& grid) {
    if (m0.size() != grid.size()) {
        throw DimensionError("initial density length does not match n_x");
    }
    for (double v : m0) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw std::invalid_argument("initial density must be finite and nonnegative");
        }
    }
    const double mass = integrate(m0, grid);
    if (std::fabs(mass - 1.0) > 1e-10) {
        throw std::invalid_argument("initial density has mass " + std::to_string(mass) +
                                    ", expected 1");
    }
}

DensityField solve_forward(std::span<const double> m0, const ControlField& control,
                           const Dynamics& dynamics, const TorusGrid& grid, const TimeGrid& time) {
    check_initial_density(m0, grid);
    if (control.width() != grid.size() || control.slices() != time.steps()) {
        throw DimensionError("solve_forward: control shape does not match grids");
    }
    check_cfl(grid, time, dynamics, control.a_max());

    DensityField m(time, grid);
    std::copy(m0.begin(), m0.end(), m.slice(0).begin());
    for (std::size_t k = 0; k < time.steps(); ++k) {
        forward_step(m.slice(k), control.slice(k), grid, time.dt(), dynamics, m.slice(k + 1));
    }
    return m;
}

}  // namespace mfcrowd
