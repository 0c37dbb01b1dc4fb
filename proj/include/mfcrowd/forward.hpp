#pragma once

#include <span>

#include "mfcrowd/grid.hpp"

namespace mfcrowd {

/// Controlled diffusion dX = a(t, X) dt + sigma dW on the torus.
struct Dynamics {
    double sigma = 1.0;
};

inline constexpr double kCflSafety = 0.4;

/// 0.4 * min(h^2/sigma^2, h/a_max), dropping a term whose coefficient is
/// zero; +infinity when both vanish.
double cfl_max_dt(const TorusGrid& grid, const Dynamics& dynamics, double a_max);

/// Throws ConfigError when time.dt() exceeds cfl_max_dt.
void check_cfl(const TorusGrid& grid, const TimeGrid& time, const Dynamics& dynamics,
               double a_max);

/// One explicit finite-volume step of
///   dm/dt = sigma^2/2 m_xx - (a m)_x
/// with central diffusion and upwind fluxes F_{i+1/2} = v+ m_i + v- m_{i+1},
/// v = (a_i + a_{i+1})/2 the face velocity.
void forward_step(std::span<const double> density, std::span<const double> control,
                  const TorusGrid& grid, double dt, const Dynamics& dynamics,
                  std::span<double> out);

/// Transpose of forward_step applied to a costate slice:
///   out = p + D (p_{i+1} - 2p_i + p_{i-1}) + (dt/h)(v+_{i+1/2}(p_{i+1}-p_i) + v-_{i-1/2}(p_i-p_{i-1}))
/// i.e. the backward transport step upwinded against the sign of a.
void forward_step_transposed(std::span<const double> costate, std::span<const double> control,
                             const TorusGrid& grid, double dt, const Dynamics& dynamics,
                             std::span<double> out);

/// Integrates the Fokker-Planck equation from m0 under `control`.
/// Requires m0 >= 0 with unit mass and a CFL-admissible time step.
DensityField solve_forward(std::span<const double> m0, const ControlField& control,
                           const Dynamics& dynamics, const TorusGrid& grid, const TimeGrid& time);

/// Validates a candidate initial density: sizes, nonnegativity, unit mass.
void check_initial_density(std::span<const double> m0, const TorusGrid& grid);

}  // namespace mfcrowd
