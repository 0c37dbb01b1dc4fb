#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "mfcrowd/forward.hpp"
#include "mfcrowd/grid.hpp"
#include "mfcrowd/kernel.hpp"
#include "mfcrowd/optimizer.hpp"
#include "mfcrowd/problem.hpp"

namespace mfcrowd {

struct KernelSpec {
    KernelMode mode = KernelMode::Nonlocal;
    double support_lo = 0.0;
    double support_hi = 0.2;
    /// Mollifier width; a value <= 0 means the default 4h.
    double delta = 0.0;
};

/// Wrapped Gaussian m0 and well-shaped terminal cost of the built-in
/// "paper_fig1" profile, or tabulated values on the grid nodes.
struct ProfileSpec {
    std::string kind;  // "wrapped_gaussian", "well", "table", "zero"
    double center = 0.0;
    double width = 0.1;
    double height = 2.0;
    std::vector<double> values;
};

struct CrowdSpec {
    ProfileSpec m0;
    ProfileSpec psi;
    std::vector<double> lambda_row;
};

struct ParticleSpec {
    std::vector<std::size_t> ladder{100, 400, 1600};
    std::size_t seeds = 10;
    std::uint64_t seed = 1;
    /// Stored time instants besides t = 0 (evenly spaced, last one at T).
    std::size_t checkpoints = 8;
};

/// A validated experiment: grids, crowds, kernel, optimizer and particle
/// settings. Arms are "local" and/or "nonlocal".
struct MultiCrowdProblem {
    std::size_t n_x = 128;
    std::size_t n_t = 0;
    double horizon = 1.0;
    double length = 1.0;
    Dynamics dynamics{};
    double aversion_weight = 0.0;
    KernelSpec kernel;
    std::vector<std::string> arms{"local", "nonlocal"};
    std::vector<CrowdSpec> crowds;
    Eigen::MatrixXd lambda;
    Eigen::MatrixXd lambda_bar;
    GdmParams gdm;
    std::size_t convexity_trials = 100;
    std::uint64_t convexity_seed = 0x5eed;
    ParticleSpec particles;
    std::size_t output_stride = 256;
    /// Renormalisation and default-resolution messages.
    std::vector<std::string> notes;

    TorusGrid grid() const { return TorusGrid(n_x, length); }
    TimeGrid time() const { return TimeGrid(horizon, n_t); }
    AversionKernel build_kernel(KernelMode mode) const;
    /// The pooled control problem of one arm.
    ControlProblem control_problem(KernelMode mode) const;
    /// Every setting, defaults included, as a JSON document (sorted keys).
    std::string echo_json() const;
};

/// Smallest power of two n_t with horizon / n_t <= cfl_max_dt.
std::size_t auto_time_steps(const TorusGrid& grid, const Dynamics& dynamics, double a_max,
                            double horizon);

struct Profiles {
    ProfileSpec m0;
    ProfileSpec psi;
};

/// Named profile pair; throws ConfigError for unknown names.
Profiles builtin_profiles(std::string_view name);

/// Discretises a profile on the grid nodes. Densities are renormalised to
/// unit mass; `note` (if given) receives a message when that changed mass.
std::vector<double> discretize_profile(const ProfileSpec& spec, const TorusGrid& grid,
                                       bool density, std::string* note = nullptr);

MultiCrowdProblem parse_config(const std::string& path);
MultiCrowdProblem parse_config_text(std::string_view text, const std::string& source = "<string>");

KernelMode parse_kernel_mode(std::string_view name);
std::string to_string(KernelMode mode);

}  // namespace mfcrowd
