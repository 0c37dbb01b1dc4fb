#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "mfcrowd/grid.hpp"
#include "mfcrowd/kernel.hpp"
#include "mfcrowd/problem.hpp"

namespace testsupport {

using namespace mfcrowd;

// offset + amplitude * (sum of three random Fourier modes) / 3
inline std::vector<double> smooth_field(const TorusGrid& g, std::uint64_t seed, double amplitude,
                                        double offset = 0.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::uniform_int_distribution<int> mode(1, 4);
    std::vector<double> v(g.size(), offset);
    for (int r = 0; r < 3; ++r) {
        const int k = mode(rng);
        const double ph = phase(rng);
        for (std::size_t i = 0; i < g.size(); ++i) {
            v[i] += amplitude / 3.0 * std::sin(2.0 * std::numbers::pi * k * g.node(i) / g.length() + ph);
        }
    }
    return v;
}

inline std::vector<double> smooth_density(const TorusGrid& g, std::uint64_t seed) {
    auto v = smooth_field(g, seed, 1.5);
    for (double& x : v) {
        x = std::exp(x);
    }
    const double mass = integrate(v, g);
    for (double& x : v) {
        x /= mass;
    }
    return v;
}

// Control varying smoothly in space and time.
inline ControlField smooth_control(const TimeGrid& t, const TorusGrid& g, double a_max,
                                   std::uint64_t seed, double amplitude, double offset = 0.0) {
    ControlField a(t, g, a_max);
    const auto base = smooth_field(g, seed, amplitude, 0.0);
    const auto drift = smooth_field(g, seed + 1000, amplitude, 0.0);
    for (std::size_t k = 0; k < t.steps(); ++k) {
        const double s = t.time(k) / t.horizon();
        for (std::size_t i = 0; i < g.size(); ++i) {
            a(k, i) = offset + (1.0 - s) * base[i] + s * drift[i];
        }
    }
    a.clamp();
    return a;
}

inline ControlProblem random_problem(std::size_t n_x, std::size_t n_t, double horizon,
                                     std::size_t crowds, double c, AversionKernel kernel,
                                     Eigen::MatrixXd lambda_bar, std::uint64_t seed) {
    TorusGrid g(n_x);
    ControlProblem p{g, TimeGrid(horizon, n_t), Dynamics{1.0}, std::move(kernel), c,
                     std::move(lambda_bar), {}, {}};
    for (std::size_t j = 0; j < crowds; ++j) {
        p.m0.push_back(smooth_density(g, seed + 17 * j));
        p.psi.push_back(smooth_field(g, seed + 31 * j + 5, 2.0, 1.0));
    }
    return p;
}

}  // namespace testsupport
