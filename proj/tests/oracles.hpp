#pragma once

// Brute-force references shared by the unit tests and the acceptance run.

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "mfcrowd/grid.hpp"
#include "mfcrowd/problem.hpp"

namespace oracles {

using namespace mfcrowd;

// Matrix of one explicit step assembled face by face: each face moves mass
// by diffusion and by upwind transport with the face-averaged velocity.
inline Eigen::MatrixXd step_matrix(const std::vector<double>& a, double h, double dt, double sigma) {
    const auto n = static_cast<Eigen::Index>(a.size());
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n);
    const double d = 0.5 * sigma * sigma * dt / (h * h);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index r = (i + 1) % n;  // face between i and r
        // diffusion flux out of i into r and back
        A(i, i) -= d;
        A(r, i) += d;
        A(r, r) -= d;
        A(i, r) += d;
        const double v = 0.5 * (a[static_cast<std::size_t>(i)] + a[static_cast<std::size_t>(r)]);
        const double c = dt / h;
        if (v > 0.0) {
            A(i, i) -= c * v;
            A(r, i) += c * v;
        } else {
            A(i, r) -= c * v;
            A(r, r) += c * v;
        }
    }
    return A;
}

struct Oracle {
    double energy = 0.0;
    double aversion = 0.0;
    double terminal = 0.0;
};

// Left endpoint in time, midpoint in space, kernel looked up per pair of cells.
inline Oracle triple_loop(const ControlProblem& p, const std::vector<ControlField>& a,
                   const std::vector<DensityField>& m, const Eigen::MatrixXd& weights,
                   bool only_row, std::size_t row) {
    const std::size_t n = p.grid.size();
    const double h = p.grid.h();
    const double dt = p.time.dt();
    const auto& w = p.kernel.weights();
    Oracle o;
    const std::size_t M = m.size();
    for (std::size_t j = 0; j < M; ++j) {
        if (only_row && j != row) {
            continue;
        }
        for (std::size_t k = 0; k < p.time.steps(); ++k) {
            for (std::size_t x = 0; x < n; ++x) {
                o.energy += dt * h * 0.5 * a[j](k, x) * a[j](k, x) * m[j](k, x);
            }
        }
        for (std::size_t x = 0; x < n; ++x) {
            o.terminal += h * p.psi[j][x] * m[j](p.time.steps(), x);
        }
    }
    for (std::size_t k = 0; k < p.time.steps(); ++k) {
        for (std::size_t j = 0; j < M; ++j) {
            for (std::size_t l = 0; l < M; ++l) {
                const double c = weights(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(l));
                if (c == 0.0 || (only_row && j != row)) {
                    continue;
                }
                for (std::size_t x = 0; x < n; ++x) {
                    for (std::size_t y = 0; y < n; ++y) {
                        // pooled: LambdaBar_jl G[m_j] m_l; game row j: Lambda_jl G[m_l] m_j
                        const double g = only_row ? w[(x + n - y) % n] * m[l](k, y) * m[j](k, x)
                                                  : w[(x + n - y) % n] * m[j](k, y) * m[l](k, x);
                        o.aversion += p.aversion_weight * c * dt * h * h * g;
                    }
                }
            }
        }
    }
    return o;
}

}  // namespace oracles
