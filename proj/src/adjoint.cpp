#include "mfcrowd/adjoint.hpp"

#include <algorithm>

#include "mfcrowd/errors.hpp"

namespace mfcrowd {

void adjoint_source(std::size_t j, std::span<const std::span<const double>> controls,
                    std::span<const std::span<const double>> densities,
                    const Eigen::MatrixXd& lambda_bar, const AversionKernel& kernel,
                    double aversion_weight, const TorusGrid& grid, std::span<double> out) {
    const std::size_t n = grid.size();
    const std::size_t crowds = densities.size();
    const auto a = controls[j];
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = 0.5 * a[i] * a[i];
    }
    if (aversion_weight == 0.0) {
        return;
    }
    std::vector<double> g(n);
    std::vector<double> g_t(n);
    const auto J = static_cast<Eigen::Index>(j);
    for (std::size_t l = 0; l < crowds; ++l) {
        const auto L = static_cast<Eigen::Index>(l);
        const double w_in = aversion_weight * lambda_bar(L, J);   // G[m_l] multiplies m_j
        const double w_out = aversion_weight * lambda_bar(J, L);  // G[m_j] multiplies m_l
        if (w_in != 0.0) {
            penalty_field(kernel, densities[l], grid, g);
            for (std::size_t i = 0; i < n; ++i) {
                out[i] += w_in * g[i];
            }
        }
        if (w_out != 0.0) {
            penalty_field_transposed(kernel, densities[l], grid, g_t);
            for (std::size_t i = 0; i < n; ++i) {
                out[i] += w_out * g_t[i];
            }
        }
    }
}

std::vector<AdjointField> solve_adjoint(std::span<const ControlField> controls,
                                        std::span<const DensityField> densities,
                                        std::span<const std::vector<double>> psi,
                                        const Eigen::MatrixXd& lambda_bar,
                                        const AversionKernel& kernel, double aversion_weight,
                                        const Dynamics& dynamics, const TorusGrid& grid,
                                        const TimeGrid& time) {
    const std::size_t crowds = controls.size();
    if (crowds == 0 || densities.size() != crowds || psi.size() != crowds ||
        static_cast<std::size_t>(lambda_bar.rows()) != crowds ||
        static_cast<std::size_t>(lambda_bar.cols()) != crowds) {
        throw DimensionError("solve_adjoint: inconsistent crowd count");
    }
    double a_max = 0.0;
    for (std::size_t j = 0; j < crowds; ++j) {
        if (controls[j].slices() != time.steps() || controls[j].width() != grid.size() ||
            densities[j].slices() != time.steps() + 1 || densities[j].width() != grid.size() ||
            psi[j].size() != grid.size()) {
            throw DimensionError("solve_adjoint: field shape does not match grids");
        }
        a_max = std::max(a_max, controls[j].a_max());
    }
    check_cfl(grid, time, dynamics, a_max);

    const std::size_t n = grid.size();
    const std::size_t steps = time.steps();
    const double dt = time.dt();
    std::vector<AdjointField> p;
    p.reserve(crowds);
    for (std::size_t j = 0; j < crowds; ++j) {
        p.emplace_back(time, grid);
        std::copy(psi[j].begin(), psi[j].end(), p[j].slice(steps).begin());
    }

    std::vector<std::span<const double>> a_k(crowds);
    std::vector<std::span<const double>> m_k(crowds);
    std::vector<double> source(n);
    for (std::size_t k = steps; k-- > 0;) {
        for (std::size_t j = 0; j < crowds; ++j) {
            a_k[j] = controls[j].slice(k);
            m_k[j] = densities[j].slice(k);
        }
        for (std::size_t j = 0; j < crowds; ++j) {
            adjoint_source(j, a_k, m_k, lambda_bar, kernel, aversion_weight, grid, source);
            auto out = p[j].slice(k);
            forward_step_transposed(p[j].slice(k + 1), a_k[j], grid, dt, dynamics, out);
            for (std::size_t i = 0; i < n; ++i) {
                out[i] += dt * source[i];
            }
        }
    }
    return p;
}

}  // namespace mfcrowd
