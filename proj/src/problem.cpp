#include "mfcrowd/problem.hpp"

#include "mfcrowd/errors.hpp"

namespace mfcrowd {

void ControlProblem::validate(double a_max) const {
    const std::size_t m = crowds();
    if (m == 0) {
        throw ConfigError("problem has no crowds");
    }
    if (psi.size() != m) {
        throw DimensionError("need one terminal cost per crowd");
    }
    if (static_cast<std::size_t>(lambda_bar.rows()) != m ||
        static_cast<std::size_t>(lambda_bar.cols()) != m) {
        throw DimensionError("LambdaBar must be M x M");
    }
    if (!kernel.is_local() && kernel.weights().size() != grid.size()) {
        throw DimensionError("kernel weights do not match n_x");
    }
    for (std::size_t j = 0; j < m; ++j) {
        check_initial_density(m0[j], grid);
        if (psi[j].size() != grid.size()) {
            throw DimensionError("terminal cost length does not match n_x");
        }
    }
    check_cfl(grid, time, dynamics, a_max);
}

}  // namespace mfcrowd
