#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "mfcrowd/forward.hpp"
#include "mfcrowd/grid.hpp"
#include "mfcrowd/kernel.hpp"

namespace mfcrowd {

/// The pooled optimal-control problem for M crowds on the torus: initial
/// densities, terminal costs, crowding kernel, aversion weight C and the
/// control-side interaction matrix LambdaBar.
struct ControlProblem {
    TorusGrid grid;
    TimeGrid time;
    Dynamics dynamics;
    AversionKernel kernel;
    double aversion_weight = 0.0;
    Eigen::MatrixXd lambda_bar;
    std::vector<std::vector<double>> m0;
    std::vector<std::vector<double>> psi;

    std::size_t crowds() const { return m0.size(); }
    /// Shapes, unit-mass initial densities and, given a control bound, CFL.
    void validate(double a_max) const;
};

}  // namespace mfcrowd
