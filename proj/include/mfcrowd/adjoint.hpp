#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mfcrowd/forward.hpp"
#include "mfcrowd/grid.hpp"
#include "mfcrowd/kernel.hpp"

namespace mfcrowd {

/// Running-cost sensitivity of crowd j at one time slice:
///   1/2 a_j^2 + C * sum_l (LambdaBar_lj G[m_l] + LambdaBar_jl G*[m_l]).
/// G* is the transposed convolution, so for symmetric kernels the bracket
/// is [G[m]^T (LambdaBar + LambdaBar^T)]_j. Local kernels use m in place
/// of both G[m] and G*[m].
void adjoint_source(std::size_t j, std::span<const std::span<const double>> controls,
                    std::span<const std::span<const double>> densities,
                    const Eigen::MatrixXd& lambda_bar, const AversionKernel& kernel,
                    double aversion_weight, const TorusGrid& grid, std::span<double> out);

/// Backward costate sweep for all crowds. p_j(T) = Psi_j and
///   p_j(t_k) = p_j(t_{k+1}) + dt * (source_j(t_k) + a_j dp_j/dx + sigma^2/2 d^2p_j/dx^2)
/// with the transport term upwinded against the sign of a_j. The spatial
/// operator is the exact transpose of forward_step, which makes
/// control_gradient the gradient of the discrete pooled risk.
std::vector<AdjointField> solve_adjoint(std::span<const ControlField> controls,
                                        std::span<const DensityField> densities,
                                        std::span<const std::vector<double>> psi,
                                        const Eigen::MatrixXd& lambda_bar,
                                        const AversionKernel& kernel, double aversion_weight,
                                        const Dynamics& dynamics, const TorusGrid& grid,
                                        const TimeGrid& time);

}  // namespace mfcrowd
