#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mfcrowd/grid.hpp"
#include "mfcrowd/kernel.hpp"

namespace mfcrowd {

struct RiskBreakdown {
    double energy = 0.0;
    double aversion = 0.0;
    double terminal = 0.0;
    double total = 0.0;
};

/// Game weights Lambda and control weights LambdaBar, linked by
/// Lambda = LambdaBar + LambdaBar^T - diag(LambdaBar).
struct AversionMatrices {
    Eigen::MatrixXd lambda;
    Eigen::MatrixXd lambda_bar;

    static AversionMatrices from_game(const Eigen::MatrixXd& lambda);
};

/// Objective of the pooled control problem
///   sum_j int int 1/2 a_j^2 m_j + C G[m]^T LambdaBar m  dt dx + sum_j int Psi_j m_j(T) dx
/// with the left-endpoint rule in time and the midpoint rule in space.
RiskBreakdown pooled_risk(std::span<const ControlField> controls,
                          std::span<const DensityField> densities,
                          std::span<const std::vector<double>> psi,
                          const Eigen::MatrixXd& lambda_bar, const AversionKernel& kernel,
                          double aversion_weight, const TorusGrid& grid, const TimeGrid& time);

/// Crowd j's own risk in the game, using row j of Lambda:
///   int int 1/2 a_j^2 m_j + C sum_k lambda_jk G[m_k] m_j dt dx + int Psi_j m_j(T) dx.
RiskBreakdown crowd_risk(std::size_t j, std::span<const ControlField> controls,
                         std::span<const DensityField> densities, std::span<const double> psi_j,
                         const Eigen::MatrixXd& lambda, const AversionKernel& kernel,
                         double aversion_weight, const TorusGrid& grid, const TimeGrid& time);

/// Per-crowd inputs of one time slice of the Hamiltonian.
struct HamiltonianSlice {
    std::vector<std::span<const double>> control;
    std::vector<std::span<const double>> density;
    std::vector<std::span<const double>> costate_gradient;
};

/// Pointwise H = sum_j 1/2 a_j^2 m_j + C G[m]^T LambdaBar m + sum_j a_j m_j dp_j/dx.
std::vector<double> hamiltonian_integrand(const HamiltonianSlice& slice,
                                          const Eigen::MatrixXd& lambda_bar,
                                          const AversionKernel& kernel, double aversion_weight,
                                          const TorusGrid& grid);

/// Upper-triangular LambdaBar with LambdaBar + LambdaBar^T - diag(LambdaBar) = Lambda.
/// Throws std::invalid_argument for asymmetric or negative Lambda.
Eigen::MatrixXd symmetrize_lambda(const Eigen::MatrixXd& lambda);
Eigen::MatrixXd reconstruct_lambda(const Eigen::MatrixXd& lambda_bar);

enum class ConvexityStatus { CertifiedPsd, SampledOk, Violated };

struct ConvexityVerdict {
    ConvexityStatus status = ConvexityStatus::Violated;
    /// Smallest value seen: an eigenvalue in Local mode, a quadratic form otherwise.
    double min_value = 0.0;
    std::size_t trials_run = 0;
    std::uint64_t seed = 0;
    /// Trial index and the density pair that produced a negative form (Nonlocal only).
    std::size_t witness_trial = 0;
    std::vector<std::vector<double>> witness_m;
    std::vector<std::vector<double>> witness_m_prime;

    bool ok() const { return status != ConvexityStatus::Violated; }
};

std::string to_string(ConvexityStatus status);

/// Local kernels: eigenvalue test of (LambdaBar + LambdaBar^T)/2.
/// Nonlocal kernels: samples the form int int phi(x-y) w(y)^T LambdaBar w(x)
/// for `trials` differences w = m - m' of random unit-mass densities and
/// reports Violated when any value is below -1e-10.
ConvexityVerdict check_convexity(const Eigen::MatrixXd& lambda_bar, const AversionKernel& kernel,
                                 const TorusGrid& grid, std::size_t trials,
                                 std::uint64_t seed = 0x5eed);

/// Random smooth strictly positive unit-mass density, used by the convexity sampler.
std::vector<double> random_density(const TorusGrid& grid, std::uint64_t seed);

/// int G[w]^T LambdaBar w dx for per-crowd slices w.
double crowding_form(std::span<const std::vector<double>> w, const Eigen::MatrixXd& lambda_bar,
                     const AversionKernel& kernel, const TorusGrid& grid);

}  // namespace mfcrowd
