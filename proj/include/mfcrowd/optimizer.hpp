#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mfcrowd/grid.hpp"
#include "mfcrowd/problem.hpp"
#include "mfcrowd/risk.hpp"

namespace mfcrowd {

struct GdmParams {
    double tau0 = 1.0;
    double shrink = 0.5;
    std::size_t max_iters = 500;
    double rel_tol = 1e-6;
    double a_max = 10.0;
    std::size_t max_halvings = 30;

    void validate() const;
};

struct GdmIterate {
    std::size_t iter = 0;
    RiskBreakdown risk;
    double step = 0.0;
    double grad_norm = 0.0;
    double opt_residual = 0.0;
};

struct GdmTrace {
    std::vector<GdmIterate> rows;
    bool converged = false;
    bool stalled = false;

    bool monotone() const;
};

/// Writes risk_history.csv: iter,risk_total,risk_energy,risk_aversion,risk_terminal,step,grad_norm,opt_residual
void write_trace_csv(std::ostream& out, const GdmTrace& trace);
void write_trace_csv(const std::string& path, const GdmTrace& trace);

/// L2 gradient of the discrete pooled risk with respect to one crowd's
/// control, i.e. the discrete form of (a_j + dp_j/dx) m_j:
///   g = a m_i + [F'_{i+1/2} (p_{i+1} - p_i) + F'_{i-1/2} (p_i - p_{i-1})] / 2h
/// where p = p(t_{k+1}), and F' is the upwind density at the face (the
/// mean of both neighbours when the face velocity is exactly zero).
/// Requires `density` = solve_forward(control) and `adjoint` from
/// solve_adjoint at the same point; that provenance cannot be checked.
SpaceTimeField control_gradient(const ControlField& control, const DensityField& density,
                                const AdjointField& adjoint, const TorusGrid& grid,
                                const TimeGrid& time);

/// Per-unit-mass descent direction a + dp/dx, i.e. gradient / m where m > 0
/// (central-difference a + dp/dx on empty cells). <gradient, direction> >= 0.
SpaceTimeField descent_direction(const ControlField& control, const DensityField& density,
                                 const AdjointField& adjoint, const SpaceTimeField& gradient,
                                 const TorusGrid& grid, const TimeGrid& time);

/// <u, v> = dt h sum u v over control slices.
double control_inner(const SpaceTimeField& u, const SpaceTimeField& v, const TorusGrid& grid,
                     const TimeGrid& time);

enum class ResidualKind {
    /// a - clamp(a - (a + dp/dx)): vanishes on the box boundary when the
    /// unconstrained minimiser lies outside the control set.
    Projected,
    /// a + dp/dx itself.
    Raw,
};

/// (int int |r_j|^2 m_j dx dt)^{1/2} for one crowd with r as selected by `kind`.
double crowd_optimality_residual(const ControlField& control, const DensityField& density,
                                 const AdjointField& adjoint, const TorusGrid& grid,
                                 const TimeGrid& time, ResidualKind kind = ResidualKind::Projected);

/// max over crowds of crowd_optimality_residual.
double optimality_residual(std::span<const ControlField> controls,
                           std::span<const DensityField> densities,
                           std::span<const AdjointField> adjoints, const TorusGrid& grid,
                           const TimeGrid& time, ResidualKind kind = ResidualKind::Projected);

/// Forward densities, adjoints and gradients for a control set.
struct ControlState {
    std::vector<ControlField> controls;
    std::vector<DensityField> densities;
    std::vector<AdjointField> adjoints;
    std::vector<SpaceTimeField> gradients;
    RiskBreakdown risk;
};

std::vector<DensityField> solve_all_forward(const ControlProblem& problem,
                                            std::span<const ControlField> controls);
RiskBreakdown evaluate_pooled_risk(const ControlProblem& problem,
                                   std::span<const ControlField> controls,
                                   std::span<const DensityField> densities);
ControlState evaluate_state(const ControlProblem& problem, std::vector<ControlField> controls);

struct GdmResult {
    ControlState state;
    GdmTrace trace;
};

using GdmObserver = std::function<void(const GdmIterate&)>;

/// Projected descent on the pooled risk along d = a + dp/dx (the gradient
/// divided by the density). Each iteration tries a+ = clamp(a - tau d),
/// accepting on strict risk decrease and otherwise shrinking tau (at most
/// max_halvings times). The first trial step is tau0, later ones the
/// Barzilai-Borwein ratio <s,s>/<s,y> of the previous accepted step.
/// Stops when the mean relative decrease over the last 10 iterations falls
/// below rel_tol or the optimality residual is exactly zero (converged),
/// after max_iters, or when the line search fails: converged if the last
/// accepted step already changed the risk by less than rel_tol, stalled
/// otherwise.
GdmResult gdm_optimize(const ControlProblem& problem, const GdmParams& params,
                       std::vector<ControlField> initial = {}, const GdmObserver& observer = {});

struct ProbeReport {
    /// deltas[j][q] = J_j(perturbed) - J_j(solution) for probe q of crowd j.
    std::vector<std::vector<double>> deltas;
    std::vector<double> base_risk;
    std::vector<double> tolerance;
    std::vector<double> min_delta;
    bool passed = true;
};

/// Unilateral deviation test: perturbs one crowd's control by a smooth
/// random field bounded by `magnitude`, re-solves only that crowd's
/// density, and compares that crowd's own game risk. A crowd passes when
/// every delta >= -(1e-6 |J_j| + R_j * magnitude * sqrt(T)), R_j its raw
/// optimality residual. Multi-crowd problems require a symmetric kernel.
ProbeReport deviation_probe(const ControlState& solution, const ControlProblem& problem,
                            const Eigen::MatrixXd& lambda, std::size_t probes, double magnitude,
                            std::uint64_t seed = 7);

}  // namespace mfcrowd
