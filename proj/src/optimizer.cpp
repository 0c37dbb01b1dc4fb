#include "mfcrowd/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

#include "mfcrowd/adjoint.hpp"
#include "mfcrowd/errors.hpp"
#include "mfcrowd/forward.hpp"

namespace mfcrowd {
namespace {

double face_density(double v, double m_left, double m_right) {
    if (v > 0.0) {
        return m_left;
    }
    if (v < 0.0) {
        return m_right;
    }
    return 0.5 * (m_left + m_right);
}

double gradient_norm(std::span<const SpaceTimeField> g, const TorusGrid& grid,
                     const TimeGrid& time) {
    double s = 0.0;
    for (const auto& gj : g) {
        s += control_inner(gj, gj, grid, time);
    }
    return std::sqrt(s);
}

constexpr std::size_t kStopWindow = 10;
constexpr double kMinTrialStep = 1e-6;
constexpr double kMaxTrialStep = 1e3;

}  // namespace

SpaceTimeField descent_direction(const ControlField& control, const DensityField& density,
                                 const AdjointField& adjoint, const SpaceTimeField& gradient,
                                 const TorusGrid& grid, const TimeGrid& time) {
    const std::size_t n = grid.size();
    SpaceTimeField d(time.steps(), n);
    for (std::size_t k = 0; k < time.steps(); ++k) {
        const auto a = control.slice(k);
        const auto m = density.slice(k);
        const auto g = gradient.slice(k);
        const auto p = adjoint.slice(k + 1);
        auto out = d.slice(k);
        for (std::size_t i = 0; i < n; ++i) {
            if (m[i] > 0.0) {
                out[i] = g[i] / m[i];
            } else {
                const std::size_t ip = i + 1 == n ? 0 : i + 1;
                const std::size_t im = i == 0 ? n - 1 : i - 1;
                out[i] = a[i] + (p[ip] - p[im]) / (2.0 * grid.h());
            }
        }
    }
    return d;
}

void GdmParams::validate() const {
    if (!(tau0 > 0.0)) {
        throw ConfigError("optimizer.tau0 must be positive");
    }
    if (!(shrink > 0.0 && shrink < 1.0)) {
        throw ConfigError("optimizer.shrink must lie in (0, 1)");
    }
    if (!(rel_tol > 0.0)) {
        throw ConfigError("optimizer.rel_tol must be positive");
    }
    if (!(a_max > 0.0)) {
        throw ConfigError("optimizer.a_max must be positive");
    }
}

bool GdmTrace::monotone() const {
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].risk.total > rows[r - 1].risk.total) {
            return false;
        }
    }
    return true;
}

void write_trace_csv(std::ostream& out, const GdmTrace& trace) {
    out << "iter,risk_total,risk_energy,risk_aversion,risk_terminal,step,grad_norm,opt_residual\n";
    out << std::setprecision(17);
    for (const auto& r : trace.rows) {
        out << r.iter << ',' << r.risk.total << ',' << r.risk.energy << ',' << r.risk.aversion
            << ',' << r.risk.terminal << ',' << r.step << ',' << r.grad_norm << ','
            << r.opt_residual << '\n';
    }
}

void write_trace_csv(const std::string& path, const GdmTrace& trace) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot open " + path + " for writing");
    }
    write_trace_csv(out, trace);
}

SpaceTimeField control_gradient(const ControlField& control, const DensityField& density,
                                const AdjointField& adjoint, const TorusGrid& grid,
                                const TimeGrid& time) {
    const std::size_t n = grid.size();
    const std::size_t steps = time.steps();
    if (control.slices() != steps || control.width() != n || density.slices() != steps + 1 ||
        density.width() != n || adjoint.slices() != steps + 1 || adjoint.width() != n) {
        throw DimensionError("control_gradient: field shapes do not match grids");
    }
    const double inv_2h = 0.5 / grid.h();
    SpaceTimeField g(steps, n);
    for (std::size_t k = 0; k < steps; ++k) {
        const auto a = control.slice(k);
        const auto m = density.slice(k);
        const auto p = adjoint.slice(k + 1);
        auto out = g.slice(k);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t ip = i + 1 == n ? 0 : i + 1;
            const std::size_t im = i == 0 ? n - 1 : i - 1;
            const double right = face_density(0.5 * (a[i] + a[ip]), m[i], m[ip]) * (p[ip] - p[i]);
            const double left = face_density(0.5 * (a[im] + a[i]), m[im], m[i]) * (p[i] - p[im]);
            out[i] = a[i] * m[i] + inv_2h * (right + left);
        }
    }
    return g;
}

double control_inner(const SpaceTimeField& u, const SpaceTimeField& v, const TorusGrid& grid,
                     const TimeGrid& time) {
    if (u.slices() != v.slices() || u.width() != v.width()) {
        throw DimensionError("control_inner: shape mismatch");
    }
    double s = 0.0;
    const auto uu = u.values();
    const auto vv = v.values();
    for (std::size_t i = 0; i < uu.size(); ++i) {
        s += uu[i] * vv[i];
    }
    return grid.h() * time.dt() * s;
}

double crowd_optimality_residual(const ControlField& control, const DensityField& density,
                                 const AdjointField& adjoint, const TorusGrid& grid,
                                 const TimeGrid& time, ResidualKind kind) {
    const auto g = control_gradient(control, density, adjoint, grid, time);
    const double bound = control.a_max();
    double s = 0.0;
    for (std::size_t k = 0; k < time.steps(); ++k) {
        const auto a = control.slice(k);
        const auto m = density.slice(k);
        const auto gk = g.slice(k);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            if (!(m[i] > 0.0)) {
                continue;
            }
            // a + dp/dx
            const double d = gk[i] / m[i];
            double r = d;
            if (kind == ResidualKind::Projected) {
                r = a[i] - std::clamp(a[i] - d, -bound, bound);
            }
            s += r * r * m[i];
        }
    }
    return std::sqrt(grid.h() * time.dt() * s);
}

double optimality_residual(std::span<const ControlField> controls,
                           std::span<const DensityField> densities,
                           std::span<const AdjointField> adjoints, const TorusGrid& grid,
                           const TimeGrid& time, ResidualKind kind) {
    if (controls.size() != densities.size() || controls.size() != adjoints.size()) {
        throw DimensionError("optimality_residual: inconsistent crowd count");
    }
    double worst = 0.0;
    for (std::size_t j = 0; j < controls.size(); ++j) {
        worst = std::max(worst, crowd_optimality_residual(controls[j], densities[j], adjoints[j],
                                                          grid, time, kind));
    }
    return worst;
}

std::vector<DensityField> solve_all_forward(const ControlProblem& problem,
                                            std::span<const ControlField> controls) {
    std::vector<DensityField> m;
    m.reserve(controls.size());
    for (std::size_t j = 0; j < controls.size(); ++j) {
        m.push_back(solve_forward(problem.m0[j], controls[j], problem.dynamics, problem.grid,
                                  problem.time));
    }
    return m;
}

RiskBreakdown evaluate_pooled_risk(const ControlProblem& problem,
                                   std::span<const ControlField> controls,
                                   std::span<const DensityField> densities) {
    return pooled_risk(controls, densities, problem.psi, problem.lambda_bar, problem.kernel,
                       problem.aversion_weight, problem.grid, problem.time);
}

ControlState evaluate_state(const ControlProblem& problem, std::vector<ControlField> controls) {
    ControlState s;
    s.controls = std::move(controls);
    s.densities = solve_all_forward(problem, s.controls);
    s.risk = evaluate_pooled_risk(problem, s.controls, s.densities);
    s.adjoints = solve_adjoint(s.controls, s.densities, problem.psi, problem.lambda_bar,
                               problem.kernel, problem.aversion_weight, problem.dynamics,
                               problem.grid, problem.time);
    s.gradients.reserve(s.controls.size());
    for (std::size_t j = 0; j < s.controls.size(); ++j) {
        s.gradients.push_back(control_gradient(s.controls[j], s.densities[j], s.adjoints[j],
                                               problem.grid, problem.time));
    }
    return s;
}

GdmResult gdm_optimize(const ControlProblem& problem, const GdmParams& params,
                       std::vector<ControlField> initial, const GdmObserver& observer) {
    params.validate();
    problem.validate(params.a_max);
    const std::size_t crowds = problem.crowds();
    if (initial.empty()) {
        for (std::size_t j = 0; j < crowds; ++j) {
            initial.emplace_back(problem.time, problem.grid, params.a_max);
        }
    }
    if (initial.size() != crowds) {
        throw DimensionError("gdm_optimize: need one initial control per crowd");
    }
    for (auto& a : initial) {
        if (a.a_max() != params.a_max) {
            ControlField rebounded(problem.time, problem.grid, params.a_max);
            std::copy(a.values().begin(), a.values().end(), rebounded.values().begin());
            rebounded.clamp();
            a = std::move(rebounded);
        } else {
            a.clamp();
        }
    }

    GdmResult result;
    result.state = evaluate_state(problem, std::move(initial));
    auto& state = result.state;
    auto record = [&](std::size_t iter, double step) {
        GdmIterate row;
        row.iter = iter;
        row.risk = state.risk;
        row.step = step;
        row.grad_norm = gradient_norm(state.gradients, problem.grid, problem.time);
        row.opt_residual = optimality_residual(state.controls, state.densities, state.adjoints,
                                               problem.grid, problem.time);
        result.trace.rows.push_back(row);
        if (observer) {
            observer(row);
        }
    };
    record(0, 0.0);

    std::vector<ControlField> candidate = state.controls;
    std::vector<SpaceTimeField> direction;
    for (std::size_t j = 0; j < crowds; ++j) {
        direction.push_back(descent_direction(state.controls[j], state.densities[j],
                                              state.adjoints[j], state.gradients[j], problem.grid,
                                              problem.time));
    }
    std::vector<ControlField> prev_controls;
    std::vector<SpaceTimeField> prev_direction;

    for (std::size_t iter = 1; iter <= params.max_iters; ++iter) {
        if (result.trace.rows.back().opt_residual == 0.0) {
            // first-order conditions hold exactly; no step can decrease the risk
            result.trace.converged = true;
            break;
        }
        double tau = params.tau0;
        if (!prev_controls.empty()) {
            // Barzilai-Borwein trial step from the last accepted pair
            double ss = 0.0;
            double sy = 0.0;
            for (std::size_t j = 0; j < crowds; ++j) {
                const auto a = state.controls[j].values();
                const auto a_old = prev_controls[j].values();
                const auto d = direction[j].values();
                const auto d_old = prev_direction[j].values();
                for (std::size_t i = 0; i < a.size(); ++i) {
                    const double s_i = a[i] - a_old[i];
                    ss += s_i * s_i;
                    sy += s_i * (d[i] - d_old[i]);
                }
            }
            if (sy > 0.0 && std::isfinite(ss / sy)) {
                tau = std::clamp(ss / sy, kMinTrialStep * params.tau0, kMaxTrialStep * params.tau0);
            }
        }

        bool accepted = false;
        std::vector<DensityField> cand_m;
        RiskBreakdown cand_risk;
        for (std::size_t attempt = 0; attempt <= params.max_halvings; ++attempt) {
            for (std::size_t j = 0; j < crowds; ++j) {
                auto dst = candidate[j].values();
                const auto a = state.controls[j].values();
                const auto d = direction[j].values();
                for (std::size_t i = 0; i < dst.size(); ++i) {
                    dst[i] = std::clamp(a[i] - tau * d[i], -params.a_max, params.a_max);
                }
            }
            cand_m = solve_all_forward(problem, candidate);
            cand_risk = evaluate_pooled_risk(problem, candidate, cand_m);
            if (cand_risk.total < state.risk.total) {
                accepted = true;
                break;
            }
            tau *= params.shrink;
        }
        if (!accepted) {
            // Upwind fluxes make the discrete risk kinked where a face velocity
            // vanishes; a failed search after negligible progress is convergence.
            const auto& rows = result.trace.rows;
            const bool flat = rows.size() >= 2 &&
                              (rows[rows.size() - 2].risk.total - state.risk.total) <
                                  params.rel_tol * std::fabs(state.risk.total);
            (flat ? result.trace.converged : result.trace.stalled) = true;
            break;
        }
        prev_controls = state.controls;
        prev_direction = direction;
        std::swap(state.controls, candidate);
        state.densities = std::move(cand_m);
        state.risk = cand_risk;
        state.adjoints = solve_adjoint(state.controls, state.densities, problem.psi,
                                       problem.lambda_bar, problem.kernel,
                                       problem.aversion_weight, problem.dynamics, problem.grid,
                                       problem.time);
        for (std::size_t j = 0; j < crowds; ++j) {
            state.gradients[j] = control_gradient(state.controls[j], state.densities[j],
                                                  state.adjoints[j], problem.grid, problem.time);
            direction[j] = descent_direction(state.controls[j], state.densities[j],
                                             state.adjoints[j], state.gradients[j], problem.grid,
                                             problem.time);
        }
        record(iter, tau);

        const auto& rows = result.trace.rows;
        if (rows.size() > kStopWindow) {
            const double earlier = rows[rows.size() - 1 - kStopWindow].risk.total;
            const double scale = std::max(std::fabs(earlier), std::numeric_limits<double>::min());
            if ((earlier - state.risk.total) / scale <
                static_cast<double>(kStopWindow) * params.rel_tol) {
                result.trace.converged = true;
                break;
            }
        }
    }
    return result;
}

ProbeReport deviation_probe(const ControlState& solution, const ControlProblem& problem,
                            const Eigen::MatrixXd& lambda, std::size_t probes, double magnitude,
                            std::uint64_t seed) {
    const std::size_t crowds = problem.crowds();
    if (crowds > 1 && !problem.kernel.is_symmetric(1e-12)) {
        throw std::invalid_argument(
            "deviation_probe: the game/control equivalence needs a symmetric kernel");
    }
    if (solution.controls.size() != crowds || solution.densities.size() != crowds ||
        solution.adjoints.size() != crowds) {
        throw DimensionError("deviation_probe: solution does not match problem");
    }
    const auto& grid = problem.grid;
    const auto& time = problem.time;

    ProbeReport report;
    report.deltas.assign(crowds, {});
    for (std::size_t j = 0; j < crowds; ++j) {
        const double base =
            crowd_risk(j, solution.controls, solution.densities, problem.psi[j], lambda,
                       problem.kernel, problem.aversion_weight, grid, time)
                .total;
        const double residual =
            crowd_optimality_residual(solution.controls[j], solution.densities[j],
                                      solution.adjoints[j], grid, time, ResidualKind::Raw);
        const double tol =
            1e-6 * std::fabs(base) + residual * magnitude * std::sqrt(time.horizon());
        report.base_risk.push_back(base);
        report.tolerance.push_back(tol);

        double min_delta = std::numeric_limits<double>::infinity();
        for (std::size_t q = 0; q < probes; ++q) {
            std::mt19937_64 rng(seed + 0x9e3779b97f4a7c15ull * (q * crowds + j + 1));
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            constexpr int kModes = 3;
            double freq_x[kModes];
            double freq_t[kModes];
            double phase[kModes];
            double weight[kModes];
            double total_weight = 0.0;
            for (int s = 0; s < kModes; ++s) {
                freq_x[s] = static_cast<double>(1 + static_cast<int>(4.0 * unit(rng)));
                freq_t[s] = 3.0 * unit(rng);
                phase[s] = 2.0 * std::numbers::pi * unit(rng);
                weight[s] = 2.0 * unit(rng) - 1.0;
                total_weight += std::fabs(weight[s]);
            }
            std::vector<ControlField> perturbed = solution.controls;
            auto& a = perturbed[j];
            for (std::size_t k = 0; k < time.steps(); ++k) {
                const double t = time.time(k) / time.horizon();
                for (std::size_t i = 0; i < grid.size(); ++i) {
                    const double x = grid.node(i) / grid.length();
                    double v = 0.0;
                    for (int s = 0; s < kModes; ++s) {
                        v += weight[s] *
                             std::sin(2.0 * std::numbers::pi * (freq_x[s] * x + freq_t[s] * t) +
                                      phase[s]);
                    }
                    a(k, i) += magnitude * v / total_weight;
                }
            }
            a.clamp();
            std::vector<DensityField> m = solution.densities;
            m[j] = solve_forward(problem.m0[j], a, problem.dynamics, grid, time);
            const double risk = crowd_risk(j, perturbed, m, problem.psi[j], lambda, problem.kernel,
                                           problem.aversion_weight, grid, time)
                                    .total;
            const double delta = risk - base;
            report.deltas[j].push_back(delta);
            min_delta = std::min(min_delta, delta);
        }
        report.min_delta.push_back(min_delta);
        if (min_delta < -tol) {
            report.passed = false;
        }
    }
    return report;
}

}  // namespace mfcrowd
