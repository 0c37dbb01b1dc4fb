#include "mfcrowd/risk.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "mfcrowd/errors.hpp"

namespace mfcrowd {
namespace {

void check_shapes(std::span<const ControlField> controls, std::span<const DensityField> densities,
                  const TorusGrid& grid, const TimeGrid& time) {
    if (controls.size() != densities.size() || controls.empty()) {
        throw DimensionError("risk: need one control and one density per crowd");
    }
    for (std::size_t j = 0; j < controls.size(); ++j) {
        if (controls[j].slices() != time.steps() || controls[j].width() != grid.size() ||
            densities[j].slices() != time.steps() + 1 || densities[j].width() != grid.size()) {
            throw DimensionError("risk: field shape does not match grids for crowd " +
                                 std::to_string(j));
        }
    }
}

void check_matrix(const Eigen::MatrixXd& mat, std::size_t m, const char* what) {
    if (static_cast<std::size_t>(mat.rows()) != m || static_cast<std::size_t>(mat.cols()) != m) {
        throw DimensionError(std::string(what) + ": interaction matrix must be M x M");
    }
}

double energy_slice(std::span<const double> a, std::span<const double> m) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += 0.5 * a[i] * a[i] * m[i];
    }
    return s;
}

double dot(std::span<const double> u, std::span<const double> v) {
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        s += u[i] * v[i];
    }
    return s;
}

double terminal_cost(std::span<const double> psi, std::span<const double> m_final,
                     const TorusGrid& grid) {
    if (psi.size() != grid.size()) {
        throw DimensionError("risk: terminal cost length does not match n_x");
    }
    return grid.h() * dot(psi, m_final);
}

RiskBreakdown finish(double energy, double aversion, double terminal) {
    return {energy, aversion, terminal, energy + aversion + terminal};
}

}  // namespace

AversionMatrices AversionMatrices::from_game(const Eigen::MatrixXd& lambda) {
    return {lambda, symmetrize_lambda(lambda)};
}

RiskBreakdown pooled_risk(std::span<const ControlField> controls,
                          std::span<const DensityField> densities,
                          std::span<const std::vector<double>> psi,
                          const Eigen::MatrixXd& lambda_bar, const AversionKernel& kernel,
                          double aversion_weight, const TorusGrid& grid, const TimeGrid& time) {
    check_shapes(controls, densities, grid, time);
    const std::size_t crowds = controls.size();
    check_matrix(lambda_bar, crowds, "pooled_risk");
    if (psi.size() != crowds) {
        throw DimensionError("pooled_risk: need one terminal cost per crowd");
    }
    const double cell = grid.h() * time.dt();

    std::vector<std::vector<double>> penalty(crowds, std::vector<double>(grid.size()));
    double energy = 0.0;
    double aversion = 0.0;
    for (std::size_t k = 0; k < time.steps(); ++k) {
        for (std::size_t j = 0; j < crowds; ++j) {
            energy += energy_slice(controls[j].slice(k), densities[j].slice(k));
        }
        if (aversion_weight == 0.0) {
            continue;
        }
        for (std::size_t j = 0; j < crowds; ++j) {
            penalty_field(kernel, densities[j].slice(k), grid, penalty[j]);
        }
        for (std::size_t j = 0; j < crowds; ++j) {
            for (std::size_t l = 0; l < crowds; ++l) {
                const double w = lambda_bar(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(l));
                if (w != 0.0) {
                    aversion += w * dot(penalty[j], densities[l].slice(k));
                }
            }
        }
    }
    double terminal = 0.0;
    for (std::size_t j = 0; j < crowds; ++j) {
        terminal += terminal_cost(psi[j], densities[j].slice(time.steps()), grid);
    }
    return finish(cell * energy, cell * aversion_weight * aversion, terminal);
}

RiskBreakdown crowd_risk(std::size_t j, std::span<const ControlField> controls,
                         std::span<const DensityField> densities, std::span<const double> psi_j,
                         const Eigen::MatrixXd& lambda, const AversionKernel& kernel,
                         double aversion_weight, const TorusGrid& grid, const TimeGrid& time) {
    check_shapes(controls, densities, grid, time);
    const std::size_t crowds = controls.size();
    check_matrix(lambda, crowds, "crowd_risk");
    if (j >= crowds) {
        throw std::out_of_range("crowd_risk: crowd index out of range");
    }
    const double cell = grid.h() * time.dt();
    std::vector<double> penalty(grid.size());
    double energy = 0.0;
    double aversion = 0.0;
    for (std::size_t k = 0; k < time.steps(); ++k) {
        const auto mj = densities[j].slice(k);
        energy += energy_slice(controls[j].slice(k), mj);
        if (aversion_weight == 0.0) {
            continue;
        }
        for (std::size_t l = 0; l < crowds; ++l) {
            const double w = lambda(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(l));
            if (w == 0.0) {
                continue;
            }
            penalty_field(kernel, densities[l].slice(k), grid, penalty);
            aversion += w * dot(penalty, mj);
        }
    }
    const double terminal = terminal_cost(psi_j, densities[j].slice(time.steps()), grid);
    return finish(cell * energy, cell * aversion_weight * aversion, terminal);
}

std::vector<double> hamiltonian_integrand(const HamiltonianSlice& slice,
                                          const Eigen::MatrixXd& lambda_bar,
                                          const AversionKernel& kernel, double aversion_weight,
                                          const TorusGrid& grid) {
    const std::size_t crowds = slice.density.size();
    if (slice.control.size() != crowds || slice.costate_gradient.size() != crowds) {
        throw DimensionError("hamiltonian_integrand: inconsistent crowd count");
    }
    check_matrix(lambda_bar, crowds, "hamiltonian_integrand");
    const std::size_t n = grid.size();
    std::vector<double> h(n, 0.0);
    std::vector<std::vector<double>> penalty(crowds, std::vector<double>(n));
    for (std::size_t j = 0; j < crowds; ++j) {
        penalty_field(kernel, slice.density[j], grid, penalty[j]);
    }
    for (std::size_t j = 0; j < crowds; ++j) {
        const auto a = slice.control[j];
        const auto m = slice.density[j];
        const auto dp = slice.costate_gradient[j];
        for (std::size_t i = 0; i < n; ++i) {
            h[i] += 0.5 * a[i] * a[i] * m[i] + a[i] * m[i] * dp[i];
        }
        for (std::size_t l = 0; l < crowds; ++l) {
            const double w = aversion_weight *
                             lambda_bar(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(l));
            for (std::size_t i = 0; i < n; ++i) {
                h[i] += w * penalty[j][i] * slice.density[l][i];
            }
        }
    }
    return h;
}

Eigen::MatrixXd symmetrize_lambda(const Eigen::MatrixXd& lambda) {
    if (lambda.rows() != lambda.cols() || lambda.rows() == 0) {
        throw DimensionError("symmetrize_lambda: Lambda must be a nonempty square matrix");
    }
    if (lambda != lambda.transpose()) {
        throw std::invalid_argument(
            "symmetrize_lambda: Lambda is not symmetric; the aversion between crowds must be "
            "symmetric for the game to be rewritten as a pooled control problem");
    }
    if ((lambda.array() < 0.0).any()) {
        throw std::invalid_argument("symmetrize_lambda: Lambda entries must be nonnegative");
    }
    Eigen::MatrixXd bar = lambda.triangularView<Eigen::Upper>();
    return bar;
}

Eigen::MatrixXd reconstruct_lambda(const Eigen::MatrixXd& lambda_bar) {
    Eigen::MatrixXd diag = lambda_bar.diagonal().asDiagonal();
    return lambda_bar + lambda_bar.transpose() - diag;
}

std::string to_string(ConvexityStatus status) {
    switch (status) {
        case ConvexityStatus::CertifiedPsd:
            return "certified_psd";
        case ConvexityStatus::SampledOk:
            return "sampled_ok";
        case ConvexityStatus::Violated:
            return "violated";
    }
    return "unknown";
}

std::vector<double> random_density(const TorusGrid& grid, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> bumps(1, 4);
    const double len = grid.length();
    std::vector<double> m(grid.size(), 0.0);
    const double floor = 0.05 * unit(rng);
    const int count = bumps(rng);
    for (int b = 0; b < count; ++b) {
        const double centre = len * unit(rng);
        const double width = 2.0 * grid.h() + (0.25 * len - 2.0 * grid.h()) * unit(rng);
        const double weight = 0.2 + 0.8 * unit(rng);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const double d = grid.distance(centre, grid.node(i));
            m[i] += weight * std::exp(-0.5 * d * d / (width * width));
        }
    }
    for (double& v : m) {
        v += floor;
    }
    const double mass = integrate(m, grid);
    for (double& v : m) {
        v /= mass;
    }
    return m;
}

double crowding_form(std::span<const std::vector<double>> w, const Eigen::MatrixXd& lambda_bar,
                     const AversionKernel& kernel, const TorusGrid& grid) {
    const std::size_t crowds = w.size();
    check_matrix(lambda_bar, crowds, "crowding_form");
    std::vector<double> g(grid.size());
    double form = 0.0;
    for (std::size_t j = 0; j < crowds; ++j) {
        penalty_field(kernel, w[j], grid, g);
        for (std::size_t l = 0; l < crowds; ++l) {
            form += lambda_bar(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(l)) *
                    dot(g, w[l]);
        }
    }
    return grid.h() * form;
}

ConvexityVerdict check_convexity(const Eigen::MatrixXd& lambda_bar, const AversionKernel& kernel,
                                 const TorusGrid& grid, std::size_t trials, std::uint64_t seed) {
    if (trials == 0) {
        throw std::invalid_argument("check_convexity: trials must be at least 1");
    }
    if (lambda_bar.rows() != lambda_bar.cols() || lambda_bar.rows() == 0) {
        throw DimensionError("check_convexity: LambdaBar must be a nonempty square matrix");
    }
    ConvexityVerdict verdict;
    verdict.seed = seed;

    if (kernel.is_local()) {
        const Eigen::MatrixXd sym = 0.5 * (lambda_bar + lambda_bar.transpose());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
        verdict.min_value = eig.eigenvalues().minCoeff();
        verdict.trials_run = 0;
        verdict.status =
            verdict.min_value >= -1e-12 ? ConvexityStatus::CertifiedPsd : ConvexityStatus::Violated;
        return verdict;
    }

    const auto crowds = static_cast<std::size_t>(lambda_bar.rows());
    verdict.min_value = std::numeric_limits<double>::infinity();
    verdict.status = ConvexityStatus::SampledOk;
    std::vector<std::vector<double>> w(crowds);
    for (std::size_t t = 0; t < trials; ++t) {
        std::vector<std::vector<double>> m(crowds);
        std::vector<std::vector<double>> m_prime(crowds);
        for (std::size_t j = 0; j < crowds; ++j) {
            // per-trial, per-crowd streams: results do not depend on trial order
            const std::uint64_t base = seed + 0x9e3779b97f4a7c15ull * (2 * (t * crowds + j) + 1);
            m[j] = random_density(grid, base);
            m_prime[j] = random_density(grid, base ^ 0xda942042e4dd58b5ull);
            w[j].resize(grid.size());
            for (std::size_t i = 0; i < grid.size(); ++i) {
                w[j][i] = m[j][i] - m_prime[j][i];
            }
        }
        const double form = crowding_form(w, lambda_bar, kernel, grid);
        ++verdict.trials_run;
        if (form < verdict.min_value) {
            verdict.min_value = form;
        }
        if (form < -1e-10) {
            verdict.status = ConvexityStatus::Violated;
            verdict.witness_trial = t;
            verdict.witness_m = std::move(m);
            verdict.witness_m_prime = std::move(m_prime);
            break;
        }
    }
    return verdict;
}

}  // namespace mfcrowd
