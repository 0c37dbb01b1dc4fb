#include <doctest.h>

#include <cmath>
#include <string>

#include "mfcrowd/optimizer.hpp"
#include "mfcrowd/risk.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace mfcrowd;
using oracles::triple_loop;
using testsupport::random_problem;
using testsupport::smooth_control;

TEST_SUITE("risk") {

TEST_CASE("pooled and crowd risks equal a triple loop") {
    TorusGrid g(16);
    const auto kernel = mollify(build_indicator_kernel({0.0, 0.25}, g), 2.0 * g.h(), g);
    Eigen::MatrixXd lambda(2, 2);
    lambda << 1.0, 0.5, 0.5, 2.0;
    const auto bar = symmetrize_lambda(lambda);
    auto p = random_problem(16, 64, 0.05, 2, 40.0, kernel, bar, 12);
    std::vector<ControlField> a{smooth_control(p.time, g, 10.0, 1, 4.0),
                                smooth_control(p.time, g, 10.0, 2, 4.0, 1.0)};
    const auto m = solve_all_forward(p, a);

    const auto pooled = pooled_risk(a, m, p.psi, bar, kernel, p.aversion_weight, g, p.time);
    const auto expect = triple_loop(p, a, m, bar, false, 0);
    CHECK(std::fabs(pooled.energy - expect.energy) < 1e-13);
    CHECK(std::fabs(pooled.aversion - expect.aversion) < 1e-13 * std::fabs(expect.aversion));
    CHECK(std::fabs(pooled.terminal - expect.terminal) < 1e-13);
    CHECK(pooled.total == pooled.energy + pooled.aversion + pooled.terminal);

    for (std::size_t j = 0; j < 2; ++j) {
        const auto own = crowd_risk(j, a, m, p.psi[j], lambda, kernel, p.aversion_weight, g, p.time);
        const auto row = triple_loop(p, a, m, lambda, true, j);
        CHECK(std::fabs(own.energy - row.energy) < 1e-13);
        CHECK(std::fabs(own.aversion - row.aversion) < 1e-13 * std::fabs(row.aversion));
        CHECK(std::fabs(own.terminal - row.terminal) < 1e-13);
    }
}

TEST_CASE("local mode pairs densities pointwise") {
    TorusGrid g(16);
    auto p = random_problem(16, 32, 0.02, 1, 7.0, AversionKernel::local(),
                            Eigen::MatrixXd::Identity(1, 1), 4);
    std::vector<ControlField> a{ControlField(p.time, g, 1.0)};
    const auto m = solve_all_forward(p, a);
    const auto r = pooled_risk(a, m, p.psi, p.lambda_bar, p.kernel, 7.0, g, p.time);
    double expect = 0.0;
    for (std::size_t k = 0; k < p.time.steps(); ++k) {
        for (std::size_t x = 0; x < 16; ++x) {
            expect += 7.0 * p.time.dt() * g.h() * m[0](k, x) * m[0](k, x);
        }
    }
    CHECK(r.energy == 0.0);
    CHECK(r.aversion == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("zero weight skips the aversion") {
    TorusGrid g(16);
    auto p = random_problem(16, 32, 0.02, 1, 0.0, AversionKernel::local(),
                            Eigen::MatrixXd::Identity(1, 1), 4);
    std::vector<ControlField> a{ControlField(p.time, g, 1.0, 0.5)};
    const auto m = solve_all_forward(p, a);
    const auto r = pooled_risk(a, m, p.psi, p.lambda_bar, p.kernel, 0.0, g, p.time);
    CHECK(r.aversion == 0.0);
    CHECK(r.energy == doctest::Approx(0.125 * 0.02).epsilon(1e-13));
}

TEST_CASE("lambda symmetrisation") {
    Eigen::MatrixXd lambda(2, 2);
    lambda << 1.0, 0.5, 0.5, 1.0;
    const auto bar = symmetrize_lambda(lambda);
    CHECK(bar(0, 0) == 1.0);
    CHECK(bar(0, 1) == 0.5);
    CHECK(bar(1, 0) == 0.0);
    CHECK(bar(1, 1) == 1.0);
    CHECK(reconstruct_lambda(bar) == lambda);

    Eigen::MatrixXd three(3, 3);
    three << 2.0, 0.25, 1.5, 0.25, 0.0, 3.0, 1.5, 3.0, 1.0;
    CHECK(reconstruct_lambda(symmetrize_lambda(three)) == three);

    Eigen::MatrixXd asym(2, 2);
    asym << 1.0, 0.5, 0.4, 1.0;
    try {
        symmetrize_lambda(asym);
        FAIL("expected rejection");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("symmetric") != std::string::npos);
    }
    Eigen::MatrixXd negative(2, 2);
    negative << 1.0, -0.5, -0.5, 1.0;
    CHECK_THROWS_AS(symmetrize_lambda(negative), std::invalid_argument);
}

TEST_CASE("local convexity is an eigenvalue test") {
    TorusGrid g(16);
    const auto ok = check_convexity(Eigen::MatrixXd::Identity(2, 2), AversionKernel::local(), g, 10);
    CHECK(ok.status == ConvexityStatus::CertifiedPsd);
    CHECK(ok.min_value == doctest::Approx(1.0));

    Eigen::MatrixXd bad(2, 2);
    bad << 1.0, 3.0, 3.0, 1.0;
    const auto verdict = check_convexity(symmetrize_lambda(bad), AversionKernel::local(), g, 10);
    CHECK(verdict.status == ConvexityStatus::Violated);
    CHECK(verdict.min_value == doctest::Approx(-0.5));
    CHECK(to_string(verdict.status) == "violated");
}

TEST_CASE("nonlocal convexity sampling") {
    TorusGrid g(64);
    // a centred bump has a positive Fourier transform
    const auto bump = AversionKernel::nonlocal(bump_weights(0.2, g), {-0.2, 0.2}, 0.0);
    const auto ok = check_convexity(Eigen::MatrixXd::Identity(1, 1), bump, g, 50, 3);
    CHECK(ok.status == ConvexityStatus::SampledOk);
    CHECK(ok.trials_run == 50);
    CHECK(ok.min_value >= 0.0);

    // an indicator displaced by half the torus has cos(2 pi k x) < 0 at k = 1
    const auto far = build_indicator_kernel({0.4, 0.6}, g);
    const auto bad = check_convexity(Eigen::MatrixXd::Identity(1, 1), far, g, 100, 3);
    CHECK(bad.status == ConvexityStatus::Violated);
    REQUIRE(bad.witness_m.size() == 1);
    std::vector<std::vector<double>> w{bad.witness_m[0]};
    for (std::size_t i = 0; i < g.size(); ++i) {
        w[0][i] -= bad.witness_m_prime[0][i];
    }
    CHECK(crowding_form(w, Eigen::MatrixXd::Identity(1, 1), far, g) < -1e-10);

    const auto again = check_convexity(Eigen::MatrixXd::Identity(1, 1), far, g, 100, 3);
    CHECK(again.min_value == bad.min_value);
    CHECK(again.witness_trial == bad.witness_trial);
}

TEST_CASE("random densities are valid") {
    TorusGrid g(32);
    const auto m = random_density(g, 99);
    CHECK(integrate(m, g) == doctest::Approx(1.0).epsilon(1e-14));
    for (double v : m) {
        CHECK(v > 0.0);
    }
    CHECK(random_density(g, 99) == m);
    CHECK(random_density(g, 100) != m);
}

TEST_CASE("hamiltonian integrand") {
    TorusGrid g(8);
    std::vector<double> a(8, 2.0);
    std::vector<double> m(8, 1.0);
    std::vector<double> px(8, -1.0);
    HamiltonianSlice s{{a}, {m}, {px}};
    const auto h = hamiltonian_integrand(s, Eigen::MatrixXd::Identity(1, 1), AversionKernel::local(), 3.0, g);
    for (double v : h) {
        // 1/2 * 4 * 1 + 3 * 1 * 1 + 2 * 1 * (-1)
        CHECK(v == doctest::Approx(3.0));
    }
}

}
