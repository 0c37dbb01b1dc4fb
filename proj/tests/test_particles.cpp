#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mfcrowd/errors.hpp"
#include "mfcrowd/particles.hpp"
#include "support.hpp"

using namespace mfcrowd;

namespace {

double brute_force_w2(const std::vector<double>& a, const std::vector<double>& b,
                      const TorusGrid& g) {
    std::vector<std::size_t> perm(a.size());
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double cost = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double d = g.distance(a[i], b[perm[i]]);
            cost += d * d;
        }
        best = std::min(best, cost);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return std::sqrt(best / static_cast<double>(a.size()));
}

struct Setup {
    TorusGrid grid{32};
    TimeGrid time{0.1, 256};
    Dynamics dynamics{0.8};
    std::vector<double> m0 = testsupport::smooth_density(grid, 3);
    std::vector<double> psi = testsupport::smooth_field(grid, 4, 1.0, 1.0);
    ControlField control = testsupport::smooth_control(time, grid, 4.0, 5, 3.0);
    AversionKernel kernel = mollify(build_indicator_kernel({0.0, 0.2}, grid), 2.0 * grid.h(), grid);
};

}  // namespace

TEST_SUITE("particles") {

TEST_CASE("simulation is reproducible per seed") {
    Setup s;
    const auto a = simulate_particles(50, s.control, s.m0, s.dynamics, s.grid, s.time, 42);
    const auto b = simulate_particles(50, s.control, s.m0, s.dynamics, s.grid, s.time, 42);
    const auto c = simulate_particles(50, s.control, s.m0, s.dynamics, s.grid, s.time, 43);
    CHECK(a.positions == b.positions);
    CHECK(a.positions != c.positions);
    CHECK(a.has_full_trajectories(s.time));
    for (const auto& slice : a.positions) {
        for (double x : slice) {
            CHECK(x >= 0.0);
            CHECK(x < 1.0);
        }
    }
}

TEST_CASE("particle substreams do not depend on the ensemble size") {
    Setup s;
    const auto small = simulate_particles(5, s.control, s.m0, s.dynamics, s.grid, s.time, 8);
    const auto large = simulate_particles(20, s.control, s.m0, s.dynamics, s.grid, s.time, 8);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(small.positions.back()[i] == large.positions.back()[i]);
    }
}

TEST_CASE("noise-free particles follow the drift") {
    Setup s;
    ControlField a(s.time, s.grid, 4.0, 2.5);
    const auto e = simulate_particles(10, a, s.m0, Dynamics{0.0}, s.grid, s.time, 1, 64);
    CHECK(e.steps == std::vector<std::size_t>{0, 64, 128, 192, 256});
    for (std::size_t i = 0; i < 10; ++i) {
        const double expect = s.grid.wrap_position(e.positions.front()[i] + 2.5 * 0.1);
        CHECK(s.grid.distance(e.positions.back()[i], expect) < 1e-12);
    }
    CHECK(e.stored_index(128) == 2);
    CHECK_THROWS_AS(e.stored_index(100), std::out_of_range);
}

TEST_CASE("initial samples follow m0") {
    TorusGrid g(16);
    std::vector<double> m0(16, 0.0);
    m0[4] = 16.0;
    const auto x = sample_initial_positions(200, m0, g, 5);
    for (double v : x) {
        CHECK(g.nearest_cell(v) == 4);
    }
    const auto hist = empirical_histogram(x, g);
    CHECK(hist[4] == doctest::Approx(16.0));
    CHECK(integrate(hist, g) == doctest::Approx(1.0));
}

TEST_CASE("batched and per-particle risks agree") {
    Setup s;
    const auto e = simulate_particles(12, s.control, s.m0, s.dynamics, s.grid, s.time, 77);
    const auto all = empirical_risks(e, s.control, s.kernel, 30.0, s.psi, s.grid, s.time);
    for (std::size_t i = 0; i < 12; ++i) {
        const double one = empirical_risk(i, e, s.control, s.kernel, 30.0, s.psi, s.grid, s.time);
        CHECK(all[i] == doctest::Approx(one).epsilon(1e-12));
    }
    const auto fused = simulate_with_risk(12, s.control, s.m0, s.dynamics, s.grid, s.time, 77,
                                          s.kernel, 30.0, s.psi, 32);
    CHECK(fused.ensemble.positions.back() == e.positions.back());
    for (std::size_t i = 0; i < 12; ++i) {
        CHECK(fused.risks[i] == doctest::Approx(all[i]).epsilon(1e-12));
    }
}

TEST_CASE("mean risk is invariant under relabelling") {
    Setup s;
    auto e = simulate_particles(9, s.control, s.m0, s.dynamics, s.grid, s.time, 3);
    const auto base = empirical_risks(e, s.control, s.kernel, 30.0, s.psi, s.grid, s.time);
    for (auto& slice : e.positions) {
        std::reverse(slice.begin(), slice.end());
    }
    const auto flipped = empirical_risks(e, s.control, s.kernel, 30.0, s.psi, s.grid, s.time);
    const double m1 = std::accumulate(base.begin(), base.end(), 0.0);
    const double m2 = std::accumulate(flipped.begin(), flipped.end(), 0.0);
    CHECK(m1 == doctest::Approx(m2).epsilon(1e-13));
    CHECK(flipped[0] == doctest::Approx(base[8]).epsilon(1e-13));
}

TEST_CASE("a lone particle feels no aversion") {
    Setup s;
    const auto e = simulate_particles(1, s.control, s.m0, s.dynamics, s.grid, s.time, 2);
    const double with = empirical_risk(0, e, s.control, s.kernel, 1e3, s.psi, s.grid, s.time);
    const double without = empirical_risk(0, e, s.control, s.kernel, 0.0, s.psi, s.grid, s.time);
    CHECK(with == without);
}

TEST_CASE("risk preconditions") {
    Setup s;
    const auto e = simulate_particles(4, s.control, s.m0, s.dynamics, s.grid, s.time, 2);
    CHECK_THROWS_AS(empirical_risk(4, e, s.control, s.kernel, 1.0, s.psi, s.grid, s.time),
                    std::out_of_range);
    CHECK_THROWS_AS(empirical_risk(0, e, s.control, AversionKernel::local(), 1.0, s.psi, s.grid, s.time),
                    ModeError);
    const auto thin = simulate_particles(4, s.control, s.m0, s.dynamics, s.grid, s.time, 2, 8);
    CHECK_THROWS_AS(empirical_risks(thin, s.control, s.kernel, 1.0, s.psi, s.grid, s.time),
                    std::invalid_argument);
    CHECK_THROWS(simulate_particles(0, s.control, s.m0, s.dynamics, s.grid, s.time, 2));
}

TEST_CASE("w2 of single atoms is the geodesic distance") {
    TorusGrid g(16);
    for (auto [x, y] : {std::pair{0.1, 0.3}, {0.05, 0.95}, {0.0, 0.5}, {0.7, 0.7}}) {
        const std::vector<double> a{x};
        const std::vector<double> b{y};
        CHECK(wasserstein2_torus(a, b, 1.0) == g.distance(x, y));
    }
}

TEST_CASE("w2 equals the best assignment") {
    TorusGrid g(16);
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t n = 1; n <= 6; ++n) {
        for (int rep = 0; rep < 20; ++rep) {
            std::vector<double> a(n);
            std::vector<double> b(n);
            for (std::size_t i = 0; i < n; ++i) {
                a[i] = u(rng);
                b[i] = u(rng);
            }
            CHECK(wasserstein2_torus(a, b, 1.0) ==
                  doctest::Approx(brute_force_w2(a, b, g)).epsilon(1e-13));
        }
    }
}

TEST_CASE("w2 is a rotation-aware metric") {
    std::vector<double> a{0.1, 0.4, 0.8};
    std::vector<double> b{0.35, 0.9, 0.95};
    const double d = wasserstein2_torus(a, b, 1.0);
    CHECK(wasserstein2_torus(a, a, 1.0) == 0.0);
    CHECK(d == wasserstein2_torus(b, a, 1.0));
    for (double c : {0.13, 0.5, 0.77}) {
        std::vector<double> ra = a;
        std::vector<double> rb = b;
        for (double& x : ra) {
            x = std::fmod(x + c, 1.0);
        }
        for (double& x : rb) {
            x = std::fmod(x + c, 1.0);
        }
        CHECK(wasserstein2_torus(ra, rb, 1.0) == doctest::Approx(d).epsilon(1e-13));
    }
    // a rigid rotation of a uniform-spaced cloud by less than half the spacing
    std::vector<double> grid_pts{0.0, 0.25, 0.5, 0.75};
    std::vector<double> turned{0.1, 0.35, 0.6, 0.85};
    CHECK(wasserstein2_torus(grid_pts, turned, 1.0) == doctest::Approx(0.1));
    CHECK_THROWS(wasserstein2_torus(a, std::vector<double>{0.1}, 1.0));
}

TEST_CASE("density quantiles") {
    TorusGrid g(10);
    std::vector<double> uniform(10, 1.0);
    const auto q = density_quantiles(uniform, g, 5);
    // cells span [-0.05, 0.95); the quantiles sit at the midpoints of five equal bins
    for (std::size_t k = 0; k < 5; ++k) {
        CHECK(q[k] == doctest::Approx(g.wrap_position(-0.05 + 0.1 + 0.2 * static_cast<double>(k))));
    }
    CHECK(wasserstein2_to_density(q, uniform, g) < 1e-15);
    std::vector<double> spike(10, 0.0);
    spike[3] = 10.0;
    for (double x : density_quantiles(spike, g, 7)) {
        CHECK(g.nearest_cell(x) == 3);
    }
}

TEST_CASE("histograms have unit mass") {
    Setup s;
    const auto e = simulate_particles(300, s.control, s.m0, s.dynamics, s.grid, s.time, 6, 128);
    const auto h = empirical_histogram(e, 128, s.grid);
    CHECK(integrate(h, s.grid) == doctest::Approx(1.0).epsilon(1e-13));
}

}
