#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>

#include "mfcrowd/errors.hpp"
#include "mfcrowd/grid.hpp"

using namespace mfcrowd;

TEST_SUITE("grid") {

TEST_CASE("torus geometry") {
    TorusGrid g(10);
    CHECK(g.h() == doctest::Approx(0.1));
    CHECK(g.node(3) == doctest::Approx(0.3));
    CHECK(g.wrap(-1) == 9);
    CHECK(g.wrap(10) == 0);
    CHECK(g.wrap(-21) == 9);
    CHECK(g.wrap_position(-0.25) == doctest::Approx(0.75));
    CHECK(g.wrap_position(1.0) == 0.0);
    CHECK(g.wrap_position(2.5) == doctest::Approx(0.5));
    CHECK(g.nearest_cell(0.04) == 0);
    CHECK(g.nearest_cell(0.06) == 1);
    CHECK(g.nearest_cell(0.96) == 0);
    CHECK(g.displacement(0.9, 0.1) == doctest::Approx(0.2));
    CHECK(g.displacement(0.1, 0.9) == doctest::Approx(-0.2));
    CHECK(g.distance(0.05, 0.95) == doctest::Approx(0.1));
    CHECK_THROWS_AS(TorusGrid(4), std::invalid_argument);
}

TEST_CASE("wrap_position stays inside the torus") {
    TorusGrid g(16, 2.0);
    for (double x : {-1e-17, -4.0, 3.9999999999999996, 1e300 * 0.0, 2.0, 7.3}) {
        const double y = g.wrap_position(x);
        CHECK(y >= 0.0);
        CHECK(y < 2.0);
    }
}

TEST_CASE("time grid") {
    TimeGrid t(2.0, 8);
    CHECK(t.dt() == 0.25);
    CHECK(t.time(8) == 2.0);
    CHECK_THROWS(TimeGrid(1.0, 0));
    CHECK_THROWS(TimeGrid(-1.0, 4));
}

TEST_CASE("integrate and gradient") {
    TorusGrid g(32);
    std::vector<double> f(32);
    for (std::size_t i = 0; i < 32; ++i) {
        f[i] = std::sin(2.0 * std::numbers::pi * g.node(i));
    }
    CHECK(std::fabs(integrate(f, g)) < 1e-15);
    const auto df = gradient_x(f, g);
    const double factor = std::sin(2.0 * std::numbers::pi * g.h()) / g.h();
    for (std::size_t i = 0; i < 32; ++i) {
        CHECK(df[i] == doctest::Approx(factor * std::cos(2.0 * std::numbers::pi * g.node(i))).epsilon(1e-12));
    }
    std::vector<double> short_slice(31);
    CHECK_THROWS_AS(integrate(short_slice, g), DimensionError);
}

TEST_CASE("control bounds") {
    TorusGrid g(8);
    TimeGrid t(1.0, 4);
    ControlField a(t, g, 2.0);
    CHECK(a.slices() == 4);
    a(1, 3) = 5.0;
    a(2, 0) = -7.0;
    CHECK_FALSE(a.within_bounds());
    a.clamp();
    CHECK(a.within_bounds());
    CHECK(a(1, 3) == 2.0);
    CHECK(a(2, 0) == -2.0);
    DensityField m(t, g);
    CHECK(m.slices() == 5);
}

TEST_CASE("field csv round trip keeps every digit") {
    TorusGrid g(8);
    TimeGrid t(1.0, 5);
    DensityField m(t, g);
    for (std::size_t k = 0; k <= 5; ++k) {
        for (std::size_t i = 0; i < 8; ++i) {
            m(k, i) = std::exp(-0.3 * static_cast<double>(k)) / 3.0 + 1e-9 * static_cast<double>(i);
        }
    }
    const auto path = std::filesystem::temp_directory_path() / "mfcrowd_grid_roundtrip.csv";
    write_field_csv(path.string(), m, g, t, 2);
    const auto rows = read_field_csv(path.string());
    // slices 0, 2, 4 and the final slice 5
    REQUIRE(rows.size() == 4 * 8);
    CHECK(rows.back().t == 1.0);
    CHECK(rows.back().value == m(5, 7));
    CHECK(rows[8].t == t.time(2));
    CHECK(rows[8 + 3].value == m(2, 3));
    CHECK(rows[8 + 3].x == g.node(3));
    std::filesystem::remove(path);

    std::ostringstream out;
    write_field_csv(out, m, g, t);
    CHECK(out.str().rfind("t,x,value\n", 0) == 0);
}

}
