#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mfcrowd/errors.hpp"
#include "mfcrowd/experiment.hpp"

using namespace mfcrowd;
namespace fs = std::filesystem;

namespace {

const std::string kSmall = R"(
C = 20.0
kernel = { mode = "nonlocal", support_lo = 0.0, support_hi = 0.25 }
[grid]
n_x = 16
T = 0.1
[optimizer]
max_iters = 40
rel_tol = 1e-9
[convexity]
trials = 20
[particles]
ladder = [10, 40]
seeds = 2
checkpoints = 4
[output]
time_stride = 1
[[crowd]]
profile = "paper_fig1"
)";

fs::path fresh_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("mfcrowd_test_" + name);
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

RunOptions quiet() {
    RunOptions o;
    o.threads = 1;
    return o;
}

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("artifacts reproduce the reported risk") {
    const auto config = parse_config_text(kSmall);
    const auto dir = fresh_dir("artifacts");
    auto options = quiet();
    options.particles = true;
    const auto summary = run_experiment(config, dir, options);
    CHECK(summary.exit_code == kExitOk);
    for (const char* f : {"summary.json", "config_echo.json", "differences.csv", "particles.csv",
                          "particle_histograms.csv", "particle_convergence.csv", "local/m.csv",
                          "local/a.csv", "local/p.csv", "local/risk_history.csv", "nonlocal/m.csv",
                          "nonlocal/risk_history.csv"}) {
        CHECK_MESSAGE(fs::exists(dir / f), f);
    }

    const auto doc = nlohmann::json::parse(slurp(dir / "summary.json"));
    const double reported = doc["arms"]["nonlocal"]["risk"]["total"];

    // recompute from the CSVs alone
    const auto grid = config.grid();
    const auto time = config.time();
    const auto kernel = config.build_kernel(KernelMode::Nonlocal);
    const auto m_rows = read_field_csv((dir / "nonlocal/m.csv").string());
    const auto a_rows = read_field_csv((dir / "nonlocal/a.csv").string());
    const std::size_t n = grid.size();
    REQUIRE(m_rows.size() == (time.steps() + 1) * n);
    REQUIRE(a_rows.size() == time.steps() * n);
    const auto psi = discretize_profile(config.crowds[0].psi, grid, false);
    double total = 0.0;
    std::vector<double> m(n);
    for (std::size_t k = 0; k <= time.steps(); ++k) {
        for (std::size_t i = 0; i < n; ++i) {
            m[i] = m_rows[k * n + i].value;
        }
        if (k == time.steps()) {
            for (std::size_t i = 0; i < n; ++i) {
                total += grid.h() * psi[i] * m[i];
            }
            break;
        }
        const auto g = crowding_term(kernel, m, grid);
        for (std::size_t i = 0; i < n; ++i) {
            const double a = a_rows[k * n + i].value;
            total += time.dt() * grid.h() * (0.5 * a * a * m[i] + config.aversion_weight * g[i] * m[i]);
        }
    }
    CHECK(total == doctest::Approx(reported).epsilon(1e-13));

    const auto rerun_dir = fresh_dir("artifacts_rerun");
    run_experiment(config, rerun_dir, options);
    CHECK(slurp(dir / "summary.json") == slurp(rerun_dir / "summary.json"));
    CHECK(slurp(dir / "particles.csv") == slurp(rerun_dir / "particles.csv"));

    auto threaded = options;
    threaded.threads = 3;
    const auto threaded_dir = fresh_dir("artifacts_threaded");
    run_experiment(config, threaded_dir, threaded);
    CHECK(slurp(dir / "summary.json") == slurp(threaded_dir / "summary.json"));

    auto reseeded = options;
    reseeded.seed = 99;
    const auto reseeded_dir = fresh_dir("artifacts_reseeded");
    run_experiment(config, reseeded_dir, reseeded);
    CHECK(slurp(dir / "particles.csv") != slurp(reseeded_dir / "particles.csv"));

    for (const auto& d : {dir, rerun_dir, threaded_dir, reseeded_dir}) {
        fs::remove_all(d);
    }
}

TEST_CASE("free crowd with no costs has zero risk") {
    const std::string flat = R"(
C = 0.0
kernel = { mode = "nonlocal", support_lo = -0.1, support_hi = 0.1 }
[grid]
n_x = 16
T = 0.1
[[crowd]]
profile = "flat"
)";
    const auto dir = fresh_dir("flat");
    const auto summary = run_experiment(parse_config_text(flat), dir, quiet());
    CHECK(summary.exit_code == kExitOk);
    for (const auto& arm : summary.arms) {
        CHECK(arm.converged);
        CHECK(std::fabs(arm.risk.total) < 1e-14);
    }
    fs::remove_all(dir);
}

TEST_CASE("convexity violation blocks the run unless overridden") {
    std::string text = kSmall;
    text.replace(text.find("support_lo = 0.0, support_hi = 0.25"), 35,
                 "support_lo = 0.4, support_hi = 0.6");
    text.replace(text.find("trials = 20"), 11, "trials = 100");
    const auto config = parse_config_text(text);
    const auto dir = fresh_dir("convexity");
    const auto blocked = run_experiment(config, dir, quiet());
    CHECK(blocked.exit_code == kExitConvexity);
    CHECK(blocked.status == "convexity_violation");
    CHECK_FALSE(blocked.arm("nonlocal")->optimized);
    CHECK(blocked.arm("local")->convexity.status == ConvexityStatus::CertifiedPsd);
    CHECK(fs::exists(dir / "summary.json"));
    CHECK_FALSE(fs::exists(dir / "nonlocal"));

    auto options = quiet();
    options.override_convexity = true;
    const auto forced = run_experiment(config, dir, options);
    CHECK(forced.exit_code != kExitConvexity);
    CHECK(forced.arm("nonlocal")->optimized);
    CHECK(forced.arm("nonlocal")->convexity_overridden);
    fs::remove_all(dir);
}

TEST_CASE("single arm runs skip the comparison") {
    const auto dir = fresh_dir("single");
    auto options = quiet();
    options.arms = {"local"};
    options.particles = true;
    const auto summary = run_experiment(parse_config_text(kSmall), dir, options);
    CHECK(summary.arms.size() == 1);
    CHECK_FALSE(summary.comparison.has_value());
    CHECK_FALSE(fs::exists(dir / "differences.csv"));
    CHECK(summary.particles_skipped == "needs the nonlocal arm");
    fs::remove_all(dir);
}

TEST_CASE("worker count") {
    CHECK(worker_count(3) == 3);
    ::setenv("MFCROWD_THREADS", "2", 1);
    CHECK(worker_count(0) == 2);
    ::setenv("MFCROWD_THREADS", "many", 1);
    CHECK_THROWS_AS(worker_count(0), ConfigError);
    ::unsetenv("MFCROWD_THREADS");
    CHECK(worker_count(0) >= 1);
}

}
