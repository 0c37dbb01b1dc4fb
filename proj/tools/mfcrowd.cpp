#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mfcrowd/config.hpp"
#include "mfcrowd/errors.hpp"
#include "mfcrowd/experiment.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Crowd-aversion optimal control on the torus"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "optimise the configured arms and write artifacts");
    std::string config_path;
    std::string out_dir;
    std::string arm = "both";
    bool particles = false;
    bool override_convexity = false;
    std::uint64_t seed = 0;
    run->add_option("config", config_path, "TOML experiment file")->required()->check(CLI::ExistingFile);
    run->add_option("--out", out_dir, "output directory")->required();
    run->add_option("--arm", arm, "local, nonlocal or both")
        ->check(CLI::IsMember({"local", "nonlocal", "both"}));
    run->add_flag("--particles", particles, "run the particle convergence ladder");
    run->add_flag("--override-convexity", override_convexity,
                  "optimise even when the convexity check finds a violation");
    auto* seed_opt = run->add_option("--seed", seed, "particle seed (overrides particles.seed)");

    CLI11_PARSE(app, argc, argv);

    try {
        const auto config = mfcrowd::parse_config(config_path);
        for (const auto& note : config.notes) {
            std::cerr << "note: " << note << '\n';
        }
        mfcrowd::RunOptions options;
        if (arm != "both") {
            options.arms = {arm};
        }
        options.particles = particles;
        options.override_convexity = override_convexity;
        if (seed_opt->count() > 0) {
            options.seed = seed;
        }
        options.log = [](const std::string& msg) { std::cerr << msg << std::endl; };
        const auto summary = mfcrowd::run_experiment(config, out_dir, options);
        std::cerr << "status: " << summary.status << '\n';
        return summary.exit_code;
    } catch (const mfcrowd::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return mfcrowd::kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return mfcrowd::kExitConfig;
    }
}
