#include "mfcrowd/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "mfcrowd/errors.hpp"
#include "mfcrowd/particles.hpp"

namespace mfcrowd {

namespace {

using Clock = std::chrono::steady_clock;
using nlohmann::json;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

void run_tasks(const std::vector<std::function<void()>>& tasks, std::size_t threads) {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(tasks.size());
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= tasks.size()) {
                return;
            }
            try {
                tasks[i]();
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t count = std::max<std::size_t>(1, std::min(threads, tasks.size()));
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < count; ++t) {
        pool.emplace_back(worker);
    }
    worker();
    for (auto& t : pool) {
        t.join();
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

std::string crowd_suffix(std::size_t j, std::size_t crowds) {
    return crowds == 1 ? "" : "_crowd" + std::to_string(j);
}

double max_of(std::span<const double> v) {
    return *std::max_element(v.begin(), v.end());
}

json risk_json(const RiskBreakdown& r) {
    return {{"energy", r.energy}, {"aversion", r.aversion}, {"terminal", r.terminal},
            {"total", r.total}};
}

bool non_increasing(const std::vector<double>& v) {
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[i - 1]) {
            return false;
        }
    }
    return true;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << text << '\n';
}

std::ofstream open_csv(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out.precision(17);
    return out;
}

void write_arm_artifacts(const std::filesystem::path& dir, const ArmSummary& arm,
                         const ControlState& state, const ControlProblem& problem,
                         std::size_t stride) {
    std::filesystem::create_directories(dir);
    write_trace_csv((dir / "risk_history.csv").string(), arm.trace);
    const std::size_t crowds = problem.crowds();
    for (std::size_t j = 0; j < crowds; ++j) {
        const auto sfx = crowd_suffix(j, crowds);
        write_field_csv((dir / ("m" + sfx + ".csv")).string(), state.densities[j], problem.grid,
                        problem.time, stride);
        write_field_csv((dir / ("a" + sfx + ".csv")).string(), state.controls[j], problem.grid,
                        problem.time, stride);
        write_field_csv((dir / ("p" + sfx + ".csv")).string(), state.adjoints[j], problem.grid,
                        problem.time, stride);
    }
}

// differences.csv: t,x,penalty_difference,density_difference with
// penalty_difference = G[m_nl] - m_loc and density_difference = m_nl - m_loc.
ArmComparison compare_arms(const ArmSummary& local, const ArmSummary& nonlocal,
                           const ControlProblem& nl_problem, const std::filesystem::path& out_dir,
                           std::size_t stride) {
    ArmComparison cmp;
    cmp.risk_margin = local.risk.total - nonlocal.risk.total;
    const auto& grid = nl_problem.grid;
    const auto& time = nl_problem.time;
    const std::size_t n_t = time.steps();
    const std::size_t crowds = nl_problem.crowds();
    std::vector<double> penalty(grid.size());
    for (std::size_t j = 0; j < crowds; ++j) {
        const auto& m_nl = nonlocal.state->densities[j];
        const auto& m_loc = local.state->densities[j];
        cmp.peak_margin.push_back(max_of(m_nl.slice(n_t)) - max_of(m_loc.slice(n_t)));

        auto csv = open_csv(out_dir / ("differences" + crowd_suffix(j, crowds) + ".csv"));
        csv << "t,x,penalty_difference,density_difference\n";
        for (std::size_t k = 0; k <= n_t; ++k) {
            if (k % stride != 0 && k != n_t) {
                continue;
            }
            crowding_term(nl_problem.kernel, m_nl.slice(k), grid, penalty);
            for (std::size_t i = 0; i < grid.size(); ++i) {
                csv << time.time(k) << ',' << grid.node(i) << ',' << penalty[i] - m_loc(k, i)
                    << ',' << m_nl(k, i) - m_loc(k, i) << '\n';
            }
        }

        crowding_term(nl_problem.kernel, m_nl.slice(n_t), grid, penalty);
        double pen = 0.0;
        double den = 0.0;
        double ref = 0.0;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            pen += std::fabs(penalty[i] - m_loc(n_t, i));
            den += std::fabs(m_nl(n_t, i) - m_loc(n_t, i));
            ref += std::fabs(m_loc(n_t, i));
        }
        cmp.penalty_gap_l1.push_back(pen / ref);
        cmp.density_gap_l1.push_back(den / ref);
    }
    return cmp;
}

std::uint64_t ladder_seed(std::uint64_t base, std::size_t n, std::size_t s) {
    SplitMix64 mix(base ^ (0xd1b54a32d192ed03ull * (static_cast<std::uint64_t>(n) + 1)));
    std::uint64_t seed = mix();
    for (std::size_t i = 0; i <= s; ++i) {
        seed = mix();
    }
    return seed;
}

struct ParticleRecord {
    std::size_t n = 0;
    std::size_t seed_index = 0;
    std::uint64_t seed = 0;
    double mean_risk = 0.0;
    std::vector<std::size_t> steps;
    std::vector<double> w2;
    std::vector<std::vector<double>> histograms;
    double seconds = 0.0;
};

std::vector<ParticleRecord> run_particle_ladder(const ControlProblem& problem,
                                                const Eigen::MatrixXd& lambda,
                                                const ControlState& state,
                                                const ParticleSpec& spec, std::size_t threads) {
    const auto& grid = problem.grid;
    const auto& time = problem.time;
    const std::size_t stride = std::max<std::size_t>(1, time.steps() / spec.checkpoints);
    const double weight = problem.aversion_weight * lambda(0, 0);
    std::vector<ParticleRecord> records;
    for (std::size_t n : spec.ladder) {
        for (std::size_t s = 0; s < spec.seeds; ++s) {
            ParticleRecord r;
            r.n = n;
            r.seed_index = s;
            r.seed = ladder_seed(spec.seed, n, s);
            records.push_back(r);
        }
    }
    std::vector<std::function<void()>> tasks;
    for (auto& rec : records) {
        tasks.emplace_back([&, stride, weight] {
            const auto start = Clock::now();
            const auto run = simulate_with_risk(rec.n, state.controls[0], problem.m0[0],
                                                problem.dynamics, grid, time, rec.seed,
                                                problem.kernel, weight, problem.psi[0], stride);
            double sum = 0.0;
            for (double v : run.risks) {
                sum += v;
            }
            rec.mean_risk = sum / static_cast<double>(rec.n);
            rec.steps = run.ensemble.steps;
            for (std::size_t s = 0; s < rec.steps.size(); ++s) {
                const auto& x = run.ensemble.positions[s];
                rec.w2.push_back(
                    wasserstein2_to_density(x, state.densities[0].slice(rec.steps[s]), grid));
                if (rec.seed_index == 0) {
                    rec.histograms.push_back(empirical_histogram(x, grid));
                }
            }
            rec.seconds = seconds_since(start);
        });
    }
    run_tasks(tasks, threads);
    return records;
}

double reference_risk(const ControlProblem& problem, const Eigen::MatrixXd& lambda,
                      const ControlState& state) {
    return crowd_risk(0, state.controls, state.densities, problem.psi[0], lambda, problem.kernel,
                      problem.aversion_weight, problem.grid, problem.time)
        .total;
}

ParticleStudy summarize_ladder(const std::vector<ParticleRecord>& records, const ParticleSpec& spec,
                               double j_det, double weight) {
    ParticleStudy study;
    study.deterministic_risk = j_det;
    study.aversion_weight = weight;
    std::vector<double> gaps;
    std::vector<double> w2s;
    for (std::size_t n : spec.ladder) {
        ParticleLevel level;
        level.n = n;
        for (const auto& r : records) {
            if (r.n != n) {
                continue;
            }
            level.risk_gap.push_back(std::fabs(r.mean_risk - j_det));
            level.w2_terminal.push_back(r.w2.back());
            level.seconds += r.seconds;
        }
        for (std::size_t s = 0; s < level.risk_gap.size(); ++s) {
            level.mean_risk_gap += level.risk_gap[s];
            level.mean_w2_terminal += level.w2_terminal[s];
        }
        level.mean_risk_gap /= static_cast<double>(level.risk_gap.size());
        level.mean_w2_terminal /= static_cast<double>(level.w2_terminal.size());
        gaps.push_back(level.mean_risk_gap);
        w2s.push_back(level.mean_w2_terminal);
        study.levels.push_back(std::move(level));
    }
    study.risk_gap_non_increasing = non_increasing(gaps);
    study.w2_non_increasing = non_increasing(w2s);
    return study;
}

void write_particle_artifacts(const std::filesystem::path& out_dir,
                              const std::vector<ParticleRecord>& records,
                              const ParticleStudy& study, const TorusGrid& grid,
                              const TimeGrid& time) {
    auto csv = open_csv(out_dir / "particles.csv");
    csv << "n_particles,seed_index,seed,t,w2_to_mean_field,mean_risk\n";
    for (const auto& r : records) {
        for (std::size_t s = 0; s < r.steps.size(); ++s) {
            csv << r.n << ',' << r.seed_index << ',' << r.seed << ',' << time.time(r.steps[s])
                << ',' << r.w2[s] << ',';
            if (r.steps[s] == time.steps()) {
                csv << r.mean_risk;
            }
            csv << '\n';
        }
    }
    auto hist = open_csv(out_dir / "particle_histograms.csv");
    hist << "n_particles,t,x,value\n";
    for (const auto& r : records) {
        for (std::size_t s = 0; s < r.histograms.size(); ++s) {
            for (std::size_t i = 0; i < grid.size(); ++i) {
                hist << r.n << ',' << time.time(r.steps[s]) << ',' << grid.node(i) << ','
                     << r.histograms[s][i] << '\n';
            }
        }
    }
    auto conv = open_csv(out_dir / "particle_convergence.csv");
    conv << "n_particles,mean_risk_gap,mean_w2_terminal\n";
    for (const auto& level : study.levels) {
        conv << level.n << ',' << level.mean_risk_gap << ',' << level.mean_w2_terminal << '\n';
    }
}

json verdict_json(const ArmSummary& arm) {
    json j = {{"status", to_string(arm.convexity.status)},
              {"min_value", arm.convexity.min_value},
              {"trials", arm.convexity.trials_run},
              {"seed", arm.convexity.seed},
              {"overridden", arm.convexity_overridden}};
    if (arm.convexity.status == ConvexityStatus::Violated && !arm.convexity.witness_m.empty()) {
        j["witness_trial"] = arm.convexity.witness_trial;
    }
    return j;
}

}  // namespace

const ArmSummary* RunSummary::arm(const std::string& name) const {
    for (const auto& a : arms) {
        if (a.arm == name) {
            return &a;
        }
    }
    return nullptr;
}

std::string RunSummary::to_json() const {
    json doc;
    doc["config"] = json::parse(config_echo);
    doc["exit_code"] = exit_code;
    doc["status"] = status;
    json arms_json = json::object();
    for (const auto& a : arms) {
        json j;
        j["convexity"] = verdict_json(a);
        j["optimized"] = a.optimized;
        if (a.optimized) {
            j["risk"] = risk_json(a.risk);
            j["iterations"] = a.iterations;
            j["converged"] = a.converged;
            j["stalled"] = a.stalled;
            j["residual_initial"] = a.residual_initial;
            j["residual_final"] = a.residual_final;
            j["residual_ratio"] =
                a.residual_initial > 0.0 ? a.residual_final / a.residual_initial : 0.0;
            j["peak_terminal_density"] = a.peak_terminal_density;
        }
        arms_json[a.arm] = j;
    }
    doc["arms"] = arms_json;
    if (comparison) {
        const auto& c = *comparison;
        json j;
        j["risk_margin"] = c.risk_margin;
        j["nonlocal_lower_risk"] = c.risk_margin > 0.0;
        j["peak_margin"] = c.peak_margin;
        j["penalty_gap_l1"] = c.penalty_gap_l1;
        j["density_gap_l1"] = c.density_gap_l1;
        bool denser = true;
        bool parity = true;
        for (std::size_t i = 0; i < c.peak_margin.size(); ++i) {
            denser = denser && c.peak_margin[i] > 0.0;
            parity = parity && c.penalty_gap_l1[i] < c.density_gap_l1[i];
        }
        j["nonlocal_denser"] = denser;
        j["crowding_parity"] = parity;
        doc["comparison"] = j;
    }
    if (particles) {
        json j;
        j["deterministic_risk"] = particles->deterministic_risk;
        j["aversion_weight"] = particles->aversion_weight;
        j["risk_gap_non_increasing"] = particles->risk_gap_non_increasing;
        j["w2_non_increasing"] = particles->w2_non_increasing;
        json levels = json::array();
        for (const auto& level : particles->levels) {
            levels.push_back({{"n", level.n},
                              {"risk_gap", level.risk_gap},
                              {"w2_terminal", level.w2_terminal},
                              {"mean_risk_gap", level.mean_risk_gap},
                              {"mean_w2_terminal", level.mean_w2_terminal}});
        }
        j["levels"] = levels;
        doc["particles"] = j;
    } else if (!particles_skipped.empty()) {
        doc["particles"] = {{"skipped", particles_skipped}};
    }
    return doc.dump(2);
}

std::size_t worker_count(std::size_t requested) {
    if (requested > 0) {
        return requested;
    }
    if (const char* env = std::getenv("MFCROWD_THREADS"); env != nullptr && *env != '\0') {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (*end != '\0' || v <= 0) {
            throw ConfigError("MFCROWD_THREADS must be a positive integer, got \"" +
                              std::string(env) + "\"");
        }
        return static_cast<std::size_t>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

ParticleStudy particle_study(const ControlProblem& problem, const Eigen::MatrixXd& lambda,
                             const ControlState& state, const ParticleSpec& spec,
                             std::size_t threads) {
    if (problem.crowds() != 1) {
        throw ModeError("particle_study handles a single crowd");
    }
    const auto records = run_particle_ladder(problem, lambda, state, spec, threads);
    return summarize_ladder(records, spec, reference_risk(problem, lambda, state),
                            problem.aversion_weight * lambda(0, 0));
}

RunSummary run_experiment(const MultiCrowdProblem& config, const std::filesystem::path& out_dir,
                          const RunOptions& options) {
    const auto log = [&](const std::string& msg) {
        if (options.log) {
            options.log(msg);
        }
    };
    const std::size_t threads = worker_count(options.threads);
    std::filesystem::create_directories(out_dir);

    RunSummary summary;
    summary.config_echo = config.echo_json();
    write_text(out_dir / "config_echo.json", summary.config_echo);

    std::vector<std::string> arm_names = options.arms.empty() ? config.arms : options.arms;
    std::vector<ControlProblem> problems;
    for (const auto& name : arm_names) {
        const KernelMode mode = parse_kernel_mode(name);
        problems.push_back(config.control_problem(mode));
        ArmSummary arm;
        arm.arm = name;
        arm.mode = mode;
        summary.arms.push_back(std::move(arm));
    }

    // Convexity gate, then one optimisation per arm.
    bool blocked = false;
    for (std::size_t a = 0; a < summary.arms.size(); ++a) {
        auto& arm = summary.arms[a];
        arm.convexity = check_convexity(config.lambda_bar, problems[a].kernel, problems[a].grid,
                                        config.convexity_trials, config.convexity_seed);
        log(arm.arm + ": convexity " + to_string(arm.convexity.status));
        if (!arm.convexity.ok()) {
            if (options.override_convexity) {
                arm.convexity_overridden = true;
                log(arm.arm + ": convexity violation overridden");
            } else {
                blocked = true;
            }
        }
    }
    if (blocked) {
        summary.exit_code = kExitConvexity;
        summary.status = "convexity_violation";
        write_text(out_dir / "summary.json", summary.to_json());
        return summary;
    }

    std::vector<std::function<void()>> tasks;
    for (std::size_t a = 0; a < summary.arms.size(); ++a) {
        tasks.emplace_back([&, a] {
            auto& arm = summary.arms[a];
            const auto& problem = problems[a];
            const auto start = Clock::now();
            auto result = gdm_optimize(problem, config.gdm, {}, [&](const GdmIterate& row) {
                if (row.iter % 25 == 0) {
                    std::ostringstream msg;
                    msg.precision(10);
                    msg << arm.arm << ": iter " << row.iter << " J=" << row.risk.total
                        << " residual=" << row.opt_residual;
                    log(msg.str());
                }
            });
            arm.seconds = seconds_since(start);
            arm.optimized = true;
            arm.trace = std::move(result.trace);
            arm.risk = result.state.risk;
            arm.iterations = arm.trace.rows.back().iter;
            arm.converged = arm.trace.converged;
            arm.stalled = arm.trace.stalled;
            arm.residual_initial = arm.trace.rows.front().opt_residual;
            arm.residual_final = arm.trace.rows.back().opt_residual;
            for (const auto& m : result.state.densities) {
                arm.peak_terminal_density.push_back(max_of(m.slice(problem.time.steps())));
            }
            write_arm_artifacts(out_dir / arm.arm, arm, result.state, problem, config.output_stride);
            arm.state = std::move(result.state);
            std::ostringstream msg;
            msg.precision(10);
            msg << arm.arm << ": done after " << arm.iterations << " iterations, J="
                << arm.risk.total << (arm.stalled ? " (stalled)" : "");
            log(msg.str());
        });
    }
    run_tasks(tasks, threads);

    const auto find = [&](const std::string& name) -> std::ptrdiff_t {
        for (std::size_t a = 0; a < summary.arms.size(); ++a) {
            if (summary.arms[a].arm == name) {
                return static_cast<std::ptrdiff_t>(a);
            }
        }
        return -1;
    };
    const auto loc = find("local");
    const auto nl = find("nonlocal");
    if (loc >= 0 && nl >= 0) {
        summary.comparison = compare_arms(summary.arms[static_cast<std::size_t>(loc)],
                                          summary.arms[static_cast<std::size_t>(nl)],
                                          problems[static_cast<std::size_t>(nl)], out_dir,
                                          config.output_stride);
    }

    if (options.particles) {
        if (nl < 0) {
            summary.particles_skipped = "needs the nonlocal arm";
        } else if (config.crowds.size() != 1) {
            summary.particles_skipped = "needs a single crowd";
        } else {
            ParticleSpec spec = config.particles;
            if (options.seed) {
                spec.seed = *options.seed;
            }
            const auto& arm = summary.arms[static_cast<std::size_t>(nl)];
            const auto& problem = problems[static_cast<std::size_t>(nl)];
            log("particles: ladder of " + std::to_string(spec.ladder.size()) + " sizes x " +
                std::to_string(spec.seeds) + " seeds");
            const auto records = run_particle_ladder(problem, config.lambda, *arm.state, spec, threads);
            summary.particles =
                summarize_ladder(records, spec, reference_risk(problem, config.lambda, *arm.state),
                                 problem.aversion_weight * config.lambda(0, 0));
            write_particle_artifacts(out_dir, records, *summary.particles, problem.grid,
                                     problem.time);
        }
    }

    json timings = json::object();
    for (const auto& arm : summary.arms) {
        timings[arm.arm] = arm.seconds;
    }
    if (summary.particles) {
        for (const auto& level : summary.particles->levels) {
            timings["particles_n" + std::to_string(level.n)] = level.seconds;
        }
    }
    write_text(out_dir / "timings.json", timings.dump(2));

    for (const auto& arm : summary.arms) {
        if (arm.stalled) {
            summary.exit_code = kExitStall;
            summary.status = "stalled";
        }
    }
    write_text(out_dir / "summary.json", summary.to_json());
    if (!options.keep_state) {
        for (auto& arm : summary.arms) {
            arm.state.reset();
        }
    }
    return summary;
}

}  // namespace mfcrowd
