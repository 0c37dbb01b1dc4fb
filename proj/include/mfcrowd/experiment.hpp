#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mfcrowd/config.hpp"
#include "mfcrowd/optimizer.hpp"
#include "mfcrowd/risk.hpp"

namespace mfcrowd {

enum ExitCode : int {
    kExitOk = 0,
    kExitConfig = 1,
    kExitStall = 2,
    kExitConvexity = 3,
};

struct RunOptions {
    /// Overrides the configured arms when nonempty.
    std::vector<std::string> arms;
    bool particles = false;
    bool override_convexity = false;
    /// Overrides particles.seed.
    std::optional<std::uint64_t> seed;
    /// Worker cap; 0 reads MFCROWD_THREADS, then the hardware.
    std::size_t threads = 0;
    /// Keep controls, densities and adjoints of each arm in the summary.
    bool keep_state = false;
    std::function<void(const std::string&)> log;
};

struct ArmSummary {
    std::string arm;
    KernelMode mode = KernelMode::Local;
    ConvexityVerdict convexity;
    bool convexity_overridden = false;
    /// False when a convexity violation stopped the arm before optimisation.
    bool optimized = false;
    RiskBreakdown risk;
    std::size_t iterations = 0;
    bool converged = false;
    bool stalled = false;
    double residual_initial = 0.0;
    double residual_final = 0.0;
    std::vector<double> peak_terminal_density;
    double seconds = 0.0;
    GdmTrace trace;
    std::optional<ControlState> state;
};

/// Nonlocal minus local at T, per crowd. Gaps are L1 norms divided by the
/// L1 norm of the local terminal density.
struct ArmComparison {
    double risk_margin = 0.0;  // J_local - J_nonlocal
    std::vector<double> peak_margin;  // max m_nonlocal(T) - max m_local(T)
    std::vector<double> penalty_gap_l1;  // |G[m_nl](T) - m_loc(T)|_1 / |m_loc(T)|_1
    std::vector<double> density_gap_l1;  // |m_nl(T) - m_loc(T)|_1 / |m_loc(T)|_1
};

struct ParticleLevel {
    std::size_t n = 0;
    /// |mean_i J^{i,N} - J_det| and W2(empirical law at T, m(T)) per seed.
    std::vector<double> risk_gap;
    std::vector<double> w2_terminal;
    double mean_risk_gap = 0.0;
    double mean_w2_terminal = 0.0;
    double seconds = 0.0;
};

struct ParticleStudy {
    double deterministic_risk = 0.0;
    double aversion_weight = 0.0;
    std::vector<ParticleLevel> levels;
    bool risk_gap_non_increasing = false;
    bool w2_non_increasing = false;
};

struct RunSummary {
    std::string config_echo;
    std::vector<ArmSummary> arms;
    std::optional<ArmComparison> comparison;
    std::optional<ParticleStudy> particles;
    std::string particles_skipped;
    int exit_code = kExitOk;
    std::string status = "ok";

    const ArmSummary* arm(const std::string& name) const;
    /// Deterministic JSON (sorted keys, no timings).
    std::string to_json() const;
};

/// Worker count from an explicit request, MFCROWD_THREADS, or the hardware.
std::size_t worker_count(std::size_t requested);

/// Mean-field convergence ladder for crowd 0 under a fixed control:
/// for every N and seed, simulates N particles and records the risk gap
/// and the terminal W2 distance. Requires a nonlocal kernel and M = 1.
ParticleStudy particle_study(const ControlProblem& problem, const Eigen::MatrixXd& lambda,
                             const ControlState& state, const ParticleSpec& spec,
                             std::size_t threads);

/// Runs every arm, writes the artifacts under out_dir and returns the
/// summary; exit_code reports stall (2) or a blocked convexity check (3).
RunSummary run_experiment(const MultiCrowdProblem& config, const std::filesystem::path& out_dir,
                          const RunOptions& options = {});

}  // namespace mfcrowd
