#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kmpc/bounds.hpp"
#include "kmpc/config.hpp"
#include "kmpc/envelope.hpp"
#include "kmpc/koopman.hpp"
#include "kmpc/mpc.hpp"

namespace kmpc {

enum class ExperimentKind { Certify, Bounds, Represent, RunMpc, Sweep };

std::string to_string(ExperimentKind k);
/// Accepts the CLI names certify, bounds, represent, run-mpc, sweep.
ExperimentKind parse_kind(const std::string& s);

struct ExperimentResult {
    bool pass = false;
    std::vector<std::string> failures;
    nlohmann::json report;
    std::vector<std::filesystem::path> files;
};

/// Runs one pipeline and writes <kind>.json plus CSV files into `out`.
/// `force` bypasses closed-loop gating and allows overwriting an existing report.
ExperimentResult run_experiment(ExperimentKind kind, const ExperimentConfig& cfg, const std::filesystem::path& out,
                                bool force = false);

/// Plant, region and the embedding objects derived from a config.
struct Setup {
    GeneratorParams p;
    OperatingRegion r;
    Equilibrium eq;
    EmbeddingMatrices E;
    ErrorCertificate cert;
};

Setup make_setup(const ExperimentConfig& cfg);

/// Effective noise level for the controller per mpc.eps_bar.
double resolve_eps_bar(const ExperimentConfig& cfg, const Setup& s);

/// Offline data for the controller per the data section.
TrajectoryLibrary controller_data(const ExperimentConfig& cfg, const Setup& s, std::uint64_t seed);

/// Closed-loop MPC iterations implied by mpc.iterations or mpc.duration.
int closed_loop_iterations(const ExperimentConfig& cfg);

struct ClosedLoopOutcome {
    double eps_bar = 0.0;
    int iterations = 0;
    bool pe_ok = false;
    std::optional<std::size_t> data_first_exit;
    ClosedLoopLog log;
    EnvelopeFit fit;
};

ClosedLoopOutcome closed_loop(const ExperimentConfig& cfg, const Setup& s, std::uint64_t seed);

struct SweepPoint {
    double value = 0.0;
    ErrorCertificate cert;
    double diam_z = 0.0;
    double eps_bar = 0.0;
    double eps_bar_tight = 0.0;
    double S_L = 0.0;
    double controller_eps_bar = 0.0;
    bool ran_closed_loop = false;
    EnvelopeFit fit;
    int iterations = 0;
    std::optional<std::size_t> first_exit;
    std::string stop_reason;
    std::string error;
};

/// Sweep points evaluated concurrently (OpenMP); seeds derived per point.
std::vector<SweepPoint> sweep_points(const ExperimentConfig& cfg, std::uint64_t seed);
std::vector<SweepPoint> sweep_points_serial(const ExperimentConfig& cfg, std::uint64_t seed);

}  // namespace kmpc
