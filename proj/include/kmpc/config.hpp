#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kmpc/data.hpp"
#include "kmpc/mpc.hpp"
#include "kmpc/plant.hpp"

namespace kmpc {

/// Schema violation; the message starts with the offending field path.
class ConfigError : public Error {
public:
    using Error::Error;
};

struct CertifySection {
    std::size_t n_samples = 10000;
    bool include_corners = true;
};

struct BoundsSection {
    int L_pred = 14;
    int n_grid = 21;
    std::vector<int> L_grid;  ///< empty means 2..50
    double kappa_beta = 0.1;  ///< beta_hat(s) = kappa_beta s^2
    double c_env = 1.0;
    double R_max_factor = 10.0;  ///< R_max = factor * diam_z
    double tol = 1e-10;
};

struct DataSection {
    LibraryMode mode = LibraryMode::SingleTrajectory;
    ExcitationConfig excitation;
    std::size_t length = 300;  ///< single-trajectory length
    std::size_t l = 0;         ///< library size; 0 means L_traj + 7 + 10
};

struct RepresentSection {
    int T_ini = 7;
    int N = 7;
    std::size_t l = 30;
    double amplitude = 0.2;
    int n_fresh = 20;
    double perturbation = 0.1;
    double tol = 1e-8;
    double corrupt_min = 1e-3;
};

enum class EpsBarChoice { Loose, Tight, Value };

struct MpcSection {
    MpcConfig cfg;  ///< setpoint and box are filled from the plant at run time
    EpsBarChoice eps_bar_choice = EpsBarChoice::Loose;
    double eps_bar_value = 0.0;
    double delta0_offset = 0.3;
    double duration = 3.0;  ///< closed-loop horizon in seconds when iterations == 0
    int iterations = 0;
    bool stop_on_region_exit = false;
    std::size_t gate_samples = 2000;  ///< certification samples used for gating
};

struct SweepSection {
    std::string parameter = "dt";  ///< "dt" or "L_pred"
    std::vector<double> values{0.005, 0.0025, 0.00125};
    bool closed_loop = true;
};

struct ExperimentConfig {
    GeneratorParams plant;
    OperatingRegion region;
    CertifySection certify;
    BoundsSection bounds;
    DataSection data;
    RepresentSection represent;
    MpcSection mpc;
    SweepSection sweep;
    std::optional<std::uint64_t> seed;

    /// Throws ConfigError with the field path of the first invalid entry.
    void validate() const;
};

ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical echo of the effective configuration.
nlohmann::json config_to_json(const ExperimentConfig& c);

}  // namespace kmpc
