#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "kmpc/koopman.hpp"
#include "kmpc/linalg.hpp"
#include "kmpc/plant.hpp"

namespace kmpc {

/// Block Hankel matrix of a dim x N sequence: (dim*depth) x (N-depth+1), column j is
/// the window seq[j .. j+depth-1] stacked time-major.
Mat hankel(const Mat& seq, int depth);

/// Time-major stacking of a dim x T block into a dim*T vector.
Vec stack_columns(const Mat& block);

struct ExcitationConfig {
    enum class Center {
        Equilibrium,   ///< inputs drawn around u_s
        InitialPower,  ///< inputs drawn around P_e(x0), the initial electrical power
    };
    double amplitude = 0.2;
    Center center = Center::Equilibrium;
    /// Initial states are x_s + f (y - x_s) with y uniform over the region.
    double init_box_fraction = 0.8;
    int max_attempts_per_trajectory = 200;
};

enum class LibraryMode { MultiTrajectory, SingleTrajectory };

struct TrajectoryLibrary {
    std::vector<Trajectory> trajectories;
    LibraryMode mode = LibraryMode::MultiTrajectory;
    std::size_t L_traj = 0;
    std::uint64_t seed = 0;
    std::size_t rejected = 0;

    std::size_t size() const { return trajectories.size(); }
};

/// l in-region trajectories of length L_traj from randomized initial states and inputs.
/// Trajectories leaving the region are resampled; a rejection rate above 90% is an error.
TrajectoryLibrary collect_library(const GeneratorParams& p, const OperatingRegion& r, const Equilibrium& eq,
                                  const ExcitationConfig& exc, std::size_t l, std::size_t L_traj,
                                  std::uint64_t seed);
/// Single-threaded reference for collect_library.
TrajectoryLibrary collect_library_serial(const GeneratorParams& p, const OperatingRegion& r, const Equilibrium& eq,
                                         const ExcitationConfig& exc, std::size_t l, std::size_t L_traj,
                                         std::uint64_t seed);

/// One long trajectory from x0 (x_s by default). Region exits are flagged, not rejected.
TrajectoryLibrary collect_single_trajectory(const GeneratorParams& p, const OperatingRegion& r,
                                            const Equilibrium& eq, const ExcitationConfig& exc,
                                            std::size_t length, std::uint64_t seed,
                                            std::optional<State> x0 = std::nullopt);

/// One CSV per trajectory plus manifest.json.
void save_library(const TrajectoryLibrary& lib, const std::filesystem::path& dir);

struct ExcitationCheck {
    bool ok = false;
    int rank = 0;
    int required = 0;
};

/// Row rank of [u^{d,1} .. u^{d,l}; Phi(x_0^1) - center .. ] against m*L_traj + 7.
/// Needs recorded initial states.
ExcitationCheck lifted_excitation_check(const TrajectoryLibrary& lib, double omega_s, double tol = 1e-9,
                                        const Lifted& center = Lifted::Zero());

/// Rank of hankel(u, order) equals m*order.
bool pe_check(const Mat& u, int order, double tol = 1e-9);

struct DataMatrix {
    Mat Up, Yp, Uf, Yf;
    int T_ini = 0;
    int N = 0;

    Mat stacked() const;
    Eigen::Index cols() const { return Up.cols(); }
};

DataMatrix assemble_Hd(const TrajectoryLibrary& lib, int T_ini, int N);

/// col(u_ini, y_ini, u_F, y_F) for the first T_ini + N samples of a trajectory.
Vec trajectory_window(const Trajectory& traj, int T_ini, int N);

/// min_g || H_d g - w ||_2.
double representation_residual(const DataMatrix& hd, const Vec& w);

// --- nominal LTI helpers -------------------------------------------------------

/// Nominal Koopman system in deviation coordinates from zbar_0, driven by ubar.
Trajectory nominal_trajectory(const EmbeddingMatrices& E, const Lifted& zbar0, const Mat& ubar);

/// Library of nominal trajectories with in-region initial states (x0 recorded) and
/// inputs ubar uniform in [-amplitude, amplitude].
TrajectoryLibrary nominal_library(const GeneratorParams& p, const OperatingRegion& r, const EmbeddingMatrices& E,
                                  const Equilibrium& eq, double amplitude, std::size_t l, std::size_t L_traj,
                                  std::uint64_t seed);

struct RepresentationResult {
    double residual = 0.0;
    ExcitationCheck excitation;
};

/// Exact-case representation check of a fresh nominal trajectory against a nominal library.
RepresentationResult representation_test(const TrajectoryLibrary& nominal_lib, const Trajectory& fresh,
                                         const Equilibrium& eq, double omega_s, int T_ini, double tol = 1e-9);

}  // namespace kmpc
