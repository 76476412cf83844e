#include "kmpc/data.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "kmpc/error.hpp"
#include "kmpc/io.hpp"
#include "kmpc/random.hpp"

namespace kmpc {

Mat hankel(const Mat& seq, int depth)
{
    const auto n = seq.cols();
    const auto d = seq.rows();
    if (depth < 1) throw InvalidArgument("hankel: depth must be at least 1");
    if (n < depth) throw InvalidArgument("hankel: sequence shorter than depth");
    const auto cols = n - depth + 1;
    Mat H(d * depth, cols);
    for (Eigen::Index i = 0; i < depth; ++i) H.middleRows(i * d, d) = seq.middleCols(i, cols);
    return H;
}

Vec stack_columns(const Mat& block)
{
    Vec v(block.size());
    for (Eigen::Index j = 0; j < block.cols(); ++j) v.segment(j * block.rows(), block.rows()) = block.col(j);
    return v;
}

namespace {

State sample_initial_state(Rng& rng, const OperatingRegion& r, const GeneratorParams& p, const Equilibrium& eq,
                           double f)
{
    State y;
    y.delta = rng.uniform(r.delta_s - r.delta_max, r.delta_s + r.delta_max);
    y.omega = p.omega_s + rng.uniform(-r.omega_max, r.omega_max);
    y.Eq_prime = rng.uniform(r.Eq_min, r.Eq_max);
    State x;
    x.delta = eq.x_s.delta + f * (y.delta - eq.x_s.delta);
    x.omega = eq.x_s.omega + f * (y.omega - eq.x_s.omega);
    x.Eq_prime = eq.x_s.Eq_prime + f * (y.Eq_prime - eq.x_s.Eq_prime);
    return x;
}

std::vector<double> sample_inputs(Rng& rng, double center, const ExcitationConfig& exc, const OperatingRegion& r,
                                  std::size_t len)
{
    std::vector<double> u(len);
    for (auto& v : u) v = std::clamp(center + exc.amplitude * rng.uniform(-1.0, 1.0), r.u_min, r.u_max);
    return u;
}

}  // namespace

namespace {

TrajectoryLibrary collect_impl(const GeneratorParams& p, const OperatingRegion& r, const Equilibrium& eq,
                               const ExcitationConfig& exc, std::size_t l, std::size_t L_traj, std::uint64_t seed,
                               bool parallel)
{
    if (l < 1) throw InvalidArgument("collect_library: l must be at least 1");
    TrajectoryLibrary lib;
    lib.mode = LibraryMode::MultiTrajectory;
    lib.L_traj = L_traj;
    lib.seed = seed;
    lib.trajectories.resize(l);
    std::vector<int> attempts(l, 0);
    std::vector<char> gave_up(l, 0);

    const auto n = static_cast<std::ptrdiff_t>(l);
#pragma omp parallel for schedule(dynamic) if (parallel)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        for (int a = 0;; ++a) {
            if (a >= exc.max_attempts_per_trajectory) {
                gave_up[idx] = 1;
                break;
            }
            ++attempts[idx];
            Rng rng(mix_seed(mix_seed(seed, idx), static_cast<std::uint64_t>(a)));
            const State x0 = sample_initial_state(rng, r, p, eq, exc.init_box_fraction);
            const double center
                = exc.center == ExcitationConfig::Center::Equilibrium ? eq.u_s : output(x0, p).P_e;
            const auto u = sample_inputs(rng, center, exc, r, L_traj);
            Trajectory t = simulate(x0, u, p, &r);
            if (!t.first_exit) {
                lib.trajectories[idx] = std::move(t);
                break;
            }
        }
    }

    std::size_t total = 0;
    bool any_gave_up = false;
    for (std::size_t i = 0; i < l; ++i) {
        total += static_cast<std::size_t>(attempts[i]);
        any_gave_up = any_gave_up || gave_up[i];
    }
    lib.rejected = total - (any_gave_up ? 0 : l);
    const double rate = static_cast<double>(lib.rejected) / static_cast<double>(total);
    if (any_gave_up || rate > 0.9) {
        char buf[160];
        std::snprintf(buf, sizeof buf,
                      "collect_library: %.1f%% of simulated trajectories left the operating region; "
                      "reduce the excitation amplitude",
                      100.0 * rate);
        throw Error(buf);
    }
    return lib;
}

}  // namespace

TrajectoryLibrary collect_library(const GeneratorParams& p, const OperatingRegion& r, const Equilibrium& eq,
                                  const ExcitationConfig& exc, std::size_t l, std::size_t L_traj,
                                  std::uint64_t seed)
{
    return collect_impl(p, r, eq, exc, l, L_traj, seed, true);
}

TrajectoryLibrary collect_library_serial(const GeneratorParams& p, const OperatingRegion& r, const Equilibrium& eq,
                                         const ExcitationConfig& exc, std::size_t l, std::size_t L_traj,
                                         std::uint64_t seed)
{
    return collect_impl(p, r, eq, exc, l, L_traj, seed, false);
}

TrajectoryLibrary collect_single_trajectory(const GeneratorParams& p, const OperatingRegion& r,
                                            const Equilibrium& eq, const ExcitationConfig& exc,
                                            std::size_t length, std::uint64_t seed, std::optional<State> x0)
{
    TrajectoryLibrary lib;
    lib.mode = LibraryMode::SingleTrajectory;
    lib.L_traj = length;
    lib.seed = seed;
    Rng rng(mix_seed(seed, 0));
    const State start = x0.value_or(eq.x_s);
    const double center = exc.center == ExcitationConfig::Center::Equilibrium ? eq.u_s : output(start, p).P_e;
    const auto u = sample_inputs(rng, center, exc, r, length);
    lib.trajectories.push_back(simulate(start, u, p, &r));
    return lib;
}

void save_library(const TrajectoryLibrary& lib, const std::filesystem::path& dir)
{
    nlohmann::json manifest;
    manifest["l"] = lib.size();
    manifest["L_traj"] = lib.L_traj;
    manifest["seed"] = lib.seed;
    manifest["mode"] = lib.mode == LibraryMode::MultiTrajectory ? "library" : "single";
    manifest["rejected"] = lib.rejected;
    manifest["x0"] = nlohmann::json::array();
    manifest["files"] = nlohmann::json::array();
    for (std::size_t i = 0; i < lib.size(); ++i) {
        const auto& t = lib.trajectories[i];
        char name[32];
        std::snprintf(name, sizeof name, "traj_%04zu.csv", i);
        write_text(dir / name, trajectory_csv(t));
        manifest["files"].push_back(name);
        if (t.x0) manifest["x0"].push_back({t.x0->delta, t.x0->omega, t.x0->Eq_prime});
        else manifest["x0"].push_back(nullptr);
        manifest["first_exit"].push_back(t.first_exit ? nlohmann::json(*t.first_exit) : nlohmann::json(nullptr));
    }
    write_json(dir / "manifest.json", manifest);
}

ExcitationCheck lifted_excitation_check(const TrajectoryLibrary& lib, double omega_s, double tol,
                                        const Lifted& center)
{
    if (lib.trajectories.empty()) throw InvalidArgument("lifted_excitation_check: empty library");
    const auto m = lib.trajectories.front().u.rows();
    const auto L = static_cast<Eigen::Index>(lib.L_traj);
    ExcitationCheck chk;
    chk.required = static_cast<int>(m * L + kLiftDim);
    const auto l = static_cast<Eigen::Index>(lib.size());
    Mat HK(chk.required, l);
    for (Eigen::Index i = 0; i < l; ++i) {
        const auto& t = lib.trajectories[static_cast<std::size_t>(i)];
        if (!t.x0)
            throw InvalidArgument("lifted_excitation_check: initial states are only known for simulated data");
        if (t.u.cols() != L) throw InvalidArgument("lifted_excitation_check: trajectory length mismatch");
        HK.col(i).head(m * L) = stack_columns(t.u);
        HK.col(i).tail(kLiftDim) = lift(*t.x0, omega_s) - center;
    }
    chk.rank = numerical_rank(HK, tol);
    chk.ok = chk.rank == chk.required;
    return chk;
}

bool pe_check(const Mat& u, int order, double tol)
{
    if (order < 1) throw InvalidArgument("pe_check: order must be at least 1");
    if (u.cols() < order) throw InvalidArgument("pe_check: sequence shorter than order");
    const Mat H = hankel(u, order);
    if (H.cols() < H.rows()) return false;
    return numerical_rank(H, tol) == H.rows();
}

Mat DataMatrix::stacked() const
{
    Mat H(Up.rows() + Yp.rows() + Uf.rows() + Yf.rows(), Up.cols());
    H << Up, Yp, Uf, Yf;
    return H;
}

DataMatrix assemble_Hd(const TrajectoryLibrary& lib, int T_ini, int N)
{
    if (lib.trajectories.empty()) throw InvalidArgument("assemble_Hd: empty library");
    if (T_ini < 1 || N < 1) throw InvalidArgument("assemble_Hd: T_ini and N must be positive");
    const int L = T_ini + N;
    const auto m = lib.trajectories.front().u.rows();
    const auto p = lib.trajectories.front().y.rows();
    DataMatrix hd;
    hd.T_ini = T_ini;
    hd.N = N;
    if (lib.mode == LibraryMode::SingleTrajectory) {
        const auto& t = lib.trajectories.front();
        if (t.length() < static_cast<std::size_t>(L)) throw InvalidArgument("assemble_Hd: trajectory too short");
        const Mat Hu = hankel(t.u, L);
        const Mat Hy = hankel(t.y, L);
        hd.Up = Hu.topRows(m * T_ini);
        hd.Uf = Hu.bottomRows(m * N);
        hd.Yp = Hy.topRows(p * T_ini);
        hd.Yf = Hy.bottomRows(p * N);
        return hd;
    }
    const auto l = static_cast<Eigen::Index>(lib.size());
    hd.Up.resize(m * T_ini, l);
    hd.Yp.resize(p * T_ini, l);
    hd.Uf.resize(m * N, l);
    hd.Yf.resize(p * N, l);
    for (Eigen::Index i = 0; i < l; ++i) {
        const auto& t = lib.trajectories[static_cast<std::size_t>(i)];
        if (t.u.cols() != L || t.y.cols() != L || t.u.rows() != m || t.y.rows() != p)
            throw InvalidArgument("assemble_Hd: trajectory dimensions do not match T_ini + N");
        hd.Up.col(i) = stack_columns(t.u.leftCols(T_ini));
        hd.Yp.col(i) = stack_columns(t.y.leftCols(T_ini));
        hd.Uf.col(i) = stack_columns(t.u.rightCols(N));
        hd.Yf.col(i) = stack_columns(t.y.rightCols(N));
    }
    return hd;
}

Vec trajectory_window(const Trajectory& traj, int T_ini, int N)
{
    const int L = T_ini + N;
    if (traj.u.cols() < L) throw InvalidArgument("trajectory_window: trajectory too short");
    const Vec up = stack_columns(traj.u.leftCols(T_ini));
    const Vec yp = stack_columns(traj.y.leftCols(T_ini));
    const Vec uf = stack_columns(traj.u.middleCols(T_ini, N));
    const Vec yf = stack_columns(traj.y.middleCols(T_ini, N));
    Vec w(up.size() + yp.size() + uf.size() + yf.size());
    w << up, yp, uf, yf;
    return w;
}

double representation_residual(const DataMatrix& hd, const Vec& w)
{
    const Mat H = hd.stacked();
    if (H.rows() != w.size()) throw InvalidArgument("representation_residual: dimension mismatch");
    Eigen::CompleteOrthogonalDecomposition<Mat> cod(H);
    const Vec g = cod.solve(w);
    return (H * g - w).norm();
}

Trajectory nominal_trajectory(const EmbeddingMatrices& E, const Lifted& zbar0, const Mat& ubar)
{
    Trajectory t;
    t.u = ubar;
    t.y.resize(E.C.rows(), ubar.cols());
    Lifted z = zbar0;
    for (Eigen::Index k = 0; k < ubar.cols(); ++k) {
        t.y.col(k) = E.C * z + E.D * ubar.col(k);
        z = E.A * z + E.B * ubar.col(k);
    }
    return t;
}

TrajectoryLibrary nominal_library(const GeneratorParams& p, const OperatingRegion& r, const EmbeddingMatrices& E,
                                  const Equilibrium& eq, double amplitude, std::size_t l, std::size_t L_traj,
                                  std::uint64_t seed)
{
    TrajectoryLibrary lib;
    lib.mode = LibraryMode::MultiTrajectory;
    lib.L_traj = L_traj;
    lib.seed = seed;
    lib.trajectories.reserve(l);
    for (std::size_t i = 0; i < l; ++i) {
        Rng rng(mix_seed(seed, i));
        const State x0 = sample_initial_state(rng, r, p, eq, 1.0);
        Mat ubar(1, static_cast<Eigen::Index>(L_traj));
        for (Eigen::Index k = 0; k < ubar.cols(); ++k) ubar(0, k) = amplitude * rng.uniform(-1.0, 1.0);
        Trajectory t = nominal_trajectory(E, lift(x0, p.omega_s) - eq.z_s, ubar);
        t.x0 = x0;
        lib.trajectories.push_back(std::move(t));
    }
    return lib;
}

RepresentationResult representation_test(const TrajectoryLibrary& nominal_lib, const Trajectory& fresh,
                                         const Equilibrium& eq, double omega_s, int T_ini, double tol)
{
    if (T_ini < kLiftDim) throw InvalidArgument("representation_test: T_ini must be at least 7");
    const int N = static_cast<int>(nominal_lib.L_traj) - T_ini;
    if (N < 1) throw InvalidArgument("representation_test: library trajectories shorter than T_ini + 1");
    RepresentationResult res;
    res.excitation = lifted_excitation_check(nominal_lib, omega_s, tol, eq.z_s);
    if (!res.excitation.ok)
        throw Error("representation_test: library lacks lifted excitation (rank "
                    + std::to_string(res.excitation.rank) + " < " + std::to_string(res.excitation.required) + ")");
    const DataMatrix hd = assemble_Hd(nominal_lib, T_ini, N);
    res.residual = representation_residual(hd, trajectory_window(fresh, T_ini, N));
    return res;
}

}  // namespace kmpc
