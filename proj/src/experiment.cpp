#include "kmpc/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "kmpc/data.hpp"
#include "kmpc/io.hpp"
#include "kmpc/random.hpp"

namespace kmpc {

using nlohmann::json;

namespace {

// sub-seed stream ids per pipeline stage
enum Stream : std::uint64_t { kCertify = 1, kData = 2, kNominalLib = 3, kFresh = 4, kCorrupt = 5, kSweep = 6 };

std::uint64_t require_seed(const ExperimentConfig& cfg)
{
    if (!cfg.seed) throw ConfigError("seed: required (pass --seed or set \"seed\" in the config)");
    return *cfg.seed;
}

State perturbed_initial_state(const ExperimentConfig& cfg, const Setup& s)
{
    State x0 = s.eq.x_s;
    x0.delta += cfg.mpc.delta0_offset;
    return x0;
}

std::vector<int> ladder_grid(const BoundsSection& b)
{
    if (!b.L_grid.empty()) return b.L_grid;
    std::vector<int> g;
    for (int L = 2; L <= 50; ++L) g.push_back(L);
    return g;
}

json opt_json(const std::optional<std::size_t>& v) { return v ? json(*v) : json(nullptr); }

class Outputs {
public:
    Outputs(std::filesystem::path dir, ExperimentResult& res) : dir_(std::move(dir)), res_(res) {}

    void text(const std::string& name, const std::string& body)
    {
        write_text(dir_ / name, body);
        res_.files.push_back(dir_ / name);
    }
    void report(const std::string& name, const json& j)
    {
        write_json(dir_ / name, j);
        res_.files.push_back(dir_ / name);
    }
    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path dir_;
    ExperimentResult& res_;
};

void check(ExperimentResult& res, bool ok, const std::string& what)
{
    if (!ok) res.failures.push_back(what);
}

// --- pipelines ---------------------------------------------------------------

void run_certify(const ExperimentConfig& cfg, Outputs& out, ExperimentResult& res)
{
    const std::uint64_t seed = require_seed(cfg);
    const Setup s = make_setup(cfg);
    CertifyOptions opts;
    opts.include_corners = cfg.certify.include_corners;
    opts.keep_samples = true;
    const CertReport rep = certify(s.p, s.r, s.E, s.eq, s.cert, cfg.certify.n_samples, mix_seed(seed, kCertify), opts);
    check(res, rep.violations == 0, "certified bound violated at " + std::to_string(rep.violations) + " samples");
    check(res, rep.component_violations == 0, "component bounds violated");
    check(res, rep.max_linear_rows <= 1e-12, "rows 1-3 of the residual are not exact");
    res.report["certificate"] = s.cert.to_json();
    res.report["certification"] = rep.to_json();
    out.text("certify_samples.csv", rep.samples_csv());
}

void run_bounds(const ExperimentConfig& cfg, Outputs& out, ExperimentResult& res)
{
    const std::uint64_t seed = require_seed(cfg);
    const Setup s = make_setup(cfg);
    const Diameters d = diameters(s.r, s.eq, s.p.omega_s, cfg.bounds.n_grid);
    BoundInputs bi{s.E, s.cert, d.diam_z, d.diam_u, cfg.bounds.L_pred};
    BoundReport rep = bound_report(bi);

    // c_pe from the controller data driven through the minimal realization
    try {
        const TrajectoryLibrary lib = controller_data(cfg, s, mix_seed(seed, kData));
        const Trajectory& t = lib.trajectories.front();
        const Realization R = minimal_realization(s.E);
        const Mat ubar = t.u.array() - s.eq.u_s;
        const Vec x0 = R.basis.transpose() * (lift(*t.x0, s.p.omega_s) - s.eq.z_s);
        rep.c_pe = c_pe(build_hux(R, x0, ubar, cfg.bounds.L_pred + kLiftDim));
        res.report["c_pe_n_eff"] = R.n_eff;
    } catch (const Error& e) {
        res.report["c_pe_error"] = e.what();
        check(res, false, std::string("c_pe: ") + e.what());
    }

    const double x0_dev = (lift(perturbed_initial_state(cfg, s), s.p.omega_s) - s.eq.z_s).norm();
    const double kb = cfg.bounds.kappa_beta;
    try {
        rep.fixed_point = fixed_point_r([kb](double v) { return kb * v * v; }, cfg.bounds.c_env, x0_dev, s.cert,
                                        rep.S_L, cfg.bounds.R_max_factor * d.diam_z, cfg.bounds.tol);
    } catch (const Error& e) {
        res.report["fixed_point_error"] = e.what();
        check(res, false, e.what());
    }

    const LadderTable ladder = compare_bound_ladder(bi, ladder_grid(cfg.bounds));
    const json rj = rep.to_json();
    check(res, rj["ordered"].get<bool>(), "eps_bar_0 <= eps_bar_tight <= eps_bar violated");
    check(res, ladder.ordered, "bound ladder ordering violated on the horizon grid");
    check(res, ladder.monotone, "eps_bar not nondecreasing in L_pred");

    res.report["certificate"] = s.cert.to_json();
    res.report["bounds"] = rj;
    res.report["x0_dev"] = x0_dev;
    res.report["beta_hat"] = {{"form", "kappa_beta * s^2"}, {"kappa_beta", kb}};
    res.report["c0_over_eps_A"] = s.cert.eps_A > 0.0 ? s.cert.c_0 / s.cert.eps_A : 0.0;
    res.report["c0_over_e_bar"] = rep.e_bar > 0.0 ? s.cert.c_0 / rep.e_bar : 0.0;
    res.report["ladder"] = ladder.to_json();
    out.text("bounds.csv", rep.csv());
    out.text("ladder.csv", ladder.csv());
}

void run_represent(const ExperimentConfig& cfg, Outputs& out, ExperimentResult& res)
{
    const std::uint64_t seed = require_seed(cfg);
    const Setup s = make_setup(cfg);
    const auto& rc = cfg.represent;
    const auto L_traj = static_cast<std::size_t>(rc.T_ini + rc.N);
    const TrajectoryLibrary lib
        = nominal_library(s.p, s.r, s.E, s.eq, rc.amplitude, rc.l, L_traj, mix_seed(seed, kNominalLib));
    const TrajectoryLibrary fresh = nominal_library(s.p, s.r, s.E, s.eq, rc.amplitude,
                                                    static_cast<std::size_t>(rc.n_fresh), L_traj,
                                                    mix_seed(seed, kFresh));
    const ExcitationCheck ex = lifted_excitation_check(lib, s.p.omega_s, 1e-9, s.eq.z_s);
    res.report["excitation"] = {{"ok", ex.ok}, {"rank", ex.rank}, {"required", ex.required}};
    check(res, ex.ok, "library lacks lifted excitation");

    std::ostringstream csv;
    csv << "i,residual_fresh,residual_corrupted,corrupted_index\n";
    double worst_fresh = 0.0;
    double min_corrupt = std::numeric_limits<double>::infinity();
    if (ex.ok) {
        const DataMatrix hd = assemble_Hd(lib, rc.T_ini, rc.N);
        Rng rng(mix_seed(seed, kCorrupt));
        for (std::size_t i = 0; i < fresh.size(); ++i) {
            const Trajectory& t = fresh.trajectories[i];
            const double rf = representation_residual(hd, trajectory_window(t, rc.T_ini, rc.N));
            Trajectory bad = t;
            const auto idx = static_cast<Eigen::Index>(rng.uniform() * static_cast<double>(bad.y.size()));
            bad.y.data()[idx] += rc.perturbation;
            const double rb = representation_residual(hd, trajectory_window(bad, rc.T_ini, rc.N));
            worst_fresh = std::max(worst_fresh, rf);
            min_corrupt = std::min(min_corrupt, rb);
            csv << i << ',' << fmt_num(rf) << ',' << fmt_num(rb) << ',' << idx << '\n';
        }
        check(res, worst_fresh <= rc.tol, "fresh trajectory residual above tolerance");
        check(res, min_corrupt > rc.corrupt_min, "corrupted trajectory not rejected");
    }
    res.report["T_ini"] = rc.T_ini;
    res.report["N"] = rc.N;
    res.report["l"] = rc.l;
    res.report["max_fresh_residual"] = worst_fresh;
    res.report["min_corrupted_residual"] = std::isinf(min_corrupt) ? json(nullptr) : json(min_corrupt);
    out.text("represent.csv", csv.str());
}

json fit_summary(const ClosedLoopOutcome& o)
{
    json j;
    j["eps_bar"] = o.eps_bar;
    j["iterations"] = o.iterations;
    j["pe_ok"] = o.pe_ok;
    j["data_first_exit"] = opt_json(o.data_first_exit);
    j["closed_loop"] = o.log.summary();
    j["envelope"] = o.fit.to_json();
    return j;
}

void run_mpc(const ExperimentConfig& cfg, Outputs& out, ExperimentResult& res, bool force)
{
    const std::uint64_t seed = require_seed(cfg);
    const Setup s = make_setup(cfg);

    const TrajectoryLibrary lib = controller_data(cfg, s, mix_seed(seed, kData));
    bool pe_ok = false;
    if (lib.mode == LibraryMode::SingleTrajectory) {
        pe_ok = pe_check(lib.trajectories.front().u, cfg.mpc.cfg.L_pred + 2 * cfg.mpc.cfg.n_z);
    } else {
        pe_ok = lifted_excitation_check(lib, s.p.omega_s, 1e-9, s.eq.z_s).ok;
    }
    const CertReport gate = certify(s.p, s.r, s.E, s.eq, s.cert, cfg.mpc.gate_samples, mix_seed(seed, kCertify));
    const bool cert_ok = gate.violations == 0;
    res.report["gating"] = {{"pe_ok", pe_ok}, {"certified", cert_ok}, {"forced", force}};
    if (!(pe_ok && cert_ok) && !force) {
        check(res, pe_ok, "data not persistently exciting; closed loop refused (use --force)");
        check(res, cert_ok, "certification failed; closed loop refused (use --force)");
        return;
    }
    save_library(lib, out.dir() / "data");

    const ClosedLoopOutcome o = closed_loop(cfg, s, seed);
    res.report["run"] = fit_summary(o);
    check(res, o.log.stop_reason.empty(), "closed loop stopped: " + o.log.stop_reason);
    check(res, o.fit.ok, "envelope fit failed: " + o.fit.message);
    check(res, o.log.summary()["slack_check"].get<bool>(), "a posteriori slack bound violated");
    out.text("closed_loop.csv", o.log.csv());
}

void run_sweep(const ExperimentConfig& cfg, Outputs& out, ExperimentResult& res)
{
    const std::uint64_t seed = require_seed(cfg);
    const std::vector<SweepPoint> pts = sweep_points(cfg, seed);

    std::ostringstream csv;
    csv << cfg.sweep.parameter
        << ",eps_A,c_0,diam_z,S_L,eps_bar,eps_bar_tight,controller_eps_bar,iterations,rho_fit,beta_fit,c_fit,fit_ok,"
           "first_exit\n";
    json arr = json::array();
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const SweepPoint& q = pts[i];
        json j;
        j["value"] = q.value;
        j["certificate"] = q.cert.to_json();
        j["diam_z"] = q.diam_z;
        j["S_L"] = q.S_L;
        j["eps_bar"] = q.eps_bar;
        j["eps_bar_tight"] = q.eps_bar_tight;
        j["controller_eps_bar"] = q.controller_eps_bar;
        j["closed_loop"] = q.ran_closed_loop;
        j["iterations"] = q.iterations;
        j["envelope"] = q.fit.to_json();
        j["first_exit"] = opt_json(q.first_exit);
        j["stop_reason"] = q.stop_reason;
        j["error"] = q.error;
        arr.push_back(j);
        csv << fmt_num(q.value) << ',' << fmt_num(q.cert.eps_A) << ',' << fmt_num(q.cert.c_0) << ','
            << fmt_num(q.diam_z) << ',' << fmt_num(q.S_L) << ',' << fmt_num(q.eps_bar) << ','
            << fmt_num(q.eps_bar_tight) << ',' << fmt_num(q.controller_eps_bar) << ',' << q.iterations << ',';
        if (q.ran_closed_loop)
            csv << fmt_num(q.fit.rho_fit) << ',' << fmt_num(q.fit.beta_fit) << ',' << fmt_num(q.fit.c_fit) << ','
                << (q.fit.ok ? 1 : 0) << ',';
        else
            csv << ",,,,";
        if (q.first_exit) csv << *q.first_exit;
        csv << '\n';
        check(res, q.error.empty(), "point " + fmt_num(q.value) + ": " + q.error);
        if (q.ran_closed_loop) check(res, q.fit.ok, "point " + fmt_num(q.value) + ": envelope fit failed");
    }
    res.report["points"] = arr;

    json checks;
    if (cfg.sweep.parameter == "dt" && pts.size() > 1) {
        bool scaling_ok = true;
        json ratios = json::array();
        for (std::size_t i = 1; i < pts.size(); ++i) {
            const double got = pts[i].cert.eps_A / pts[i - 1].cert.eps_A;
            const double want = pts[i].value / pts[i - 1].value;
            ratios.push_back({{"eps_A_ratio", got}, {"dt_ratio", want}});
            scaling_ok = scaling_ok && std::abs(got / want - 1.0) <= 0.3;
        }
        checks["eps_A_scaling"] = {{"ok", scaling_ok}, {"ratios", ratios}};
        check(res, scaling_ok, "eps_A does not scale as O(dt) within 30%");
    }
    if (cfg.sweep.closed_loop && pts.size() > 1) {
        // beta_fit ordered by decreasing controller eps_bar
        std::vector<std::size_t> order(pts.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return pts[a].controller_eps_bar > pts[b].controller_eps_bar; });
        bool trend = true;
        json seq = json::array();
        for (std::size_t k = 0; k < order.size(); ++k) {
            const auto& q = pts[order[k]];
            seq.push_back({{"value", q.value}, {"eps_bar", q.controller_eps_bar}, {"beta_fit", q.fit.beta_fit}});
            if (k > 0 && q.fit.beta_fit > pts[order[k - 1]].fit.beta_fit) trend = false;
        }
        checks["beta_trend"] = {{"ok", trend}, {"by_decreasing_eps_bar", seq}};
        check(res, trend, "beta_fit increases as eps_bar decreases");
    }
    res.report["checks"] = checks;
    out.text("sweep.csv", csv.str());
}

}  // namespace

std::string to_string(ExperimentKind k)
{
    switch (k) {
    case ExperimentKind::Certify: return "certify";
    case ExperimentKind::Bounds: return "bounds";
    case ExperimentKind::Represent: return "represent";
    case ExperimentKind::RunMpc: return "run-mpc";
    case ExperimentKind::Sweep: return "sweep";
    }
    return "unknown";
}

ExperimentKind parse_kind(const std::string& s)
{
    if (s == "certify") return ExperimentKind::Certify;
    if (s == "bounds") return ExperimentKind::Bounds;
    if (s == "represent") return ExperimentKind::Represent;
    if (s == "run-mpc" || s == "closed-loop") return ExperimentKind::RunMpc;
    if (s == "sweep") return ExperimentKind::Sweep;
    throw ConfigError("kind: unknown experiment \"" + s + "\"");
}

Setup make_setup(const ExperimentConfig& cfg)
{
    Setup s;
    s.p = cfg.plant;
    s.r = cfg.region;
    s.p.validate();
    s.r.validate();
    s.eq = make_equilibrium(s.p, s.r.delta_s);
    s.E = build_embedding(s.p);
    s.cert = error_constants(s.p, s.r);
    return s;
}

double resolve_eps_bar(const ExperimentConfig& cfg, const Setup& s)
{
    if (cfg.mpc.eps_bar_choice == EpsBarChoice::Value) return cfg.mpc.eps_bar_value;
    const Diameters d = diameters(s.r, s.eq, s.p.omega_s, cfg.bounds.n_grid);
    const BoundInputs bi{s.E, s.cert, d.diam_z, d.diam_u, cfg.mpc.cfg.L_pred};
    return cfg.mpc.eps_bar_choice == EpsBarChoice::Loose ? eps_bar_loose(bi).eps_bar : eps_bar_tight(bi).eps_bar_tight;
}

TrajectoryLibrary controller_data(const ExperimentConfig& cfg, const Setup& s, std::uint64_t seed)
{
    if (cfg.data.mode == LibraryMode::SingleTrajectory)
        return collect_single_trajectory(s.p, s.r, s.eq, cfg.data.excitation, cfg.data.length, seed);
    const auto L_traj = static_cast<std::size_t>(cfg.mpc.cfg.depth());
    const std::size_t l = cfg.data.l ? cfg.data.l : L_traj + kLiftDim + 10;
    return collect_library(s.p, s.r, s.eq, cfg.data.excitation, l, L_traj, seed);
}

int closed_loop_iterations(const ExperimentConfig& cfg)
{
    if (cfg.mpc.iterations > 0) return cfg.mpc.iterations;
    const double steps = std::ceil(cfg.mpc.duration / cfg.plant.dt - 1e-9);
    const int nz = cfg.mpc.cfg.n_z;
    return std::max(20, static_cast<int>(std::ceil((steps - nz) / nz)));
}

ClosedLoopOutcome closed_loop(const ExperimentConfig& cfg, const Setup& s, std::uint64_t seed)
{
    ClosedLoopOutcome o;
    const TrajectoryLibrary lib = controller_data(cfg, s, mix_seed(seed, kData));
    if (lib.mode == LibraryMode::SingleTrajectory) {
        o.pe_ok = pe_check(lib.trajectories.front().u, cfg.mpc.cfg.L_pred + 2 * cfg.mpc.cfg.n_z);
        o.data_first_exit = lib.trajectories.front().first_exit;
    } else {
        o.pe_ok = lifted_excitation_check(lib, s.p.omega_s, 1e-9, s.eq.z_s).ok;
    }
    MpcConfig mc = cfg.mpc.cfg;
    mc.u_s = Vec::Constant(1, s.eq.u_s);
    mc.y_s = s.eq.y_s.vec();
    mc.u_min = s.r.u_min;
    mc.u_max = s.r.u_max;
    mc.eps_bar = o.eps_bar = resolve_eps_bar(cfg, s);
    MpcData data = make_mpc_data(lib, mc);
    data.pe_checked = o.pe_ok;
    o.iterations = closed_loop_iterations(cfg);
    RunOptions ro;
    ro.stop_on_region_exit = cfg.mpc.stop_on_region_exit;
    o.log = receding_horizon_run(s.p, s.r, s.eq, mc, data, perturbed_initial_state(cfg, s), o.iterations, ro);
    if (o.log.iterations.size() >= 20) {
        o.fit = fit_envelope(o.log);
    } else {
        o.fit.message = "fewer than 20 MPC iterations";
    }
    return o;
}

namespace {

SweepPoint sweep_point(const ExperimentConfig& base, std::size_t i, std::uint64_t seed)
{
    SweepPoint q;
    q.value = base.sweep.values[i];
    ExperimentConfig cfg = base;
    if (cfg.sweep.parameter == "dt") {
        cfg.plant.dt = q.value;
    } else {
        cfg.mpc.cfg.L_pred = static_cast<int>(q.value);
        cfg.bounds.L_pred = static_cast<int>(q.value);
    }
    try {
        const Setup s = make_setup(cfg);
        q.cert = s.cert;
        const Diameters d = diameters_serial(s.r, s.eq, s.p.omega_s, cfg.bounds.n_grid);
        q.diam_z = d.diam_z;
        const BoundInputs bi{s.E, s.cert, d.diam_z, d.diam_u, cfg.mpc.cfg.L_pred};
        q.eps_bar = eps_bar_loose(bi).eps_bar;
        const TightBound tb = eps_bar_tight(bi);
        q.eps_bar_tight = tb.eps_bar_tight;
        q.S_L = tb.S_L;
        q.controller_eps_bar = resolve_eps_bar(cfg, s);
        if (cfg.sweep.closed_loop) {
            const ClosedLoopOutcome o = closed_loop(cfg, s, mix_seed(seed, i));
            q.ran_closed_loop = true;
            q.fit = o.fit;
            q.iterations = static_cast<int>(o.log.iterations.size());
            q.first_exit = o.log.first_exit;
            q.stop_reason = o.log.stop_reason;
        }
    } catch (const std::exception& e) {
        q.error = e.what();
    }
    return q;
}

}  // namespace

std::vector<SweepPoint> sweep_points(const ExperimentConfig& cfg, std::uint64_t seed)
{
    const auto n = static_cast<std::ptrdiff_t>(cfg.sweep.values.size());
    std::vector<SweepPoint> pts(static_cast<std::size_t>(n));
    const std::uint64_t s = mix_seed(seed, kSweep);
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) pts[static_cast<std::size_t>(i)] = sweep_point(cfg, static_cast<std::size_t>(i), s);
    return pts;
}

std::vector<SweepPoint> sweep_points_serial(const ExperimentConfig& cfg, std::uint64_t seed)
{
    std::vector<SweepPoint> pts;
    const std::uint64_t s = mix_seed(seed, kSweep);
    for (std::size_t i = 0; i < cfg.sweep.values.size(); ++i) pts.push_back(sweep_point(cfg, i, s));
    return pts;
}

ExperimentResult run_experiment(ExperimentKind kind, const ExperimentConfig& cfg, const std::filesystem::path& out,
                                bool force)
{
    ExperimentResult res;
    const std::string name = to_string(kind);
    const std::string report_name = (kind == ExperimentKind::RunMpc ? std::string("run_mpc") : name) + ".json";
    if (std::filesystem::exists(out / report_name) && !force)
        throw Error(out.string() + "/" + report_name + " exists; pass --force to overwrite");
    std::filesystem::create_directories(out);
    Outputs o(out, res);
    res.report["kind"] = name;
    res.report["seed"] = require_seed(cfg);
    res.report["config"] = config_to_json(cfg);
    switch (kind) {
    case ExperimentKind::Certify: run_certify(cfg, o, res); break;
    case ExperimentKind::Bounds: run_bounds(cfg, o, res); break;
    case ExperimentKind::Represent: run_represent(cfg, o, res); break;
    case ExperimentKind::RunMpc: run_mpc(cfg, o, res, force); break;
    case ExperimentKind::Sweep: run_sweep(cfg, o, res); break;
    }
    res.pass = res.failures.empty();
    res.report["pass"] = res.pass;
    res.report["failures"] = res.failures;
    o.report(report_name, res.report);
    return res;
}

}  // namespace kmpc
