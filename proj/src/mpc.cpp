#include "kmpc/mpc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "kmpc/io.hpp"

namespace kmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool positive_definite(const Mat& m)
{
    if (m.rows() != m.cols() || m.rows() == 0) return false;
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, m.cwiseAbs().maxCoeff())) return false;
    Eigen::SelfAdjointEigenSolver<Mat> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff() > 0.0;
}

}  // namespace

void MpcConfig::validate(bool require_interior) const
{
    if (n_z < 1) throw InvalidArgument("mpc.n_z must be positive");
    if (L_pred < 2 * n_z) throw InvalidArgument("mpc.L_pred must be at least 2 * n_z");
    if (!(lambda_alpha > 0.0)) throw InvalidArgument("mpc.lambda_alpha must be positive");
    if (!(lambda_sigma > 0.0)) throw InvalidArgument("mpc.lambda_sigma must be positive");
    if (!(eps_bar >= 0.0)) throw InvalidArgument("mpc.eps_bar must be nonnegative");
    if (!positive_definite(Q)) throw InvalidArgument("mpc.Q must be symmetric positive definite");
    if (!positive_definite(R)) throw InvalidArgument("mpc.R must be symmetric positive definite");
    if (u_s.size() != R.rows()) throw InvalidArgument("mpc.u_s does not match R");
    if (y_s.size() != Q.rows()) throw InvalidArgument("mpc.y_s does not match Q");
    if (!(u_min < u_max)) throw InvalidArgument("mpc: u_min must be below u_max");
    if (slack_mode == SlackMode::Fixed && !(alpha_bar >= 0.0))
        throw InvalidArgument("mpc.alpha_bar must be nonnegative");
    if (slack_max_iter < 1) throw InvalidArgument("mpc.slack_max_iter must be positive");
    if (require_interior) {
        for (Eigen::Index i = 0; i < u_s.size(); ++i)
            if (!(u_min < u_s(i) && u_s(i) < u_max))
                throw InvalidArgument("mpc: u_s must lie strictly inside [u_min, u_max]");
    }
}

MpcData make_mpc_data(const TrajectoryLibrary& lib, const MpcConfig& cfg)
{
    if (lib.trajectories.empty()) throw InvalidArgument("make_mpc_data: empty library");
    MpcData d;
    d.depth = cfg.depth();
    if (lib.mode == LibraryMode::SingleTrajectory) {
        const auto& t = lib.trajectories.front();
        d.Hu = hankel(t.u, d.depth);
        d.Hy = hankel(t.y, d.depth);
        d.sliding = true;
        return d;
    }
    const DataMatrix hd = assemble_Hd(lib, cfg.n_z, cfg.L_pred);
    d.Hu.resize(hd.Up.rows() + hd.Uf.rows(), hd.cols());
    d.Hu << hd.Up, hd.Uf;
    d.Hy.resize(hd.Yp.rows() + hd.Yf.rows(), hd.cols());
    d.Hy << hd.Yp, hd.Yf;
    d.sliding = false;
    return d;
}

MpcQp assemble_qp(const MpcConfig& cfg, const MpcData& data, const PastWindow& past, double alpha_l1_bound)
{
    const int nz = cfg.n_z;
    const int L = cfg.L_pred;
    const int Ld = cfg.depth();
    if (L < nz) throw InvalidArgument("assemble_qp: terminal window exceeds the horizon");
    if (data.depth != Ld) throw InvalidArgument("assemble_qp: Hankel depth must equal L_pred + n_z");
    const auto m = data.m();
    const auto p = data.p();
    if (past.u.rows() != m || past.y.rows() != p || past.u.cols() != nz || past.y.cols() != nz)
        throw InvalidArgument("assemble_qp: past window must be n_z samples of (u, y)");
    if (cfg.u_s.size() != m || cfg.y_s.size() != p) throw InvalidArgument("assemble_qp: setpoint dimension mismatch");

    MpcQp out;
    QpLayout& lay = out.layout;
    lay.l = data.cols();
    lay.n_sigma = p * Ld;
    lay.n_u = m * Ld;
    lay.n_y = p * Ld;
    const auto n = lay.n();

    QpProblem& qp = out.qp;
    qp.P = Mat::Zero(n, n);
    qp.q = Vec::Zero(n);
    qp.P.diagonal().segment(lay.alpha(), lay.l).setConstant(2.0 * cfg.lambda_alpha);
    qp.P.diagonal().segment(lay.sigma(), lay.n_sigma).setConstant(2.0 * cfg.lambda_sigma);
    for (int k = nz; k < Ld; ++k) {
        const auto iu = lay.u_hat() + k * m;
        const auto iy = lay.y_hat() + k * p;
        qp.P.block(iu, iu, m, m) = 2.0 * cfg.R;
        qp.P.block(iy, iy, p, p) = 2.0 * cfg.Q;
        qp.q.segment(iu, m) = -2.0 * cfg.R * cfg.u_s;
        qp.q.segment(iy, p) = -2.0 * cfg.Q * cfg.y_s;
        out.constant += cfg.u_s.dot(cfg.R * cfg.u_s) + cfg.y_s.dot(cfg.Q * cfg.y_s);
    }

    const Eigen::Index rows = lay.n_u + lay.n_y + (m + p) * nz * 2 + m * L + lay.n_sigma;
    qp.A = Mat::Zero(rows, n);
    qp.l.resize(rows);
    qp.u.resize(rows);
    Eigen::Index r = 0;
    const auto begin = [&](const char* name, Eigen::Index count) {
        qp.blocks.push_back({name, r, count});
    };

    begin("hankel_u", lay.n_u);
    qp.A.block(r, lay.u_hat(), lay.n_u, lay.n_u).setIdentity();
    qp.A.block(r, lay.alpha(), lay.n_u, lay.l) = -data.Hu;
    qp.l.segment(r, lay.n_u).setZero();
    qp.u.segment(r, lay.n_u).setZero();
    r += lay.n_u;

    begin("hankel_y", lay.n_y);
    qp.A.block(r, lay.y_hat(), lay.n_y, lay.n_y).setIdentity();
    qp.A.block(r, lay.alpha(), lay.n_y, lay.l) = -data.Hy;
    qp.A.block(r, lay.sigma(), lay.n_y, lay.n_sigma) = -Mat::Identity(lay.n_y, lay.n_sigma);
    qp.l.segment(r, lay.n_y).setZero();
    qp.u.segment(r, lay.n_y).setZero();
    r += lay.n_y;

    begin("initial_u", m * nz);
    for (int k = 0; k < nz; ++k)
        for (Eigen::Index i = 0; i < m; ++i, ++r) {
            qp.A(r, lay.u_hat() + k * m + i) = 1.0;
            qp.l(r) = qp.u(r) = past.u(i, k);
        }
    begin("initial_y", p * nz);
    for (int k = 0; k < nz; ++k)
        for (Eigen::Index i = 0; i < p; ++i, ++r) {
            qp.A(r, lay.y_hat() + k * p + i) = 1.0;
            qp.l(r) = qp.u(r) = past.y(i, k);
        }
    begin("terminal_u", m * nz);
    for (int k = L; k < Ld; ++k)
        for (Eigen::Index i = 0; i < m; ++i, ++r) {
            qp.A(r, lay.u_hat() + k * m + i) = 1.0;
            qp.l(r) = qp.u(r) = cfg.u_s(i);
        }
    begin("terminal_y", p * nz);
    for (int k = L; k < Ld; ++k)
        for (Eigen::Index i = 0; i < p; ++i, ++r) {
            qp.A(r, lay.y_hat() + k * p + i) = 1.0;
            qp.l(r) = qp.u(r) = cfg.y_s(i);
        }
    begin("input_box", m * L);
    for (int k = nz; k < Ld; ++k)
        for (Eigen::Index i = 0; i < m; ++i, ++r) {
            qp.A(r, lay.u_hat() + k * m + i) = 1.0;
            qp.l(r) = cfg.u_min;
            qp.u(r) = cfg.u_max;
        }
    const double b = cfg.eps_bar == 0.0 ? 0.0 : cfg.eps_bar * (1.0 + alpha_l1_bound);
    begin("slack_box", lay.n_sigma);
    for (Eigen::Index i = 0; i < lay.n_sigma; ++i, ++r) {
        qp.A(r, lay.sigma() + i) = 1.0;
        qp.l(r) = -b;
        qp.u(r) = b;
    }
    return out;
}

std::string to_string(MpcStatus s)
{
    switch (s) {
    case MpcStatus::Optimal: return "optimal";
    case MpcStatus::SlackNotConverged: return "slack_not_converged";
    case MpcStatus::Infeasible: return "infeasible";
    case MpcStatus::SolverFailed: return "solver_failed";
    }
    return "unknown";
}

namespace {

struct Attempt {
    QpResult res;
    MpcQp mq;
};

Attempt solve_once(const MpcConfig& cfg, const MpcData& data, const PastWindow& past, double bound, const Vec* warm)
{
    Attempt a;
    a.mq = assemble_qp(cfg, data, past, bound);
    const Vec* w = warm && warm->size() == a.mq.layout.n() ? warm : nullptr;
    a.res = solve_qp(a.mq.qp, cfg.qp, w);
    if (a.res.status == QpStatus::PrimalInfeasible)
        throw MpcInfeasible("robust MPC infeasible; conflicting constraint blocks: " + a.res.diagnostic);
    return a;
}

double alpha_l1(const Attempt& a) { return a.res.x.segment(a.mq.layout.alpha(), a.mq.layout.l).lpNorm<1>(); }

}  // namespace

MpcSolution solve_robust_mpc(const MpcConfig& cfg, const MpcData& data, const PastWindow& past, const Vec* warm)
{
    cfg.validate(false);
    MpcSolution sol;
    Attempt a;
    int qp_iters = 0;
    bool converged = true;
    double frozen = 0.0;

    if (cfg.slack_mode == SlackMode::Fixed) {
        frozen = cfg.alpha_bar;
        a = solve_once(cfg, data, past, frozen, warm);
        qp_iters += a.res.iterations;
        sol.slack_iterations = 1;
    } else if (cfg.eps_bar == 0.0) {
        a = solve_once(cfg, data, past, 0.0, warm);
        qp_iters += a.res.iterations;
        sol.slack_iterations = 1;
    } else {
        a = solve_once(cfg, data, past, kInf, warm);
        qp_iters += a.res.iterations;
        double a1 = alpha_l1(a);
        converged = false;
        for (int it = 1; it <= cfg.slack_max_iter; ++it) {
            frozen = a1;
            a = solve_once(cfg, data, past, frozen, &a.res.x);
            qp_iters += a.res.iterations;
            sol.slack_iterations = it;
            const double a1n = alpha_l1(a);
            const bool done = std::abs(a1n - a1) <= cfg.slack_tol * std::max(1.0, a1);
            a1 = a1n;
            if (done) {
                converged = true;
                break;
            }
        }
    }

    const QpLayout& lay = a.mq.layout;
    const Vec& x = a.res.x;
    const auto m = data.m();
    const auto p = data.p();
    sol.alpha = x.segment(lay.alpha(), lay.l);
    sol.sigma = x.segment(lay.sigma(), lay.n_sigma);
    sol.u_hat = Eigen::Map<const Mat>(x.data() + lay.u_hat(), m, data.depth);
    sol.y_hat = Eigen::Map<const Mat>(x.data() + lay.y_hat(), p, data.depth);
    sol.objective = a.res.objective + a.mq.constant;
    sol.qp_status = a.res.status;
    sol.qp_iterations = qp_iters;
    sol.alpha_l1 = sol.alpha.lpNorm<1>();
    sol.alpha_l1_bound = frozen;
    sol.sigma_inf = sol.sigma.size() ? sol.sigma.lpNorm<Eigen::Infinity>() : 0.0;
    sol.slack_check = sol.sigma_inf <= cfg.eps_bar * (1.0 + sol.alpha_l1) + 1e-6;
    sol.pe_checked = data.pe_checked;
    sol.diagnostic = a.res.diagnostic;
    sol.primal = x;
    if (a.res.status != QpStatus::Solved) sol.status = MpcStatus::SolverFailed;
    else if (!converged) sol.status = MpcStatus::SlackNotConverged;
    else sol.status = MpcStatus::Optimal;
    return sol;
}

Vec shift_warm_start(const MpcSolution& sol, const MpcConfig& cfg, const MpcData& data)
{
    const auto m = data.m();
    const auto p = data.p();
    const int nz = cfg.n_z;
    const int Ld = data.depth;
    const auto l = data.cols();
    Vec w = Vec::Zero(l + (2 * p + m) * Ld);
    if (data.sliding) {
        if (l > nz) w.segment(nz, l - nz) = sol.alpha.head(l - nz);
    } else {
        w.head(l) = sol.alpha;
    }
    const auto iu = l + p * Ld;
    const auto iy = iu + m * Ld;
    for (int k = 0; k < Ld; ++k) {
        const int src = k + nz;
        w.segment(iu + k * m, m) = src < Ld ? Vec(sol.u_hat.col(src)) : cfg.u_s;
        w.segment(iy + k * p, p) = src < Ld ? Vec(sol.y_hat.col(src)) : cfg.y_s;
    }
    return w;
}

ClosedLoopLog receding_horizon_run(const GeneratorParams& p, const OperatingRegion& r, const Equilibrium& eq,
                                   const MpcConfig& cfg, const MpcData& data, const State& x0, int steps,
                                   const RunOptions& opts)
{
    cfg.validate(true);
    if (steps < 0) throw InvalidArgument("receding_horizon_run: steps must be nonnegative");
    if (data.m() != 1 || data.p() != 2) throw InvalidArgument("receding_horizon_run: data must be single-input, two-output");
    if (!state_in_region(x0, r, p)) throw InvalidArgument("receding_horizon_run: x0 outside the operating region");

    ClosedLoopLog log;
    const auto dist = [&](const State& x) { return (x.vec() - eq.x_s.vec()).norm(); };
    State x = x0;
    log.x.push_back(x);
    log.err.push_back(dist(x));
    bool stop = false;
    const auto apply = [&](double u, int iter) {
        log.y.push_back(output(x, p));
        log.u.push_back(u);
        log.iteration_of.push_back(iter);
        x = step(x, u, p);
        log.x.push_back(x);
        log.err.push_back(dist(x));
        if (!log.first_exit && !state_in_region(x, r, p)) {
            log.first_exit = log.x.size() - 1;
            if (opts.stop_on_region_exit) {
                log.truncated = true;
                log.stop_reason = "left operating region";
                stop = true;
            }
        }
    };

    for (int k = 0; k < cfg.n_z && !stop; ++k) apply(eq.u_s, -1);
    log.warmup = log.u.size();

    Vec warm;
    double prev_cost = kInf;
    for (int it = 0; it < steps && !stop; ++it) {
        const auto T = static_cast<Eigen::Index>(log.u.size());
        PastWindow past;
        past.u.resize(1, cfg.n_z);
        past.y.resize(2, cfg.n_z);
        for (int k = 0; k < cfg.n_z; ++k) {
            const auto idx = static_cast<std::size_t>(T - cfg.n_z + k);
            past.u(0, k) = log.u[idx];
            past.y.col(k) = log.y[idx].vec();
        }
        MpcSolution sol;
        try {
            sol = solve_robust_mpc(cfg, data, past, warm.size() ? &warm : nullptr);
        } catch (const MpcInfeasible& e) {
            log.stop_reason = e.what();
            break;
        }
        ClosedLoopLog::Iteration rec;
        rec.k = log.u.size();
        rec.cost = sol.objective;
        rec.status = to_string(sol.status);
        rec.sigma_inf = sol.sigma_inf;
        rec.alpha_l1 = sol.alpha_l1;
        rec.slack_iterations = sol.slack_iterations;
        rec.qp_iterations = sol.qp_iterations;
        rec.slack_check = sol.slack_check;
        log.iterations.push_back(rec);
        if (sol.status == MpcStatus::SolverFailed) {
            log.stop_reason = "solver failure: " + to_string(sol.qp_status);
            break;
        }
        if (sol.objective > prev_cost + opts.cost_increase_tol * std::max(1.0, prev_cost)) ++log.cost_increases;
        prev_cost = sol.objective;
        for (int k = 0; k < cfg.n_z && !stop; ++k)
            apply(std::clamp(sol.u_hat(0, cfg.n_z + k), cfg.u_min, cfg.u_max), it);
        warm = shift_warm_start(sol, cfg, data);
    }
    return log;
}

std::string ClosedLoopLog::csv() const
{
    std::ostringstream os;
    os << "k,delta,omega,Eq_prime,u,omega_tilde,P_e,err,iteration,cost,status,sigma_inf,alpha_l1\n";
    for (std::size_t k = 0; k < x.size(); ++k) {
        os << k << ',' << fmt_num(x[k].delta) << ',' << fmt_num(x[k].omega) << ',' << fmt_num(x[k].Eq_prime) << ',';
        if (k < u.size()) os << fmt_num(u[k]) << ',' << fmt_num(y[k].omega_tilde) << ',' << fmt_num(y[k].P_e);
        else os << ",,";
        os << ',' << fmt_num(err[k]) << ',';
        const int it = k < iteration_of.size() ? iteration_of[k] : -1;
        if (it >= 0) {
            const auto& rec = iterations[static_cast<std::size_t>(it)];
            os << it << ',' << fmt_num(rec.cost) << ',' << rec.status << ',' << fmt_num(rec.sigma_inf) << ','
               << fmt_num(rec.alpha_l1);
        } else {
            os << ",,,,";
        }
        os << '\n';
    }
    return os.str();
}

nlohmann::json ClosedLoopLog::summary() const
{
    nlohmann::json j;
    j["warmup"] = warmup;
    j["steps"] = u.size();
    j["mpc_iterations"] = iterations.size();
    j["first_exit"] = first_exit ? nlohmann::json(*first_exit) : nlohmann::json(nullptr);
    j["truncated"] = truncated;
    j["stop_reason"] = stop_reason;
    j["cost_increases"] = cost_increases;
    j["final_err"] = err.empty() ? 0.0 : err.back();
    bool slack_ok = true;
    int qp_iters = 0;
    for (const auto& it : iterations) {
        slack_ok = slack_ok && it.slack_check;
        qp_iters += it.qp_iterations;
    }
    j["slack_check"] = slack_ok;
    j["qp_iterations"] = qp_iters;
    return j;
}

}  // namespace kmpc
