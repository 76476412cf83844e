#include <doctest.h>

#include <cmath>

#include "kmpc/data.hpp"
#include "kmpc/error.hpp"
#include "kmpc/mpc.hpp"
#include "kmpc/random.hpp"

using namespace kmpc;

namespace {

struct Lti {
    GeneratorParams p;
    OperatingRegion r;
    Equilibrium eq = make_equilibrium(p, r.delta_s);
    EmbeddingMatrices E = build_embedding(p);
    MpcConfig cfg;
    MpcData data;

    // Nominal Koopman data shifted to absolute coordinates around (u_s, y_s).
    explicit Lti(int length = 300)
    {
        cfg.u_s = Vec::Constant(1, eq.u_s);
        cfg.y_s = Vec(2);
        cfg.y_s << eq.y_s.omega_tilde, eq.y_s.P_e;
        Rng rng(77);
        Mat ubar(1, length);
        for (int k = 0; k < length; ++k) ubar(0, k) = 0.2 * rng.uniform(-1.0, 1.0);
        Lifted z0 = Lifted::Zero();
        Trajectory t = nominal_trajectory(E, z0, ubar);
        t.u.array() += eq.u_s;
        t.y = t.y.colwise() + cfg.y_s;
        TrajectoryLibrary lib;
        lib.mode = LibraryMode::SingleTrajectory;
        lib.trajectories.push_back(std::move(t));
        data = make_mpc_data(lib, cfg);
    }

    PastWindow setpoint_window() const
    {
        return {cfg.u_s.replicate(1, cfg.n_z), cfg.y_s.replicate(1, cfg.n_z)};
    }
};

}  // namespace

TEST_CASE("config validation")
{
    MpcConfig c;
    c.u_s = Vec::Constant(1, 1.0);
    CHECK_NOTHROW(c.validate());
    c.L_pred = 10;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c.L_pred = 14;
    c.u_s(0) = 1.5;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    CHECK_NOTHROW(c.validate(false));
    c.u_s(0) = 1.0;
    c.Q(0, 0) = -1.0;
    CHECK_THROWS(c.validate());
    c.Q(0, 0) = 10.0;
    c.eps_bar = -1.0;
    CHECK_THROWS(c.validate());
}

TEST_CASE("qp assembly")
{
    Lti s;
    s.cfg.eps_bar = 0.5;
    const MpcQp mq = assemble_qp(s.cfg, s.data, s.setpoint_window(), 2.0);
    const QpLayout& L = mq.layout;
    CHECK(L.l == s.data.cols());
    CHECK(L.n_sigma == 2 * 21);
    CHECK(L.n_u == 21);
    CHECK(L.n_y == 42);
    CHECK_NOTHROW(mq.qp.validate());
    bool found = false;
    for (const auto& b : mq.qp.blocks)
        if (b.name == "slack_box") {
            found = true;
            for (Eigen::Index i = 0; i < b.rows; ++i) {
                CHECK(mq.qp.u(b.start + i) == doctest::Approx(0.5 * 3.0));
                CHECK(mq.qp.l(b.start + i) == doctest::Approx(-0.5 * 3.0));
            }
        }
    CHECK(found);

    const MpcQp m0 = assemble_qp(s.cfg, s.data, s.setpoint_window(), 0.0);
    for (const auto& b : m0.qp.blocks)
        if (b.name == "slack_box") CHECK(m0.qp.u(b.start) == doctest::Approx(0.5));

    MpcConfig bad = s.cfg;
    bad.L_pred = 5;
    CHECK_THROWS(assemble_qp(bad, s.data, s.setpoint_window(), 0.0));
}

TEST_CASE("exact data at the setpoint")
{
    Lti s;
    const MpcSolution sol = solve_robust_mpc(s.cfg, s.data, s.setpoint_window());
    CHECK(sol.status == MpcStatus::Optimal);
    CHECK(sol.slack_iterations == 1);
    CHECK(sol.sigma_inf < 1e-12);
    CHECK((sol.u_hat.array() - s.cfg.u_s(0)).abs().maxCoeff() < 1e-6);
    CHECK((sol.y_hat.colwise() - s.cfg.y_s).cwiseAbs().maxCoeff() < 1e-6);

    // min-norm alpha reproducing the constant setpoint trajectory
    Mat H(s.data.Hu.rows() + s.data.Hy.rows(), s.data.cols());
    H << s.data.Hu, s.data.Hy;
    Vec w(H.rows());
    w << s.cfg.u_s.replicate(21, 1), s.cfg.y_s.replicate(21, 1);
    const Vec a_star = H.completeOrthogonalDecomposition().solve(w);
    CHECK((H * a_star - w).norm() < 1e-9);
    const double cost = s.cfg.lambda_alpha * a_star.squaredNorm();
    CHECK(sol.objective == doctest::Approx(cost).epsilon(1e-3));
    CHECK((sol.alpha - a_star).norm() <= 1e-3 * a_star.norm());
}

TEST_CASE("exact data off the setpoint has zero slack")
{
    Lti s;
    PastWindow past = s.setpoint_window();
    for (int k = 0; k < s.cfg.n_z; ++k) {
        past.u(0, k) = s.data.Hu(k, 40);
        past.y.col(k) = s.data.Hy.block(2 * k, 40, 2, 1);
    }
    const MpcSolution sol = solve_robust_mpc(s.cfg, s.data, past);
    CHECK(sol.status == MpcStatus::Optimal);
    CHECK(sol.sigma_inf < 1e-12);
    CHECK((sol.u_hat.leftCols(7) - past.u).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((sol.y_hat.leftCols(7) - past.y).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((sol.u_hat.rightCols(7).array() - s.cfg.u_s(0)).abs().maxCoeff() < 1e-6);
    CHECK(sol.u_hat.maxCoeff() <= s.cfg.u_max + 1e-7);
    CHECK(sol.u_hat.rightCols(14).minCoeff() >= s.cfg.u_min - 1e-7);
}

TEST_CASE("sequential slack bound holds a posteriori")
{
    Lti s;
    s.cfg.eps_bar = 0.02;
    PastWindow past = s.setpoint_window();
    past.y(1, 3) += 0.01;
    const MpcSolution sol = solve_robust_mpc(s.cfg, s.data, past);
    CHECK(sol.status == MpcStatus::Optimal);
    CHECK(sol.slack_check);
    CHECK(sol.sigma_inf <= s.cfg.eps_bar * (1.0 + sol.alpha_l1) + 1e-6);
    CHECK(sol.sigma_inf > 0.0);

    s.cfg.slack_mode = SlackMode::Fixed;
    s.cfg.alpha_bar = 0.0;
    const MpcSolution fx = solve_robust_mpc(s.cfg, s.data, past);
    CHECK(fx.slack_iterations == 1);
    CHECK(fx.sigma_inf <= s.cfg.eps_bar + 1e-7);
}

TEST_CASE("input box excluding u_s is reported infeasible")
{
    Lti s;
    s.cfg.u_min = s.cfg.u_s(0) + 0.1;
    s.cfg.u_max = s.cfg.u_s(0) + 0.3;
    try {
        solve_robust_mpc(s.cfg, s.data, s.setpoint_window());
        FAIL("expected infeasibility");
    } catch (const MpcInfeasible& e) {
        const std::string msg = e.what();
        CHECK((msg.find("terminal_u") != std::string::npos || msg.find("input_box") != std::string::npos));
    }
}

TEST_CASE("warm start shift")
{
    Lti s;
    const MpcSolution sol = solve_robust_mpc(s.cfg, s.data, s.setpoint_window());
    const Vec w = shift_warm_start(sol, s.cfg, s.data);
    const Eigen::Index l = s.data.cols();
    CHECK(w.size() == sol.primal.size());
    CHECK(w.segment(7, l - 7) == sol.alpha.head(l - 7));
    CHECK(w.head(7).isZero());
    CHECK(w.segment(l, 42).isZero());
}

TEST_CASE("closed loop")
{
    GeneratorParams p;
    OperatingRegion r;
    const Equilibrium eq = make_equilibrium(p, r.delta_s);
    ExcitationConfig exc;
    const TrajectoryLibrary lib = collect_single_trajectory(p, r, eq, exc, 300, 11);
    MpcConfig cfg;
    cfg.u_s = Vec::Constant(1, eq.u_s);
    cfg.y_s = Vec(2);
    cfg.y_s << eq.y_s.omega_tilde, eq.y_s.P_e;
    cfg.eps_bar = 2.0;
    const MpcData data = make_mpc_data(lib, cfg);

    SUBCASE("steps = 0 keeps only the warm-up")
    {
        const ClosedLoopLog log = receding_horizon_run(p, r, eq, cfg, data, eq.x_s, 0);
        CHECK(log.warmup == 7);
        CHECK(log.u.size() == 7);
        CHECK(log.x.size() == 8);
        CHECK(log.iterations.empty());
        for (double u : log.u) CHECK(u == eq.u_s);
    }
    SUBCASE("starting at the equilibrium stays there")
    {
        const ClosedLoopLog log = receding_horizon_run(p, r, eq, cfg, data, eq.x_s, 4);
        CHECK(log.iterations.size() == 4);
        CHECK(log.u.size() == 7 + 28);
        // regularization on alpha moves the optimum by O(lambda_alpha)
        for (double u : log.u) CHECK(std::abs(u - eq.u_s) < 1e-4);
        for (double e : log.err) CHECK(e < 1e-5);
        CHECK_FALSE(log.first_exit.has_value());
        for (const auto& it : log.iterations) CHECK(it.slack_check);
    }
    SUBCASE("rotor angle offset")
    {
        State x0 = eq.x_s;
        x0.delta += 0.3;
        const ClosedLoopLog log = receding_horizon_run(p, r, eq, cfg, data, x0, 6);
        CHECK(log.iterations.size() == 6);
        for (double u : log.u) {
            CHECK(u >= r.u_min);
            CHECK(u <= r.u_max);
        }
        for (double e : log.err) CHECK(std::isfinite(e));
        CHECK(log.err.front() == doctest::Approx(0.3));
        const std::string csv = log.csv();
        CHECK(csv.rfind("k,delta,omega,Eq_prime,u,", 0) == 0);

        RunOptions stop;
        stop.stop_on_region_exit = true;
        const ClosedLoopLog cut = receding_horizon_run(p, r, eq, cfg, data, x0, 6, stop);
        REQUIRE(log.first_exit.has_value());
        CHECK(cut.truncated);
        CHECK(cut.first_exit == log.first_exit);
        CHECK(cut.x.size() <= *cut.first_exit + 1);

        x0.delta = eq.x_s.delta + r.delta_max + 0.05;
        CHECK_THROWS_AS(receding_horizon_run(p, r, eq, cfg, data, x0, 6), InvalidArgument);
    }
}
