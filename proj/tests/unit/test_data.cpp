#include <doctest.h>

#include "kmpc/data.hpp"
#include "kmpc/error.hpp"
#include "kmpc/random.hpp"

using namespace kmpc;

namespace {

struct Setup {
    GeneratorParams p;
    OperatingRegion r;
    Equilibrium eq = make_equilibrium(p, r.delta_s);
    EmbeddingMatrices E = build_embedding(p);
};

Mat random_seq(int dim, int n, std::uint64_t seed)
{
    Rng rng(seed);
    Mat m(dim, n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < dim; ++i) m(i, j) = rng.uniform(-1.0, 1.0);
    return m;
}

}  // namespace

TEST_CASE("hankel")
{
    Mat s(1, 5);
    s << 1, 2, 3, 4, 5;
    Mat want(3, 3);
    want << 1, 2, 3, 2, 3, 4, 3, 4, 5;
    CHECK(hankel(s, 3) == want);

    Mat s2(2, 3);
    s2 << 1, 2, 3, 10, 20, 30;
    Mat want2(4, 2);
    want2 << 1, 2, 10, 20, 2, 3, 20, 30;
    CHECK(hankel(s2, 2) == want2);

    CHECK(hankel(s, 5).cols() == 1);
    CHECK_THROWS(hankel(s, 6));
    CHECK_THROWS(hankel(s, 0));

    const Mat r = random_seq(3, 40, 5);
    for (int d : {1, 4, 13, 40}) {
        const Mat H = hankel(r, d);
        REQUIRE(H.rows() == 3 * d);
        REQUIRE(H.cols() == 40 - d + 1);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < H.cols(); ++j)
                for (int c = 0; c < 3; ++c) CHECK(H(3 * i + c, j) == r(c, i + j));
    }
}

TEST_CASE("stack_columns")
{
    Mat b(2, 2);
    b << 1, 2, 3, 4;
    Vec want(4);
    want << 1, 3, 2, 4;
    CHECK(stack_columns(b) == want);
}

TEST_CASE("persistency of excitation")
{
    CHECK_FALSE(pe_check(Mat::Constant(1, 50, 1.0), 2));
    CHECK(pe_check(Mat::Constant(1, 50, 1.0), 1));
    const Mat u = random_seq(1, 400, 11);
    CHECK(pe_check(u, 28));
    bool prev = true;
    for (int order = 1; order <= 200; order += 7) {
        const bool ok = pe_check(u, order);
        if (!prev) CHECK_FALSE(ok);
        prev = ok;
    }
    // hankel(u, order) cannot have full row rank with fewer columns than rows
    CHECK_FALSE(pe_check(u, 201));
}

TEST_CASE("assemble_Hd single trajectory matches the hankel blocks")
{
    Setup s;
    ExcitationConfig exc;
    const TrajectoryLibrary lib = collect_single_trajectory(s.p, s.r, s.eq, exc, 120, 4);
    const auto& t = lib.trajectories.front();
    const DataMatrix hd = assemble_Hd(lib, 7, 5);
    const Mat Hu = hankel(t.u, 12), Hy = hankel(t.y, 12);
    CHECK(hd.cols() == 120 - 12 + 1);
    CHECK(hd.Up == Hu.topRows(7));
    CHECK(hd.Uf == Hu.bottomRows(5));
    CHECK(hd.Yp == Hy.topRows(14));
    CHECK(hd.Yf == Hy.bottomRows(10));
    CHECK(hd.stacked().rows() == 7 + 14 + 5 + 10);
    CHECK(trajectory_window(t, 7, 5) == hd.stacked().col(0));
}

TEST_CASE("assemble_Hd library mode uses one column per trajectory")
{
    Setup s;
    const TrajectoryLibrary lib = nominal_library(s.p, s.r, s.E, s.eq, 0.1, 9, 10, 3);
    const DataMatrix hd = assemble_Hd(lib, 7, 3);
    CHECK(hd.cols() == 9);
    for (int i = 0; i < 9; ++i)
        CHECK(hd.stacked().col(i) == trajectory_window(lib.trajectories[static_cast<std::size_t>(i)], 7, 3));
    CHECK_THROWS(assemble_Hd(lib, 7, 4));
}

TEST_CASE("lifted excitation")
{
    Setup s;
    TrajectoryLibrary lib = nominal_library(s.p, s.r, s.E, s.eq, 0.2, 30, 14, 8);
    const ExcitationCheck ok = lifted_excitation_check(lib, s.p.omega_s, 1e-9, s.eq.z_s);
    CHECK(ok.ok);
    CHECK(ok.required == 21);
    CHECK(ok.rank == 21);

    TrajectoryLibrary dup = lib;
    for (std::size_t i = 0; i < dup.size(); ++i) dup.trajectories[i] = lib.trajectories[i % 5];
    const ExcitationCheck bad = lifted_excitation_check(dup, s.p.omega_s, 1e-9, s.eq.z_s);
    CHECK_FALSE(bad.ok);
    CHECK(bad.rank <= 5);

    TrajectoryLibrary no_x0 = lib;
    no_x0.trajectories.front().x0.reset();
    CHECK_THROWS(lifted_excitation_check(no_x0, s.p.omega_s));
}

TEST_CASE("collect_library")
{
    Setup s;
    ExcitationConfig exc;
    exc.amplitude = 0.02;
    exc.center = ExcitationConfig::Center::InitialPower;
    exc.init_box_fraction = 0.2;
    const TrajectoryLibrary a = collect_library(s.p, s.r, s.eq, exc, 12, 6, 99);
    const TrajectoryLibrary b = collect_library_serial(s.p, s.r, s.eq, exc, 12, 6, 99);
    const TrajectoryLibrary c = collect_library(s.p, s.r, s.eq, exc, 12, 6, 99);
    REQUIRE(a.size() == 12);
    CHECK(a.rejected == b.rejected);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.trajectories[i].u == b.trajectories[i].u);
        CHECK(a.trajectories[i].y == b.trajectories[i].y);
        CHECK(a.trajectories[i].u == c.trajectories[i].u);
        CHECK_FALSE(a.trajectories[i].first_exit.has_value());
        for (Eigen::Index k = 0; k < a.trajectories[i].u.cols(); ++k) {
            CHECK(a.trajectories[i].u(0, k) >= s.r.u_min);
            CHECK(a.trajectories[i].u(0, k) <= s.r.u_max);
        }
    }
    const TrajectoryLibrary d = collect_library(s.p, s.r, s.eq, exc, 12, 6, 100);
    CHECK(d.trajectories.front().u != a.trajectories.front().u);
}

TEST_CASE("collect_library gives up on an unreachable region")
{
    Setup s;
    OperatingRegion tiny = s.r;
    tiny.omega_max = 1e-12;
    ExcitationConfig exc;
    exc.amplitude = 1.0;
    exc.max_attempts_per_trajectory = 5;
    CHECK_THROWS_AS(collect_library(s.p, tiny, s.eq, exc, 4, 50, 1), Error);
}

TEST_CASE("representation")
{
    Setup s;
    const TrajectoryLibrary lib = nominal_library(s.p, s.r, s.E, s.eq, 0.2, 30, 14, 12);
    const TrajectoryLibrary fresh = nominal_library(s.p, s.r, s.E, s.eq, 0.2, 10, 14, 13);
    for (const auto& t : fresh.trajectories) {
        const RepresentationResult rr = representation_test(lib, t, s.eq, s.p.omega_s, 7);
        CHECK(rr.residual <= 1e-8);
    }
    // library columns are represented exactly
    CHECK(representation_test(lib, lib.trajectories[4], s.eq, s.p.omega_s, 7).residual <= 1e-10);

    Trajectory bad = fresh.trajectories.front();
    bad.y(1, 10) += 0.1;
    CHECK(representation_test(lib, bad, s.eq, s.p.omega_s, 7).residual > 1e-3);

    CHECK_THROWS(representation_test(lib, bad, s.eq, s.p.omega_s, 6));
}

TEST_CASE("nominal trajectory follows the linear recursion")
{
    Setup s;
    Lifted z0 = Lifted::Zero();
    z0(1) = 0.01;
    Mat u = Mat::Zero(1, 3);
    const Trajectory t = nominal_trajectory(s.E, z0, u);
    CHECK(t.y(0, 0) == doctest::Approx(0.01));
    CHECK(t.y(0, 2) == doctest::Approx(0.01));
    CHECK(t.y(1, 0) == 0.0);
}
