#include <doctest.h>

#include <cmath>
#include <limits>

#include "kmpc/error.hpp"
#include "kmpc/qp.hpp"
#include "kmpc/random.hpp"

using namespace kmpc;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Mat random_mat(Eigen::Index r, Eigen::Index c, Rng& rng)
{
    Mat m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
        for (Eigen::Index i = 0; i < r; ++i) m(i, j) = rng.uniform(-1.0, 1.0);
    return m;
}

// Null-space method: x = x_p + Z w with A Z = 0.
Vec nullspace_oracle(const Mat& P, const Vec& q, const Mat& A, const Vec& b)
{
    Eigen::CompleteOrthogonalDecomposition<Mat> cod(A);
    const Vec xp = cod.solve(b);
    Eigen::FullPivLU<Mat> lu(A);
    const Mat Z = lu.kernel();
    const Mat H = Z.transpose() * P * Z;
    const Vec g = Z.transpose() * (P * xp + q);
    const Vec w = H.ldlt().solve(-g);
    return xp + Z * w;
}

}  // namespace

TEST_CASE("unit equality")
{
    QpProblem qp;
    const int n = 5;
    qp.P = 2.0 * Mat::Identity(n, n);
    qp.q = Vec::Zero(n);
    qp.A = Mat::Zero(1, n);
    qp.A(0, 0) = 1.0;
    qp.l = qp.u = Vec::Ones(1);
    const QpResult r = solve_qp(qp);
    CHECK(r.status == QpStatus::Solved);
    CHECK(std::abs(r.x(0) - 1.0) < 1e-8);
    CHECK(r.x.tail(n - 1).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(r.objective == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("active box constraint")
{
    QpProblem qp;
    qp.P = 2.0 * Mat::Identity(1, 1);
    qp.q = Vec::Constant(1, -4.0);
    qp.A = Mat::Identity(1, 1);
    qp.l = Vec::Constant(1, -kInf);
    qp.u = Vec::Ones(1);
    const QpResult r = solve_qp(qp);
    CHECK(r.status == QpStatus::Solved);
    CHECK(std::abs(r.x(0) - 1.0) < 1e-8);
    CHECK(r.y(0) == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(r.kkt.complementarity < 1e-8);
}

TEST_CASE("random equality QPs against the null-space solution")
{
    Rng rng(2024);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 4 + static_cast<int>(rng.uniform() * 20);
        const int me = 1 + static_cast<int>(rng.uniform() * (n - 1));
        const Mat G = random_mat(n, n, rng);
        QpProblem qp;
        qp.P = G * G.transpose() + 0.1 * Mat::Identity(n, n);
        qp.q = random_mat(n, 1, rng);
        qp.A = random_mat(me, n, rng);
        qp.l = qp.u = random_mat(me, 1, rng);
        const QpResult r = solve_qp(qp);
        REQUIRE(r.status == QpStatus::Solved);
        const Vec x_ref = nullspace_oracle(qp.P, qp.q, qp.A, qp.l);
        CHECK((r.x - x_ref).norm() <= 1e-6 * std::max(1.0, x_ref.norm()));
        CHECK((solve_eq_qp_kkt(qp.P, qp.q, qp.A, qp.l) - x_ref).norm() <= 1e-9 * std::max(1.0, x_ref.norm()));
        CHECK(r.kkt.primal <= 1e-6);
        CHECK(r.kkt.dual <= 1e-6);
    }
}

TEST_CASE("random box QPs satisfy KKT")
{
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 10, m = 15;
        const Mat G = random_mat(n, n, rng);
        QpProblem qp;
        qp.P = G * G.transpose() + 1e-2 * Mat::Identity(n, n);
        qp.q = 3.0 * random_mat(n, 1, rng);
        qp.A = random_mat(m, n, rng);
        qp.l = Vec::Constant(m, -0.5);
        qp.u = Vec::Constant(m, 0.5);
        const QpResult r = solve_qp(qp);
        REQUIRE(r.status == QpStatus::Solved);
        const KktResiduals k = kkt_residuals(qp, r.x, r.y);
        CHECK(k.primal <= 1e-6);
        CHECK(k.dual <= 1e-6);
        CHECK(k.complementarity <= 1e-6);

        const QpResult again = solve_qp(qp);
        CHECK(again.x == r.x);
        CHECK(again.iterations == r.iterations);
    }
}

TEST_CASE("warm start reaches the same solution")
{
    Rng rng(8);
    const Mat G = random_mat(8, 8, rng);
    QpProblem qp;
    qp.P = G * G.transpose() + 0.1 * Mat::Identity(8, 8);
    qp.q = random_mat(8, 1, rng);
    qp.A = Mat::Identity(8, 8);
    qp.l = Vec::Constant(8, -0.2);
    qp.u = Vec::Constant(8, 0.2);
    const QpResult cold = solve_qp(qp);
    const QpResult warm = solve_qp(qp, {}, &cold.x, &cold.y);
    CHECK((warm.x - cold.x).norm() < 1e-7);
    CHECK(warm.iterations <= cold.iterations);
}

TEST_CASE("primal infeasibility names the block")
{
    QpProblem qp;
    qp.P = Mat::Identity(2, 2);
    qp.q = Vec::Zero(2);
    qp.A.resize(2, 2);
    qp.A << 1, 1, 1, 1;
    qp.l.resize(2);
    qp.u.resize(2);
    qp.l << 1, -kInf;
    qp.u << 1, 0;
    qp.blocks = {{"sum_pin", 0, 1}, {"sum_cap", 1, 1}};
    const QpResult r = solve_qp(qp);
    CHECK(r.status == QpStatus::PrimalInfeasible);
    CHECK(r.diagnostic.find("sum_pin") != std::string::npos);
    CHECK(r.diagnostic.find("sum_cap") != std::string::npos);
    CHECK(r.certificate.size() == 2);
}

TEST_CASE("dual infeasibility")
{
    QpProblem qp;
    qp.P = Mat::Zero(1, 1);
    qp.q = Vec::Ones(1);
    qp.A = Mat::Identity(1, 1);
    qp.l = Vec::Constant(1, -kInf);
    qp.u = Vec::Constant(1, kInf);
    const QpResult r = solve_qp(qp);
    CHECK(r.status == QpStatus::DualInfeasible);
}

TEST_CASE("validation")
{
    QpProblem qp;
    qp.P = Mat::Identity(2, 2);
    qp.q = Vec::Zero(3);
    qp.A = Mat::Identity(2, 2);
    qp.l = qp.u = Vec::Zero(2);
    CHECK_THROWS_AS(qp.validate(), InvalidArgument);
    qp.q = Vec::Zero(2);
    qp.l = Vec::Ones(2);
    CHECK_THROWS_AS(qp.validate(), InvalidArgument);
    qp.l = Vec::Zero(2);
    qp.blocks = {{"a", 0, 1}};
    CHECK(qp.block_of(0) == "a[0]");
    CHECK(qp.block_of(1) == "row 1");
}

TEST_CASE("iteration cap reports the best iterate")
{
    Rng rng(1);
    const Mat G = random_mat(30, 30, rng);
    QpProblem qp;
    qp.P = G * G.transpose() + 1e-3 * Mat::Identity(30, 30);
    qp.q = random_mat(30, 1, rng);
    qp.A = random_mat(40, 30, rng);
    qp.l = Vec::Constant(40, -0.1);
    qp.u = Vec::Constant(40, 0.1);
    QpSettings s;
    s.max_iter = 3;
    s.polish = false;
    const QpResult r = solve_qp(qp, s);
    CHECK(r.status == QpStatus::MaxIter);
    CHECK(r.x.size() == 30);
    CHECK(r.x.allFinite());
}
