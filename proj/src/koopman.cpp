#include "kmpc/koopman.hpp"

#include <cmath>

#include "kmpc/error.hpp"

namespace kmpc {

Lifted lift(const State& x, double omega_s)
{
    const double s = std::sin(x.delta);
    const double c = std::cos(x.delta);
    Lifted z;
    z << x.delta, x.omega - omega_s, x.Eq_prime, s, c, x.Eq_prime * s, x.Eq_prime * c;
    return z;
}

// Row 3 couples to cos(delta), index 4.
EmbeddingMatrices build_embedding(const GeneratorParams& p)
{
    const double ad = p.alpha_d();
    const double aq = p.alpha_q();
    const double flux_diag = 1.0 - aq * p.kappa();

    EmbeddingMatrices E;
    E.A.setZero();
    E.A(0, 0) = 1.0;
    E.A(0, 1) = p.dt;
    E.A(1, 1) = 1.0 - ad * p.D;
    E.A(1, 5) = -ad * p.gamma();
    E.A(2, 2) = flux_diag;
    E.A(2, 4) = aq * p.mu();
    E.A(3, 3) = 1.0;
    E.A(4, 4) = 1.0;
    E.A(5, 5) = flux_diag;
    E.A(6, 6) = flux_diag;

    E.B.setZero();
    E.B(1) = ad;

    E.C.setZero();
    E.C(0, 1) = 1.0;
    E.C(1, 5) = p.gamma();

    E.D.setZero();
    return E;
}

std::array<std::array<bool, 7>, 7> embedding_sparsity()
{
    std::array<std::array<bool, 7>, 7> nz{};
    for (auto [i, j] : {std::pair{0, 0}, {0, 1}, {1, 1}, {1, 5}, {2, 2}, {2, 4}, {3, 3}, {4, 4}, {5, 5}, {6, 6}})
        nz[i][j] = true;
    return nz;
}

ErrorCertificate error_constants(const GeneratorParams& p, const OperatingRegion& r)
{
    ErrorCertificate c;
    const double aq = p.alpha_q();
    c.theta_bar = p.dt * r.omega_max;
    c.c4 = c.c5 = p.dt;
    c.c4p = c.c5p = 1.0;
    c.c6 = c.c7 = aq * p.mu() * (1.0 + r.Eq_max) + aq * p.E_fd + r.Eq_max * p.dt;
    c.c6p = c.c7p = r.Eq_max;
    c.eps_A = c.c4 + c.c5 + c.c6 + c.c7;
    c.eps_B = 0.0;
    c.eps_C = 0.0;
    c.c_0 = (c.c4p + c.c5p + c.c6p + c.c7p) * c.theta_bar * c.theta_bar;
    return c;
}

nlohmann::json ErrorCertificate::to_json() const
{
    return {{"eps_A", eps_A}, {"eps_B", eps_B}, {"eps_C", eps_C}, {"c_0", c_0}, {"theta_bar", theta_bar},
            {"c4", c4},       {"c5", c5},       {"c6", c6},       {"c7", c7},   {"c4p", c4p},
            {"c5p", c5p},     {"c6p", c6p},     {"c7p", c7p}};
}

Equilibrium make_equilibrium(const GeneratorParams& p, double delta_s)
{
    const auto op = compute_equilibrium(p, delta_s);
    Equilibrium eq;
    eq.x_s = op.x;
    eq.u_s = op.u;
    eq.z_s = lift(op.x, p.omega_s);
    eq.y_s = output(op.x, p);
    return eq;
}

Lifted residual(const State& x, double u, const GeneratorParams& p, const EmbeddingMatrices& E,
                const Equilibrium& eq)
{
    const Lifted zbar = lift(x, p.omega_s) - eq.z_s;
    const Lifted zbar_next = lift(step(x, u, p), p.omega_s) - eq.z_s;
    return zbar_next - E.A * zbar - E.B * (u - eq.u_s);
}

// --- structure -----------------------------------------------------------------

Mat controllability_matrix(const Mat& A, const Mat& B)
{
    const auto n = A.rows();
    Mat K(n, n * B.cols());
    Mat blk = B;
    for (Eigen::Index k = 0; k < n; ++k) {
        K.middleCols(k * B.cols(), B.cols()) = blk;
        blk = A * blk;
    }
    return K;
}

Mat observability_matrix(const Mat& A, const Mat& C)
{
    const auto n = A.rows();
    Mat O(n * C.rows(), n);
    Mat blk = C;
    for (Eigen::Index k = 0; k < n; ++k) {
        O.middleRows(k * C.rows(), C.rows()) = blk;
        blk = blk * A;
    }
    return O;
}

StructureRanks ctrl_obs_ranks(const Mat& A, const Mat& B, const Mat& C, double tol)
{
    if (!(tol > 0.0)) throw InvalidArgument("ctrl_obs_ranks: tol must be positive");
    return {numerical_rank(controllability_matrix(A, B), tol), numerical_rank(observability_matrix(A, C), tol)};
}

StructureRanks ctrl_obs_ranks(const EmbeddingMatrices& E, double tol)
{
    return ctrl_obs_ranks(Mat(E.A), Mat(E.B), Mat(E.C), tol);
}

namespace {

Mat checked_basis(const Mat& m, double tol, const char* what)
{
    const auto dec = decide_rank(m, tol);
    if (dec.ambiguous)
        throw Error(std::string("minimal_realization: ") + what
                    + " rank is ambiguous near the tolerance; choose a different tol");
    return range_basis(m, tol);
}

}  // namespace

Realization minimal_realization(const Mat& A, const Mat& B, const Mat& C, const Mat& D, double tol)
{
    if (!(tol > 0.0)) throw InvalidArgument("minimal_realization: tol must be positive");
    if (A.rows() != A.cols() || B.rows() != A.rows() || C.cols() != A.rows())
        throw InvalidArgument("minimal_realization: inconsistent dimensions");

    // Reachable subspace, then the observable part of the restriction.
    const Mat Vc = checked_basis(controllability_matrix(A, B), tol, "controllability");
    const Mat A1 = Vc.transpose() * A * Vc;
    const Mat B1 = Vc.transpose() * B;
    const Mat C1 = C * Vc;

    Mat Vo(Vc.cols(), 0);
    if (Vc.cols() > 0) {
        const Mat O1 = observability_matrix(A1, C1);
        Vo = checked_basis(O1.transpose(), tol, "observability");
    }

    Realization r;
    r.basis = Vc * Vo;
    r.A = Vo.transpose() * A1 * Vo;
    r.B = Vo.transpose() * B1;
    r.C = C1 * Vo;
    r.D = D;
    r.n_eff = static_cast<int>(Vo.cols());
    return r;
}

Realization minimal_realization(const EmbeddingMatrices& E, double tol)
{
    return minimal_realization(Mat(E.A), Mat(E.B), Mat(E.C), Mat(E.D), tol);
}

std::vector<Mat> markov_parameters(const Mat& A, const Mat& B, const Mat& C, const Mat& D, int count)
{
    std::vector<Mat> h;
    if (count <= 0) return h;
    h.reserve(static_cast<std::size_t>(count));
    h.push_back(D);
    Mat AkB = B;
    for (int k = 1; k < count; ++k) {
        h.push_back(C.cols() == 0 ? Mat::Zero(D.rows(), D.cols()) : Mat(C * AkB));
        if (A.size() > 0) AkB = A * AkB;
    }
    return h;
}

double markov_mismatch(const Realization& a, const Mat& A, const Mat& B, const Mat& C, const Mat& D, int count)
{
    const auto ha = markov_parameters(a.A, a.B, a.C, a.D, count);
    const auto hb = markov_parameters(A, B, C, D, count);
    double worst = 0.0;
    for (std::size_t k = 0; k < ha.size(); ++k) worst = std::max(worst, (ha[k] - hb[k]).cwiseAbs().maxCoeff());
    return worst;
}

}  // namespace kmpc
