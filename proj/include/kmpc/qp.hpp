#pragma once

#include <string>
#include <vector>

#include "kmpc/linalg.hpp"

namespace kmpc {

/// min 1/2 x'Px + q'x  s.t.  l <= Ax <= u  (l_i = u_i for equalities, +-inf allowed).
struct QpProblem {
    Mat P;
    Vec q;
    Mat A;
    Vec l;
    Vec u;

    struct Block {
        std::string name;
        Eigen::Index start = 0;
        Eigen::Index rows = 0;
    };
    /// Optional named row ranges of A, used in diagnostics.
    std::vector<Block> blocks;

    Eigen::Index n() const { return P.rows(); }
    Eigen::Index m() const { return A.rows(); }
    /// Throws InvalidArgument on inconsistent shapes or l > u.
    void validate() const;
    /// Name of the block containing row i ("row <i>" when unnamed).
    std::string block_of(Eigen::Index i) const;
};

enum class QpStatus { Solved, MaxIter, PrimalInfeasible, DualInfeasible };

std::string to_string(QpStatus s);

struct QpSettings {
    double eps_abs = 1e-8;
    double eps_rel = 1e-8;
    double eps_prim_inf = 1e-7;
    double eps_dual_inf = 1e-7;
    int max_iter = 20000;
    double rho = 0.1;
    double sigma = 1e-6;
    double alpha = 1.6;
    int scaling_iter = 10;
    bool adaptive_rho = true;
    int adaptive_rho_interval = 25;
    int check_interval = 5;
    bool polish = true;
    int polish_interval = 50;
    double polish_delta = 1e-9;
    int polish_refine = 5;
};

struct KktResiduals {
    double primal = 0.0;           ///< max violation of l <= Ax <= u
    double dual = 0.0;             ///< ||Px + q + A'y||_inf
    double complementarity = 0.0;  ///< max |y_i| * distance to the bound its sign selects
};

KktResiduals kkt_residuals(const QpProblem& qp, const Vec& x, const Vec& y);

struct QpResult {
    Vec x;
    Vec y;
    QpStatus status = QpStatus::MaxIter;
    int iterations = 0;
    double objective = 0.0;
    KktResiduals kkt;
    bool polished = false;
    double rho = 0.0;
    /// Infeasibility certificate (delta y or delta x) when the status says so.
    Vec certificate;
    /// Constraint blocks carrying the certificate weight.
    std::string diagnostic;
};

/// Operator-splitting (ADMM) solver with Ruiz equilibration, adaptive rho and
/// active-set polishing. Deterministic for fixed inputs.
QpResult solve_qp(const QpProblem& qp, const QpSettings& s = {}, const Vec* x_warm = nullptr,
                  const Vec* y_warm = nullptr);

/// Direct solution of min 1/2 x'Px + q'x s.t. Ax = b through the KKT system.
Vec solve_eq_qp_kkt(const Mat& P, const Vec& q, const Mat& A, const Vec& b);

}  // namespace kmpc
