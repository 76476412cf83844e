#include "kmpc/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kmpc/error.hpp"

namespace kmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double inf_norm(const Vec& v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

bool is_eq(double l, double u) { return l == u; }

struct Scaling {
    Vec D, E, Dinv, Einv;
    double c = 1.0;
};

struct Scaled {
    Mat P, A;
    Vec q, l, u;
};

Scaling ruiz(const QpProblem& qp, int iters, Scaled& s)
{
    const auto n = qp.n();
    const auto m = qp.m();
    Scaling sc;
    sc.D = Vec::Ones(n);
    sc.E = Vec::Ones(m);
    s.P = qp.P;
    s.A = qp.A;
    s.q = qp.q;
    const auto clampn = [](double v) { return v < 1e-4 ? 1.0 : std::min(v, 1e4); };
    for (int it = 0; it < iters; ++it) {
        Vec dt(n), et(m);
        for (Eigen::Index j = 0; j < n; ++j) {
            double nv = s.P.col(j).lpNorm<Eigen::Infinity>();
            if (m > 0) nv = std::max(nv, s.A.col(j).lpNorm<Eigen::Infinity>());
            dt(j) = 1.0 / std::sqrt(clampn(nv));
        }
        for (Eigen::Index i = 0; i < m; ++i) et(i) = 1.0 / std::sqrt(clampn(s.A.row(i).lpNorm<Eigen::Infinity>()));
        s.P = dt.asDiagonal() * s.P * dt.asDiagonal();
        s.A = et.asDiagonal() * s.A * dt.asDiagonal();
        s.q = dt.cwiseProduct(s.q);
        sc.D = sc.D.cwiseProduct(dt);
        sc.E = sc.E.cwiseProduct(et);

        double mean_col = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) mean_col += s.P.col(j).lpNorm<Eigen::Infinity>();
        mean_col = n > 0 ? mean_col / static_cast<double>(n) : 0.0;
        const double g = 1.0 / clampn(std::max(mean_col, inf_norm(s.q)));
        s.P *= g;
        s.q *= g;
        sc.c *= g;
    }
    s.l = sc.E.cwiseProduct(qp.l);
    s.u = sc.E.cwiseProduct(qp.u);
    sc.Dinv = sc.D.cwiseInverse();
    sc.Einv = sc.E.cwiseInverse();
    return sc;
}

Vec rho_vector(const Scaled& s, double rho)
{
    Vec r(s.l.size());
    for (Eigen::Index i = 0; i < r.size(); ++i) {
        if (std::isinf(s.l(i)) && std::isinf(s.u(i)) && s.l(i) < 0 && s.u(i) > 0) r(i) = 1e-6;
        else if (is_eq(s.l(i), s.u(i))) r(i) = 1e3 * rho;
        else r(i) = rho;
    }
    return r;
}

bool primal_infeasible(const QpProblem& qp, const Vec& dy, double eps)
{
    const double ndy = inf_norm(dy);
    if (ndy < 1e-30) return false;
    if (inf_norm(qp.A.transpose() * dy) > eps * ndy) return false;
    double support = 0.0;
    for (Eigen::Index i = 0; i < dy.size(); ++i) {
        const double v = dy(i);
        if (v > 0) {
            if (std::isinf(qp.u(i))) {
                if (v > eps * ndy) return false;
            } else {
                support += qp.u(i) * v;
            }
        } else if (v < 0) {
            if (std::isinf(qp.l(i))) {
                if (-v > eps * ndy) return false;
            } else {
                support += qp.l(i) * v;
            }
        }
    }
    return support <= -eps * ndy;
}

bool dual_infeasible(const QpProblem& qp, const Vec& dx, double eps)
{
    const double ndx = inf_norm(dx);
    if (ndx < 1e-30) return false;
    if (inf_norm(qp.P * dx) > eps * ndx) return false;
    if (qp.q.dot(dx) > -eps * ndx) return false;
    const Vec Adx = qp.A * dx;
    for (Eigen::Index i = 0; i < Adx.size(); ++i) {
        const bool lf = !std::isinf(qp.l(i));
        const bool uf = !std::isinf(qp.u(i));
        if (uf && Adx(i) > eps * ndx) return false;
        if (lf && Adx(i) < -eps * ndx) return false;
    }
    return true;
}

/// Distinct block names whose rows carry at least a tenth of the largest weight.
std::string heaviest_block(const QpProblem& qp, const Vec& v)
{
    if (v.size() == 0) return {};
    const double top = v.cwiseAbs().maxCoeff();
    std::vector<std::string> names;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (std::abs(v(i)) < 0.1 * top) continue;
        std::string name = qp.block_of(i);
        if (const auto br = name.find('['); br != std::string::npos) name.resize(br);
        if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);
    }
    std::string out;
    for (const auto& s : names) out += (out.empty() ? "" : ", ") + s;
    return out;
}

}  // namespace

void QpProblem::validate() const
{
    const auto nn = P.rows();
    if (P.cols() != nn || q.size() != nn) throw InvalidArgument("qp: P must be n x n and q of length n");
    if (A.cols() != nn && A.rows() > 0) throw InvalidArgument("qp: A must have n columns");
    if (l.size() != A.rows() || u.size() != A.rows()) throw InvalidArgument("qp: bounds must match rows of A");
    for (Eigen::Index i = 0; i < l.size(); ++i) {
        if (std::isnan(l(i)) || std::isnan(u(i)) || l(i) > u(i))
            throw InvalidArgument("qp: invalid bounds in " + block_of(i));
    }
    if (!P.allFinite() || !q.allFinite() || !A.allFinite()) throw NumericError("qp: non-finite problem data");
}

std::string QpProblem::block_of(Eigen::Index i) const
{
    for (const auto& b : blocks)
        if (i >= b.start && i < b.start + b.rows) return b.name + "[" + std::to_string(i - b.start) + "]";
    return "row " + std::to_string(i);
}

std::string to_string(QpStatus s)
{
    switch (s) {
    case QpStatus::Solved: return "solved";
    case QpStatus::MaxIter: return "max_iter";
    case QpStatus::PrimalInfeasible: return "primal_infeasible";
    case QpStatus::DualInfeasible: return "dual_infeasible";
    }
    return "unknown";
}

KktResiduals kkt_residuals(const QpProblem& qp, const Vec& x, const Vec& y)
{
    KktResiduals r;
    const Vec Ax = qp.A * x;
    for (Eigen::Index i = 0; i < Ax.size(); ++i) {
        r.primal = std::max(r.primal, std::max(qp.l(i) - Ax(i), Ax(i) - qp.u(i)));
        if (y(i) > 0) {
            const double gap = std::isinf(qp.u(i)) ? 1.0 : std::abs(qp.u(i) - Ax(i));
            r.complementarity = std::max(r.complementarity, y(i) * gap);
        } else if (y(i) < 0) {
            const double gap = std::isinf(qp.l(i)) ? 1.0 : std::abs(Ax(i) - qp.l(i));
            r.complementarity = std::max(r.complementarity, -y(i) * gap);
        }
    }
    r.dual = inf_norm(qp.P * x + qp.q + qp.A.transpose() * y);
    return r;
}

Vec solve_eq_qp_kkt(const Mat& P, const Vec& q, const Mat& A, const Vec& b)
{
    const auto n = P.rows();
    const auto m = A.rows();
    Mat K = Mat::Zero(n + m, n + m);
    K.topLeftCorner(n, n) = P;
    K.topRightCorner(n, m) = A.transpose();
    K.bottomLeftCorner(m, n) = A;
    Vec rhs(n + m);
    rhs << -q, b;
    Eigen::FullPivLU<Mat> lu(K);
    if (!lu.isInvertible()) throw NumericError("solve_eq_qp_kkt: singular KKT matrix");
    return lu.solve(rhs).head(n);
}

namespace {

struct PolishOutcome {
    bool ok = false;
    Vec x, y;
};

std::vector<signed char> active_set(const Scaled& s, const Vec& zs, const Vec& ys)
{
    std::vector<signed char> act(static_cast<std::size_t>(s.A.rows()), 0);
    for (Eigen::Index i = 0; i < s.A.rows(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        if (is_eq(s.l(i), s.u(i))) act[k] = 2;
        else if (zs(i) - s.l(i) < -ys(i)) act[k] = -1;
        else if (s.u(i) - zs(i) < ys(i)) act[k] = 1;
    }
    return act;
}

/// Active-set KKT solve in the scaled space; returns unscaled (x, y).
PolishOutcome polish(const QpProblem& qp, const Scaled& s, const Scaling& sc,
                     const std::vector<signed char>& active, const QpSettings& st)
{
    const auto n = s.P.rows();
    const auto m = s.A.rows();
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < m; ++i)
        if (active[static_cast<std::size_t>(i)] != 0) rows.push_back(i);
    const auto na = static_cast<Eigen::Index>(rows.size());
    Mat K = Mat::Zero(n + na, n + na);
    Vec rhs(n + na);
    K.topLeftCorner(n, n) = s.P;
    rhs.head(n) = -s.q;
    for (Eigen::Index r = 0; r < na; ++r) {
        const auto i = rows[static_cast<std::size_t>(r)];
        K.block(n + r, 0, 1, n) = s.A.row(i);
        K.block(0, n + r, n, 1) = s.A.row(i).transpose();
        rhs(n + r) = active[static_cast<std::size_t>(i)] == -1 ? s.l(i) : s.u(i);
    }
    Mat Kd = K;
    Kd.topLeftCorner(n, n).diagonal().array() += st.polish_delta;
    Kd.bottomRightCorner(na, na).diagonal().array() -= st.polish_delta;
    Eigen::PartialPivLU<Mat> lu(Kd);
    Vec sol = lu.solve(rhs);
    for (int it = 0; it < st.polish_refine; ++it) sol += lu.solve(rhs - K * sol);
    if (!sol.allFinite()) return {};

    Vec yb = Vec::Zero(m);
    for (Eigen::Index r = 0; r < na; ++r) yb(rows[static_cast<std::size_t>(r)]) = sol(n + r);
    PolishOutcome out;
    out.x = sc.D.cwiseProduct(sol.head(n));
    out.y = sc.E.cwiseProduct(yb) / sc.c;

    const KktResiduals kr = kkt_residuals(qp, out.x, out.y);
    const Vec Ax = qp.A * out.x;
    const double eps_p = st.eps_abs + st.eps_rel * inf_norm(Ax);
    const double eps_d
        = st.eps_abs
          + st.eps_rel * std::max({inf_norm(qp.P * out.x), inf_norm(qp.A.transpose() * out.y), inf_norm(qp.q)});
    if (kr.primal > eps_p || kr.dual > eps_d) return {};
    for (Eigen::Index i = 0; i < m; ++i) {
        const auto a = active[static_cast<std::size_t>(i)];
        if (a == 1 && out.y(i) < -eps_d) return {};
        if (a == -1 && out.y(i) > eps_d) return {};
    }
    out.ok = true;
    return out;
}

}  // namespace

QpResult solve_qp(const QpProblem& qp, const QpSettings& st, const Vec* x_warm, const Vec* y_warm)
{
    qp.validate();
    const auto n = qp.n();
    const auto m = qp.m();
    Scaled s;
    const Scaling sc = ruiz(qp, st.scaling_iter, s);

    double rho = st.rho;
    Vec rv = rho_vector(s, rho);
    const auto factor = [&](const Vec& r) {
        Mat K = s.P + s.A.transpose() * r.asDiagonal() * s.A;
        K.diagonal().array() += st.sigma;
        return Eigen::LLT<Mat>(K);
    };
    Eigen::LLT<Mat> llt = factor(rv);
    if (llt.info() != Eigen::Success) throw NumericError("qp: KKT factorization failed (P not PSD?)");

    Vec x = x_warm && x_warm->size() == n ? Vec(sc.Dinv.cwiseProduct(*x_warm)) : Vec(Vec::Zero(n));
    Vec y = y_warm && y_warm->size() == m ? Vec(sc.c * sc.Einv.cwiseProduct(*y_warm)) : Vec(Vec::Zero(m));
    Vec z = (s.A * x).cwiseMax(s.l).cwiseMin(s.u);

    QpResult res;
    std::vector<signed char> last_active;
    Vec x_prev = x, y_prev = y;
    const double a = st.alpha;
    for (int k = 1; k <= st.max_iter; ++k) {
        x_prev = x;
        y_prev = y;
        const Vec rhs = st.sigma * x - s.q + s.A.transpose() * (rv.cwiseProduct(z) - y);
        const Vec xt = llt.solve(rhs);
        const Vec zt = s.A * xt;
        x = a * xt + (1.0 - a) * x;
        const Vec zr = a * zt + (1.0 - a) * z;
        const Vec zn = (zr + y.cwiseQuotient(rv)).cwiseMax(s.l).cwiseMin(s.u);
        y += rv.cwiseProduct(zr - zn);
        z = zn;
        res.iterations = k;

        const bool check = k % st.check_interval == 0 || k == st.max_iter;
        const bool adapt = st.adaptive_rho && k % st.adaptive_rho_interval == 0;
        if (!check && !adapt) continue;

        const Vec Ax_s = s.A * x;
        const Vec Px_s = s.P * x;
        const Vec Aty_s = s.A.transpose() * y;
        const double prim = inf_norm(sc.Einv.cwiseProduct(Ax_s - z));
        const double dual = inf_norm(sc.Dinv.cwiseProduct(Px_s + s.q + Aty_s)) / sc.c;
        const double eps_p
            = st.eps_abs + st.eps_rel * std::max(inf_norm(sc.Einv.cwiseProduct(Ax_s)), inf_norm(sc.Einv.cwiseProduct(z)));
        const double eps_d = st.eps_abs
                             + st.eps_rel / sc.c
                                   * std::max({inf_norm(sc.Dinv.cwiseProduct(Px_s)),
                                               inf_norm(sc.Dinv.cwiseProduct(Aty_s)), inf_norm(sc.Dinv.cwiseProduct(s.q))});

        if (check) {
            const bool converged = prim <= eps_p && dual <= eps_d;
            const bool try_polish = st.polish
                                    && (converged
                                        || (k % st.polish_interval == 0 && prim <= 1e3 * eps_p && dual <= 1e3 * eps_d));
            if (try_polish) {
                PolishOutcome po;
                bool attempted = false;
                auto act = active_set(s, z, y);
                // skip when the active set has not moved since the last failed attempt
                if (converged || act != last_active) {
                    po = polish(qp, s, sc, act, st);
                    attempted = true;
                    last_active = std::move(act);
                }
                if (attempted && po.ok) {
                    res.x = po.x;
                    res.y = po.y;
                    res.status = QpStatus::Solved;
                    res.polished = true;
                    break;
                }
            }
            if (converged) {
                res.x = sc.D.cwiseProduct(x);
                res.y = sc.E.cwiseProduct(y) / sc.c;
                res.status = QpStatus::Solved;
                break;
            }
            const Vec dy = sc.E.cwiseProduct(y - y_prev) / sc.c;
            if (primal_infeasible(qp, dy, st.eps_prim_inf)) {
                res.status = QpStatus::PrimalInfeasible;
                res.certificate = dy / inf_norm(dy);
                res.diagnostic = heaviest_block(qp, res.certificate);
                break;
            }
            const Vec dx = sc.D.cwiseProduct(x - x_prev);
            if (dual_infeasible(qp, dx, st.eps_dual_inf)) {
                res.status = QpStatus::DualInfeasible;
                res.certificate = dx / inf_norm(dx);
                break;
            }
        }
        if (adapt) {
            const double pn = prim / std::max({inf_norm(sc.Einv.cwiseProduct(Ax_s)), inf_norm(sc.Einv.cwiseProduct(z)), 1e-30});
            const double dn = dual * sc.c
                              / std::max({inf_norm(sc.Dinv.cwiseProduct(Px_s)), inf_norm(sc.Dinv.cwiseProduct(Aty_s)),
                                          inf_norm(sc.Dinv.cwiseProduct(s.q)), 1e-30});
            double rn = rho * std::sqrt(pn / std::max(dn, 1e-30));
            rn = std::clamp(rn, 1e-6, 1e6);
            if (rn > 5.0 * rho || rn < 0.2 * rho) {
                rho = rn;
                rv = rho_vector(s, rho);
                llt = factor(rv);
                if (llt.info() != Eigen::Success) throw NumericError("qp: KKT refactorization failed");
            }
        }
    }
    if (res.x.size() == 0) {
        res.x = sc.D.cwiseProduct(x);
        res.y = sc.E.cwiseProduct(y) / sc.c;
    }
    if (res.status == QpStatus::MaxIter) {
        const KktResiduals kr = kkt_residuals(qp, res.x, res.y);
        Vec viol(m);
        const Vec Ax = qp.A * res.x;
        for (Eigen::Index i = 0; i < m; ++i) viol(i) = std::max({qp.l(i) - Ax(i), Ax(i) - qp.u(i), 0.0});
        if (kr.primal > 0.0) res.diagnostic = heaviest_block(qp, viol);
    }
    res.rho = rho;
    res.kkt = kkt_residuals(qp, res.x, res.y);
    res.objective = 0.5 * res.x.dot(qp.P * res.x) + qp.q.dot(res.x);
    return res;
}

}  // namespace kmpc
