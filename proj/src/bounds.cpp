#include "kmpc/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "kmpc/error.hpp"
#include "kmpc/data.hpp"
#include "kmpc/io.hpp"

namespace kmpc {

void BoundInputs::validate() const
{
    if (!(diam_z >= 0.0) || !(diam_u >= 0.0)) throw InvalidArgument("bounds: diameters must be nonnegative");
    if (L_pred < 2) throw InvalidArgument("bounds: L_pred must be at least 2");
}

namespace {

double grid_value(double lo, double hi, int i, int n)
{
    if (i == n - 1) return hi;
    return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
}

double grid_point_norm(const OperatingRegion& r, const Equilibrium& eq, double omega_s, int n, long idx)
{
    const int i = static_cast<int>(idx / (static_cast<long>(n) * n));
    const int j = static_cast<int>((idx / n) % n);
    const int k = static_cast<int>(idx % n);
    State x;
    x.delta = grid_value(r.delta_s - r.delta_max, r.delta_s + r.delta_max, i, n);
    x.omega = omega_s + grid_value(-r.omega_max, r.omega_max, j, n);
    x.Eq_prime = grid_value(r.Eq_min, r.Eq_max, k, n);
    return (lift(x, omega_s) - eq.z_s).norm();
}

double input_diameter(const OperatingRegion& r, const Equilibrium& eq)
{
    return std::max(std::abs(r.u_min - eq.u_s), std::abs(r.u_max - eq.u_s));
}

bool leq(double a, double b) { return a <= b + 1e-12 * std::max(1.0, std::abs(b)); }

}  // namespace

Diameters diameters(const OperatingRegion& r, const Equilibrium& eq, double omega_s, int n_grid)
{
    if (n_grid < 2) throw InvalidArgument("diameters: n_grid must be at least 2");
    const long total = static_cast<long>(n_grid) * n_grid * n_grid;
    double best = 0.0;
#pragma omp parallel for reduction(max : best)
    for (long idx = 0; idx < total; ++idx) best = std::max(best, grid_point_norm(r, eq, omega_s, n_grid, idx));
    return {best, input_diameter(r, eq)};
}

Diameters diameters_serial(const OperatingRegion& r, const Equilibrium& eq, double omega_s, int n_grid)
{
    if (n_grid < 2) throw InvalidArgument("diameters: n_grid must be at least 2");
    const long total = static_cast<long>(n_grid) * n_grid * n_grid;
    double best = 0.0;
    for (long idx = 0; idx < total; ++idx) best = std::max(best, grid_point_norm(r, eq, omega_s, n_grid, idx));
    return {best, input_diameter(r, eq)};
}

double e_bar(const BoundInputs& bi)
{
    return bi.cert.eps_A * bi.diam_z + bi.cert.eps_B * bi.diam_u + bi.cert.c_0;
}

LooseBound eps_bar_loose(const BoundInputs& bi)
{
    bi.validate();
    LooseBound lb;
    lb.e_bar = e_bar(bi);
    const double nA = spectral_norm(bi.E.A);
    const double nC = spectral_norm(bi.E.C);
    const double tail = bi.cert.eps_C * bi.diam_z;
    double sum = 0.0;
    double pw = 1.0;
    lb.eps_bar_k.reserve(static_cast<std::size_t>(bi.L_pred));
    lb.eps_bar_k.push_back(tail);
    for (int k = 1; k < bi.L_pred; ++k) {
        sum += pw;
        pw *= nA;
        lb.eps_bar_k.push_back(nC * lb.e_bar * sum + tail);
    }
    lb.eps_bar = lb.eps_bar_k.back();
    return lb;
}

std::vector<double> output_power_norms(const Mat& A, const Mat& C, int count)
{
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(std::max(count, 0)));
    Mat CA = C;
    for (int l = 0; l < count; ++l) {
        out.push_back(spectral_norm(CA));
        CA = CA * A;
    }
    return out;
}

double S_L(const EmbeddingMatrices& E, int L_pred)
{
    if (L_pred < 2) throw InvalidArgument("S_L: L_pred must be at least 2");
    const auto norms = output_power_norms(E.A, E.C, L_pred - 1);
    double s = 0.0;
    for (double v : norms) s += v;
    return s;
}

TightBound eps_bar_tight(const BoundInputs& bi)
{
    bi.validate();
    TightBound tb;
    const double eb = e_bar(bi);
    const double tail = bi.cert.eps_C * bi.diam_z;
    const auto norms = output_power_norms(bi.E.A, bi.E.C, bi.L_pred - 1);
    double sum = 0.0;
    tb.eps_bar_k.push_back(tail);
    for (double v : norms) {
        sum += v;
        tb.eps_bar_k.push_back(eb * sum + tail);
    }
    tb.S_L = sum;
    tb.eps_bar_tight = eb * sum + tail;
    return tb;
}

double eps_state_dependent(const EmbeddingMatrices& E, const ErrorCertificate& cert,
                           const std::vector<Lifted>& zbar, const std::vector<double>& ubar, int k)
{
    if (k < 0) throw InvalidArgument("eps_state_dependent: k must be nonnegative");
    const auto uk = static_cast<std::size_t>(k);
    if (zbar.size() <= uk) throw InvalidArgument("eps_state_dependent: zbar shorter than k + 1");
    if (ubar.size() < uk) throw InvalidArgument("eps_state_dependent: ubar shorter than k");
    const auto norms = output_power_norms(E.A, E.C, k);
    double s = 0.0;
    for (int l = 0; l < k; ++l) {
        const auto j = static_cast<std::size_t>(k - 1 - l);
        s += norms[static_cast<std::size_t>(l)]
             * (cert.eps_A * zbar[j].norm() + cert.eps_B * std::abs(ubar[j]) + cert.c_0);
    }
    return s + cert.eps_C * zbar[uk].norm();
}

double c_pe(const Mat& H_ux, double tol)
{
    if (H_ux.rows() == 0) throw InvalidArgument("c_pe: empty matrix");
    if (H_ux.cols() < H_ux.rows() || numerical_rank(H_ux, tol) < H_ux.rows())
        throw Error("c_pe: H_ux is not full row rank");
    Eigen::JacobiSVD<Mat> svd(H_ux);
    const double smin = svd.singularValues()(H_ux.rows() - 1);
    return 1.0 / (smin * smin);
}

double c_pe(const Mat& H_u, const Mat& X, double tol)
{
    if (H_u.cols() != X.cols()) throw InvalidArgument("c_pe: input Hankel and state rows differ in width");
    if (H_u.cols() < H_u.rows() + X.rows())
        throw Error("c_pe: H_ux has fewer columns than rows; collect more data");
    if (numerical_rank(H_u, tol) < H_u.rows())
        throw Error("c_pe: input Hankel block is rank deficient (input not persistently exciting)");
    Mat H(H_u.rows() + X.rows(), H_u.cols());
    H << H_u, X;
    if (numerical_rank(H, tol) < H.rows())
        throw Error("c_pe: state block is rank deficient relative to the input Hankel block");
    return c_pe(H, tol);
}

Mat state_sequence(const Mat& A, const Mat& B, const Vec& x0, const Mat& u)
{
    if (A.rows() != x0.size() || B.rows() != x0.size() || B.cols() != u.rows())
        throw InvalidArgument("state_sequence: dimension mismatch");
    Mat X(x0.size(), u.cols() + 1);
    X.col(0) = x0;
    for (Eigen::Index k = 0; k < u.cols(); ++k) X.col(k + 1) = A * X.col(k) + B * u.col(k);
    return X;
}

Mat build_hux(const Realization& R, const Vec& x0, const Mat& u, int depth)
{
    const Mat Hu = hankel(u, depth);
    const Mat X = state_sequence(R.A, R.B, x0, u);
    Mat H(Hu.rows() + X.rows(), Hu.cols());
    H << Hu, X.leftCols(Hu.cols());
    return H;
}

double eps_of_r(double r, const ErrorCertificate& cert, double S_L)
{
    if (r < 0.0) throw InvalidArgument("eps_of_r: r must be nonnegative");
    return cert.eps_A * S_L * r + cert.c_0 * S_L;
}

FixedPoint fixed_point_r(const BetaHat& beta_hat, double c, double x0_dev, const ErrorCertificate& cert,
                         double S_L, double R_max, double tol, int scan_points)
{
    if (!(R_max > 0.0) || !(tol > 0.0) || scan_points < 1)
        throw InvalidArgument("fixed_point_r: R_max, tol and scan_points must be positive");
    const auto g = [&](double r) { return r - c * x0_dev - beta_hat(eps_of_r(r, cert, S_L)); };
    FixedPoint fp;
    fp.offset_only = c * x0_dev + beta_hat(cert.c_0 * S_L);

    double lo = 0.0;
    double glo = g(lo);
    if (glo >= 0.0) {
        fp.r_star = 0.0;
        fp.g_at_root = glo;
        return fp;
    }
    double hi = lo;
    bool found = false;
    for (int i = 1; i <= scan_points; ++i) {
        const double r = R_max * static_cast<double>(i) / static_cast<double>(scan_points);
        const double gr = g(r);
        if (gr >= 0.0) {
            hi = r;
            found = true;
            break;
        }
        lo = r;
    }
    if (!found) throw Error("fixed_point_r: no fixed point below R_max (slope condition violated)");
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        if (g(mid) >= 0.0) hi = mid;
        else lo = mid;
        ++fp.iterations;
    }
    fp.r_star = hi;
    fp.g_at_root = g(hi);
    return fp;
}

BoundReport bound_report(const BoundInputs& bi)
{
    const LooseBound lb = eps_bar_loose(bi);
    const TightBound tb = eps_bar_tight(bi);
    BoundReport rep;
    rep.L_pred = bi.L_pred;
    rep.diam_z = bi.diam_z;
    rep.diam_u = bi.diam_u;
    rep.e_bar = lb.e_bar;
    rep.eps_bar_k = lb.eps_bar_k;
    rep.eps_bar_k_tight = tb.eps_bar_k;
    rep.eps_bar = lb.eps_bar;
    rep.S_L = tb.S_L;
    rep.eps_bar_tight = tb.eps_bar_tight;
    rep.eps_bar_0 = bi.cert.c_0 * tb.S_L;
    rep.norm_A = spectral_norm(bi.E.A);
    rep.norm_C = spectral_norm(bi.E.C);
    return rep;
}

nlohmann::json BoundReport::to_json() const
{
    nlohmann::json j;
    j["L_pred"] = L_pred;
    j["diam_z"] = diam_z;
    j["diam_u"] = diam_u;
    j["e_bar"] = e_bar;
    j["norm_A"] = norm_A;
    j["norm_C"] = norm_C;
    j["eps_bar"] = eps_bar;
    j["S_L"] = S_L;
    j["eps_bar_tight"] = eps_bar_tight;
    j["eps_bar_0"] = eps_bar_0;
    j["ratio_loose_tight"] = eps_bar_tight > 0.0 ? eps_bar / eps_bar_tight : 0.0;
    j["ordered"] = leq(eps_bar_0, eps_bar_tight) && leq(eps_bar_tight, eps_bar);
    j["eps_bar_k"] = eps_bar_k;
    j["eps_bar_k_tight"] = eps_bar_k_tight;
    j["c_pe"] = c_pe ? nlohmann::json(*c_pe) : nlohmann::json(nullptr);
    if (fixed_point) {
        j["fixed_point"] = {{"r_star", fixed_point->r_star},
                            {"g_at_root", fixed_point->g_at_root},
                            {"offset_only", fixed_point->offset_only},
                            {"iterations", fixed_point->iterations}};
    } else {
        j["fixed_point"] = nullptr;
    }
    return j;
}

std::string BoundReport::csv() const
{
    std::ostringstream os;
    os << "k,eps_bar_k,eps_bar_k_tight\n";
    for (std::size_t k = 0; k < eps_bar_k.size(); ++k)
        os << k << ',' << fmt_num(eps_bar_k[k]) << ',' << fmt_num(eps_bar_k_tight[k]) << '\n';
    return os.str();
}

LadderTable compare_bound_ladder(const BoundInputs& base, const std::vector<int>& L_grid)
{
    LadderTable t;
    const double eb = e_bar(base);
    double prev = -1.0;
    for (int L : L_grid) {
        BoundInputs bi = base;
        bi.L_pred = L;
        const LooseBound lb = eps_bar_loose(bi);
        const TightBound tb = eps_bar_tight(bi);
        LadderRow row;
        row.L_pred = L;
        row.eps_bar = lb.eps_bar;
        row.eps_bar_tight = tb.eps_bar_tight;
        row.eps_bar_0 = base.cert.c_0 * tb.S_L;
        row.ratio_loose_tight = tb.eps_bar_tight > 0.0 ? lb.eps_bar / tb.eps_bar_tight : 0.0;
        row.ratio_0_ebar = eb > 0.0 ? row.eps_bar_0 / eb : 0.0;
        row.ordered = leq(row.eps_bar_0, row.eps_bar_tight) && leq(row.eps_bar_tight, row.eps_bar);
        t.ordered = t.ordered && row.ordered;
        if (prev >= 0.0 && !leq(prev, row.eps_bar)) t.monotone = false;
        prev = row.eps_bar;
        t.rows.push_back(row);
    }
    return t;
}

nlohmann::json LadderTable::to_json() const
{
    nlohmann::json j;
    j["ordered"] = ordered;
    j["monotone"] = monotone;
    j["rows"] = nlohmann::json::array();
    for (const auto& r : rows) {
        j["rows"].push_back({{"L_pred", r.L_pred},
                             {"eps_bar", r.eps_bar},
                             {"eps_bar_tight", r.eps_bar_tight},
                             {"eps_bar_0", r.eps_bar_0},
                             {"ratio_loose_tight", r.ratio_loose_tight},
                             {"ratio_0_ebar", r.ratio_0_ebar},
                             {"ordered", r.ordered}});
    }
    return j;
}

std::string LadderTable::csv() const
{
    std::ostringstream os;
    os << "L_pred,eps_bar,eps_bar_tight,eps_bar_0,ratio_loose_tight,ratio_0_ebar,ordered\n";
    for (const auto& r : rows)
        os << r.L_pred << ',' << fmt_num(r.eps_bar) << ',' << fmt_num(r.eps_bar_tight) << ','
           << fmt_num(r.eps_bar_0) << ',' << fmt_num(r.ratio_loose_tight) << ',' << fmt_num(r.ratio_0_ebar) << ','
           << (r.ordered ? 1 : 0) << '\n';
    return os.str();
}

}  // namespace kmpc
