#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kmpc/koopman.hpp"
#include "kmpc/linalg.hpp"
#include "kmpc/plant.hpp"

namespace kmpc {

struct BoundInputs {
    EmbeddingMatrices E;
    ErrorCertificate cert;
    double diam_z = 0.0;
    double diam_u = 0.0;
    int L_pred = 2;

    void validate() const;
};

struct Diameters {
    double diam_z = 0.0;
    double diam_u = 0.0;
};

/// Max ||Phi(x) - z_s|| over an n_grid^3 grid of the state box (corners included);
/// diam_u is exact. OpenMP over grid points.
Diameters diameters(const OperatingRegion& r, const Equilibrium& eq, double omega_s, int n_grid);
Diameters diameters_serial(const OperatingRegion& r, const Equilibrium& eq, double omega_s, int n_grid);

/// e_bar = eps_A diam_z + eps_B diam_u + c_0.
double e_bar(const BoundInputs& bi);

struct LooseBound {
    double e_bar = 0.0;
    std::vector<double> eps_bar_k;  ///< index k = 0 .. L-1 (k = 0 is eps_C diam_z)
    double eps_bar = 0.0;           ///< eps_bar_k[L-1]
};

LooseBound eps_bar_loose(const BoundInputs& bi);

struct TightBound {
    double S_L = 0.0;
    std::vector<double> eps_bar_k;  ///< index k = 0 .. L-1
    double eps_bar_tight = 0.0;
};

/// Norms ||C A^l||_2 for l = 0 .. count-1 by iterated multiplication.
std::vector<double> output_power_norms(const Mat& A, const Mat& C, int count);

/// S_L = sum_{l=0}^{L-2} ||C A^l||_2.
double S_L(const EmbeddingMatrices& E, int L_pred);

TightBound eps_bar_tight(const BoundInputs& bi);

/// Trajectory-dependent bound on the k-th output noise sample:
/// sum_{l<k} ||C A^l|| (eps_A ||zbar_{k-1-l}|| + eps_B |ubar_{k-1-l}| + c_0) + eps_C ||zbar_k||.
double eps_state_dependent(const EmbeddingMatrices& E, const ErrorCertificate& cert,
                           const std::vector<Lifted>& zbar, const std::vector<double>& ubar, int k);

/// ||H_ux^T (H_ux H_ux^T)^{-1}||_2^2 with H_ux = [H_u; X]. Throws naming the deficient block.
double c_pe(const Mat& H_u, const Mat& X, double tol = 1e-9);
double c_pe(const Mat& H_ux, double tol = 1e-9);

/// States of a (reduced) realization driven by u from x0: n x (T+1).
Mat state_sequence(const Mat& A, const Mat& B, const Vec& x0, const Mat& u);

/// H_ux for a realization: input Hankel of the given depth stacked over the states at
/// the start of each window.
Mat build_hux(const Realization& R, const Vec& x0, const Mat& u, int depth);

/// eps_bar(r) = eps_A S_L r + c_0 S_L.
double eps_of_r(double r, const ErrorCertificate& cert, double S_L);

using BetaHat = std::function<double(double)>;

struct FixedPoint {
    double r_star = 0.0;
    double g_at_root = 0.0;
    /// c x0 + beta_hat(eps_bar_0), the value with the proportional part removed.
    double offset_only = 0.0;
    int iterations = 0;
};

/// Smallest root of g(r) = r - c x0 - beta_hat(eps_bar(r)) on [0, R_max]:
/// grid scan for the first sign change, then bisection to tol.
FixedPoint fixed_point_r(const BetaHat& beta_hat, double c, double x0_dev, const ErrorCertificate& cert,
                         double S_L, double R_max, double tol = 1e-10, int scan_points = 2000);

struct BoundReport {
    int L_pred = 0;
    double diam_z = 0.0;
    double diam_u = 0.0;
    double e_bar = 0.0;
    std::vector<double> eps_bar_k;
    std::vector<double> eps_bar_k_tight;
    double eps_bar = 0.0;
    double S_L = 0.0;
    double eps_bar_tight = 0.0;
    double eps_bar_0 = 0.0;
    double norm_A = 0.0;
    double norm_C = 0.0;
    std::optional<double> c_pe;
    std::optional<FixedPoint> fixed_point;

    nlohmann::json to_json() const;
    /// k,eps_bar_k,eps_bar_k_tight
    std::string csv() const;
};

BoundReport bound_report(const BoundInputs& bi);

struct LadderRow {
    int L_pred = 0;
    double eps_bar = 0.0;
    double eps_bar_tight = 0.0;
    double eps_bar_0 = 0.0;
    double ratio_loose_tight = 0.0;
    double ratio_0_ebar = 0.0;  ///< eps_bar_0 / e_bar
    bool ordered = false;       ///< eps_bar_0 <= eps_bar_tight <= eps_bar
};

struct LadderTable {
    std::vector<LadderRow> rows;
    bool ordered = true;
    bool monotone = true;  ///< eps_bar nondecreasing in L

    nlohmann::json to_json() const;
    std::string csv() const;
};

LadderTable compare_bound_ladder(const BoundInputs& base, const std::vector<int>& L_grid);

}  // namespace kmpc
