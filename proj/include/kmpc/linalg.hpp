#pragma once

#include <Eigen/Dense>

namespace kmpc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Largest singular value.
double spectral_norm(const Mat& m);

/// Number of singular values >= rel_tol * sigma_max. Zero for empty or zero matrices.
int numerical_rank(const Mat& m, double rel_tol);

/// Result of a rank decision that also reports how close the decision was.
struct RankDecision {
    int rank = 0;
    /// True when a singular value falls within a factor `band` of the threshold.
    bool ambiguous = false;
    Eigen::VectorXd singular_values;
};

RankDecision decide_rank(const Mat& m, double rel_tol, double band = 100.0);

/// Orthonormal basis of the column space (rank decided with rel_tol).
Mat range_basis(const Mat& m, double rel_tol);

/// Spectral radius via eigenvalues.
double spectral_radius(const Mat& a);

}  // namespace kmpc
