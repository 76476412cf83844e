#include "kmpc/linalg.hpp"

#include <Eigen/SVD>
#include <Eigen/Eigenvalues>

namespace kmpc {

double spectral_norm(const Mat& m)
{
    if (m.size() == 0) return 0.0;
    Eigen::JacobiSVD<Mat> svd(m);
    return svd.singularValues()(0);
}

RankDecision decide_rank(const Mat& m, double rel_tol, double band)
{
    RankDecision out;
    if (m.size() == 0) return out;
    Eigen::JacobiSVD<Mat> svd(m);
    out.singular_values = svd.singularValues();
    const double smax = out.singular_values.size() ? out.singular_values(0) : 0.0;
    if (smax == 0.0) return out;
    const double thresh = rel_tol * smax;
    for (Eigen::Index i = 0; i < out.singular_values.size(); ++i) {
        const double s = out.singular_values(i);
        if (s >= thresh) ++out.rank;
        if (s > thresh / band && s < thresh * band) out.ambiguous = true;
    }
    return out;
}

int numerical_rank(const Mat& m, double rel_tol) { return decide_rank(m, rel_tol).rank; }

Mat range_basis(const Mat& m, double rel_tol)
{
    if (m.size() == 0) return Mat(m.rows(), 0);
    Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeFullU);
    const auto& s = svd.singularValues();
    int r = 0;
    if (s.size() && s(0) > 0.0) {
        for (Eigen::Index i = 0; i < s.size(); ++i)
            if (s(i) >= rel_tol * s(0)) ++r;
    }
    return svd.matrixU().leftCols(r);
}

double spectral_radius(const Mat& a)
{
    if (a.size() == 0) return 0.0;
    Eigen::EigenSolver<Mat> es(a, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace kmpc
