#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "kmpc/linalg.hpp"
#include "kmpc/plant.hpp"

namespace kmpc {

inline constexpr int kLiftDim = 7;

/// (delta, omega_tilde, E'q, sin delta, cos delta, E'q sin delta, E'q cos delta)
using Lifted = Eigen::Matrix<double, kLiftDim, 1>;

Lifted lift(const State& x, double omega_s);

/// Deviation-coordinate realization zbar+ = A zbar + B ubar (+ e), ybar = C zbar + D ubar.
struct EmbeddingMatrices {
    Eigen::Matrix<double, 7, 7> A;
    Eigen::Matrix<double, 7, 1> B;
    Eigen::Matrix<double, 2, 7> C;
    Eigen::Matrix<double, 2, 1> D;
};

EmbeddingMatrices build_embedding(const GeneratorParams& p);

/// Structural zero pattern of A (true where an entry may be nonzero).
std::array<std::array<bool, 7>, 7> embedding_sparsity();

/// Proportional-with-offset residual bound ||e|| <= eps_A ||zbar|| + eps_B ||ubar|| + c_0.
struct ErrorCertificate {
    double eps_A = 0.0;
    double eps_B = 0.0;
    double eps_C = 0.0;
    double c_0 = 0.0;
    double theta_bar = 0.0;  ///< dt * omega_max
    // Per-component constants: |e_i| <= c_i ||zbar|| + c_i' theta_bar^2.
    double c4 = 0.0, c5 = 0.0, c6 = 0.0, c7 = 0.0;
    double c4p = 0.0, c5p = 0.0, c6p = 0.0, c7p = 0.0;

    nlohmann::json to_json() const;
};

ErrorCertificate error_constants(const GeneratorParams& p, const OperatingRegion& r);

/// Centering point (x_s, u_s) with its lifted state and output.
struct Equilibrium {
    State x_s;
    double u_s = 0.0;
    Lifted z_s;
    Output y_s;
};

Equilibrium make_equilibrium(const GeneratorParams& p, double delta_s);

/// e = (lift(step(x,u)) - z_s) - A (lift(x) - z_s) - B (u - u_s).
Lifted residual(const State& x, double u, const GeneratorParams& p, const EmbeddingMatrices& E,
                const Equilibrium& eq);

// --- empirical certification -------------------------------------------------

struct CertSample {
    State x;
    double u = 0.0;
};

struct SampleEval {
    double zbar_norm = 0.0;
    double e_norm = 0.0;
    double bound = 0.0;
    double slack = 0.0;         ///< e_norm - bound; <= 0 when certified
    double linear_rows = 0.0;   ///< max |e_1|, |e_2|, |e_3|
    bool components_ok = true;  ///< per-component bounds for e_4..e_7
};

struct CertReport {
    std::size_t n_samples = 0;
    std::size_t violations = 0;
    std::size_t component_violations = 0;
    double max_slack = 0.0;
    std::size_t worst_index = 0;
    CertSample worst;
    SampleEval worst_eval;
    double max_linear_rows = 0.0;
    /// Counts of e_norm / bound in ten equal bins over [0, 1]; last bin also holds ratios > 1.
    std::array<std::size_t, 10> tightness_histogram{};
    std::uint64_t seed = 0;
    std::vector<SampleEval> per_sample;  ///< filled only when requested

    nlohmann::json to_json() const;
    std::string samples_csv() const;
};

struct CertifyOptions {
    bool include_corners = true;
    bool keep_samples = false;
};

/// Seeded uniform samples over X x U, optionally followed by the 16 box corners in
/// (delta, omega_tilde, E'q, u).
std::vector<CertSample> certification_samples(const OperatingRegion& r, const GeneratorParams& p,
                                              std::size_t n_samples, std::uint64_t seed,
                                              bool include_corners);

SampleEval evaluate_sample(const CertSample& s, const GeneratorParams& p, const EmbeddingMatrices& E,
                           const Equilibrium& eq, const ErrorCertificate& cert);

/// OpenMP kernel over samples; deterministic reduction.
CertReport certify_points(std::span<const CertSample> samples, const GeneratorParams& p,
                          const OperatingRegion& r, const EmbeddingMatrices& E, const Equilibrium& eq,
                          const ErrorCertificate& cert, bool keep_samples = false);
/// Single-threaded reference for certify_points.
CertReport certify_points_serial(std::span<const CertSample> samples, const GeneratorParams& p,
                                 const OperatingRegion& r, const EmbeddingMatrices& E,
                                 const Equilibrium& eq, const ErrorCertificate& cert,
                                 bool keep_samples = false);

CertReport certify(const GeneratorParams& p, const OperatingRegion& r, const EmbeddingMatrices& E,
                   const Equilibrium& eq, const ErrorCertificate& cert, std::size_t n_samples,
                   std::uint64_t seed, const CertifyOptions& opts = {});

// --- structure -----------------------------------------------------------------

struct StructureRanks {
    int rank_ctrb = 0;
    int rank_obsv = 0;
};

Mat controllability_matrix(const Mat& A, const Mat& B);
Mat observability_matrix(const Mat& A, const Mat& C);

StructureRanks ctrl_obs_ranks(const EmbeddingMatrices& E, double tol = 1e-9);
StructureRanks ctrl_obs_ranks(const Mat& A, const Mat& B, const Mat& C, double tol = 1e-9);

/// Controllable-and-observable part of (A, B, C, D). `basis` maps reduced to full
/// coordinates (full x = basis * reduced x for states in that subspace).
struct Realization {
    Mat A, B, C, D;
    Mat basis;
    int n_eff = 0;
};

Realization minimal_realization(const Mat& A, const Mat& B, const Mat& C, const Mat& D, double tol = 1e-9);
Realization minimal_realization(const EmbeddingMatrices& E, double tol = 1e-9);

/// h_0 = D, h_k = C A^{k-1} B for k = 1..count-1.
std::vector<Mat> markov_parameters(const Mat& A, const Mat& B, const Mat& C, const Mat& D, int count);

/// Max abs difference of Markov parameters over `count` steps.
double markov_mismatch(const Realization& a, const Mat& A, const Mat& B, const Mat& C, const Mat& D,
                       int count);

}  // namespace kmpc
