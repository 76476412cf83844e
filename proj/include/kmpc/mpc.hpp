#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kmpc/data.hpp"
#include "kmpc/error.hpp"
#include "kmpc/koopman.hpp"
#include "kmpc/linalg.hpp"
#include "kmpc/plant.hpp"
#include "kmpc/qp.hpp"

namespace kmpc {

enum class SlackMode {
    Sequential,  ///< freeze ||alpha||_1 at the previous iterate and re-solve until it settles
    Fixed,       ///< |sigma| <= eps_bar (1 + alpha_bar) with a user-set alpha_bar
};

struct MpcConfig {
    int L_pred = 14;
    int n_z = kLiftDim;
    Mat Q = (Mat(2, 2) << 10.0, 0.0, 0.0, 1.0).finished();
    Mat R = Mat::Constant(1, 1, 0.1);
    double lambda_alpha = 1e-4;
    double lambda_sigma = 1e3;
    double eps_bar = 0.0;
    Vec u_s = Vec::Zero(1);
    Vec y_s = Vec::Zero(2);
    double u_min = 0.0;
    double u_max = 1.5;
    SlackMode slack_mode = SlackMode::Sequential;
    double alpha_bar = 0.0;
    int slack_max_iter = 20;
    double slack_tol = 1e-6;  ///< relative change of ||alpha||_1
    QpSettings qp;

    int depth() const { return L_pred + n_z; }
    /// Throws InvalidArgument. `require_interior` asks for u_min < u_s < u_max.
    void validate(bool require_interior = true) const;
};

/// Input/output Hankel blocks of depth L_pred + n_z.
struct MpcData {
    Mat Hu;
    Mat Hy;
    int depth = 0;
    bool sliding = true;  ///< columns are sliding windows of one trajectory
    bool pe_checked = false;

    Eigen::Index cols() const { return Hu.cols(); }
    Eigen::Index m() const { return Hu.rows() / depth; }
    Eigen::Index p() const { return Hy.rows() / depth; }
};

MpcData make_mpc_data(const TrajectoryLibrary& lib, const MpcConfig& cfg);

/// Last n_z samples before the current time.
struct PastWindow {
    Mat u;  ///< m x n_z
    Mat y;  ///< p x n_z
};

/// Variable layout [alpha; sigma; u_hat; y_hat], all time-major.
struct QpLayout {
    Eigen::Index l = 0, n_sigma = 0, n_u = 0, n_y = 0;
    Eigen::Index alpha() const { return 0; }
    Eigen::Index sigma() const { return l; }
    Eigen::Index u_hat() const { return l + n_sigma; }
    Eigen::Index y_hat() const { return l + n_sigma + n_u; }
    Eigen::Index n() const { return l + n_sigma + n_u + n_y; }
};

struct MpcQp {
    QpProblem qp;
    QpLayout layout;
    double constant = 0.0;  ///< cost offset so that objective = 1/2 x'Px + q'x + constant
};

/// Equalities: Hankel consistency (slack on outputs), initial pinning, terminal pinning;
/// inequalities: input box on the predicted inputs, |sigma_i| <= eps_bar (1 + alpha_l1_bound).
MpcQp assemble_qp(const MpcConfig& cfg, const MpcData& data, const PastWindow& past, double alpha_l1_bound);

enum class MpcStatus { Optimal, SlackNotConverged, Infeasible, SolverFailed };

std::string to_string(MpcStatus s);

struct MpcSolution {
    Vec alpha;
    Vec sigma;
    Mat u_hat;  ///< m x (L_pred + n_z)
    Mat y_hat;  ///< p x (L_pred + n_z)
    double objective = 0.0;
    MpcStatus status = MpcStatus::SolverFailed;
    QpStatus qp_status = QpStatus::MaxIter;
    int slack_iterations = 0;
    int qp_iterations = 0;
    double alpha_l1 = 0.0;
    double alpha_l1_bound = 0.0;
    double sigma_inf = 0.0;
    /// |sigma_i| <= eps_bar (1 + ||alpha||_1) + tol with the achieved alpha.
    bool slack_check = false;
    bool pe_checked = false;
    std::string diagnostic;
    Vec primal;  ///< full QP primal, usable as a warm start
};

/// Raised when the QP is certified infeasible; the message names the constraint blocks.
class MpcInfeasible : public Error {
public:
    using Error::Error;
};

MpcSolution solve_robust_mpc(const MpcConfig& cfg, const MpcData& data, const PastWindow& past,
                             const Vec* warm = nullptr);

/// Primal warm start for the next block: alpha shifted by n_z columns (sliding data),
/// sigma zeroed, predictions shifted and padded with the setpoint.
Vec shift_warm_start(const MpcSolution& sol, const MpcConfig& cfg, const MpcData& data);

struct ClosedLoopLog {
    struct Iteration {
        std::size_t k = 0;  ///< first time step driven by this solve
        double cost = 0.0;
        std::string status;
        double sigma_inf = 0.0;
        double alpha_l1 = 0.0;
        int slack_iterations = 0;
        int qp_iterations = 0;
        bool slack_check = false;
    };
    std::vector<State> x;
    std::vector<double> u;
    std::vector<Output> y;
    std::vector<double> err;  ///< ||x_k - x_s||_2
    std::vector<int> iteration_of;  ///< per applied input, -1 during warm-up
    std::vector<Iteration> iterations;
    std::size_t warmup = 0;
    std::optional<std::size_t> first_exit;
    bool truncated = false;
    std::string stop_reason;
    int cost_increases = 0;

    std::string csv() const;
    nlohmann::json summary() const;
};

struct RunOptions {
    bool stop_on_region_exit = false;
    double cost_increase_tol = 1e-6;
};

/// n_z-step receding horizon: warm-up with u_s held for n_z steps, then `steps`
/// solve/apply blocks of n_z inputs each.
ClosedLoopLog receding_horizon_run(const GeneratorParams& p, const OperatingRegion& r, const Equilibrium& eq,
                                   const MpcConfig& cfg, const MpcData& data, const State& x0, int steps,
                                   const RunOptions& opts = {});

}  // namespace kmpc
