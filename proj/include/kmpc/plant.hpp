#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace kmpc {

/// Third-order flux-decay generator on an infinite bus, explicit Euler.
struct GeneratorParams {
    double H = 3.5;           ///< inertia constant [s]
    double omega_s = 377.0;   ///< synchronous speed [rad/s]
    double D = 0.0;           ///< damping
    double Tdo_prime = 6.0;   ///< d-axis open-circuit transient time constant [s]
    double Xd = 1.8;
    double Xd_prime = 0.3;
    double Xe = 0.1;
    double V_inf = 1.0;
    double E_fd = 2.0;
    double dt = 0.0025;       ///< sampling period [s]

    double M() const { return 2.0 * H / omega_s; }
    double X_sigma() const { return Xd_prime + Xe; }
    double gamma() const { return V_inf / X_sigma(); }
    double kappa() const { return (Xd + Xe) / X_sigma(); }
    double mu() const { return (Xd - Xd_prime) * V_inf / X_sigma(); }
    double alpha_d() const { return dt / M(); }
    double alpha_q() const { return dt / Tdo_prime; }

    /// Throws InvalidArgument naming the first violated invariant.
    void validate() const;
};

struct State {
    double delta = 0.0;     ///< rotor angle [rad]
    double omega = 0.0;     ///< rotor speed, same unit as omega_s
    double Eq_prime = 0.0;  ///< transient internal voltage [pu]

    Eigen::Vector3d vec() const { return {delta, omega, Eq_prime}; }
    bool operator==(const State&) const = default;
};

struct Output {
    double omega_tilde = 0.0;
    double P_e = 0.0;

    Eigen::Vector2d vec() const { return {omega_tilde, P_e}; }
};

/// Compact operating box around the equilibrium angle, plus the input interval.
struct OperatingRegion {
    double delta_s = 0.4;
    double delta_max = 0.5;
    double omega_max = 0.02;  ///< bound on |omega - omega_s|, raw units of omega
    double Eq_min = 0.6;
    double Eq_max = 1.2;
    double u_min = 0.0;
    double u_max = 1.5;

    void validate() const;
};

State step(const State& x, double u, const GeneratorParams& p);
Output output(const State& x, const GeneratorParams& p);

/// Equilibrium at rotor angle delta_s: (x_s, u_s) with step(x_s, u_s) == x_s.
struct OperatingPoint {
    State x;
    double u = 0.0;
};
OperatingPoint compute_equilibrium(const GeneratorParams& p, double delta_s);

/// Closed box membership (boundary included).
bool in_region(const State& x, double u, const OperatingRegion& r, const GeneratorParams& p);
bool state_in_region(const State& x, const OperatingRegion& r, const GeneratorParams& p);

/// Input/output record; u is m x T, y is p x T, x has T+1 entries when simulated.
struct Trajectory {
    Eigen::MatrixXd u;
    Eigen::MatrixXd y;
    std::vector<State> x;
    std::optional<State> x0;
    std::optional<std::size_t> first_exit;  ///< first state index outside the region

    std::size_t length() const { return static_cast<std::size_t>(u.cols()); }
    bool has_states() const { return !x.empty(); }
};

/// Repeated step/output. Throws NumericError with the step index on blow-up.
/// When a region is given the first state index outside it is recorded.
Trajectory simulate(const State& x0, std::span<const double> u_seq, const GeneratorParams& p,
                    const OperatingRegion* region = nullptr);

/// CSV with header k,delta,omega,Eq_prime,u,omega_tilde,P_e (terminal row has empty u/y).
std::string trajectory_csv(const Trajectory& traj);

}  // namespace kmpc
