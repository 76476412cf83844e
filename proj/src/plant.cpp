#include "kmpc/plant.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "kmpc/error.hpp"
#include "kmpc/io.hpp"

namespace kmpc {

namespace {

void require(bool cond, const char* what)
{
    if (!cond) throw InvalidArgument(what);
}

bool finite(const State& x)
{
    return std::isfinite(x.delta) && std::isfinite(x.omega) && std::isfinite(x.Eq_prime);
}

}  // namespace

void GeneratorParams::validate() const
{
    for (double v : {H, omega_s, Tdo_prime, Xd, Xd_prime, Xe, V_inf, E_fd, dt})
        require(std::isfinite(v) && v > 0.0, "generator parameters must be finite and positive");
    require(std::isfinite(D) && D >= 0.0, "damping D must be finite and nonnegative");
    require(Xd > Xd_prime, "Xd must exceed Xd_prime");
    require(dt <= 0.005, "dt must not exceed 0.005 s");
    require(alpha_d() * D < 2.0, "alpha_d * D must be below 2 for a stable Euler speed update");
    require(alpha_q() * kappa() < 2.0, "alpha_q * kappa must be below 2 for a stable Euler flux update");
}

void OperatingRegion::validate() const
{
    require(delta_max > 0.0 && delta_max < std::numbers::pi / 2, "delta_max must lie in (0, pi/2)");
    require(omega_max >= 0.0, "omega_max must be nonnegative");
    require(Eq_min < Eq_max, "Eq_min must be below Eq_max");
    require(u_min < u_max, "u_min must be below u_max");
}

State step(const State& x, double u, const GeneratorParams& p)
{
    if (!finite(x) || !std::isfinite(u)) throw NumericError("step: non-finite state or input");
    const double w_dev = x.omega - p.omega_s;
    State next;
    next.delta = x.delta + p.dt * w_dev;
    next.omega = x.omega + p.alpha_d() * (u - p.D * w_dev - p.gamma() * x.Eq_prime * std::sin(x.delta));
    next.Eq_prime = x.Eq_prime
                    + p.alpha_q() * (p.E_fd - p.kappa() * x.Eq_prime + p.mu() * std::cos(x.delta));
    return next;
}

Output output(const State& x, const GeneratorParams& p)
{
    return {x.omega - p.omega_s, p.gamma() * x.Eq_prime * std::sin(x.delta)};
}

OperatingPoint compute_equilibrium(const GeneratorParams& p, double delta_s)
{
    if (!(std::abs(delta_s) < std::numbers::pi / 2))
        throw InvalidArgument("compute_equilibrium: |delta_s| must be below pi/2");
    const double kappa = p.kappa();
    if (kappa == 0.0) throw InvalidArgument("compute_equilibrium: kappa is zero");
    OperatingPoint eq;
    eq.x.delta = delta_s;
    eq.x.omega = p.omega_s;
    eq.x.Eq_prime = (p.E_fd + p.mu() * std::cos(delta_s)) / kappa;
    eq.u = p.gamma() * eq.x.Eq_prime * std::sin(delta_s);
    return eq;
}

bool state_in_region(const State& x, const OperatingRegion& r, const GeneratorParams& p)
{
    return std::abs(x.delta - r.delta_s) <= r.delta_max && std::abs(x.omega - p.omega_s) <= r.omega_max
           && x.Eq_prime >= r.Eq_min && x.Eq_prime <= r.Eq_max;
}

bool in_region(const State& x, double u, const OperatingRegion& r, const GeneratorParams& p)
{
    return state_in_region(x, r, p) && u >= r.u_min && u <= r.u_max;
}

Trajectory simulate(const State& x0, std::span<const double> u_seq, const GeneratorParams& p,
                    const OperatingRegion* region)
{
    const auto n = static_cast<Eigen::Index>(u_seq.size());
    Trajectory traj;
    traj.u.resize(1, n);
    traj.y.resize(2, n);
    traj.x.reserve(u_seq.size() + 1);
    traj.x0 = x0;
    traj.x.push_back(x0);
    if (!finite(x0)) throw NumericError("simulate: non-finite initial state");
    auto check_region = [&](std::size_t k) {
        if (region && !traj.first_exit && !state_in_region(traj.x[k], *region, p)) traj.first_exit = k;
    };
    check_region(0);
    for (Eigen::Index k = 0; k < n; ++k) {
        const double u = u_seq[static_cast<std::size_t>(k)];
        const State& xk = traj.x.back();
        traj.u(0, k) = u;
        traj.y.col(k) = output(xk, p).vec();
        State next;
        try {
            next = step(xk, u, p);
        } catch (const NumericError&) {
            throw NumericError("simulate: non-finite value at step " + std::to_string(k));
        }
        if (!finite(next)) throw NumericError("simulate: blow-up at step " + std::to_string(k + 1));
        traj.x.push_back(next);
        check_region(static_cast<std::size_t>(k + 1));
    }
    return traj;
}

std::string trajectory_csv(const Trajectory& traj)
{
    std::ostringstream os;
    os << "k,delta,omega,Eq_prime,u,omega_tilde,P_e\n";
    const std::size_t n = traj.length();
    for (std::size_t k = 0; k <= n && k < traj.x.size(); ++k) {
        const State& x = traj.x[k];
        os << k << ',' << fmt_num(x.delta) << ',' << fmt_num(x.omega) << ',' << fmt_num(x.Eq_prime) << ',';
        if (k < n) {
            const auto kk = static_cast<Eigen::Index>(k);
            os << fmt_num(traj.u(0, kk)) << ',' << fmt_num(traj.y(0, kk)) << ',' << fmt_num(traj.y(1, kk));
        } else {
            os << ",,";
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace kmpc
