#pragma once

#include <cstddef>
#include <span>
#include <string>

#include <json.hpp>

#include "kmpc/mpc.hpp"

namespace kmpc {

/// ||x_k - x_s|| <= c rho^k + beta fitted to a decay log.
struct EnvelopeFit {
    bool ok = false;
    std::string message;
    double c_fit = 0.0;             ///< amplitude of the exponential part
    double c_normalized = 0.0;      ///< c_fit / ||x_0 - x_s||
    double rho_fit = 0.0;
    double beta_fit = 0.0;          ///< median over the final quarter
    double residual = 0.0;          ///< rms of the log-domain fit
    std::size_t window_begin = 0;
    std::size_t window_end = 0;     ///< one past the last fitted index
    std::size_t points = 0;

    nlohmann::json to_json() const;
};

/// Log-linear least squares on (e_k - beta)^+ over the transient window, i.e. the
/// prefix where e_k - beta stays above 1e-3 of its peak.
EnvelopeFit fit_envelope(std::span<const double> err);

/// Requires at least 20 MPC iterations in the log.
EnvelopeFit fit_envelope(const ClosedLoopLog& log);

}  // namespace kmpc
