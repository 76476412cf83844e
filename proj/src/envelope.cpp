#include "kmpc/envelope.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "kmpc/error.hpp"

namespace kmpc {

namespace {

double median(std::vector<double> v)
{
    const auto n = v.size();
    std::sort(v.begin(), v.end());
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

EnvelopeFit fit_envelope(std::span<const double> err)
{
    if (err.size() < 4) throw InvalidArgument("fit_envelope: need at least 4 samples");
    EnvelopeFit f;
    const std::size_t n = err.size();
    const std::size_t tail = n - n / 4;
    f.beta_fit = std::max(0.0, median(std::vector<double>(err.begin() + static_cast<std::ptrdiff_t>(tail), err.end())));

    double peak = 0.0;
    for (double e : err) peak = std::max(peak, e - f.beta_fit);
    const double floor = 1e-3 * peak;
    std::size_t last = 0;
    bool any = false;
    for (std::size_t k = 0; k < n; ++k) {
        if (err[k] - f.beta_fit >= floor && err[k] - f.beta_fit > 0.0) {
            last = k;
            any = true;
        }
    }
    if (!any || peak <= 0.0) {
        f.message = "no transient above the plateau";
        return f;
    }
    f.window_begin = 0;
    f.window_end = last + 1;

    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t cnt = 0;
    for (std::size_t k = f.window_begin; k < f.window_end; ++k) {
        const double d = err[k] - f.beta_fit;
        if (d <= 0.0) continue;
        const double t = static_cast<double>(k);
        const double v = std::log(d);
        sx += t;
        sy += v;
        sxx += t * t;
        sxy += t * v;
        ++cnt;
    }
    f.points = cnt;
    if (cnt < 3) {
        f.message = "fewer than 3 transient points";
        return f;
    }
    const double c = static_cast<double>(cnt);
    const double den = c * sxx - sx * sx;
    const double slope = (c * sxy - sx * sy) / den;
    const double icpt = (sy - slope * sx) / c;
    double ss = 0.0;
    for (std::size_t k = f.window_begin; k < f.window_end; ++k) {
        const double d = err[k] - f.beta_fit;
        if (d <= 0.0) continue;
        const double r = std::log(d) - (icpt + slope * static_cast<double>(k));
        ss += r * r;
    }
    f.residual = std::sqrt(ss / c);
    f.rho_fit = std::exp(slope);
    f.c_fit = std::exp(icpt);
    f.c_normalized = err[0] > 0.0 ? f.c_fit / err[0] : 0.0;
    if (!(f.rho_fit > 0.0 && f.rho_fit < 1.0)) {
        f.message = "log does not decay";
        return f;
    }
    f.ok = true;
    return f;
}

EnvelopeFit fit_envelope(const ClosedLoopLog& log)
{
    if (log.iterations.size() < 20) throw InvalidArgument("fit_envelope: need at least 20 MPC iterations");
    return fit_envelope(std::span<const double>(log.err));
}

nlohmann::json EnvelopeFit::to_json() const
{
    return {{"ok", ok},
            {"message", message},
            {"c_fit", c_fit},
            {"c_normalized", c_normalized},
            {"rho_fit", rho_fit},
            {"beta_fit", beta_fit},
            {"residual", residual},
            {"window", {window_begin, window_end}},
            {"points", points}};
}

}  // namespace kmpc
