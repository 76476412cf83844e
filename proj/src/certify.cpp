#include "kmpc/koopman.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "kmpc/error.hpp"
#include "kmpc/io.hpp"
#include "kmpc/random.hpp"

namespace kmpc {

std::vector<CertSample> certification_samples(const OperatingRegion& r, const GeneratorParams& p,
                                              std::size_t n_samples, std::uint64_t seed,
                                              bool include_corners)
{
    std::vector<CertSample> out;
    out.reserve(n_samples + (include_corners ? 16 : 0));
    Rng rng(seed);
    for (std::size_t i = 0; i < n_samples; ++i) {
        CertSample s;
        s.x.delta = rng.uniform(r.delta_s - r.delta_max, r.delta_s + r.delta_max);
        s.x.omega = p.omega_s + rng.uniform(-r.omega_max, r.omega_max);
        s.x.Eq_prime = rng.uniform(r.Eq_min, r.Eq_max);
        s.u = rng.uniform(r.u_min, r.u_max);
        out.push_back(s);
    }
    if (include_corners) {
        for (int mask = 0; mask < 16; ++mask) {
            CertSample s;
            s.x.delta = r.delta_s + ((mask & 1) ? r.delta_max : -r.delta_max);
            s.x.omega = p.omega_s + ((mask & 2) ? r.omega_max : -r.omega_max);
            s.x.Eq_prime = (mask & 4) ? r.Eq_max : r.Eq_min;
            s.u = (mask & 8) ? r.u_max : r.u_min;
            out.push_back(s);
        }
    }
    return out;
}

SampleEval evaluate_sample(const CertSample& s, const GeneratorParams& p, const EmbeddingMatrices& E,
                           const Equilibrium& eq, const ErrorCertificate& cert)
{
    const Lifted zbar = lift(s.x, p.omega_s) - eq.z_s;
    const Lifted e = residual(s.x, s.u, p, E, eq);
    SampleEval ev;
    ev.zbar_norm = zbar.norm();
    ev.e_norm = e.norm();
    ev.bound = cert.eps_A * ev.zbar_norm + cert.eps_B * std::abs(s.u - eq.u_s) + cert.c_0;
    ev.slack = ev.e_norm - ev.bound;
    ev.linear_rows = e.head<3>().cwiseAbs().maxCoeff();
    const double th2 = cert.theta_bar * cert.theta_bar;
    ev.components_ok = std::abs(e(3)) <= cert.c4 * ev.zbar_norm + cert.c4p * th2
                       && std::abs(e(4)) <= cert.c5 * ev.zbar_norm + cert.c5p * th2
                       && std::abs(e(5)) <= cert.c6 * ev.zbar_norm + cert.c6p * th2
                       && std::abs(e(6)) <= cert.c7 * ev.zbar_norm + cert.c7p * th2;
    return ev;
}

namespace {

void check_samples(std::span<const CertSample> samples, const OperatingRegion& r, const GeneratorParams& p)
{
    for (const auto& s : samples)
        if (!in_region(s.x, s.u, r, p)) throw std::logic_error("certify: sampler produced an out-of-region point");
}

// Order-independent given evals indexed by sample; ties resolve to the lowest index.
CertReport reduce(std::span<const CertSample> samples, std::vector<SampleEval>&& evals, bool keep)
{
    CertReport rep;
    rep.n_samples = samples.size();
    rep.max_slack = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < evals.size(); ++i) {
        const auto& ev = evals[i];
        if (ev.slack > 0.0) ++rep.violations;
        if (!ev.components_ok) ++rep.component_violations;
        if (ev.slack > rep.max_slack) {
            rep.max_slack = ev.slack;
            rep.worst_index = i;
        }
        rep.max_linear_rows = std::max(rep.max_linear_rows, ev.linear_rows);
        const double ratio = ev.bound > 0.0 ? ev.e_norm / ev.bound : 0.0;
        const auto bin = static_cast<std::size_t>(std::clamp(ratio * 10.0, 0.0, 9.0));
        ++rep.tightness_histogram[bin];
    }
    if (!evals.empty()) {
        rep.worst = samples[rep.worst_index];
        rep.worst_eval = evals[rep.worst_index];
    } else {
        rep.max_slack = 0.0;
    }
    if (keep) rep.per_sample = std::move(evals);
    return rep;
}

}  // namespace

CertReport certify_points_serial(std::span<const CertSample> samples, const GeneratorParams& p,
                                 const OperatingRegion& r, const EmbeddingMatrices& E,
                                 const Equilibrium& eq, const ErrorCertificate& cert, bool keep_samples)
{
    check_samples(samples, r, p);
    std::vector<SampleEval> evals;
    evals.reserve(samples.size());
    for (const auto& s : samples) evals.push_back(evaluate_sample(s, p, E, eq, cert));
    return reduce(samples, std::move(evals), keep_samples);
}

CertReport certify_points(std::span<const CertSample> samples, const GeneratorParams& p,
                          const OperatingRegion& r, const EmbeddingMatrices& E, const Equilibrium& eq,
                          const ErrorCertificate& cert, bool keep_samples)
{
    check_samples(samples, r, p);
    std::vector<SampleEval> evals(samples.size());
    const auto n = static_cast<std::ptrdiff_t>(samples.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i)
        evals[static_cast<std::size_t>(i)] = evaluate_sample(samples[static_cast<std::size_t>(i)], p, E, eq, cert);
    return reduce(samples, std::move(evals), keep_samples);
}

CertReport certify(const GeneratorParams& p, const OperatingRegion& r, const EmbeddingMatrices& E,
                   const Equilibrium& eq, const ErrorCertificate& cert, std::size_t n_samples,
                   std::uint64_t seed, const CertifyOptions& opts)
{
    if (n_samples < 1) throw InvalidArgument("certify: n_samples must be at least 1");
    const auto samples = certification_samples(r, p, n_samples, seed, opts.include_corners);
    auto rep = certify_points(samples, p, r, E, eq, cert, opts.keep_samples);
    rep.seed = seed;
    return rep;
}

nlohmann::json CertReport::to_json() const
{
    nlohmann::json worst_j = {{"index", worst_index},
                              {"delta", worst.x.delta},
                              {"omega", worst.x.omega},
                              {"Eq_prime", worst.x.Eq_prime},
                              {"u", worst.u},
                              {"zbar_norm", worst_eval.zbar_norm},
                              {"e_norm", worst_eval.e_norm},
                              {"bound", worst_eval.bound}};
    return {{"n_samples", n_samples},
            {"violations", violations},
            {"component_violations", component_violations},
            {"max_slack", max_slack},
            {"max_abs_linear_rows", max_linear_rows},
            {"worst", worst_j},
            {"tightness_histogram", tightness_histogram},
            {"seed", seed}};
}

std::string CertReport::samples_csv() const
{
    std::ostringstream os;
    os << "i,zbar_norm,e_norm,bound\n";
    for (std::size_t i = 0; i < per_sample.size(); ++i)
        os << i << ',' << fmt_num(per_sample[i].zbar_norm) << ',' << fmt_num(per_sample[i].e_norm) << ','
           << fmt_num(per_sample[i].bound) << '\n';
    return os.str();
}

}  // namespace kmpc
