#include <benchmark/benchmark.h>

#include "kmpc/bounds.hpp"
#include "kmpc/data.hpp"
#include "kmpc/experiment.hpp"
#include "kmpc/koopman.hpp"

namespace {

struct Fixture {
    kmpc::GeneratorParams p;
    kmpc::OperatingRegion r;
    kmpc::Equilibrium eq = kmpc::make_equilibrium(p, r.delta_s);
    kmpc::EmbeddingMatrices E = kmpc::build_embedding(p);
    kmpc::ErrorCertificate cert = kmpc::error_constants(p, r);
};

const Fixture& fx()
{
    static const Fixture f;
    return f;
}

void BM_certify_parallel(benchmark::State& st)
{
    const auto& f = fx();
    const auto samples = kmpc::certification_samples(f.r, f.p, static_cast<std::size_t>(st.range(0)), 7, true);
    for (auto _ : st) benchmark::DoNotOptimize(kmpc::certify_points(samples, f.p, f.r, f.E, f.eq, f.cert));
}

void BM_certify_serial(benchmark::State& st)
{
    const auto& f = fx();
    const auto samples = kmpc::certification_samples(f.r, f.p, static_cast<std::size_t>(st.range(0)), 7, true);
    for (auto _ : st) benchmark::DoNotOptimize(kmpc::certify_points_serial(samples, f.p, f.r, f.E, f.eq, f.cert));
}

void BM_diameters_parallel(benchmark::State& st)
{
    const auto& f = fx();
    for (auto _ : st)
        benchmark::DoNotOptimize(kmpc::diameters(f.r, f.eq, f.p.omega_s, static_cast<int>(st.range(0))));
}

void BM_diameters_serial(benchmark::State& st)
{
    const auto& f = fx();
    for (auto _ : st)
        benchmark::DoNotOptimize(kmpc::diameters_serial(f.r, f.eq, f.p.omega_s, static_cast<int>(st.range(0))));
}

void BM_collect_library(benchmark::State& st)
{
    const auto& f = fx();
    kmpc::ExcitationConfig exc;
    exc.amplitude = 0.02;
    exc.center = kmpc::ExcitationConfig::Center::InitialPower;
    for (auto _ : st)
        benchmark::DoNotOptimize(
            kmpc::collect_library(f.p, f.r, f.eq, exc, static_cast<std::size_t>(st.range(0)), 14, 11));
}

kmpc::ExperimentConfig sweep_config()
{
    kmpc::ExperimentConfig c = kmpc::parse_config(nlohmann::json::object());
    c.sweep.closed_loop = false;
    c.sweep.parameter = "L_pred";
    c.sweep.values = {14, 20, 30, 40, 50};
    c.bounds.n_grid = 31;
    return c;
}

void BM_sweep_parallel(benchmark::State& st)
{
    const auto c = sweep_config();
    for (auto _ : st) benchmark::DoNotOptimize(kmpc::sweep_points(c, 3));
}

void BM_sweep_serial(benchmark::State& st)
{
    const auto c = sweep_config();
    for (auto _ : st) benchmark::DoNotOptimize(kmpc::sweep_points_serial(c, 3));
}

}  // namespace

BENCHMARK(BM_certify_parallel)->Arg(10000);
BENCHMARK(BM_certify_serial)->Arg(10000);
BENCHMARK(BM_diameters_parallel)->Arg(41);
BENCHMARK(BM_diameters_serial)->Arg(41);
BENCHMARK(BM_collect_library)->Arg(200);
BENCHMARK(BM_sweep_parallel);
BENCHMARK(BM_sweep_serial);

BENCHMARK_MAIN();
