// kmpc command-line harness.
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "kmpc/config.hpp"
#include "kmpc/experiment.hpp"
#include "kmpc/io.hpp"

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool force = false;
};

void add_common(CLI::App* sub, Options& o)
{
    sub->add_option("--config", o.config, "JSON config file (defaults apply when omitted)")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Master seed; overrides the config");
    sub->add_option("--out", o.out, "Output directory")->required();
    sub->add_flag("--force", o.force, "Bypass closed-loop gating and overwrite existing reports");
}

int run(kmpc::ExperimentKind kind, const Options& o)
{
    try {
        kmpc::ExperimentConfig cfg = o.config.empty() ? kmpc::parse_config(nlohmann::json::object())
                                                      : kmpc::load_config(o.config);
        if (o.seed) cfg.seed = *o.seed;
        const kmpc::ExperimentResult res = kmpc::run_experiment(kind, cfg, o.out, o.force);
        std::cout << kmpc::to_string(kind) << ": " << (res.pass ? "PASS" : "FAIL") << '\n';
        for (const auto& f : res.failures) std::cout << "  - " << f << '\n';
        for (const auto& f : res.files) std::cout << "  wrote " << f.string() << '\n';
        return res.pass ? 0 : 1;
    } catch (const kmpc::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Koopman-embedded data-driven MPC for a synchronous generator"};
    app.require_subcommand(1);

    Options opts;
    const struct {
        const char* name;
        const char* help;
        kmpc::ExperimentKind kind;
    } subs[] = {
        {"certify", "Empirical certification of the embedding residual bound", kmpc::ExperimentKind::Certify},
        {"bounds", "Effective-noise bound ladder, c_pe and the fixed-point radius", kmpc::ExperimentKind::Bounds},
        {"represent", "Exact-case data representation test on the nominal system", kmpc::ExperimentKind::Represent},
        {"run-mpc", "Closed-loop robust data-driven MPC with envelope fit", kmpc::ExperimentKind::RunMpc},
        {"sweep", "Sweep over dt or L_pred with per-point bounds and envelope fits", kmpc::ExperimentKind::Sweep},
    };
    std::optional<kmpc::ExperimentKind> chosen;
    for (const auto& s : subs) {
        CLI::App* sub = app.add_subcommand(s.name, s.help);
        add_common(sub, opts);
        const auto kind = s.kind;
        sub->callback([&chosen, kind] { chosen = kind; });
    }
    CLI11_PARSE(app, argc, argv);
    return chosen ? run(*chosen, opts) : 2;
}
