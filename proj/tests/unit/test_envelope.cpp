#include <doctest.h>

#include <cmath>
#include <vector>

#include "kmpc/envelope.hpp"

using namespace kmpc;

TEST_CASE("synthetic decay with a plateau")
{
    std::vector<double> e(200);
    for (std::size_t k = 0; k < e.size(); ++k) e[k] = 2.0 * std::pow(0.9, static_cast<double>(k)) + 0.01;
    const EnvelopeFit f = fit_envelope(e);
    REQUIRE(f.ok);
    CHECK(f.c_fit == doctest::Approx(2.0).epsilon(0.05));
    CHECK(f.rho_fit == doctest::Approx(0.9).epsilon(0.05));
    CHECK(f.beta_fit == doctest::Approx(0.01).epsilon(0.05));
    CHECK(f.c_normalized == doctest::Approx(f.c_fit / e.front()));
    CHECK(f.window_begin == 0);
    CHECK(f.window_end <= e.size());
}

TEST_CASE("constant log fails with beta equal to the constant")
{
    const std::vector<double> e(100, 0.37);
    const EnvelopeFit f = fit_envelope(e);
    CHECK_FALSE(f.ok);
    CHECK(f.beta_fit == 0.37);
    CHECK_FALSE(f.message.empty());
}

TEST_CASE("pure exponential has no plateau")
{
    std::vector<double> e(150);
    for (std::size_t k = 0; k < e.size(); ++k) e[k] = 0.5 * std::pow(0.8, static_cast<double>(k));
    const EnvelopeFit f = fit_envelope(e);
    REQUIRE(f.ok);
    CHECK(f.beta_fit <= 1e-6);
    CHECK(f.rho_fit == doctest::Approx(0.8).epsilon(1e-3));
}

TEST_CASE("growing log is flagged")
{
    std::vector<double> e(100);
    for (std::size_t k = 0; k < e.size(); ++k) e[k] = 0.01 * std::pow(1.05, static_cast<double>(k));
    CHECK_FALSE(fit_envelope(e).ok);
}

TEST_CASE("short logs")
{
    CHECK_THROWS(fit_envelope(std::vector<double>{1.0, 0.5, 0.25}));
    ClosedLoopLog log;
    log.err = std::vector<double>(50, 1.0);
    CHECK_THROWS(fit_envelope(log));
    log.iterations.resize(20);
    CHECK(fit_envelope(log).beta_fit == 1.0);
}
