#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sve/errors.hpp"
#include "sve/quadrature.hpp"

using namespace sve;

TEST_CASE("gk15 panel integrates smooth functions tightly") {
    const auto r = gk15_panel([](double x) { return std::exp(x); }, 0.0, 1.0);
    CHECK(r.value == doctest::Approx(std::exp(1.0) - 1.0).epsilon(1e-14));
}

TEST_CASE("adaptive refinement handles a narrow spike") {
    QuadratureConfig cfg;
    cfg.abs_tol = 1e-12;
    cfg.rel_tol = 1e-10;
    const auto r = integrate_adaptive(
        [](double x) { return std::exp(-1000.0 * (x - 0.3) * (x - 0.3)); }, 0.0, 1.0, cfg);
    CHECK(r.converged);
    const double exact = std::sqrt(3.14159265358979323846 / 1000.0); // full Gaussian mass
    CHECK(r.value == doctest::Approx(exact).epsilon(1e-8));
}

TEST_CASE("singular lower endpoint: integrable power") {
    QuadratureConfig cfg;
    for (double rho : {0.25, 0.5, 0.75, 0.9}) {
        const double got =
            integrate_singular_lower([rho](double u) { return std::pow(u, -rho); }, 1.0, cfg);
        CHECK(got == doctest::Approx(1.0 / (1.0 - rho)).epsilon(1e-7));
    }
}

TEST_CASE("singular lower endpoint with a longer interval") {
    QuadratureConfig cfg;
    // ∫_0^3 u^{-1/3} (1 + u) du = (3/2) 3^{2/3} + (3/5) 3^{5/3}
    const double got = integrate_singular_lower(
        [](double u) { return std::pow(u, -1.0 / 3.0) * (1.0 + u); }, 3.0, cfg);
    const double want = 1.5 * std::pow(3.0, 2.0 / 3.0) + 0.6 * std::pow(3.0, 5.0 / 3.0);
    CHECK(got == doctest::Approx(want).epsilon(1e-9));
}

TEST_CASE("non-integrable powers are detected as divergent") {
    QuadratureConfig cfg;
    cfg.max_subdivisions = 400;
    CHECK_THROWS_AS(integrate_singular_lower([](double u) { return 1.0 / u; }, 1.0, cfg),
                    DivergenceError);
    CHECK_THROWS_AS(
        integrate_singular_lower([](double u) { return std::pow(u, -1.8); }, 1.0, cfg),
        DivergenceError);
    CHECK(dyadic_tail_diverges([](double u) { return std::pow(u, -1.2); }, 1.0));
    CHECK_FALSE(dyadic_tail_diverges([](double u) { return std::pow(u, -0.8); }, 1.0));
}

TEST_CASE("config validation") {
    QuadratureConfig cfg;
    cfg.abs_tol = 0.0;
    CHECK_THROWS_AS(cfg.validate(), DomainError);
    cfg = QuadratureConfig{};
    cfg.max_subdivisions = 0;
    CHECK_THROWS_AS(cfg.validate(), DomainError);
}
