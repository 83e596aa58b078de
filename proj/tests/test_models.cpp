#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sve/errors.hpp"
#include "sve/model.hpp"

using namespace sve;

namespace {

std::vector<double> drift_of(const CoefficientModel& m, double t, std::vector<double> x,
                             const EmpiricalMeasure& mu) {
    std::vector<double> out(m.dim_state());
    m.drift(t, x, mu, out);
    return out;
}

std::vector<double> diffusion_of(const CoefficientModel& m, double t, std::vector<double> x,
                                 const EmpiricalMeasure& mu) {
    std::vector<double> out(m.dim_state() * m.dim_noise());
    m.diffusion(t, x, mu, out);
    return out;
}

} // namespace

TEST_CASE("catalog evaluation examples") {
    const EmpiricalMeasure mu_half({0.0, 1.0}, 1); // mean 0.5
    const auto ou = mean_field_ou(1.0, 1.0);
    CHECK(drift_of(ou, 0.0, {2.0}, mu_half)[0] == doctest::Approx(-1.5));
    CHECK(diffusion_of(ou, 0.0, {2.0}, mu_half)[0] == doctest::Approx(1.0));

    const auto pn = pure_noise(1.0);
    CHECK(drift_of(pn, 0.3, {5.0}, mu_half)[0] == 0.0);
    CHECK(diffusion_of(pn, 0.3, {5.0}, mu_half)[0] == doctest::Approx(1.0));

    const EmpiricalMeasure mu_two({1.0, 3.0}, 1); // mean 2
    const auto si = scalar_interaction(-0.5, 1.0, 0.0);
    CHECK(drift_of(si, 0.0, {4.0}, mu_two)[0] == doctest::Approx(-1.0));
    CHECK(diffusion_of(si, 0.0, {4.0}, mu_two)[0] == doctest::Approx(1.0));
}

TEST_CASE("evaluation is deterministic and permutation-invariant in the measure") {
    const auto ou = mean_field_ou(1.3, 0.7);
    const EmpiricalMeasure mu({0.5, -1.0, 2.0, 0.25}, 1);
    const EmpiricalMeasure mu_perm({2.0, 0.25, 0.5, -1.0}, 1);
    const auto a = drift_of(ou, 0.2, {1.0}, mu);
    const auto b = drift_of(ou, 0.2, {1.0}, mu);
    const auto c = drift_of(ou, 0.2, {1.0}, mu_perm);
    CHECK(a[0] == b[0]); // bit-for-bit
    CHECK(a[0] == c[0]); // exact-sum mean is order-independent
}

TEST_CASE("non-finite outputs are reported") {
    auto bad = custom_model(
        "bad", 1, 1, 2.0, 1.0,
        [](double, std::span<const double> x, const EmpiricalMeasure&, std::span<double> out) {
            out[0] = std::sqrt(x[0]); // NaN for negative x
        },
        [](double, std::span<const double>, const EmpiricalMeasure&, std::span<double> out) {
            out[0] = 1.0;
        });
    std::vector<double> out(1);
    const EmpiricalMeasure mu({0.0}, 1);
    CHECK_THROWS_AS(bad.drift(0.0, std::vector<double>{-1.0}, mu, out), NonFiniteOutput);
}

TEST_CASE("growth check on the catalog") {
    for (const auto& model :
         {pure_noise(1.0), mean_field_ou(1.0, 1.0), scalar_interaction(-0.5, 1.0, 0.5)}) {
        const GrowthReport rep = growth_check(model, 10000, 1000.0, 99);
        CHECK(rep.pass);
        CHECK(rep.max_ratio <= model.growth_constant() * (1.0 + 1e-9));
    }
    // PureNoise ratio never exceeds 1
    const GrowthReport pn = growth_check(pure_noise(1.0), 500, 10.0, 5);
    CHECK(pn.max_ratio <= 1.0 + 1e-12);
}

TEST_CASE("growth check flags super-linear drift") {
    auto quad = custom_model(
        "quadratic_drift", 1, 1, 2.0, 5.0,
        [](double, std::span<const double> x, const EmpiricalMeasure&, std::span<double> out) {
            out[0] = x[0] * x[0];
        },
        [](double, std::span<const double>, const EmpiricalMeasure&, std::span<double> out) {
            out[0] = 0.0;
        });
    const GrowthReport rep = growth_check(quad, 500, 10.0, 3);
    CHECK_FALSE(rep.pass);
    CHECK(rep.max_ratio >= 100.0 / 11.0 - 1e-9); // corner probe x = radius, mu = delta_0
}

TEST_CASE("modulus check: lipschitz, constant, and hoelder-1/2 models") {
    const std::vector<double> deltas = {1e-4, 1e-3, 1e-2, 1e-1};

    const ModulusReport ou = modulus_check(mean_field_ou(1.0, 1.0), 5.0, deltas, 17);
    for (std::size_t i = 0; i < ou.delta.size(); ++i) CHECK(ou.omega[i] <= 2.0 * ou.delta[i] + 1e-12);
    CHECK(ou.monotone_to_zero);
    CHECK(ou.loglog_slope == doctest::Approx(1.0).epsilon(0.1));

    const ModulusReport pn = modulus_check(pure_noise(1.0), 5.0, deltas, 17);
    CHECK(pn.all_zero);
    CHECK(pn.monotone_to_zero);

    auto sqrt_vol = custom_model(
        "sqrt_vol", 1, 1, 2.0, 4.0,
        [](double, std::span<const double>, const EmpiricalMeasure&, std::span<double> out) {
            out[0] = 0.0;
        },
        [](double, std::span<const double> x, const EmpiricalMeasure&, std::span<double> out) {
            out[0] = std::sqrt(std::min(std::abs(x[0]), 10.0));
        });
    const ModulusReport h = modulus_check(sqrt_vol, 5.0, deltas, 17);
    CHECK(h.loglog_slope == doctest::Approx(0.5).epsilon(0.2)); // slope 0.5 +- 0.1
    CHECK(h.monotone_to_zero);
}
